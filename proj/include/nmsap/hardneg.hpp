#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nmsap/dataset.hpp"
#include "nmsap/error.hpp"
#include "nmsap/text.hpp"

namespace nmsap {

enum class Aspect { Color, Material, Relationship, Position, Negation };

inline std::string_view to_string(Aspect a) noexcept {
  switch (a) {
    case Aspect::Color: return "color";
    case Aspect::Material: return "material";
    case Aspect::Relationship: return "relationship";
    case Aspect::Position: return "position";
    case Aspect::Negation: return "negation";
  }
  return "unknown";
}

inline Aspect parse_aspect(std::string_view s) {
  for (auto a : {Aspect::Color, Aspect::Material, Aspect::Relationship, Aspect::Position,
                 Aspect::Negation}) {
    if (s == to_string(a)) return a;
  }
  throw Error(ErrorKind::Usage, "unknown aspect '" + std::string(s) + "'");
}

struct VerbForms {
  std::string gerund;      // "riding"
  std::string participle;  // "ridden"
  friend bool operator==(const VerbForms&, const VerbForms&) = default;
};

/// Past participle for an -ing form: irregular table first, then the regular
/// rule (strip "ing", consonant+y -> "ied", otherwise append "ed").
inline std::string participle_of(std::string_view gerund) {
  static const std::map<std::string, std::string, std::less<>> irregular = {
      {"beating", "beaten"},   {"biting", "bitten"},     {"blowing", "blown"},
      {"breaking", "broken"},  {"bringing", "brought"},  {"building", "built"},
      {"buying", "bought"},    {"catching", "caught"},   {"cutting", "cut"},
      {"drawing", "drawn"},    {"drinking", "drunk"},    {"driving", "driven"},
      {"eating", "eaten"},     {"feeding", "fed"},       {"flying", "flown"},
      {"hitting", "hit"},      {"holding", "held"},      {"hanging", "hung"},
      {"leading", "led"},      {"making", "made"},       {"reading", "read"},
      {"riding", "ridden"},    {"seeing", "seen"},       {"selling", "sold"},
      {"setting", "set"},      {"shooting", "shot"},     {"sitting", "sat"},
      {"sleeping", "slept"},   {"spinning", "spun"},     {"swinging", "swung"},
      {"taking", "taken"},     {"teaching", "taught"},   {"throwing", "thrown"},
      {"wearing", "worn"},     {"writing", "written"},   {"stinging", "stung"},
      {"sewing", "sewn"},      {"losing", "lost"},       {"hiding", "hidden"},
  };
  if (auto it = irregular.find(gerund); it != irregular.end()) return it->second;
  std::string stem(gerund);
  if (stem.size() > 3 && stem.ends_with("ing")) stem.resize(stem.size() - 3);
  static constexpr std::string_view vowels = "aeiou";
  if (stem.size() >= 2 && stem.back() == 'y' &&
      vowels.find(stem[stem.size() - 2]) == std::string_view::npos) {
    stem.back() = 'i';
  }
  return stem + "ed";
}

inline std::vector<VerbForms> default_verb_lexicon() {
  std::vector<VerbForms> out;
  for (const char* g :
       {"riding", "holding", "eating", "feeding", "hugging", "kicking", "carrying", "pushing",
        "pulling", "throwing", "catching", "walking", "washing", "cutting", "petting", "driving",
        "flying", "kissing", "licking", "chasing", "brushing", "cleaning", "watching", "touching",
        "lifting", "repairing", "drinking", "wearing", "herding", "milking"}) {
    out.push_back({g, participle_of(g)});
  }
  return out;
}

/// Substitution vocabulary for one aspect. Vocabulary order is output order.
struct NegativeRuleSet {
  Aspect aspect = Aspect::Color;
  std::vector<std::string> vocabulary;  // color, material, position words
  std::vector<VerbForms> verbs;         // relationship
  std::size_t cap = std::numeric_limits<std::size_t>::max();

  static NegativeRuleSet defaults(Aspect aspect) {
    NegativeRuleSet r;
    r.aspect = aspect;
    switch (aspect) {
      case Aspect::Color:
        r.vocabulary = {"red", "blue", "green", "yellow", "black", "white"};
        break;
      case Aspect::Material:
        r.vocabulary = {"wooden",  "metal", "plastic", "glass", "paper",
                        "leather", "stone", "ceramic", "fabric", "rubber"};
        break;
      case Aspect::Position:
        r.vocabulary = {"left", "right", "above", "under", "front", "back", "in"};
        break;
      case Aspect::Relationship:
        r.verbs = default_verb_lexicon();
        break;
      case Aspect::Negation:
        break;
    }
    return r;
  }

  void validate() const {
    if (cap == 0) throw Error(ErrorKind::Usage, "negative cap must be >= 1");
    if (aspect == Aspect::Negation) return;
    if (aspect == Aspect::Relationship) {
      if (verbs.empty()) throw Error(ErrorKind::Usage, "relationship verb lexicon is empty");
      return;
    }
    if (vocabulary.empty()) {
      throw Error(ErrorKind::Usage, std::string(to_string(aspect)) + " vocabulary is empty");
    }
  }
};

/// Result of generating negatives for one label. `applicable` is false when
/// the label holds no token the aspect can perturb.
struct NegativeOutcome {
  bool applicable = false;
  std::vector<std::string> negatives;
  std::size_t offset = 0;  // byte offset of the perturbed token in the label
  std::string removed;     // negation: exact text cut out of the label
  bool needs_review = false;  // more than one perturbable token present
};

namespace detail {

struct Token {
  std::size_t begin;
  std::size_t end;
  std::string lower;
};

inline std::vector<Token> tokens(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && text::is_space(s[i])) ++i;
    const std::size_t b = i;
    while (i < s.size() && !text::is_space(s[i])) ++i;
    if (i > b) out.push_back({b, i, text::to_lower(s.substr(b, i - b))});
  }
  return out;
}

inline std::string splice(std::string_view label, const Token& t, std::string_view with) {
  std::string out(label.substr(0, t.begin));
  out += with;
  out += label.substr(t.end);
  return out;
}

}  // namespace detail

inline NegativeOutcome gen_negatives(std::string_view label, const NegativeRuleSet& rules) {
  rules.validate();
  NegativeOutcome out;
  const auto toks = detail::tokens(label);
  const auto positive = text::normalize(label);

  if (rules.aspect == Aspect::Negation) {
    std::optional<std::size_t> hit;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < toks.size(); ++k) {
      if (toks[k].lower == "not") {
        if (!hit) hit = k;
        ++hits;
      }
    }
    if (!hit) return out;
    const auto& t = toks[*hit];
    // Cut the word plus the whitespace that follows it (or precedes it, at the end).
    std::size_t b = t.begin;
    std::size_t e = t.end;
    if (*hit + 1 < toks.size()) {
      e = toks[*hit + 1].begin;
    } else if (*hit > 0) {
      b = toks[*hit - 1].end;
    }
    std::string negative(label.substr(0, b));
    negative += label.substr(e);
    out.applicable = true;
    out.offset = b;
    out.removed = std::string(label.substr(b, e - b));
    out.needs_review = hits > 1;
    if (!text::normalize(negative).empty() && text::normalize(negative) != positive) {
      out.negatives.push_back(std::move(negative));
    }
    return out;
  }

  // Every aspect below substitutes one token with its vocabulary siblings.
  std::vector<std::string> pool;
  std::optional<std::size_t> hit;
  std::size_t hits = 0;
  std::string matched;
  for (std::size_t k = 0; k < toks.size(); ++k) {
    bool match = false;
    if (rules.aspect == Aspect::Relationship) {
      for (const auto& v : rules.verbs) {
        if (toks[k].lower == text::to_lower(v.gerund) ||
            toks[k].lower == text::to_lower(v.participle)) {
          match = true;
          if (!hit) {
            const bool gerund = toks[k].lower == text::to_lower(v.gerund);
            matched = toks[k].lower;
            for (const auto& w : rules.verbs) pool.push_back(gerund ? w.gerund : w.participle);
          }
          break;
        }
      }
    } else {
      for (const auto& w : rules.vocabulary) {
        if (toks[k].lower == text::to_lower(w)) {
          match = true;
          if (!hit) matched = toks[k].lower;
          break;
        }
      }
    }
    if (match) {
      if (!hit) hit = k;
      ++hits;
    }
  }
  if (!hit) return out;
  if (rules.aspect != Aspect::Relationship) pool = rules.vocabulary;

  out.applicable = true;
  out.offset = toks[*hit].begin;
  out.needs_review = hits > 1;
  std::set<std::string> seen{positive};
  for (const auto& w : pool) {
    if (out.negatives.size() >= rules.cap) break;
    if (text::to_lower(w) == matched) continue;
    auto negative = detail::splice(label, toks[*hit], w);
    if (seen.insert(text::normalize(negative)).second) out.negatives.push_back(std::move(negative));
  }
  return out;
}

/// Reinserts the text removed by a negation rule.
inline std::string restore_negation(std::string_view negative, const NegativeOutcome& outcome) {
  std::string out(negative);
  out.insert(std::min(outcome.offset, out.size()), outcome.removed);
  return out;
}

/// "S V-ing O" -> "O being V-ed by S". The verb is the first token found in
/// `verbs` as a gerund; subject and object must both be non-empty.
/// Returns nullopt when the label does not fit the template.
inline std::optional<std::string> passivize(std::string_view label,
                                            const std::vector<VerbForms>& verbs) {
  const auto words = text::split_words(label);
  for (std::size_t k = 0; k < words.size(); ++k) {
    const auto lower = text::to_lower(words[k]);
    for (const auto& v : verbs) {
      if (lower != text::to_lower(v.gerund)) continue;
      if (k == 0 || k + 1 == words.size()) return std::nullopt;
      std::vector<std::string> subject(words.begin(), words.begin() + static_cast<long>(k));
      std::vector<std::string> object(words.begin() + static_cast<long>(k) + 1, words.end());
      return text::join_words(object) + " being " + v.participle + " by " +
             text::join_words(subject);
    }
  }
  return std::nullopt;
}

inline std::optional<std::string> passivize(std::string_view label) {
  static const auto lexicon = default_verb_lexicon();
  return passivize(label, lexicon);
}

// ---------------------------------------------------------------------------
// Dataset statistics

using NegativeMap = std::map<std::string, std::vector<std::string>>;
using Tokenizer = std::function<std::size_t(std::string_view)>;

/// Averages are over annotated instances (each box counts its label once);
/// unset when the denominator is zero.
struct DatasetStats {
  std::size_t images = 0;
  std::size_t bboxes = 0;
  std::size_t labels = 0;
  std::optional<double> avg_negative_labels;
  std::optional<double> avg_label_tokens;
  std::optional<double> avg_label_words;
};

inline DatasetStats compute_stats(const GroundTruthSet& gt, const NegativeMap* negatives = nullptr,
                                  const Tokenizer& tokenizer = {}) {
  DatasetStats s;
  s.images = gt.images().size();
  s.bboxes = gt.annotations().size();
  s.labels = gt.categories().size();

  std::map<std::string, std::size_t> negatives_by_label;
  if (negatives) {
    for (const auto& [label, list] : *negatives) negatives_by_label[text::normalize(label)] = list.size();
  }

  const auto count_tokens = tokenizer ? tokenizer : Tokenizer(text::word_count);
  double words = 0.0, tokens = 0.0, negs = 0.0;
  std::size_t with_negatives = 0;
  for (const auto& ann : gt.annotations()) {
    const auto& name = gt.category(ann.category_id).name;
    words += static_cast<double>(text::word_count(name));
    tokens += static_cast<double>(count_tokens(name));
    if (auto it = negatives_by_label.find(text::normalize(name)); it != negatives_by_label.end()) {
      negs += static_cast<double>(it->second);
      ++with_negatives;
    }
  }
  if (s.bboxes > 0) {
    s.avg_label_words = words / static_cast<double>(s.bboxes);
    s.avg_label_tokens = tokens / static_cast<double>(s.bboxes);
  }
  if (with_negatives > 0) s.avg_negative_labels = negs / static_cast<double>(with_negatives);
  return s;
}

inline nlohmann::json to_json(const DatasetStats& s) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"images", s.images},
          {"bboxes", s.bboxes},
          {"labels", s.labels},
          {"avg_negative_labels", opt(s.avg_negative_labels)},
          {"avg_label_tokens", opt(s.avg_label_tokens)},
          {"avg_label_words", opt(s.avg_label_words)}};
}

/// Accepts either a bare {label: [negatives]} map or gen-hardneg output.
inline NegativeMap negative_map_from_json(const nlohmann::json& j) {
  const auto& m = (j.is_object() && j.contains("negatives")) ? j.at("negatives") : j;
  try {
    return m.get<NegativeMap>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("negatives must map label -> [labels]: ") + e.what());
  }
}

}  // namespace nmsap
