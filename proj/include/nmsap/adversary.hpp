#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nmsap/dataset.hpp"
#include "nmsap/error.hpp"

namespace nmsap {

enum class DetectorKind { Perfect, Deceptive, Noisy };
enum class LabelPolicy { Correct, AllCandidates, Random };
enum class CandidateScope { SameImage, FullVocabulary };

/// Scores taken in order from a list, cycling; keeps golden fixtures free of RNG.
struct FixedScores {
  std::vector<double> scores;
};

/// Independent U(low, high) draw per prediction, whatever its label.
struct UniformScores {
  double low = 0.0;
  double high = 1.0;
};

/// Correct label scores base + delta, every other label scores base.
/// A negative delta gives the wrong labels the advantage.
struct LabelAdvantage {
  double base = 0.5;
  double delta = 0.1;
};

using ConfidenceModel = std::variant<FixedScores, UniformScores, LabelAdvantage>;

struct DetectorSpec {
  DetectorKind kind = DetectorKind::Perfect;
  std::size_t boxes_per_gt = 1;
  LabelPolicy labels = LabelPolicy::Correct;
  CandidateScope scope = CandidateScope::SameImage;
  ConfidenceModel confidence = FixedScores{{1.0}};
  double jitter = 0.0;   // pixels, uniform per coordinate
  double fp_rate = 0.0;  // expected spurious boxes per image (noisy)
  double dropout = 0.0;  // probability an annotation is missed (noisy)
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const std::string& m) { return Error(ErrorKind::Usage, "detector spec: " + m); };
    if (boxes_per_gt < 1) throw bad("boxes_per_gt must be >= 1");
    if (!(fp_rate >= 0.0)) throw bad("fp_rate must be >= 0");
    if (!(jitter >= 0.0)) throw bad("jitter must be >= 0");
    if (!(dropout >= 0.0 && dropout <= 1.0)) throw bad("dropout must lie in [0, 1]");
    if (const auto* f = std::get_if<FixedScores>(&confidence)) {
      if (f->scores.empty()) throw bad("fixed confidence list is empty");
      for (double s : f->scores) {
        if (!(s >= 0.0 && s <= 1.0)) throw bad("fixed scores must lie in [0, 1]");
      }
    } else if (const auto* u = std::get_if<UniformScores>(&confidence)) {
      if (!(u->low >= 0.0 && u->low <= u->high && u->high <= 1.0)) {
        throw bad("uniform range must satisfy 0 <= low <= high <= 1");
      }
    } else if (const auto* a = std::get_if<LabelAdvantage>(&confidence)) {
      const double c = a->base + a->delta;
      if (!(a->base >= 0.0 && a->base <= 1.0 && c >= 0.0 && c <= 1.0)) {
        throw bad("label-advantage scores must lie in [0, 1]");
      }
    }
  }
};

namespace detail {

/// splitmix64 finaliser; derives independent per-image streams from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Portable draws on top of mt19937_64: the standard distributions are
/// implementation-defined, these are not.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double low, double high) { return low + (high - low) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  bool chance(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
T enum_from(const json& j, std::initializer_list<std::pair<const char*, T>> table,
            const char* what) {
  const auto s = j.get<std::string>();
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw Error(ErrorKind::Usage, std::string("detector spec: unknown ") + what + " '" + s + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const DetectorSpec& s) {
  nlohmann::json conf;
  if (const auto* f = std::get_if<FixedScores>(&s.confidence)) {
    conf = {{"model", "fixed"}, {"scores", f->scores}};
  } else if (const auto* u = std::get_if<UniformScores>(&s.confidence)) {
    conf = {{"model", "uniform"}, {"low", u->low}, {"high", u->high}};
  } else {
    const auto& a = std::get<LabelAdvantage>(s.confidence);
    conf = {{"model", "label-advantage"}, {"base", a.base}, {"delta", a.delta}};
  }
  static constexpr const char* kinds[] = {"perfect", "deceptive", "noisy"};
  static constexpr const char* policies[] = {"correct", "all-candidates", "random"};
  static constexpr const char* scopes[] = {"same-image", "full-vocabulary"};
  return {{"kind", kinds[static_cast<int>(s.kind)]},
          {"boxes_per_gt", s.boxes_per_gt},
          {"labels", policies[static_cast<int>(s.labels)]},
          {"scope", scopes[static_cast<int>(s.scope)]},
          {"confidence", conf},
          {"jitter", s.jitter},
          {"fp_rate", s.fp_rate},
          {"dropout", s.dropout},
          {"seed", s.seed}};
}

inline DetectorSpec detector_spec_from_json(const nlohmann::json& j, DetectorSpec s = {}) {
  try {
    if (auto it = j.find("kind"); it != j.end()) {
      s.kind = detail::enum_from<DetectorKind>(*it,
                                               {{"perfect", DetectorKind::Perfect},
                                                {"deceptive", DetectorKind::Deceptive},
                                                {"noisy", DetectorKind::Noisy}},
                                               "kind");
    }
    if (auto it = j.find("boxes_per_gt"); it != j.end()) s.boxes_per_gt = it->get<std::size_t>();
    if (auto it = j.find("labels"); it != j.end()) {
      s.labels = detail::enum_from<LabelPolicy>(*it,
                                                {{"correct", LabelPolicy::Correct},
                                                 {"all-candidates", LabelPolicy::AllCandidates},
                                                 {"random", LabelPolicy::Random}},
                                                "label policy");
    }
    if (auto it = j.find("scope"); it != j.end()) {
      s.scope = detail::enum_from<CandidateScope>(
          *it,
          {{"same-image", CandidateScope::SameImage},
           {"full-vocabulary", CandidateScope::FullVocabulary}},
          "candidate scope");
    }
    if (auto it = j.find("confidence"); it != j.end()) {
      const auto model = it->at("model").get<std::string>();
      if (model == "fixed") {
        s.confidence = FixedScores{it->at("scores").get<std::vector<double>>()};
      } else if (model == "uniform") {
        s.confidence = UniformScores{it->value("low", 0.0), it->value("high", 1.0)};
      } else if (model == "label-advantage") {
        s.confidence = LabelAdvantage{it->value("base", 0.5), it->value("delta", 0.1)};
      } else {
        throw Error(ErrorKind::Usage, "detector spec: unknown confidence model '" + model + "'");
      }
    }
    if (auto it = j.find("jitter"); it != j.end()) s.jitter = it->get<double>();
    if (auto it = j.find("fp_rate"); it != j.end()) s.fp_rate = it->get<double>();
    if (auto it = j.find("dropout"); it != j.end()) s.dropout = it->get<double>();
    if (auto it = j.find("seed"); it != j.end()) s.seed = it->get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Usage, std::string("detector spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace detail {

inline double draw_score(const ConfidenceModel& model, std::size_t slot, bool correct_label,
                         Stream& rng) {
  if (const auto* f = std::get_if<FixedScores>(&model)) return f->scores[slot % f->scores.size()];
  if (const auto* u = std::get_if<UniformScores>(&model)) return rng.uniform(u->low, u->high);
  const auto& a = std::get<LabelAdvantage>(model);
  return correct_label ? a.base + a.delta : a.base;
}

inline BBox jittered(const BBox& b, double magnitude, const ImageRecord& img, Stream& rng) {
  if (magnitude <= 0.0) return b;
  auto clampx = [&](double v) { return std::clamp(v, 0.0, img.width); };
  auto clampy = [&](double v) { return std::clamp(v, 0.0, img.height); };
  BBox out{clampx(b.x_min + rng.uniform(-magnitude, magnitude)),
           clampy(b.y_min + rng.uniform(-magnitude, magnitude)),
           clampx(b.x_max + rng.uniform(-magnitude, magnitude)),
           clampy(b.y_max + rng.uniform(-magnitude, magnitude))};
  return out.canonical();
}

}  // namespace detail

/// Synthetic detector output for `gt`. Output order: images in GT order,
/// annotations in GT order within an image, then spurious boxes.
///
/// deceptive/noisy emit boxes_per_gt boxes per annotation. Under the
/// all-candidates policy box j carries candidate label j mod |candidates|, so
/// two boxes on a two-label image cover both labels once each.
inline PredictionSet simulate(const GroundTruthSet& gt, const DetectorSpec& spec) {
  spec.validate();
  std::vector<Prediction> out;
  const auto anns = gt.annotations();
  std::vector<CategoryId> vocabulary;
  for (const auto& c : gt.categories()) vocabulary.push_back(c.id);

  for (const auto& img : gt.images()) {
    detail::Stream rng(detail::mix_seed(spec.seed ^ detail::mix_seed(
                                                         static_cast<std::uint64_t>(raw(img.id)))));
    const auto on_image = gt.on_image(img.id);

    if (spec.kind == DetectorKind::Perfect) {
      for (auto a : on_image) out.push_back({img.id, anns[a].category_id, anns[a].bbox, 1.0});
      continue;
    }

    std::vector<CategoryId> candidates;
    if (spec.scope == CandidateScope::FullVocabulary) {
      candidates = vocabulary;
    } else {
      for (const auto& c : gt.categories()) {
        for (auto a : on_image) {
          if (anns[a].category_id == c.id) {
            candidates.push_back(c.id);
            break;
          }
        }
      }
    }

    for (auto a : on_image) {
      const auto& ann = anns[a];
      if (spec.kind == DetectorKind::Noisy && spec.dropout > 0.0 && rng.chance(spec.dropout)) {
        continue;
      }
      for (std::size_t j = 0; j < spec.boxes_per_gt; ++j) {
        CategoryId label = ann.category_id;
        if (spec.labels == LabelPolicy::AllCandidates && !candidates.empty()) {
          label = candidates[j % candidates.size()];
        } else if (spec.labels == LabelPolicy::Random && !candidates.empty()) {
          label = candidates[rng.index(candidates.size())];
        }
        const BBox box = detail::jittered(ann.bbox, spec.jitter, img, rng);
        const double score = detail::draw_score(spec.confidence, j, label == ann.category_id, rng);
        out.push_back({img.id, label, box, score});
      }
    }

    if (spec.kind == DetectorKind::Noisy && spec.fp_rate > 0.0 && !vocabulary.empty()) {
      auto spurious = static_cast<std::size_t>(spec.fp_rate);
      if (rng.chance(spec.fp_rate - static_cast<double>(spurious))) ++spurious;
      for (std::size_t k = 0; k < spurious; ++k) {
        const double x0 = rng.uniform(0.0, img.width);
        const double y0 = rng.uniform(0.0, img.height);
        const BBox box{x0, y0, rng.uniform(x0, img.width), rng.uniform(y0, img.height)};
        const auto label = vocabulary[rng.index(vocabulary.size())];
        out.push_back({img.id, label, box, detail::draw_score(spec.confidence, k, false, rng)});
      }
    }
  }
  return PredictionSet(std::move(out), gt);
}

}  // namespace nmsap
