// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <string>

#include "nmsap/adversary.hpp"
#include "nmsap/analysis.hpp"
#include "nmsap/ap_engine.hpp"
#include "nmsap/hardneg.hpp"
#include "nmsap/nms_ap.hpp"
#include "nmsap/oracle.hpp"
#include "test_util.hpp"

using namespace nmsap;
using nmsap::testing::fixture;
using nmsap::testing::random_instance;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

int failures = 0;

void criterion(const char* name, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = Clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  if (!c.ok) ++failures;
  std::printf("%s  %-28s %10.1f ms  %s\n", c.ok ? "PASS" : "FAIL", name, ms, c.detail.c_str());
  std::fflush(stdout);
}

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

NmsConfig nms_mode(SuppressionMode m) {
  NmsConfig c;
  c.mode = m;
  return c;
}

const SuppressionMode kModes[] = {SuppressionMode::GreedyNms, SuppressionMode::KeepTop1};

std::map<CategoryId, double> category_ap(const EvalResult& r) {
  std::map<CategoryId, double> out;
  for (const auto& c : r.per_category) out[c.id] = c.ap;
  return out;
}

void reproduction(Check& c) {
  const auto t0 = Clock::now();
  const auto gt = load_ground_truth_file(fixture("deceptive_gt.json"));
  const auto preds = load_predictions_file(fixture("deceptive_pred.json"), gt);
  const auto r = evaluate(gt, preds);
  const double ms = elapsed_ms(t0);
  c.expect(std::abs(r.mAP - 0.5) <= 1e-6, fmt("mAP %.9f", r.mAP));
  for (const auto& cat : r.per_category) {
    const auto& last = cat.curves.front().points.back();
    c.expect(last.recall == 1.0 && last.precision == 0.5,
             fmt("final PR point (%.3f, %.3f)", last.recall, last.precision));
  }
  c.expect(ms < 10.0, fmt("runtime %.2f ms", ms));
  if (c.ok) c.detail = fmt("mAP %.6f, final PR point (1.0, 0.50), %.2f ms", r.mAP, ms);
}

void inflated(Check& c) {
  const auto t0 = Clock::now();
  const auto gt = load_ground_truth_file(fixture("deceptive_gt.json"));
  const auto wrong = load_predictions_file(fixture("deceptive_pred.json"), gt);
  const auto right = load_predictions_file(fixture("deceptive_correct_pred.json"), gt);
  double worst = 0.0;
  for (auto m : kModes) {
    const double zero = nms_ap_evaluate(gt, wrong, nms_mode(m)).mAP;
    const double one = nms_ap_evaluate(gt, right, nms_mode(m)).mAP;
    worst = std::max({worst, std::abs(zero), std::abs(one - 1.0)});
    c.expect(std::abs(zero) <= 1e-6, fmt("wrong-label NMS-AP %.9f", zero));
    c.expect(std::abs(one - 1.0) <= 1e-6, fmt("correct-label NMS-AP %.9f", one));
    c.expect(std::abs(oracle_ap(gt, wrong.subset(suppress(gt, wrong, nms_mode(m)), gt)).mAP - zero) <= 1e-12,
             "oracle disagrees");
  }
  const double ms = elapsed_ms(t0);
  c.expect(ms < 10.0, fmt("runtime %.2f ms", ms));
  if (c.ok) c.detail = fmt("NMS-AP 0 / 1 in both modes (max err %.1e), %.2f ms", worst, ms);
}

void oracle_equivalence(Check& c) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t categories = 0;
  constexpr int kInstances = 1000;
  for (std::uint64_t seed = 0; seed < kInstances; ++seed) {
    const auto inst = random_instance(seed);
    const auto r = evaluate(inst.gt, inst.preds);
    const auto o = oracle_ap(inst.gt, inst.preds);
    c.expect(r.per_category.size() == o.ap.size(), "category sets differ");
    for (const auto& cat : r.per_category) {
      worst = std::max(worst, std::abs(cat.ap - o.ap.at(cat.id)));
      ++categories;
    }
  }
  const double ms = elapsed_ms(t0);
  c.expect(worst <= 1e-9, fmt("max |engine - oracle| %.3e", worst));
  c.expect(ms < 60000.0, fmt("runtime %.0f ms", ms));
  if (c.ok) {
    c.detail = fmt("%.0f instances, ", kInstances) + std::to_string(categories) +
               fmt(" category APs, max diff %.1e", worst);
  }
}

void reference_toolkit(Check& c) {
  const auto gt = load_ground_truth_file(fixture("medium_gt.json"));
  const auto preds = load_predictions_file(fixture("medium_pred.json"), gt);
  std::ifstream in(fixture("medium_golden.json"));
  const auto golden = nlohmann::json::parse(in);
  const auto r = evaluate(gt, preds);
  double worst = std::abs(r.mAP - golden["mAP"].get<double>());
  for (const auto& cat : r.per_category) {
    const auto& g = golden["per_category"][std::to_string(raw(cat.id))];
    worst = std::max(worst, std::abs(cat.ap - g["ap"].get<double>()));
    for (std::size_t t = 0; t < cat.ap_per_threshold.size(); ++t) {
      worst = std::max(worst, std::abs(cat.ap_per_threshold[t] - g["per_threshold"][t].get<double>()));
    }
  }
  c.expect(worst <= 1e-4, fmt("max diff %.3e", worst));
  if (c.ok) {
    c.detail = std::to_string(gt.images().size()) + " images, " + std::to_string(preds.size()) +
               fmt(" predictions, mAP %.6f, max diff %.1e", r.mAP, worst);
  }
}

void invariants(Check& c) {
  // IoU fuzz
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> coord(-50.0, 150.0), extent(0.0, 120.0), scale(1e-3, 1e3);
  auto box = [&] { return BBox::from_xywh(coord(rng), coord(rng), extent(rng), extent(rng)); };
  for (int i = 0; i < 100000; ++i) {
    const auto a = box(), b = box();
    const double v = iou(a, b), s = scale(rng);
    c.expect(v == iou(b, a), "IoU asymmetric");
    c.expect(v >= 0.0 && v <= 1.0, "IoU out of range");
    c.expect(std::abs(iou(a.scaled(s), b.scaled(s)) - v) <= 1e-12, "IoU not scale invariant");
  }

  for (std::uint64_t seed = 0; seed < 300 && c.ok; ++seed) {
    const auto inst = random_instance(seed);
    const auto base = evaluate(inst.gt, inst.preds);

    // FP insertion
    std::vector<Prediction> more(inst.preds.predictions().begin(), inst.preds.predictions().end());
    const auto& img = inst.gt.images()[rng() % inst.gt.images().size()];
    const auto& cat = inst.gt.categories()[rng() % inst.gt.categories().size()];
    more.insert(more.begin() + static_cast<std::ptrdiff_t>(rng() % (more.size() + 1)),
                Prediction{img.id, cat.id, BBox{100, 100, 110, 110}, static_cast<double>(rng() % 21) / 20.0});
    const auto after = category_ap(evaluate(inst.gt, PredictionSet(std::move(more), inst.gt)));
    for (const auto& [id, ap] : category_ap(base)) c.expect(after.at(id) <= ap, "FP insertion raised AP");

    // Label permutation
    std::vector<std::int64_t> ids;
    for (const auto& k : inst.gt.categories()) ids.push_back(raw(k.id));
    auto perm = ids;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::map<CategoryId, CategoryId> to;
    for (std::size_t i = 0; i < ids.size(); ++i) to[CategoryId{ids[i]}] = CategoryId{perm[i] + 1000};
    std::vector<Category> cats;
    for (const auto& k : inst.gt.categories()) cats.push_back({to[k.id], k.name});
    std::vector<Annotation> anns;
    for (auto a : inst.gt.annotations()) {
      a.category_id = to[a.category_id];
      anns.push_back(a);
    }
    const GroundTruthSet gt2({inst.gt.images().begin(), inst.gt.images().end()}, cats, anns);
    std::vector<Prediction> relabelled;
    for (auto p : inst.preds.predictions()) {
      p.category_id = to[p.category_id];
      relabelled.push_back(p);
    }
    c.expect(std::abs(evaluate(gt2, PredictionSet(relabelled, gt2)).mAP - base.mAP) <= 1e-12,
             "label permutation changed mAP");

    // Threshold monotonicity
    for (const auto& k : base.per_category) {
      for (std::size_t t = 1; t < k.ap_per_threshold.size(); ++t) {
        c.expect(k.ap_per_threshold[t] <= k.ap_per_threshold[t - 1] + 1e-12, "AP rose with IoU threshold");
      }
    }

    for (auto m : kModes) {
      const auto cfg = nms_mode(m);
      const auto assignment = assign_to_gt(inst.gt, inst.preds, cfg);
      const auto keep = suppress(inst.gt, inst.preds, cfg);
      std::vector<char> kept(inst.preds.size());
      for (auto k : keep) kept[k] = 1;
      // C-NMS score dominance and pairwise overlap bound
      for (const auto& group : assignment.groups) {
        for (auto i : group) {
          const bool dominated = std::any_of(group.begin(), group.end(), [&](std::size_t j) {
            return kept[j] && inst.preds[j].score >= inst.preds[i].score;
          });
          c.expect(kept[i] || dominated, "suppressed box outscores every survivor");
          if (m != SuppressionMode::GreedyNms) continue;
          for (auto j : group) {
            if (i < j && kept[i] && kept[j]) {
              c.expect(iou(inst.preds[i].bbox, inst.preds[j].bbox) <= cfg.nms_iou, "survivors overlap");
            }
          }
        }
      }
      // NMS-AP idempotence
      const auto once = inst.preds.subset(keep, inst.gt);
      c.expect(suppress(inst.gt, once, cfg).size() == once.size(), "second suppression pass removed boxes");
      c.expect(nms_ap_evaluate(inst.gt, once, cfg).mAP == nms_ap_evaluate(inst.gt, inst.preds, cfg).mAP,
               "NMS-AP not idempotent");
      // No-overlap pass-through
      std::vector<Prediction> far;
      for (auto p : inst.preds.predictions()) {
        p.bbox = p.bbox.translated(200, 200);
        far.push_back(p);
      }
      const PredictionSet ps(far, inst.gt);
      const auto n = nms_ap_evaluate(inst.gt, ps, cfg);
      c.expect(n.suppression->suppressed == 0 && n.mAP == evaluate(inst.gt, ps).mAP,
               "non-overlapping predictions were altered");
    }
  }

  // Serial vs parallel
  const auto gt = load_ground_truth_file(fixture("medium_gt.json"));
  const auto preds = load_predictions_file(fixture("medium_pred.json"), gt);
  const auto ap1 = to_json(evaluate(gt, preds, {}, Execution{1}), true).dump();
  const auto nms1 = to_json(nms_ap_evaluate(gt, preds, {}, {}, Execution{1}), true).dump();
  for (unsigned t : {2u, 4u, 8u}) {
    c.expect(ap1 == to_json(evaluate(gt, preds, {}, Execution{t}), true).dump(), "parallel AP differs");
    c.expect(nms1 == to_json(nms_ap_evaluate(gt, preds, {}, {}, Execution{t}), true).dump(),
             "parallel NMS-AP differs");
  }
  if (c.ok) c.detail = "1e5 IoU cases, 300 instances x 8 properties, serial == parallel";
}

void hard_negatives(Check& c) {
  const auto t0 = Clock::now();
  const auto pos = gen_negatives("the apple on the left of the banana", NegativeRuleSet::defaults(Aspect::Position));
  const std::vector<std::string> expected = {
      "the apple on the right of the banana", "the apple on the above of the banana",
      "the apple on the under of the banana", "the apple on the front of the banana",
      "the apple on the back of the banana",  "the apple on the in of the banana"};
  c.expect(pos.negatives == expected, "position substitutions differ");

  const std::string negated = "kitchen staff not wearing gloves";
  const auto neg = gen_negatives(negated, NegativeRuleSet::defaults(Aspect::Negation));
  c.expect(neg.negatives == std::vector<std::string>{"kitchen staff wearing gloves"}, "negation removal");
  c.expect(!neg.negatives.empty() && restore_negation(neg.negatives[0], neg) == negated, "negation round trip");

  const auto rules = NegativeRuleSet::defaults(Aspect::Color);
  const auto color = gen_negatives("red car", rules);
  c.expect(color.negatives.size() == rules.vocabulary.size() - 1, "color count");
  for (const auto* o : {&pos, &neg, &color}) {
    for (const auto& n : o->negatives) c.expect(text::normalize(n) != "red car" &&
                                                    text::normalize(n) != "the apple on the left of the banana" &&
                                                    text::normalize(n) != negated,
                                                "negative equals positive");
  }
  const double ms = elapsed_ms(t0);
  c.expect(ms < 1000.0, fmt("runtime %.1f ms", ms));
  if (c.ok) c.detail = fmt("6 position, 1 negation (round-trips), %.0f color negatives, %.2f ms",
                           static_cast<double>(color.negatives.size()), ms);
}

void statistics(Check& c) {
  const auto gt = load_ground_truth_file(fixture("coco_val_meta.json"));
  const auto s = compute_stats(gt);
  c.expect(s.images == 5000, "images " + std::to_string(s.images));
  c.expect(s.bboxes == 36781, "bboxes " + std::to_string(s.bboxes));
  c.expect(s.labels == 80, "labels " + std::to_string(s.labels));
  c.expect(s.avg_label_words && std::abs(*s.avg_label_words - 1.10) <= 0.01,
           fmt("avg_label_words %.4f", s.avg_label_words.value_or(-1)));
  if (c.ok) c.detail = fmt("5000 / 36781 / 80, avg_label_words %.4f", *s.avg_label_words);
}

void throughput(Check& c) {
  const auto gt = load_ground_truth_file(fixture("coco_val_meta.json"));
  DetectorSpec spec;
  spec.kind = DetectorKind::Noisy;
  spec.boxes_per_gt = 2;
  spec.labels = LabelPolicy::Random;
  spec.scope = CandidateScope::FullVocabulary;
  spec.confidence = UniformScores{0.0, 1.0};
  spec.jitter = 8.0;
  spec.fp_rate = 5.3;
  spec.seed = 2024;
  const auto preds = simulate(gt, spec);
  const auto exec = Execution::hardware();
  const auto t0 = Clock::now();
  const auto ap = evaluate(gt, preds, {}, exec);
  const auto nms = nms_ap_evaluate(gt, preds, {}, {}, exec);
  const double ms = elapsed_ms(t0);
  c.expect(ap.per_category.size() == 80 && nms.per_category.size() == 80, "category count");
  c.expect(ms < 30000.0, fmt("AP + NMS-AP took %.0f ms", ms));
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu images, %zu GT, %zu predictions, %u thread(s), %.0f ms",
                gt.images().size(), gt.annotations().size(), preds.size(), exec.threads, ms);
  if (c.ok) c.detail = buf;
}

void distribution(Check& c) {
  const auto gt = load_ground_truth_file(fixture("medium_gt.json"));
  const auto perfect = confidence_distribution(gt, simulate(gt, DetectorSpec{}));
  c.expect(perfect.negative_total() == 0 && perfect.positive_total() == gt.annotations().size(),
           "perfect detector mass not all positive");
  double min_p = 1.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    DetectorSpec s;
    s.kind = DetectorKind::Deceptive;
    s.boxes_per_gt = 2;
    s.labels = LabelPolicy::AllCandidates;
    s.scope = CandidateScope::FullVocabulary;
    s.confidence = UniformScores{0.0, 1.0};
    s.seed = seed;
    const auto d = confidence_distribution(gt, simulate(gt, s));
    const auto ks = ks_two_sample(d);
    min_p = std::min(min_p, ks.p_value);
    c.expect(d.positive_total() > 0 && d.negative_total() > 0, "empty histogram");
    c.expect(ks.p_value > 0.01, fmt("seed %.0f rejected, p = %.4f", static_cast<double>(seed), ks.p_value));
  }
  if (c.ok) c.detail = fmt("perfect: 100%% positive; deceptive: 20 seeds, min KS p = %.3f", min_p);
}

}  // namespace

int main() {
  std::printf("nmsap acceptance suite\n");
  criterion("deceptive-reproduction", reproduction);
  criterion("inflated-ap-exposure", inflated);
  criterion("oracle-equivalence", oracle_equivalence);
  criterion("reference-toolkit-fixture", reference_toolkit);
  criterion("invariant-suite", invariants);
  criterion("hard-negative-rules", hard_negatives);
  criterion("dataset-statistics", statistics);
  criterion("throughput", throughput);
  criterion("distribution-analysis", distribution);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures;
}
