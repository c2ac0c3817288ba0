#include <gtest/gtest.h>

#include <random>

#include "nmsap/adversary.hpp"
#include "nmsap/nms_ap.hpp"
#include "test_util.hpp"

namespace nmsap {
namespace {

using testing::fixture;
using testing::random_instance;

NmsConfig mode(SuppressionMode m) {
  NmsConfig c;
  c.mode = m;
  return c;
}

const SuppressionMode kModes[] = {SuppressionMode::GreedyNms, SuppressionMode::KeepTop1};

TEST(Assign, NonOverlappingPredictionIsResidual) {
  const GroundTruthSet gt({{ImageId{1}, 100, 100}}, {{CategoryId{1}, "a"}},
                          {{AnnotationId{1}, ImageId{1}, CategoryId{1}, BBox{0, 0, 10, 10}}});
  // IoU exactly 0.5 is not enough.
  const PredictionSet preds({{ImageId{1}, CategoryId{1}, BBox{0, 0, 10, 5}, 0.9},
                             {ImageId{1}, CategoryId{1}, BBox{50, 50, 60, 60}, 0.9}},
                            gt);
  const auto a = assign_to_gt(gt, preds);
  EXPECT_EQ(a.residual, (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(a.groups[0].empty());
}

TEST(Assign, PicksHigherOverlapGroundTruth) {
  // Prediction [0,0,10,10]; GT A [0,0,10,8] has IoU 0.8, GT B [0,0,6,10] has IoU 0.6.
  const GroundTruthSet gt({{ImageId{1}, 100, 100}}, {{CategoryId{1}, "a"}, {CategoryId{2}, "b"}},
                          {{AnnotationId{1}, ImageId{1}, CategoryId{2}, BBox{0, 0, 6, 10}},
                           {AnnotationId{2}, ImageId{1}, CategoryId{1}, BBox{0, 0, 10, 8}}});
  const PredictionSet preds({{ImageId{1}, CategoryId{2}, BBox{0, 0, 10, 10}, 0.5}}, gt);
  EXPECT_NEAR(iou(preds[0].bbox, gt.annotations()[0].bbox), 0.6, 1e-12);
  EXPECT_NEAR(iou(preds[0].bbox, gt.annotations()[1].bbox), 0.8, 1e-12);
  const auto a = assign_to_gt(gt, preds);
  ASSERT_TRUE(a.owner[0]);
  EXPECT_EQ(*a.owner[0], 1u);
}

TEST(Assign, ExhaustiveThreeBoxOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> c(0, 20), e(1, 20);
  for (int trial = 0; trial < 20000; ++trial) {
    std::vector<Annotation> anns;
    for (int k = 0; k < 2; ++k) {
      anns.push_back({AnnotationId{k + 1}, ImageId{1}, CategoryId{k + 1},
                      BBox::from_xywh(c(rng), c(rng), e(rng), e(rng))});
    }
    const GroundTruthSet gt({{ImageId{1}, 64, 64}}, {{CategoryId{1}, "a"}, {CategoryId{2}, "b"}}, anns);
    const PredictionSet preds({{ImageId{1}, CategoryId{1}, BBox::from_xywh(c(rng), c(rng), e(rng), e(rng)), 0.5}}, gt);
    const double i0 = iou(preds[0].bbox, anns[0].bbox), i1 = iou(preds[0].bbox, anns[1].bbox);
    std::optional<std::size_t> expected;
    if (i0 > 0.5 || i1 > 0.5) expected = (i1 > i0) ? 1u : 0u;
    ASSERT_EQ(assign_to_gt(gt, preds).owner[0], expected) << trial;
  }
}

TEST(ClassIgnoredNms, SingletonUnchanged) {
  const std::vector<Prediction> g{{ImageId{1}, CategoryId{1}, BBox{0, 0, 5, 5}, 0.3}};
  for (auto m : kModes) EXPECT_EQ(class_ignored_nms(g, mode(m)), g);
}

TEST(ClassIgnoredNms, CoincidentBoxesKeepHigherScore) {
  const std::vector<Prediction> g{{ImageId{1}, CategoryId{1}, BBox{0, 0, 5, 5}, 0.6},
                                  {ImageId{1}, CategoryId{2}, BBox{0, 0, 5, 5}, 0.7}};
  for (auto m : kModes) {
    const auto out = class_ignored_nms(g, mode(m));
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].score, 0.7);
    EXPECT_EQ(out[0].category_id, CategoryId{2});
  }
}

TEST(ClassIgnoredNms, KeepTopOneKeepsMaximum) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Prediction> g;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int k = 0; k < n; ++k) {
      g.push_back({ImageId{1}, CategoryId{1 + static_cast<std::int64_t>(rng() % 3)},
                   BBox::from_xywh(rng() % 20, rng() % 20, 1 + rng() % 20, 1 + rng() % 20),
                   static_cast<double>(rng() % 11) / 10.0});
    }
    const auto out = class_ignored_nms(g, mode(SuppressionMode::KeepTop1));
    ASSERT_EQ(out.size(), 1u);
    for (const auto& p : g) ASSERT_GE(out[0].score, p.score);
  }
}

TEST(NmsAp, DeceptiveWrongLabelAdvantageScoresZero) {
  const auto gt = load_ground_truth_file(fixture("deceptive_gt.json"));
  const auto preds = load_predictions_file(fixture("deceptive_pred.json"), gt);
  EXPECT_NEAR(evaluate(gt, preds).mAP, 0.5, 1e-6);
  for (auto m : kModes) {
    const auto r = nms_ap_evaluate(gt, preds, mode(m));
    EXPECT_NEAR(r.mAP, 0.0, 1e-6) << to_string(m);
    ASSERT_TRUE(r.suppression);
    EXPECT_EQ(r.suppression->suppressed, 2u);
  }
}

TEST(NmsAp, DeceptiveCorrectLabelAdvantageScoresOne) {
  const auto gt = load_ground_truth_file(fixture("deceptive_gt.json"));
  const auto preds = load_predictions_file(fixture("deceptive_correct_pred.json"), gt);
  for (auto m : kModes) EXPECT_NEAR(nms_ap_evaluate(gt, preds, mode(m)).mAP, 1.0, 1e-6);
}

TEST(NmsAp, EmptyPredictionsScoreZero) {
  const auto gt = load_ground_truth_file(fixture("deceptive_gt.json"));
  const auto r = nms_ap_evaluate(gt, PredictionSet{});
  EXPECT_EQ(r.per_category.size(), 2u);
  for (const auto& c : r.per_category) EXPECT_EQ(c.ap, 0.0);
}

TEST(NmsAp, PerfectDetectorWithLowerScoredDecoys) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_instance(seed);
    if (inst.gt.annotations().empty()) continue;
    std::vector<Prediction> preds;
    for (const auto& a : inst.gt.annotations()) {
      preds.push_back({a.image_id, a.category_id, a.bbox, 0.9});
      for (const auto& c : inst.gt.categories()) {
        if (c.id != a.category_id) preds.push_back({a.image_id, c.id, a.bbox, 0.4});
      }
    }
    const PredictionSet ps(preds, inst.gt);
    for (auto m : kModes) {
      ASSERT_DOUBLE_EQ(nms_ap_evaluate(inst.gt, ps, mode(m)).mAP, 1.0) << seed;
    }
  }
}

// Invariants

TEST(Invariants, GreedySurvivorsRespectOverlapBoundAndDominance) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto inst = random_instance(seed);
    const NmsConfig cfg;
    const auto assignment = assign_to_gt(inst.gt, inst.preds, cfg);
    const auto keep = suppress(inst.gt, inst.preds, cfg);
    std::vector<char> kept(inst.preds.size());
    for (auto k : keep) kept[k] = 1;
    for (auto r : assignment.residual) ASSERT_TRUE(kept[r]);
    for (const auto& group : assignment.groups) {
      for (auto i : group) {
        for (auto j : group) {
          if (i < j && kept[i] && kept[j]) {
            ASSERT_LE(iou(inst.preds[i].bbox, inst.preds[j].bbox), cfg.nms_iou) << seed;
          }
        }
        if (kept[i]) continue;
        const bool dominated = std::any_of(group.begin(), group.end(), [&](std::size_t j) {
          return kept[j] && inst.preds[j].score >= inst.preds[i].score &&
                 iou(inst.preds[i].bbox, inst.preds[j].bbox) > cfg.nms_iou;
        });
        ASSERT_TRUE(dominated) << "seed " << seed << " prediction " << i;
      }
    }
  }
}

TEST(Invariants, SuppressionIsIdempotent) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto inst = random_instance(seed);
    for (auto m : kModes) {
      const auto keep = suppress(inst.gt, inst.preds, mode(m));
      const auto once = inst.preds.subset(keep, inst.gt);
      ASSERT_EQ(suppress(inst.gt, once, mode(m)).size(), once.size()) << seed;
      ASSERT_EQ(nms_ap_evaluate(inst.gt, once, mode(m)).mAP, nms_ap_evaluate(inst.gt, inst.preds, mode(m)).mAP);
    }
  }
}

TEST(Invariants, NoOverlapPassThrough) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto inst = random_instance(seed);
    std::vector<Prediction> far;
    for (auto p : inst.preds.predictions()) {
      p.bbox = p.bbox.translated(200, 200);
      far.push_back(p);
    }
    const PredictionSet ps(far, inst.gt);
    for (auto m : kModes) {
      const auto nms = nms_ap_evaluate(inst.gt, ps, mode(m));
      EXPECT_EQ(nms.suppression->suppressed, 0u);
      auto plain = to_json(evaluate(inst.gt, ps));
      auto with = to_json(nms);
      for (auto* k : {"suppressed", "mode", "gt_overlap_threshold", "nms_iou", "nms_ap"}) {
        with.erase(k);
        plain.erase(k);
      }
      ASSERT_EQ(plain.dump(), with.dump()) << seed;
    }
  }
}

TEST(Invariants, ParallelSuppressionBitIdentical) {
  const auto gt = load_ground_truth_file(fixture("medium_gt.json"));
  const auto preds = load_predictions_file(fixture("medium_pred.json"), gt);
  for (auto m : kModes) {
    const auto serial = to_json(nms_ap_evaluate(gt, preds, mode(m), {}, Execution{1}), true).dump();
    for (unsigned t : {2u, 8u}) {
      EXPECT_EQ(serial, to_json(nms_ap_evaluate(gt, preds, mode(m), {}, Execution{t}), true).dump());
    }
  }
}

TEST(Config, Validation) {
  NmsConfig bad;
  bad.nms_iou = 1.5;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_EQ(parse_suppression_mode("keep-top-1"), SuppressionMode::KeepTop1);
  EXPECT_THROW(parse_suppression_mode("soft"), Error);
  const auto round = nms_config_from_json(to_json(mode(SuppressionMode::KeepTop1)));
  EXPECT_EQ(round, mode(SuppressionMode::KeepTop1));
}

}  // namespace
}  // namespace nmsap
