#include <gtest/gtest.h>

#include <sstream>

#include "nmsap/api.hpp"
#include "nmsap/cli.hpp"
#include "test_util.hpp"

namespace nmsap {
namespace {

using testing::fixture;

TEST(Api, EvaluateFilesAp) {
  const auto j = evaluate_files(fixture("deceptive_gt.json"), fixture("deceptive_pred.json"), Metric::Ap);
  EXPECT_NEAR(j["mAP"].get<double>(), 0.5, 1e-9);
}

TEST(Api, BothHasTwoKeys) {
  const auto j = evaluate_files(fixture("deceptive_gt.json"), fixture("deceptive_pred.json"), Metric::Both);
  EXPECT_TRUE(j.contains("ap"));
  EXPECT_TRUE(j.contains("nms_ap"));
  EXPECT_EQ(j.size(), 2u);
}

TEST(Api, UnreadablePathThrowsWithEngineMessage) {
  try {
    evaluate_files("/nonexistent/gt.json", fixture("deceptive_pred.json"), Metric::Ap);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
    EXPECT_EQ(std::string(e.what()).rfind("io error: ", 0), 0u);
  }
  EXPECT_THROW(parse_metric("bogus"), Error);
}

TEST(Api, CliParity) {
  for (const auto& [gt, pred] : {std::pair{"deceptive_gt.json", "deceptive_pred.json"},
                                 std::pair{"medium_gt.json", "medium_pred.json"}}) {
    for (const char* metric : {"ap", "nms-ap", "both"}) {
      std::ostringstream out, err;
      ASSERT_EQ(cli::run({"evaluate", "--gt", fixture(gt), "--pred", fixture(pred), "--metric", metric, "--quiet"},
                         out, err),
                0);
      auto from_cli = nlohmann::json::parse(out.str());
      from_cli.erase("manifest");
      const auto direct = evaluate_files(fixture(gt), fixture(pred), parse_metric(metric));
      EXPECT_EQ(from_cli, nlohmann::json::parse(direct.dump())) << gt << " " << metric;
    }
  }
}

TEST(Api, CompareFields) {
  const auto j = compare_files(fixture("deceptive_gt.json"), fixture("deceptive_pred.json"));
  EXPECT_NEAR(j["ap"].get<double>(), 0.5, 1e-9);
  EXPECT_NEAR(j["nms_ap"].get<double>(), 0.0, 1e-9);
  EXPECT_NEAR(j["per_category"]["1"]["gap"].get<double>(), 0.5, 1e-9);
  EXPECT_EQ(j["per_category"]["2"]["name"], "blue car");
}

TEST(Api, ArraysMatchFiles) {
  const auto gt = load_ground_truth_file(fixture("deceptive_gt.json"));
  const auto file = load_predictions_file(fixture("deceptive_pred.json"), gt);
  std::vector<double> boxes, scores;
  std::vector<std::int64_t> images, cats;
  for (const auto& p : file.predictions()) {
    for (double v : p.bbox.to_xywh()) boxes.push_back(v);
    scores.push_back(p.score);
    images.push_back(raw(p.image_id));
    cats.push_back(raw(p.category_id));
  }
  const auto arrays = predictions_from_arrays(gt, boxes, scores, images, cats);
  EXPECT_EQ(arrays, file);
  EXPECT_EQ(to_json(evaluate(gt, arrays)).dump(), to_json(evaluate(gt, file)).dump());
  scores.pop_back();
  EXPECT_THROW(predictions_from_arrays(gt, boxes, scores, images, cats), Error);
}

TEST(Api, RunConfigFromJson) {
  const auto c = run_config_from_json({{"iou_thresholds", {0.5, 0.75}}, {"nms_mode", "keep-top-1"}, {"threads", 3}});
  EXPECT_EQ(c.eval.iou_thresholds.size(), 2u);
  EXPECT_EQ(c.nms.mode, SuppressionMode::KeepTop1);
  EXPECT_EQ(c.exec.threads, 3u);
  EXPECT_THROW(run_config_from_json({{"threads", 0}}), Error);
  EXPECT_THROW(run_config_from_json(nlohmann::json::array()), Error);
  const auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(back.eval, c.eval);
  EXPECT_EQ(back.nms, c.nms);
}

TEST(Api, SimulateFile) {
  const auto j = simulate_file(fixture("deceptive_gt.json"), DetectorSpec{});
  EXPECT_EQ(j.size(), 2u);
}

}  // namespace
}  // namespace nmsap
