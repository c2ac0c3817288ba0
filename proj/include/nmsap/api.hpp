#pragma once

// File- and array-level entry points shared by the CLI and by language
// bindings, so both produce the same JSON from the same code path.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nmsap/adversary.hpp"
#include "nmsap/ap_engine.hpp"
#include "nmsap/config.hpp"
#include "nmsap/dataset.hpp"
#include "nmsap/nms_ap.hpp"
#include "nmsap/parallel.hpp"

namespace nmsap {

enum class Metric { Ap, NmsAp, Both };

inline Metric parse_metric(std::string_view s) {
  if (s == "ap") return Metric::Ap;
  if (s == "nms-ap" || s == "nms_ap") return Metric::NmsAp;
  if (s == "both") return Metric::Both;
  throw Error(ErrorKind::Usage, "unknown metric '" + std::string(s) + "' (expected ap, nms-ap, both)");
}

struct RunConfig {
  EvalConfig eval;
  NmsConfig nms;
  Execution exec;
};

/// Overlays evaluation and suppression keys found in `j`.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  if (!j.is_object()) throw Error(ErrorKind::Usage, "config must be a JSON object");
  base.eval = eval_config_from_json(j, base.eval);
  base.nms = nms_config_from_json(j, base.nms);
  if (auto it = j.find("threads"); it != j.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() <= 0) {
      throw Error(ErrorKind::Usage, "threads must be a positive integer");
    }
    base.exec.threads = static_cast<unsigned>(it->get<std::int64_t>());
  }
  return base;
}

inline nlohmann::json to_json(const RunConfig& c) {
  auto j = to_json(c.eval);
  const auto nms = to_json(c.nms);
  for (const auto& [k, v] : nms.items()) j[k == "mode" ? "nms_mode" : k] = v;
  return j;
}

inline nlohmann::json evaluate_sets(const GroundTruthSet& gt, const PredictionSet& preds,
                                    Metric metric, const RunConfig& config) {
  config.eval.validate();
  config.nms.validate();
  if (metric == Metric::Ap) return to_json(evaluate(gt, preds, config.eval, config.exec));
  if (metric == Metric::NmsAp) {
    return to_json(nms_ap_evaluate(gt, preds, config.nms, config.eval, config.exec));
  }
  return {{"ap", to_json(evaluate(gt, preds, config.eval, config.exec))},
          {"nms_ap", to_json(nms_ap_evaluate(gt, preds, config.nms, config.eval, config.exec))}};
}

inline nlohmann::json evaluate_files(const std::string& gt_path, const std::string& pred_path,
                                     Metric metric, const RunConfig& config = {}) {
  const auto gt = load_ground_truth_file(gt_path);
  const auto preds = load_predictions_file(pred_path, gt);
  return evaluate_sets(gt, preds, metric, config);
}

inline nlohmann::json nms_ap_files(const std::string& gt_path, const std::string& pred_path,
                                   const RunConfig& config = {}) {
  return evaluate_files(gt_path, pred_path, Metric::NmsAp, config);
}

/// Both metrics side by side with the gap AP - NMS-AP, overall and per category.
inline nlohmann::json compare_sets(const GroundTruthSet& gt, const PredictionSet& preds,
                                   const RunConfig& config = {}) {
  config.eval.validate();
  config.nms.validate();
  const auto ap = evaluate(gt, preds, config.eval, config.exec);
  const auto nms = nms_ap_evaluate(gt, preds, config.nms, config.eval, config.exec);
  nlohmann::json per_category = nlohmann::json::object();
  for (const auto& c : ap.per_category) {
    const auto* n = nms.find(c.id);
    const double nms_ap = n ? n->ap : 0.0;
    per_category[std::to_string(raw(c.id))] = {
        {"name", c.name}, {"ap", c.ap}, {"nms_ap", nms_ap}, {"gap", c.ap - nms_ap}};
  }
  return {{"ap", ap.mAP},
          {"nms_ap", nms.mAP},
          {"gap", ap.mAP - nms.mAP},
          {"suppressed", nms.suppression->suppressed},
          {"mode", to_string(config.nms.mode)},
          {"per_category", per_category},
          {"config", to_json(config.eval)},
          {"nms_config", to_json(config.nms)}};
}

inline nlohmann::json compare_files(const std::string& gt_path, const std::string& pred_path,
                                    const RunConfig& config = {}) {
  const auto gt = load_ground_truth_file(gt_path);
  const auto preds = load_predictions_file(pred_path, gt);
  return compare_sets(gt, preds, config);
}

inline nlohmann::json simulate_file(const std::string& gt_path, const DetectorSpec& spec) {
  return to_json(simulate(load_ground_truth_file(gt_path), spec));
}

/// In-memory predictions: `boxes` holds N rows of [x, y, width, height].
inline PredictionSet predictions_from_arrays(const GroundTruthSet& gt, std::span<const double> boxes,
                                             std::span<const double> scores,
                                             std::span<const std::int64_t> image_ids,
                                             std::span<const std::int64_t> category_ids) {
  const std::size_t n = scores.size();
  if (boxes.size() != 4 * n || image_ids.size() != n || category_ids.size() != n) {
    throw Error(ErrorKind::Schema, "array inputs must be N x 4 boxes with N scores and ids");
  }
  std::vector<Prediction> preds;
  preds.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* b = boxes.data() + 4 * i;
    if (b[2] < 0.0 || b[3] < 0.0) {
      throw Error(ErrorKind::Validation, "prediction #" + std::to_string(i) + " has negative extent");
    }
    preds.push_back({ImageId{image_ids[i]}, CategoryId{category_ids[i]},
                     BBox::from_xywh(b[0], b[1], b[2], b[3]), scores[i]});
  }
  return PredictionSet(std::move(preds), gt);
}

}  // namespace nmsap
