#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmsap/ap_engine.hpp"
#include "nmsap/dataset.hpp"
#include "nmsap/geometry.hpp"
#include "nmsap/parallel.hpp"

namespace nmsap {

struct NmsConfig {
  double gt_overlap_threshold = 0.5;  // a prediction joins a GT group when IoU > this
  SuppressionMode mode = SuppressionMode::GreedyNms;
  double nms_iou = 0.5;  // greedy-nms suppresses IoU > this

  void validate() const {
    if (!(gt_overlap_threshold > 0.0 && gt_overlap_threshold <= 1.0)) {
      throw Error(ErrorKind::Usage, "gt_overlap_threshold must lie in (0, 1]");
    }
    if (!(nms_iou > 0.0 && nms_iou <= 1.0)) {
      throw Error(ErrorKind::Usage, "nms_iou must lie in (0, 1]");
    }
  }

  friend bool operator==(const NmsConfig&, const NmsConfig&) = default;
};

inline SuppressionMode parse_suppression_mode(std::string_view s) {
  if (s == "greedy-nms") return SuppressionMode::GreedyNms;
  if (s == "keep-top-1") return SuppressionMode::KeepTop1;
  throw Error(ErrorKind::Usage, "unknown suppression mode '" + std::string(s) + "'");
}

inline nlohmann::json to_json(const NmsConfig& c) {
  return {{"gt_overlap_threshold", c.gt_overlap_threshold},
          {"mode", to_string(c.mode)},
          {"nms_iou", c.nms_iou}};
}

inline NmsConfig nms_config_from_json(const nlohmann::json& j, NmsConfig base = {}) {
  try {
    if (auto it = j.find("gt_overlap_threshold"); it != j.end()) {
      base.gt_overlap_threshold = it->get<double>();
    }
    if (auto it = j.find("nms_mode"); it != j.end()) {
      base.mode = parse_suppression_mode(it->get<std::string>());
    } else if (auto m = j.find("mode"); m != j.end()) {
      base.mode = parse_suppression_mode(m->get<std::string>());
    }
    if (auto it = j.find("nms_iou"); it != j.end()) base.nms_iou = it->get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Usage, std::string("bad suppression config: ") + e.what());
  }
  return base;
}

/// Each prediction lands in exactly one place: the group of the annotation it
/// overlaps most (same image, any category), or the residual.
struct GtAssignment {
  std::vector<std::vector<std::size_t>> groups;   // by annotation position
  std::vector<std::size_t> residual;              // ascending prediction index
  std::vector<std::optional<std::size_t>> owner;  // by prediction index
};

/// Annotation position with the largest IoU to `box` on `image` (ties go to
/// the lowest annotation id), together with that IoU.
inline std::optional<std::pair<std::size_t, double>> best_overlap(const GroundTruthSet& gt,
                                                                  ImageId image, const BBox& box) {
  std::optional<std::pair<std::size_t, double>> best;
  const auto anns = gt.annotations();
  for (auto a : gt.on_image(image)) {
    const double v = iou(box, anns[a].bbox);
    if (!best || v > best->second ||
        (v == best->second && anns[a].id < anns[best->first].id)) {
      best = {a, v};
    }
  }
  return best;
}

inline GtAssignment assign_to_gt(const GroundTruthSet& gt, const PredictionSet& preds,
                                 const NmsConfig& config = {}) {
  config.validate();
  GtAssignment out;
  out.groups.resize(gt.annotations().size());
  out.owner.resize(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto best = best_overlap(gt, preds[i].image_id, preds[i].bbox);
    if (best && best->second > config.gt_overlap_threshold) {
      out.groups[best->first].push_back(i);
      out.owner[i] = best->first;
    } else {
      out.residual.push_back(i);
    }
  }
  return out;
}

/// Suppression inside one group, ignoring category labels. Returns positions
/// into `group` of the survivors, highest score first.
inline std::vector<std::size_t> class_ignored_nms(std::span<const Prediction> group,
                                                  const NmsConfig& config = {}) {
  std::vector<std::size_t> order(group.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return group[a].score > group[b].score;
  });
  if (order.empty()) return order;
  if (config.mode == SuppressionMode::KeepTop1) return {order.front()};

  std::vector<std::size_t> kept;
  for (auto i : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(group[k].bbox, group[i].bbox) > config.nms_iou;
    });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

inline std::vector<Prediction> class_ignored_nms(const std::vector<Prediction>& group,
                                                 const NmsConfig& config = {}) {
  std::vector<Prediction> out;
  for (auto i : class_ignored_nms(std::span<const Prediction>(group), config)) {
    out.push_back(group[i]);
  }
  return out;
}

/// Original indices of the predictions that survive class-ignored
/// suppression, ascending.
inline std::vector<std::size_t> suppress(const GroundTruthSet& gt, const PredictionSet& preds,
                                         const NmsConfig& config = {}, Execution exec = {}) {
  const auto assignment = assign_to_gt(gt, preds, config);
  std::vector<std::vector<std::size_t>> survivors(assignment.groups.size());
  parallel_for(assignment.groups.size(), exec, [&](std::size_t a) {
    const auto& members = assignment.groups[a];
    if (members.empty()) return;
    std::vector<Prediction> group;
    group.reserve(members.size());
    for (auto i : members) group.push_back(preds[i]);
    for (auto pos : class_ignored_nms(std::span<const Prediction>(group), config)) {
      survivors[a].push_back(members[pos]);
    }
  });

  std::vector<std::size_t> keep = assignment.residual;
  for (const auto& s : survivors) keep.insert(keep.end(), s.begin(), s.end());
  std::sort(keep.begin(), keep.end());
  return keep;
}

/// Traditional AP over the residual predictions plus the suppression
/// survivors of each GT group.
inline EvalResult nms_ap_evaluate(const GroundTruthSet& gt, const PredictionSet& preds,
                                  const NmsConfig& nms_config = {},
                                  const EvalConfig& eval_config = {}, Execution exec = {}) {
  const auto keep = suppress(gt, preds, nms_config, exec);
  auto result = evaluate(gt, preds.subset(keep, gt), eval_config, exec);
  result.suppression = SuppressionSummary{nms_config.mode, nms_config.gt_overlap_threshold,
                                          nms_config.nms_iou, preds.size() - keep.size()};
  return result;
}

}  // namespace nmsap
