#pragma once

// Brute-force AP used to cross-check ap_engine. Deliberately naive and
// self-contained: own IoU on wire-form boxes, quadratic matching and
// cumulative sums recomputed from scratch at every rank. Only the data model
// and the config struct are shared with the engine.

#include <algorithm>
#include <map>
#include <vector>

#include "nmsap/config.hpp"
#include "nmsap/dataset.hpp"

namespace nmsap {

struct OracleResult {
  std::map<CategoryId, std::vector<double>> ap_per_threshold;  // GTnum > 0 only
  std::map<CategoryId, double> ap;
  double mAP = 0.0;
};

namespace oracle_detail {

inline double box_iou(const BBox& a, const BBox& b) {
  const auto wa = a.to_xywh();
  const auto wb = b.to_xywh();
  const double left = std::max(wa[0], wb[0]);
  const double top = std::max(wa[1], wb[1]);
  const double right = std::min(wa[0] + wa[2], wb[0] + wb[2]);
  const double bottom = std::min(wa[1] + wa[3], wb[1] + wb[3]);
  double inter = 0.0;
  if (right > left && bottom > top) inter = (right - left) * (bottom - top);
  const double uni = wa[2] * wa[3] + wb[2] * wb[3] - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

struct Row {
  std::size_t index;
  double score;
  ImageId image;
  bool tp = false;
};

inline bool higher(const Row& a, const Row& b) {
  return a.score > b.score || (a.score == b.score && a.index < b.index);
}

}  // namespace oracle_detail

inline OracleResult oracle_ap(const GroundTruthSet& gt, const PredictionSet& preds,
                              const EvalConfig& config = {}) {
  using oracle_detail::Row;
  OracleResult result;
  const auto anns = gt.annotations();
  const auto all = preds.predictions();

  std::vector<CategoryId> categories;
  for (const auto& c : gt.categories()) {
    std::size_t n = 0;
    for (const auto& a : anns) n += (a.category_id == c.id);
    if (n > 0) categories.push_back(c.id);
  }
  std::sort(categories.begin(), categories.end());

  for (CategoryId cat : categories) {
    std::size_t gt_total = 0;
    for (const auto& a : anns) gt_total += (a.category_id == cat);

    for (double threshold : config.iou_thresholds) {
      // Top max_dets per image, then every image's rows matched in rank order.
      std::vector<Row> rows;
      for (const auto& img : gt.images()) {
        std::vector<Row> mine;
        for (std::size_t i = 0; i < all.size(); ++i) {
          if (all[i].image_id == img.id && all[i].category_id == cat &&
              all[i].score >= config.score_floor) {
            mine.push_back({i, all[i].score, img.id});
          }
        }
        std::sort(mine.begin(), mine.end(), oracle_detail::higher);
        if (mine.size() > config.max_dets) mine.resize(config.max_dets);

        std::vector<std::size_t> targets;
        for (std::size_t a = 0; a < anns.size(); ++a) {
          if (anns[a].image_id == img.id && anns[a].category_id == cat) targets.push_back(a);
        }
        std::vector<bool> used(targets.size(), false);
        for (auto& row : mine) {
          int pick = -1;
          for (std::size_t g = 0; g < targets.size(); ++g) {
            if (used[g]) continue;
            const double v = oracle_detail::box_iou(all[row.index].bbox, anns[targets[g]].bbox);
            if (v < threshold) continue;
            if (pick < 0) {
              pick = static_cast<int>(g);
              continue;
            }
            const double cur =
                oracle_detail::box_iou(all[row.index].bbox, anns[targets[pick]].bbox);
            if (v > cur || (v == cur && anns[targets[g]].id < anns[targets[pick]].id)) {
              pick = static_cast<int>(g);
            }
          }
          if (pick >= 0) {
            used[pick] = true;
            row.tp = true;
          }
        }
        rows.insert(rows.end(), mine.begin(), mine.end());
      }
      std::sort(rows.begin(), rows.end(), oracle_detail::higher);

      std::vector<double> precision(rows.size());
      std::vector<double> recall(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        std::size_t tp = 0;
        for (std::size_t j = 0; j <= k; ++j) tp += rows[j].tp ? 1 : 0;
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / static_cast<double>(gt_total);
      }

      double total = 0.0;
      for (double r : linspace(0.0, 1.0, config.recall_points)) {
        double best = 0.0;
        for (std::size_t k = 0; k < rows.size(); ++k) {
          if (recall[k] >= r) best = std::max(best, precision[k]);
        }
        total += best;
      }
      result.ap_per_threshold[cat].push_back(total / static_cast<double>(config.recall_points));
    }
    double s = 0.0;
    for (double v : result.ap_per_threshold[cat]) s += v;
    result.ap[cat] = s / static_cast<double>(config.iou_thresholds.size());
  }

  if (!result.ap.empty()) {
    double s = 0.0;
    for (const auto& [_, v] : result.ap) s += v;
    result.mAP = s / static_cast<double>(result.ap.size());
  }
  return result;
}

}  // namespace nmsap
