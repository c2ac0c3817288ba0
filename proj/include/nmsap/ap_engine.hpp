#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmsap/config.hpp"
#include "nmsap/dataset.hpp"
#include "nmsap/geometry.hpp"
#include "nmsap/parallel.hpp"

namespace nmsap {

// ---------------------------------------------------------------------------
// Matching

struct MatchedDetection {
  std::size_t prediction = 0;  // original index in the PredictionSet
  double score = 0.0;
  bool true_positive = false;
  std::optional<AnnotationId> annotation;
};

/// One (image, category) unit at one IoU threshold. Detections are in rank
/// order and already truncated to max_dets.
struct MatchCell {
  ImageId image{};
  CategoryId category{};
  std::vector<MatchedDetection> detections;
  std::size_t gt_count = 0;
  std::size_t unmatched_gt = 0;
};

struct MatchTable {
  double threshold = 0.0;
  std::vector<MatchCell> cells;  // ordered by (category, image)
  std::map<CategoryId, std::size_t> gt_count;  // categories with GTnum > 0 only
};

namespace detail {

/// Ranks by descending score, ties by ascending original index.
inline bool ranks_before(double score_a, std::size_t idx_a, double score_b, std::size_t idx_b) {
  if (score_a != score_b) return score_a > score_b;
  return idx_a < idx_b;
}

struct CellWork {
  ImageId image{};
  CategoryId category{};
};

/// Cells that take part in evaluation: every (image, category) with ground
/// truth, plus prediction-only cells of categories that have ground truth.
inline std::vector<CellWork> evaluation_cells(const GroundTruthSet& gt, const PredictionSet& preds) {
  std::vector<CellWork> work;
  for (const auto& [key, _] : gt.cells()) work.push_back({key.first, key.second});
  for (const auto& [key, _] : preds.cells()) {
    if (gt.count(key.second) > 0 && gt.cell(key.first, key.second).empty()) {
      work.push_back({key.first, key.second});
    }
  }
  std::sort(work.begin(), work.end(), [](const CellWork& a, const CellWork& b) {
    if (a.category != b.category) return a.category < b.category;
    return a.image < b.image;
  });
  return work;
}

/// Greedy matching of one cell at every threshold. Returns one MatchCell per
/// threshold.
inline std::vector<MatchCell> match_cell(const GroundTruthSet& gt, const PredictionSet& preds,
                                         const CellWork& unit, const EvalConfig& config) {
  std::vector<std::size_t> dets;
  for (auto i : preds.cell(unit.image, unit.category)) {
    if (preds[i].score >= config.score_floor) dets.push_back(i);
  }
  std::stable_sort(dets.begin(), dets.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(preds[a].score, a, preds[b].score, b);
  });
  if (dets.size() > config.max_dets) dets.resize(config.max_dets);

  const auto gts = gt.cell(unit.image, unit.category);
  const auto anns = gt.annotations();
  std::vector<double> ious(dets.size() * gts.size());
  for (std::size_t d = 0; d < dets.size(); ++d) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      ious[d * gts.size() + g] = iou(preds[dets[d]].bbox, anns[gts[g]].bbox);
    }
  }

  std::vector<MatchCell> out;
  out.reserve(config.iou_thresholds.size());
  std::vector<char> taken(gts.size());
  for (double threshold : config.iou_thresholds) {
    MatchCell cell{unit.image, unit.category, {}, gts.size(), gts.size()};
    cell.detections.reserve(dets.size());
    std::fill(taken.begin(), taken.end(), 0);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      std::optional<std::size_t> best;
      double best_iou = 0.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g]) continue;
        const double v = ious[d * gts.size() + g];
        if (v < threshold) continue;
        if (!best || v > best_iou ||
            (v == best_iou && anns[gts[g]].id < anns[gts[*best]].id)) {
          best = g;
          best_iou = v;
        }
      }
      MatchedDetection m{dets[d], preds[dets[d]].score, best.has_value(), std::nullopt};
      if (best) {
        taken[*best] = 1;
        m.annotation = anns[gts[*best]].id;
        --cell.unmatched_gt;
      }
      cell.detections.push_back(m);
    }
    out.push_back(std::move(cell));
  }
  return out;
}

inline std::map<CategoryId, std::size_t> category_gt_counts(const GroundTruthSet& gt) {
  std::map<CategoryId, std::size_t> counts;
  for (const auto& cat : gt.categories()) {
    if (auto n = gt.count(cat.id); n > 0) counts[cat.id] = n;
  }
  return counts;
}

}  // namespace detail

/// Matches at every configured threshold; one table per threshold, in
/// threshold order.
inline std::vector<MatchTable> match_all(const GroundTruthSet& gt, const PredictionSet& preds,
                                         const EvalConfig& config, Execution exec = {}) {
  config.validate();
  const auto work = detail::evaluation_cells(gt, preds);
  std::vector<std::vector<MatchCell>> per_cell(work.size());
  parallel_for(work.size(), exec,
               [&](std::size_t i) { per_cell[i] = detail::match_cell(gt, preds, work[i], config); });

  const auto counts = detail::category_gt_counts(gt);
  std::vector<MatchTable> tables(config.iou_thresholds.size());
  for (std::size_t t = 0; t < tables.size(); ++t) {
    tables[t].threshold = config.iou_thresholds[t];
    tables[t].gt_count = counts;
    tables[t].cells.reserve(work.size());
    for (auto& cells : per_cell) tables[t].cells.push_back(std::move(cells[t]));
  }
  return tables;
}

inline MatchTable match(const GroundTruthSet& gt, const PredictionSet& preds, double threshold,
                        EvalConfig config = {}) {
  config.iou_thresholds = {threshold};
  return std::move(match_all(gt, preds, config).front());
}

// ---------------------------------------------------------------------------
// Precision / recall

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  CategoryId category{};
  std::size_t gt_count = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::vector<PRPoint> points;  // one per ranked detection

  /// Without ground truth the curve carries no information and is excluded
  /// from averaging.
  bool excluded() const noexcept { return gt_count == 0; }
};

/// Cumulative precision and recall over the category's detections pooled
/// across images, in global rank order.
inline PRCurve pr_curve(const MatchTable& table, CategoryId category) {
  PRCurve curve;
  curve.category = category;
  if (auto it = table.gt_count.find(category); it != table.gt_count.end()) {
    curve.gt_count = it->second;
  }
  if (curve.excluded()) return curve;

  auto first = std::lower_bound(table.cells.begin(), table.cells.end(), category,
                                [](const MatchCell& c, CategoryId id) { return c.category < id; });
  std::vector<const MatchedDetection*> ranked;
  for (auto it = first; it != table.cells.end() && it->category == category; ++it) {
    for (const auto& d : it->detections) ranked.push_back(&d);
  }
  std::sort(ranked.begin(), ranked.end(), [](const MatchedDetection* a, const MatchedDetection* b) {
    return detail::ranks_before(a->score, a->prediction, b->score, b->prediction);
  });

  curve.points.reserve(ranked.size());
  const double gt_total = static_cast<double>(curve.gt_count);
  for (const auto* d : ranked) {
    d->true_positive ? ++curve.tp : ++curve.fp;
    const double tp = static_cast<double>(curve.tp);
    curve.points.push_back({tp / gt_total, tp / static_cast<double>(curve.tp + curve.fp)});
  }
  return curve;
}

/// Mean over the recall grid of the best precision reached at recall >= r,
/// 0 where that recall is never reached.
inline double interpolated_ap(const PRCurve& curve, std::size_t recall_points = 101) {
  if (curve.excluded() || curve.points.empty()) return 0.0;
  const auto& pts = curve.points;
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double sum = 0.0;
  for (double r : linspace(0.0, 1.0, recall_points)) {
    auto it = std::lower_bound(pts.begin(), pts.end(), r,
                               [](const PRPoint& p, double v) { return p.recall < v; });
    if (it != pts.end()) sum += envelope[static_cast<std::size_t>(it - pts.begin())];
  }
  return sum / static_cast<double>(recall_points);
}

// ---------------------------------------------------------------------------
// Full evaluation

enum class SuppressionMode { GreedyNms, KeepTop1 };

inline std::string_view to_string(SuppressionMode mode) noexcept {
  return mode == SuppressionMode::GreedyNms ? "greedy-nms" : "keep-top-1";
}

/// Present on results produced through class-ignored suppression.
struct SuppressionSummary {
  SuppressionMode mode = SuppressionMode::GreedyNms;
  double gt_overlap_threshold = 0.5;
  double nms_iou = 0.5;
  std::size_t suppressed = 0;
};

struct CategoryResult {
  CategoryId id{};
  std::string name;
  std::size_t gt_count = 0;
  std::vector<double> ap_per_threshold;
  std::vector<std::size_t> tp_per_threshold;
  std::vector<std::size_t> fp_per_threshold;
  std::vector<PRCurve> curves;  // per threshold
  double ap = 0.0;              // mean over thresholds
};

struct EvalResult {
  EvalConfig config;
  std::vector<CategoryResult> per_category;  // ascending id, GTnum > 0 only
  double mAP = 0.0;
  std::optional<SuppressionSummary> suppression;

  const CategoryResult* find(CategoryId id) const {
    for (const auto& c : per_category) {
      if (c.id == id) return &c;
    }
    return nullptr;
  }
};

inline EvalResult evaluate(const GroundTruthSet& gt, const PredictionSet& preds,
                           const EvalConfig& config = {}, Execution exec = {}) {
  const auto tables = match_all(gt, preds, config, exec);
  const auto counts = detail::category_gt_counts(gt);

  EvalResult result;
  result.config = config;
  for (const auto& [id, n] : counts) {
    CategoryResult c;
    c.id = id;
    c.name = gt.category(id).name;
    c.gt_count = n;
    result.per_category.push_back(std::move(c));
  }

  parallel_for(result.per_category.size(), exec, [&](std::size_t k) {
    auto& c = result.per_category[k];
    for (const auto& table : tables) {
      auto curve = pr_curve(table, c.id);
      c.ap_per_threshold.push_back(interpolated_ap(curve, config.recall_points));
      c.tp_per_threshold.push_back(curve.tp);
      c.fp_per_threshold.push_back(curve.fp);
      c.curves.push_back(std::move(curve));
    }
    c.ap = std::accumulate(c.ap_per_threshold.begin(), c.ap_per_threshold.end(), 0.0) /
           static_cast<double>(c.ap_per_threshold.size());
  });

  if (!result.per_category.empty()) {
    double sum = 0.0;
    for (const auto& c : result.per_category) sum += c.ap;
    result.mAP = sum / static_cast<double>(result.per_category.size());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

/// Compact, stable key for a threshold ("0.5", "0.55", ...).
inline std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", t);
  return buf;
}

inline nlohmann::json to_json(const EvalResult& r, bool include_curves = false) {
  using nlohmann::json;
  json per_category = json::object();
  for (const auto& c : r.per_category) {
    json per_threshold = json::object();
    json tp = json::object();
    json fp = json::object();
    for (std::size_t t = 0; t < c.ap_per_threshold.size(); ++t) {
      const auto key = threshold_key(r.config.iou_thresholds[t]);
      per_threshold[key] = c.ap_per_threshold[t];
      tp[key] = c.tp_per_threshold[t];
      fp[key] = c.fp_per_threshold[t];
    }
    json entry = {{"name", c.name},  {"gt_count", c.gt_count}, {"ap", c.ap},
                  {"per_threshold", per_threshold}, {"tp", tp}, {"fp", fp}};
    if (include_curves) {
      json curves = json::object();
      for (std::size_t t = 0; t < c.curves.size(); ++t) {
        json pts = json::array();
        for (const auto& p : c.curves[t].points) pts.push_back({p.recall, p.precision});
        curves[threshold_key(r.config.iou_thresholds[t])] = pts;
      }
      entry["pr_curves"] = curves;
    }
    per_category[std::to_string(raw(c.id))] = entry;
  }
  json out = {{"mAP", r.mAP}, {"per_category", per_category}, {"config", to_json(r.config)}};
  if (r.suppression) {
    out["nms_ap"] = true;
    out["suppressed"] = r.suppression->suppressed;
    out["mode"] = to_string(r.suppression->mode);
    out["gt_overlap_threshold"] = r.suppression->gt_overlap_threshold;
    out["nms_iou"] = r.suppression->nms_iou;
  } else {
    out["nms_ap"] = false;
  }
  return out;
}

}  // namespace nmsap
