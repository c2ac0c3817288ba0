#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nmsap/error.hpp"

namespace nmsap {

/// Equal scores rank by ascending original prediction index.
enum class TieBreak { IndexAscending };

inline std::string_view to_string(TieBreak) noexcept { return "score-desc-index-asc"; }

/// `count` evenly spaced values from `start` to `stop` inclusive, computed the
/// way numpy.linspace does so the grid matches the reference COCO toolkit bit
/// for bit (start + i * step, last value pinned to `stop`).
inline std::vector<double> linspace(double start, double stop, std::size_t count) {
  std::vector<double> out;
  if (count == 0) return out;
  if (count == 1) return {start};
  const double step = (stop - start) / static_cast<double>(count - 1);
  out.reserve(count);
  for (std::size_t i = 0; i + 1 < count; ++i) out.push_back(static_cast<double>(i) * step + start);
  out.push_back(stop);
  return out;
}

/// Parses "a:b:step" into an inclusive threshold grid.
inline std::vector<double> parse_threshold_range(std::string_view spec) {
  auto fail = [&] {
    return Error(ErrorKind::Usage, "IoU thresholds must be 'start:stop:step', got '" +
                                       std::string(spec) + "'");
  };
  const auto c1 = spec.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : spec.find(':', c1 + 1);
  if (c2 == std::string_view::npos) throw fail();
  double start = 0, stop = 0, step = 0;
  try {
    start = std::stod(std::string(spec.substr(0, c1)));
    stop = std::stod(std::string(spec.substr(c1 + 1, c2 - c1 - 1)));
    step = std::stod(std::string(spec.substr(c2 + 1)));
  } catch (const std::exception&) {
    throw fail();
  }
  if (!(step > 0.0) || stop < start) throw fail();
  const double n = std::round((stop - start) / step);
  if (std::abs(n * step - (stop - start)) > 1e-9) throw fail();
  return linspace(start, stop, static_cast<std::size_t>(n) + 1);
}

inline std::vector<double> coco_iou_thresholds() { return linspace(0.5, 0.95, 10); }

struct EvalConfig {
  std::vector<double> iou_thresholds = coco_iou_thresholds();
  std::size_t recall_points = 101;
  std::size_t max_dets = 100;  // per image and category
  double score_floor = 0.0;
  TieBreak tie_break = TieBreak::IndexAscending;

  void validate() const {
    if (iou_thresholds.empty()) throw Error(ErrorKind::Usage, "at least one IoU threshold required");
    for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
      const double t = iou_thresholds[i];
      if (!(t > 0.0 && t <= 1.0)) {
        throw Error(ErrorKind::Usage, "IoU thresholds must lie in (0, 1]");
      }
      if (i > 0 && !(t > iou_thresholds[i - 1])) {
        throw Error(ErrorKind::Usage, "IoU thresholds must be strictly increasing");
      }
    }
    if (recall_points < 2) throw Error(ErrorKind::Usage, "recall_points must be >= 2");
    if (max_dets == 0) throw Error(ErrorKind::Usage, "max_dets must be >= 1");
    if (!(score_floor >= 0.0 && score_floor <= 1.0)) {
      throw Error(ErrorKind::Usage, "score_floor must lie in [0, 1]");
    }
  }

  std::vector<double> recall_grid() const { return linspace(0.0, 1.0, recall_points); }

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

inline nlohmann::json to_json(const EvalConfig& c) {
  return {{"iou_thresholds", c.iou_thresholds},
          {"recall_points", c.recall_points},
          {"max_dets", c.max_dets},
          {"score_floor", c.score_floor},
          {"tie_break", to_string(c.tie_break)}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are ignored so
/// one config file can carry both evaluation and suppression settings.
inline EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig base = {}) {
  try {
    if (auto it = j.find("iou_thresholds"); it != j.end()) {
      base.iou_thresholds = it->is_string() ? parse_threshold_range(it->get<std::string>())
                                            : it->get<std::vector<double>>();
    }
    if (auto it = j.find("recall_points"); it != j.end()) base.recall_points = it->get<std::size_t>();
    if (auto it = j.find("max_dets"); it != j.end()) base.max_dets = it->get<std::size_t>();
    if (auto it = j.find("score_floor"); it != j.end()) base.score_floor = it->get<double>();
    if (auto it = j.find("tie_break"); it != j.end()) {
      if (it->get<std::string>() != to_string(TieBreak::IndexAscending)) {
        throw Error(ErrorKind::Usage, "unknown tie_break rule '" + it->get<std::string>() + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Usage, std::string("bad evaluation config: ") + e.what());
  }
  return base;
}

}  // namespace nmsap
