#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmsap/ap_engine.hpp"
#include "nmsap/config.hpp"
#include "nmsap/dataset.hpp"
#include "nmsap/nms_ap.hpp"

namespace nmsap {

// ---------------------------------------------------------------------------
// Aspect report

/// Aspect a sub-dataset belongs to when the caller does not say.
inline std::string default_aspect(std::string_view subdataset) {
  const auto s = text::normalize(subdataset);
  if (s == "coco") return "object";
  if (s == "logo" || s == "landmark" || s == "celebrity") return "proper noun";
  if (s == "color" || s == "material") return "attribute";
  return s;
}

/// Radar axis order; aspects outside this list follow alphabetically.
inline int aspect_rank(std::string_view aspect) {
  static constexpr std::string_view order[] = {"object",   "proper noun",  "attribute",
                                               "position", "relationship", "negation"};
  for (int i = 0; i < 6; ++i) {
    if (aspect == order[i]) return i;
  }
  return 6;
}

struct SubtaskResult {
  std::string name;
  std::string aspect;
  double nms_ap = 0.0;
  double ap = 0.0;
  EvalConfig nms_config;  // evaluation config behind each number
  EvalConfig ap_config;

  double gap() const noexcept { return ap - nms_ap; }
};

struct AspectAverage {
  std::string aspect;
  std::size_t subtasks = 0;
  double nms_ap = 0.0;
  double ap = 0.0;
  double gap() const noexcept { return ap - nms_ap; }
};

struct AspectReport {
  std::vector<SubtaskResult> subtasks;
  std::vector<AspectAverage> aspects;  // radar order
  double total_nms_ap = 0.0;           // mean over subtasks, not over aspects
  double total_ap = 0.0;

  double total_gap() const noexcept { return total_ap - total_nms_ap; }
};

inline SubtaskResult subtask(std::string name, std::string aspect, const EvalResult& nms,
                             const EvalResult& ap) {
  return {std::move(name), std::move(aspect), nms.mAP, ap.mAP, nms.config, ap.config};
}

namespace detail {

/// Order-independent mean: sums sorted values so permuting inputs cannot
/// change the rounding.
inline double stable_mean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

inline AspectReport aspect_report(std::vector<SubtaskResult> subtasks) {
  AspectReport report;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_aspect;
  std::vector<double> all_nms, all_ap;
  for (const auto& s : subtasks) {
    if (!(s.nms_config == s.ap_config)) {
      throw Error(ErrorKind::Validation,
                  "subtask '" + s.name + "': NMS-AP and AP were computed with different configs");
    }
    by_aspect[s.aspect].first.push_back(s.nms_ap);
    by_aspect[s.aspect].second.push_back(s.ap);
    all_nms.push_back(s.nms_ap);
    all_ap.push_back(s.ap);
  }
  for (auto& [aspect, values] : by_aspect) {
    report.aspects.push_back({aspect, values.first.size(), detail::stable_mean(values.first),
                              detail::stable_mean(values.second)});
  }
  std::stable_sort(report.aspects.begin(), report.aspects.end(),
                   [](const AspectAverage& a, const AspectAverage& b) {
                     return aspect_rank(a.aspect) < aspect_rank(b.aspect);
                   });
  report.total_nms_ap = detail::stable_mean(all_nms);
  report.total_ap = detail::stable_mean(all_ap);
  report.subtasks = std::move(subtasks);
  return report;
}

inline nlohmann::json to_json(const AspectReport& r) {
  using nlohmann::json;
  json subtasks = json::array();
  for (const auto& s : r.subtasks) {
    subtasks.push_back({{"name", s.name},
                        {"aspect", s.aspect},
                        {"nms_ap", s.nms_ap},
                        {"ap", s.ap},
                        {"gap", s.gap()},
                        {"config", to_json(s.ap_config)}});
  }
  json aspects = json::array();
  json radar_labels = json::array();
  json radar_nms = json::array();
  json radar_ap = json::array();
  for (const auto& a : r.aspects) {
    aspects.push_back({{"aspect", a.aspect},
                       {"subtasks", a.subtasks},
                       {"nms_ap", a.nms_ap},
                       {"ap", a.ap},
                       {"gap", a.gap()}});
    radar_labels.push_back(a.aspect);
    radar_nms.push_back(a.nms_ap);
    radar_ap.push_back(a.ap);
  }
  return {{"subtasks", subtasks},
          {"aspects", aspects},
          {"total", {{"nms_ap", r.total_nms_ap}, {"ap", r.total_ap}, {"gap", r.total_gap()}}},
          {"radar", {{"axes", radar_labels}, {"nms_ap", radar_nms}, {"ap", radar_ap}}}};
}

/// Inverse of to_json; aspect averages and totals are taken as serialized.
inline AspectReport aspect_report_from_json(const nlohmann::json& j) {
  AspectReport r;
  try {
    for (const auto& s : j.at("subtasks")) {
      const auto config = eval_config_from_json(s.at("config"));
      r.subtasks.push_back({s.at("name").get<std::string>(), s.at("aspect").get<std::string>(),
                            s.at("nms_ap").get<double>(), s.at("ap").get<double>(), config,
                            config});
    }
    for (const auto& a : j.at("aspects")) {
      r.aspects.push_back({a.at("aspect").get<std::string>(), a.at("subtasks").get<std::size_t>(),
                           a.at("nms_ap").get<double>(), a.at("ap").get<double>()});
    }
    r.total_nms_ap = j.at("total").at("nms_ap").get<double>();
    r.total_ap = j.at("total").at("ap").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("aspect report: ") + e.what());
  }
  return r;
}

inline std::string to_csv(const AspectReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "kind,name,aspect,nms_ap,ap,gap\n";
  for (const auto& s : r.subtasks) {
    out << "subtask," << s.name << ',' << s.aspect << ',' << s.nms_ap << ',' << s.ap << ','
        << s.gap() << '\n';
  }
  for (const auto& a : r.aspects) {
    out << "aspect,," << a.aspect << ',' << a.nms_ap << ',' << a.ap << ',' << a.gap() << '\n';
  }
  out << "total,,," << r.total_nms_ap << ',' << r.total_ap << ',' << r.total_gap() << '\n';
  return out.str();
}

/// Static radar chart of per-aspect NMS-AP (filled) and AP (outline).
inline std::string to_svg(const AspectReport& r, int size = 480) {
  std::ostringstream svg;
  const double c = size / 2.0;
  const double radius = size * 0.36;
  const std::size_t n = r.aspects.size();
  auto point = [&](std::size_t i, double value) {
    const double angle = -std::numbers::pi / 2 + 2 * std::numbers::pi * static_cast<double>(i) /
                                                     static_cast<double>(std::max<std::size_t>(n, 1));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", c + radius * value * std::cos(angle),
                  c + radius * value * std::sin(angle));
    return std::string(buf);
  };
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
  for (double ring : {0.25, 0.5, 0.75, 1.0}) {
    svg << "  <polygon fill=\"none\" stroke=\"#ccc\" points=\"";
    for (std::size_t i = 0; i < n; ++i) svg << point(i, ring) << ' ';
    svg << "\"/>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    svg << "  <line x1=\"" << c << "\" y1=\"" << c << "\" stroke=\"#ccc\" ";
    const auto end = point(i, 1.0);
    const auto comma = end.find(',');
    svg << "x2=\"" << end.substr(0, comma) << "\" y2=\"" << end.substr(comma + 1) << "\"/>\n";
    const auto label = point(i, 1.12);
    const auto lc = label.find(',');
    svg << "  <text x=\"" << label.substr(0, lc) << "\" y=\"" << label.substr(lc + 1)
        << "\" font-size=\"12\" text-anchor=\"middle\">" << r.aspects[i].aspect << "</text>\n";
  }
  svg << "  <polygon fill=\"none\" stroke=\"#888\" stroke-dasharray=\"4 2\" points=\"";
  for (std::size_t i = 0; i < n; ++i) svg << point(i, r.aspects[i].ap) << ' ';
  svg << "\"/>\n";
  svg << "  <polygon fill=\"#3b7dd8\" fill-opacity=\"0.35\" stroke=\"#3b7dd8\" points=\"";
  for (std::size_t i = 0; i < n; ++i) svg << point(i, r.aspects[i].nms_ap) << ' ';
  svg << "\"/>\n</svg>\n";
  return svg.str();
}

// ---------------------------------------------------------------------------
// Confidence distributions

using LabelPredicate = std::function<bool(const Prediction&, const Annotation&)>;

inline bool same_label(const Prediction& p, const Annotation& a) {
  return p.category_id == a.category_id;
}

struct ConfidenceDistribution {
  double iou_min = 0.9;
  std::vector<std::size_t> positive;  // bin k covers [k/B, (k+1)/B), last bin closed
  std::vector<std::size_t> negative;

  std::size_t bins() const noexcept { return positive.size(); }
  std::size_t positive_total() const {
    return std::accumulate(positive.begin(), positive.end(), std::size_t{0});
  }
  std::size_t negative_total() const {
    return std::accumulate(negative.begin(), negative.end(), std::size_t{0});
  }
};

inline std::size_t score_bin(double score, std::size_t bins) {
  const auto k = static_cast<std::size_t>(std::floor(std::clamp(score, 0.0, 1.0) * static_cast<double>(bins)));
  return std::min(k, bins - 1);
}

/// Every prediction whose best-overlapping annotation (same image, any
/// category) exceeds `iou_min` is tallied once, by whether its label fits
/// that annotation. No deduplication of several predictions on one object.
inline ConfidenceDistribution confidence_distribution(const GroundTruthSet& gt,
                                                      const PredictionSet& preds,
                                                      double iou_min = 0.9,
                                                      const LabelPredicate& positive = same_label,
                                                      std::size_t bins = 20) {
  if (bins == 0) throw Error(ErrorKind::Usage, "histogram needs at least one bin");
  ConfidenceDistribution d{iou_min, std::vector<std::size_t>(bins), std::vector<std::size_t>(bins)};
  const auto anns = gt.annotations();
  for (const auto& p : preds.predictions()) {
    const auto best = best_overlap(gt, p.image_id, p.bbox);
    if (!best || !(best->second > iou_min)) continue;
    auto& hist = positive(p, anns[best->first]) ? d.positive : d.negative;
    ++hist[score_bin(p.score, bins)];
  }
  return d;
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}.
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1) ? term : -term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Two-sample Kolmogorov-Smirnov test between the positive and negative
/// histograms, evaluated at bin edges (conservative for binned data).
inline KsResult ks_two_sample(const ConfidenceDistribution& d) {
  const double n = static_cast<double>(d.positive_total());
  const double m = static_cast<double>(d.negative_total());
  if (n == 0 || m == 0) return {};
  double cp = 0, cn = 0, dmax = 0;
  for (std::size_t k = 0; k < d.bins(); ++k) {
    cp += static_cast<double>(d.positive[k]);
    cn += static_cast<double>(d.negative[k]);
    dmax = std::max(dmax, std::abs(cp / n - cn / m));
  }
  const double en = std::sqrt(n * m / (n + m));
  return {dmax, kolmogorov_q((en + 0.12 + 0.11 / en) * dmax)};
}

inline nlohmann::json to_json(const ConfidenceDistribution& d) {
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t k = 0; k <= d.bins(); ++k) {
    edges.push_back(static_cast<double>(k) / static_cast<double>(d.bins()));
  }
  const auto ks = ks_two_sample(d);
  return {{"iou_min", d.iou_min},
          {"bin_edges", edges},
          {"positive", d.positive},
          {"negative", d.negative},
          {"positive_total", d.positive_total()},
          {"negative_total", d.negative_total()},
          {"ks", {{"statistic", ks.statistic}, {"p_value", ks.p_value}}}};
}

inline std::string to_csv(const ConfidenceDistribution& d) {
  std::ostringstream out;
  out << "bin_low,bin_high,positive,negative\n";
  for (std::size_t k = 0; k < d.bins(); ++k) {
    out << static_cast<double>(k) / static_cast<double>(d.bins()) << ','
        << static_cast<double>(k + 1) / static_cast<double>(d.bins()) << ',' << d.positive[k]
        << ',' << d.negative[k] << '\n';
  }
  return out.str();
}

}  // namespace nmsap
