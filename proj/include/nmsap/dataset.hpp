#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nmsap/error.hpp"
#include "nmsap/geometry.hpp"
#include "nmsap/text.hpp"

namespace nmsap {

using json = nlohmann::json;

enum class ImageId : std::int64_t {};
enum class CategoryId : std::int64_t {};
enum class AnnotationId : std::int64_t {};

template <typename Id>
constexpr std::int64_t raw(Id id) noexcept {
  return static_cast<std::int64_t>(id);
}

struct Category {
  CategoryId id{};
  std::string name;
  friend bool operator==(const Category&, const Category&) = default;
};

struct ImageRecord {
  ImageId id{};
  double width = 0.0;
  double height = 0.0;
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Annotation {
  AnnotationId id{};
  ImageId image_id{};
  CategoryId category_id{};
  BBox bbox;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Prediction {
  ImageId image_id{};
  CategoryId category_id{};
  BBox bbox;
  double score = 0.0;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

using CellKey = std::pair<ImageId, CategoryId>;

namespace detail {

inline const json& require(const json& obj, std::string_view key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorKind::Schema, std::string(where) + ": missing field '" + std::string(key) + "'");
  }
  return *it;
}

inline double number(const json& v, std::string_view what) {
  if (!v.is_number()) throw Error(ErrorKind::Schema, std::string(what) + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorKind::Validation, std::string(what) + " must be finite");
  return d;
}

/// Ids may arrive as int or float; floats must carry an integral value.
inline std::int64_t integer_id(const json& v, std::string_view what) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && std::floor(d) == d && std::abs(d) < 9.0e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  throw Error(ErrorKind::Schema, std::string(what) + " must be an integer id");
}

inline BBox wire_box(const json& v, std::string_view where) {
  if (!v.is_array() || v.size() != 4) {
    throw Error(ErrorKind::Schema, std::string(where) + ": bbox must be [x, y, width, height]");
  }
  const double x = number(v[0], "bbox x");
  const double y = number(v[1], "bbox y");
  const double w = number(v[2], "bbox width");
  const double h = number(v[3], "bbox height");
  if (w < 0.0 || h < 0.0) {
    throw Error(ErrorKind::Validation, std::string(where) + ": bbox width/height must be >= 0");
  }
  return BBox::from_xywh(x, y, w, h);
}

inline json wire_array(const BBox& b) {
  const auto xywh = b.to_xywh();
  return json::array({xywh[0], xywh[1], xywh[2], xywh[3]});
}

inline json parse(std::istream& in) {
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
}

inline std::ifstream open(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  return in;
}

}  // namespace detail

/// Images, category vocabulary and annotated instances, indexed by
/// (image, category). Immutable after construction.
class GroundTruthSet {
 public:
  GroundTruthSet() = default;

  GroundTruthSet(std::vector<ImageRecord> images, std::vector<Category> categories,
                 std::vector<Annotation> annotations)
      : images_(std::move(images)),
        categories_(std::move(categories)),
        annotations_(std::move(annotations)) {
    build_index();
  }

  std::span<const ImageRecord> images() const noexcept { return images_; }
  std::span<const Category> categories() const noexcept { return categories_; }
  std::span<const Annotation> annotations() const noexcept { return annotations_; }

  bool has_image(ImageId id) const { return image_pos_.contains(raw(id)); }
  bool has_category(CategoryId id) const { return category_pos_.contains(raw(id)); }

  const ImageRecord& image(ImageId id) const { return images_[image_pos_.at(raw(id))]; }
  const Category& category(CategoryId id) const { return categories_[category_pos_.at(raw(id))]; }

  /// Annotation positions for one (image, category) cell, ascending.
  std::span<const std::size_t> cell(ImageId image, CategoryId category) const {
    auto it = cells_.find({image, category});
    if (it == cells_.end()) return {};
    return it->second;
  }

  /// Annotation positions on one image across all categories, ascending.
  std::span<const std::size_t> on_image(ImageId image) const {
    auto it = by_image_.find(image);
    if (it == by_image_.end()) return {};
    return it->second;
  }

  const std::map<CellKey, std::vector<std::size_t>>& cells() const noexcept { return cells_; }

  std::size_t count(CategoryId category) const {
    auto it = per_category_.find(category);
    return it == per_category_.end() ? 0 : it->second;
  }

  /// Maps a free-text label (case and whitespace insensitive) to its id.
  std::optional<CategoryId> find_category(std::string_view label) const {
    auto it = label_to_id_.find(text::normalize(label));
    if (it == label_to_id_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const GroundTruthSet& a, const GroundTruthSet& b) {
    return a.images_ == b.images_ && a.categories_ == b.categories_ &&
           a.annotations_ == b.annotations_;
  }

 private:
  void build_index() {
    for (std::size_t i = 0; i < images_.size(); ++i) {
      const auto& img = images_[i];
      if (!(img.width > 0.0) || !(img.height > 0.0)) {
        throw Error(ErrorKind::Validation,
                    "image " + std::to_string(raw(img.id)) + " must have positive width and height");
      }
      if (!image_pos_.emplace(raw(img.id), i).second) {
        throw Error(ErrorKind::Referential, "duplicate image id " + std::to_string(raw(img.id)));
      }
    }
    for (std::size_t i = 0; i < categories_.size(); ++i) {
      const auto& cat = categories_[i];
      if (text::normalize(cat.name).empty()) {
        throw Error(ErrorKind::Validation,
                    "category " + std::to_string(raw(cat.id)) + " has an empty name");
      }
      if (!category_pos_.emplace(raw(cat.id), i).second) {
        throw Error(ErrorKind::Referential, "duplicate category id " + std::to_string(raw(cat.id)));
      }
      label_to_id_.emplace(text::normalize(cat.name), cat.id);
    }
    std::unordered_map<std::int64_t, std::size_t> seen_ann;
    for (std::size_t i = 0; i < annotations_.size(); ++i) {
      const auto& ann = annotations_[i];
      const auto tag = "annotation " + std::to_string(raw(ann.id));
      if (!seen_ann.emplace(raw(ann.id), i).second) {
        throw Error(ErrorKind::Referential, "duplicate annotation id " + std::to_string(raw(ann.id)));
      }
      if (!has_image(ann.image_id)) {
        throw Error(ErrorKind::Referential,
                    tag + " references unknown image id " + std::to_string(raw(ann.image_id)));
      }
      if (!has_category(ann.category_id)) {
        throw Error(ErrorKind::Referential,
                    tag + " references unknown category id " + std::to_string(raw(ann.category_id)));
      }
      if (!ann.bbox.is_canonical()) {
        throw Error(ErrorKind::Validation, tag + " has a non-canonical box");
      }
      cells_[{ann.image_id, ann.category_id}].push_back(i);
      by_image_[ann.image_id].push_back(i);
      ++per_category_[ann.category_id];
    }
  }

  std::vector<ImageRecord> images_;
  std::vector<Category> categories_;
  std::vector<Annotation> annotations_;
  std::unordered_map<std::int64_t, std::size_t> image_pos_;
  std::unordered_map<std::int64_t, std::size_t> category_pos_;
  std::unordered_map<std::string, CategoryId> label_to_id_;
  std::map<CellKey, std::vector<std::size_t>> cells_;
  std::map<ImageId, std::vector<std::size_t>> by_image_;
  std::map<CategoryId, std::size_t> per_category_;
};

/// Scored, labelled boxes. A prediction's position in the set is its
/// original index, which breaks score ties everywhere downstream.
class PredictionSet {
 public:
  PredictionSet() = default;

  /// Validates every prediction against `gt`.
  PredictionSet(std::vector<Prediction> predictions, const GroundTruthSet& gt)
      : predictions_(std::move(predictions)) {
    for (std::size_t i = 0; i < predictions_.size(); ++i) {
      const auto& p = predictions_[i];
      const auto tag = "prediction #" + std::to_string(i);
      if (!(p.score >= 0.0 && p.score <= 1.0)) {
        throw Error(ErrorKind::Validation, tag + " score " + std::to_string(p.score) +
                                               " outside [0, 1]");
      }
      if (!gt.has_image(p.image_id)) {
        throw Error(ErrorKind::Referential,
                    tag + " references unknown image id " + std::to_string(raw(p.image_id)));
      }
      if (!gt.has_category(p.category_id)) {
        throw Error(ErrorKind::Referential,
                    tag + " references unknown category id " + std::to_string(raw(p.category_id)));
      }
      if (!p.bbox.is_canonical()) throw Error(ErrorKind::Validation, tag + " has a non-canonical box");
      cells_[{p.image_id, p.category_id}].push_back(i);
      by_image_[p.image_id].push_back(i);
    }
  }

  std::span<const Prediction> predictions() const noexcept { return predictions_; }
  std::size_t size() const noexcept { return predictions_.size(); }
  bool empty() const noexcept { return predictions_.empty(); }
  const Prediction& operator[](std::size_t i) const { return predictions_[i]; }

  std::span<const std::size_t> cell(ImageId image, CategoryId category) const {
    auto it = cells_.find({image, category});
    if (it == cells_.end()) return {};
    return it->second;
  }

  std::span<const std::size_t> on_image(ImageId image) const {
    auto it = by_image_.find(image);
    if (it == by_image_.end()) return {};
    return it->second;
  }

  const std::map<CellKey, std::vector<std::size_t>>& cells() const noexcept { return cells_; }

  /// Subset by original index, preserving relative order.
  PredictionSet subset(std::span<const std::size_t> keep, const GroundTruthSet& gt) const {
    std::vector<Prediction> out;
    out.reserve(keep.size());
    for (auto i : keep) out.push_back(predictions_[i]);
    return PredictionSet(std::move(out), gt);
  }

  friend bool operator==(const PredictionSet& a, const PredictionSet& b) {
    return a.predictions_ == b.predictions_;
  }

 private:
  std::vector<Prediction> predictions_;
  std::map<CellKey, std::vector<std::size_t>> cells_;
  std::map<ImageId, std::vector<std::size_t>> by_image_;
};

// ---------------------------------------------------------------------------
// COCO JSON ingestion

inline GroundTruthSet ground_truth_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::Schema, "ground truth must be a JSON object");
  std::vector<ImageRecord> images;
  std::vector<Category> categories;
  std::vector<Annotation> annotations;

  const auto& jimages = detail::require(doc, "images", "ground truth");
  const auto& jcats = detail::require(doc, "categories", "ground truth");
  const auto& janns = detail::require(doc, "annotations", "ground truth");
  if (!jimages.is_array() || !jcats.is_array() || !janns.is_array()) {
    throw Error(ErrorKind::Schema, "images, categories and annotations must be arrays");
  }

  images.reserve(jimages.size());
  for (const auto& j : jimages) {
    images.push_back({ImageId{detail::integer_id(detail::require(j, "id", "image"), "image id")},
                      detail::number(detail::require(j, "width", "image"), "image width"),
                      detail::number(detail::require(j, "height", "image"), "image height")});
  }
  categories.reserve(jcats.size());
  for (const auto& j : jcats) {
    const auto& name = detail::require(j, "name", "category");
    if (!name.is_string()) throw Error(ErrorKind::Schema, "category name must be a string");
    categories.push_back(
        {CategoryId{detail::integer_id(detail::require(j, "id", "category"), "category id")},
         name.get<std::string>()});
  }
  annotations.reserve(janns.size());
  for (const auto& j : janns) {
    const auto id = detail::integer_id(detail::require(j, "id", "annotation"), "annotation id");
    const auto where = "annotation " + std::to_string(id);
    if (auto crowd = j.find("iscrowd"); crowd != j.end()) {
      if (!crowd->is_number() || crowd->get<double>() != 0.0) {
        throw Error(ErrorKind::Schema, where + ": iscrowd regions are not supported");
      }
    }
    annotations.push_back(
        {AnnotationId{id},
         ImageId{detail::integer_id(detail::require(j, "image_id", where), "image_id")},
         CategoryId{detail::integer_id(detail::require(j, "category_id", where), "category_id")},
         detail::wire_box(detail::require(j, "bbox", where), where)});
  }
  return GroundTruthSet(std::move(images), std::move(categories), std::move(annotations));
}

inline GroundTruthSet load_ground_truth(std::istream& source) {
  return ground_truth_from_json(detail::parse(source));
}

inline GroundTruthSet load_ground_truth(std::string_view source) {
  std::istringstream in{std::string(source)};
  return load_ground_truth(in);
}

inline GroundTruthSet load_ground_truth_file(const std::string& path) {
  auto in = detail::open(path);
  return load_ground_truth(in);
}

inline PredictionSet predictions_from_json(const json& doc, const GroundTruthSet& gt) {
  if (!doc.is_array()) throw Error(ErrorKind::Schema, "predictions must be a JSON array");
  std::vector<Prediction> preds;
  preds.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& j = doc[i];
    const auto where = "prediction #" + std::to_string(i);
    if (!j.is_object()) throw Error(ErrorKind::Schema, where + " must be an object");
    preds.push_back(
        {ImageId{detail::integer_id(detail::require(j, "image_id", where), "image_id")},
         CategoryId{detail::integer_id(detail::require(j, "category_id", where), "category_id")},
         detail::wire_box(detail::require(j, "bbox", where), where),
         detail::number(detail::require(j, "score", where), "score")});
  }
  return PredictionSet(std::move(preds), gt);
}

inline PredictionSet load_predictions(std::istream& source, const GroundTruthSet& gt) {
  return predictions_from_json(detail::parse(source), gt);
}

inline PredictionSet load_predictions(std::string_view source, const GroundTruthSet& gt) {
  std::istringstream in{std::string(source)};
  return load_predictions(in, gt);
}

inline PredictionSet load_predictions_file(const std::string& path, const GroundTruthSet& gt) {
  auto in = detail::open(path);
  return load_predictions(in, gt);
}

inline json to_json(const GroundTruthSet& gt) {
  json images = json::array();
  for (const auto& img : gt.images()) {
    images.push_back({{"id", raw(img.id)}, {"width", img.width}, {"height", img.height}});
  }
  json categories = json::array();
  for (const auto& cat : gt.categories()) {
    categories.push_back({{"id", raw(cat.id)}, {"name", cat.name}});
  }
  json annotations = json::array();
  for (const auto& ann : gt.annotations()) {
    annotations.push_back({{"id", raw(ann.id)},
                           {"image_id", raw(ann.image_id)},
                           {"category_id", raw(ann.category_id)},
                           {"bbox", detail::wire_array(ann.bbox)},
                           {"area", area(ann.bbox)},
                           {"iscrowd", 0}});
  }
  return {{"images", images}, {"categories", categories}, {"annotations", annotations}};
}

inline json to_json(const PredictionSet& preds) {
  json out = json::array();
  for (const auto& p : preds.predictions()) {
    out.push_back({{"image_id", raw(p.image_id)},
                   {"category_id", raw(p.category_id)},
                   {"bbox", detail::wire_array(p.bbox)},
                   {"score", p.score}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

enum class DiagnosticKind { DegenerateBox, OutOfBounds, EmptyCategory };

inline std::string_view to_string(DiagnosticKind kind) noexcept {
  switch (kind) {
    case DiagnosticKind::DegenerateBox: return "degenerate-box";
    case DiagnosticKind::OutOfBounds: return "out-of-bounds";
    case DiagnosticKind::EmptyCategory: return "empty-category";
  }
  return "unknown";
}

struct Diagnostic {
  DiagnosticKind kind;
  std::string subject;  // "annotation 7", "prediction #3", "category 2"
  std::string detail;
};

struct DiagnosticsReport {
  std::vector<Diagnostic> items;

  bool empty() const noexcept { return items.empty(); }
  std::size_t count(DiagnosticKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(items.begin(), items.end(), [kind](const auto& d) { return d.kind == kind; }));
  }
};

inline constexpr double kDefaultBoundsSlack = 1.0;

inline bool out_of_bounds(const BBox& b, const ImageRecord& img, double slack) noexcept {
  return b.x_min < -slack || b.y_min < -slack || b.x_max > img.width + slack ||
         b.y_max > img.height + slack;
}

/// Degenerate boxes, boxes outside their image by more than `slack` pixels,
/// and categories without annotations. Never throws, never mutates.
inline DiagnosticsReport validate(const GroundTruthSet& gt, const PredictionSet& preds,
                                  double slack = kDefaultBoundsSlack) {
  DiagnosticsReport report;
  auto check = [&](const BBox& b, ImageId image, const std::string& subject) {
    if (!(area(b) > 0.0)) {
      report.items.push_back({DiagnosticKind::DegenerateBox, subject, "zero-area box"});
    }
    if (gt.has_image(image) && out_of_bounds(b, gt.image(image), slack)) {
      report.items.push_back({DiagnosticKind::OutOfBounds, subject,
                              "box exceeds image " + std::to_string(raw(image)) + " bounds"});
    }
  };
  for (const auto& ann : gt.annotations()) {
    check(ann.bbox, ann.image_id, "annotation " + std::to_string(raw(ann.id)));
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check(preds[i].bbox, preds[i].image_id, "prediction #" + std::to_string(i));
  }
  for (const auto& cat : gt.categories()) {
    if (gt.count(cat.id) == 0) {
      report.items.push_back({DiagnosticKind::EmptyCategory,
                              "category " + std::to_string(raw(cat.id)), "no annotations"});
    }
  }
  return report;
}

inline json to_json(const DiagnosticsReport& report) {
  json items = json::array();
  for (const auto& d : report.items) {
    items.push_back({{"kind", to_string(d.kind)}, {"subject", d.subject}, {"detail", d.detail}});
  }
  return items;
}

}  // namespace nmsap
