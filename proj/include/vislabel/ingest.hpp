#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vislabel/error.hpp"
#include "vislabel/hierarchy.hpp"

namespace vislabel {

// Pixel rectangle. x, y >= 0; width, height >= 1.
struct Box {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t width = 1;
  std::int64_t height = 1;
  bool operator==(const Box&) const = default;
};

struct OriginalSource {
  bool operator==(const OriginalSource&) const = default;
};

struct CroppedFromDetector {
  std::string parent_id;
  std::string detector;
  double confidence = 1.0;
  bool operator==(const CroppedFromDetector&) const = default;
};

using ImageSource = std::variant<OriginalSource, CroppedFromDetector>;

struct ImageRecord {
  std::string image_id;
  std::string uri;
  std::optional<std::string> domain_hint;
  std::optional<Box> crop;
  ImageSource source = OriginalSource{};
  std::optional<std::int64_t> image_width;
  std::optional<std::int64_t> image_height;
  bool excluded = false;

  bool is_cropped() const { return std::holds_alternative<CroppedFromDetector>(source); }
  bool operator==(const ImageRecord&) const = default;
};

namespace detail {

inline std::vector<std::pair<std::size_t, std::string_view>> split_lines(std::string_view doc) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t line_no = 0, start = 0;
  while (start <= doc.size()) {
    auto nl = doc.find('\n', start);
    auto line = doc.substr(start, nl == doc.npos ? doc.npos : nl - start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto first = line.find_first_not_of(" \t");
    if (first != line.npos) out.emplace_back(line_no, line);
    if (nl == doc.npos) break;
    start = nl + 1;
  }
  return out;
}

inline json parse_json_line(std::string_view line, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_no), e.what());
  }
}

inline std::int64_t box_field(const json& b, const char* key, const std::string& locus) {
  auto it = b.find(key);
  if (it == b.end() || !it->is_number_integer())
    throw ParseError(locus, std::string("box field \"") + key + "\" must be an integer");
  return it->get<std::int64_t>();
}

inline Box parse_box(const json& b, const std::string& locus) {
  if (!b.is_object()) throw ParseError(locus, "box must be an object");
  return {box_field(b, "x", locus), box_field(b, "y", locus), box_field(b, "w", locus),
          box_field(b, "h", locus)};
}

inline json box_to_json(const Box& b) {
  return json{{"x", b.x}, {"y", b.y}, {"w", b.width}, {"h", b.height}};
}

inline void check_box(const Box& b, const std::string& locus, std::vector<Violation>& out) {
  if (b.x < 0 || b.y < 0)
    out.push_back({"negative_offset", locus, "crop offset must be non-negative"});
  if (b.width < 1 || b.height < 1)
    out.push_back({"invalid_extent", locus, "crop width and height must be at least 1"});
}

}  // namespace detail

inline json image_record_to_json(const ImageRecord& r) {
  json j = json::object();
  j["image_id"] = r.image_id;
  j["uri"] = r.uri;
  if (r.domain_hint) j["domain"] = *r.domain_hint;
  if (r.image_width) j["width"] = *r.image_width;
  if (r.image_height) j["height"] = *r.image_height;
  if (r.crop) j["crop"] = detail::box_to_json(*r.crop);
  if (const auto* c = std::get_if<CroppedFromDetector>(&r.source)) {
    j["parent"] = c->parent_id;
    j["detector"] = c->detector;
    j["confidence"] = c->confidence;
  }
  if (r.excluded) j["exclude"] = true;
  return j;
}

// Decodes one manifest record and appends any invariant violations.
inline ImageRecord image_record_from_json(const json& j, const std::string& locus,
                                          std::vector<Violation>& violations) {
  if (!j.is_object()) throw ParseError(locus, "record must be an object");
  ImageRecord r;
  r.image_id = detail::require_field(j, "image_id", json::value_t::string, locus).get<std::string>();
  r.uri = detail::require_field(j, "uri", json::value_t::string, locus).get<std::string>();
  r.domain_hint = detail::optional_string(j, "domain", locus);
  if (r.image_id.empty()) violations.push_back({"empty_image_id", locus, "image_id is empty"});
  if (auto it = j.find("width"); it != j.end()) {
    if (!it->is_number_integer()) throw ParseError(locus + "/width", "width must be an integer");
    r.image_width = it->get<std::int64_t>();
  }
  if (auto it = j.find("height"); it != j.end()) {
    if (!it->is_number_integer()) throw ParseError(locus + "/height", "height must be an integer");
    r.image_height = it->get<std::int64_t>();
  }
  if (auto it = j.find("crop"); it != j.end() && !it->is_null()) {
    r.crop = detail::parse_box(*it, locus + "/crop");
    detail::check_box(*r.crop, locus, violations);
  }
  auto parent = detail::optional_string(j, "parent", locus);
  auto detector = detail::optional_string(j, "detector", locus);
  std::optional<double> confidence;
  if (auto it = j.find("confidence"); it != j.end()) {
    if (!it->is_number()) throw ParseError(locus + "/confidence", "confidence must be a number");
    confidence = it->get<double>();
  }
  if (parent || detector || confidence) {
    if (!r.crop)
      violations.push_back({"provenance_without_crop", locus,
                            "detector provenance requires a crop box"});
    CroppedFromDetector src{parent.value_or(""), detector.value_or("manual"),
                            confidence.value_or(1.0)};
    if (src.confidence < 0.0 || src.confidence > 1.0)
      violations.push_back({"confidence_range", locus, "confidence must lie in [0, 1]"});
    r.source = std::move(src);
  } else if (r.crop) {
    // A hand-drawn crop without detector provenance.
    r.source = CroppedFromDetector{"", "manual", 1.0};
  }
  if (auto it = j.find("exclude"); it != j.end()) {
    if (!it->is_boolean()) throw ParseError(locus + "/exclude", "exclude must be a boolean");
    r.excluded = it->get<bool>();
  }
  return r;
}

inline ImageRecord image_record_from_json(const json& j) {
  std::vector<Violation> violations;
  auto r = image_record_from_json(j, "record", violations);
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return r;
}

// Parses a newline-delimited manifest. Blank lines are skipped.
inline std::vector<ImageRecord> ingest_manifest(std::string_view document) {
  std::vector<ImageRecord> records;
  std::vector<Violation> violations;
  std::map<std::string, std::vector<std::size_t>> lines_of;
  for (const auto& [line_no, line] : detail::split_lines(document)) {
    auto locus = "line " + std::to_string(line_no);
    records.push_back(image_record_from_json(detail::parse_json_line(line, line_no), locus,
                                             violations));
    lines_of[records.back().image_id].push_back(line_no);
  }
  if (!violations.empty()) throw ValidationError(std::move(violations));
  std::string dupes;
  for (const auto& [id, lines] : lines_of) {
    if (lines.size() < 2) continue;
    dupes += (dupes.empty() ? "" : "; ") + id + " at lines";
    for (auto l : lines) dupes += " " + std::to_string(l);
  }
  if (!dupes.empty()) throw IntegrityError("duplicate image ids: " + dupes);
  return records;
}

inline std::string serialize_manifest(const std::vector<ImageRecord>& records) {
  std::string out;
  for (const auto& r : records) out += image_record_to_json(r).dump() + "\n";
  return out;
}

struct IngestReport {
  std::vector<std::string> added;
  std::vector<std::string> duplicates;
};

// Accumulates manifests. Re-ingesting an identical record is reported as a
// duplicate and changes nothing; a different record under a known id is an
// integrity error.
class ImageCatalog {
 public:
  IngestReport ingest(const std::vector<ImageRecord>& records) {
    for (const auto& r : records)
      if (auto it = index_.find(r.image_id); it != index_.end() && records_[it->second] != r)
        throw IntegrityError("image " + r.image_id + " re-ingested with different fields");
    IngestReport report;
    for (const auto& r : records) {
      if (index_.count(r.image_id)) {
        report.duplicates.push_back(r.image_id);
        continue;
      }
      index_.emplace(r.image_id, records_.size());
      records_.push_back(r);
      report.added.push_back(r.image_id);
    }
    return report;
  }

  const std::vector<ImageRecord>& records() const noexcept { return records_; }

  const ImageRecord& get(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("unknown image " + id);
    return records_[it->second];
  }

 private:
  std::vector<ImageRecord> records_;
  std::map<std::string, std::size_t> index_;
};

struct DetectedBox {
  Box box;
  std::string detector;
  double confidence = 0.0;
  std::optional<std::string> label;
};

struct DetectionRecord {
  std::string image_id;
  std::string detector;
  std::vector<DetectedBox> boxes;
};

// Parses newline-delimited detector output:
// {"image_id", "detector", "boxes": [{"x","y","w","h","label"?,"confidence"}]}
inline std::vector<DetectionRecord> parse_detections(std::string_view document) {
  std::vector<DetectionRecord> out;
  for (const auto& [line_no, line] : detail::split_lines(document)) {
    auto locus = "line " + std::to_string(line_no);
    auto j = detail::parse_json_line(line, line_no);
    if (!j.is_object()) throw ParseError(locus, "record must be an object");
    DetectionRecord rec;
    rec.image_id = detail::require_field(j, "image_id", json::value_t::string, locus).get<std::string>();
    rec.detector = detail::require_field(j, "detector", json::value_t::string, locus).get<std::string>();
    const auto& boxes = detail::require_field(j, "boxes", json::value_t::array, locus);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      auto bl = locus + "/boxes/" + std::to_string(i);
      DetectedBox db{detail::parse_box(boxes[i], bl), rec.detector, 0.0,
                     detail::optional_string(boxes[i], "label", bl)};
      auto c = boxes[i].find("confidence");
      if (c == boxes[i].end() || !c->is_number())
        throw ParseError(bl, "confidence must be a number");
      db.confidence = c->get<double>();
      rec.boxes.push_back(std::move(db));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// Promotes detector boxes at or above `min_confidence` to cropped image
// records. Child ids are "<parent>#<k>" with k the 1-based index of the box
// in the detector output. Pixels are not touched.
inline std::vector<ImageRecord> apply_localization(const ImageRecord& original,
                                                   const std::vector<DetectedBox>& boxes,
                                                   double min_confidence) {
  if (original.is_cropped())
    throw PreconditionError("image " + original.image_id + " is already a crop");
  std::vector<Violation> violations;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    auto locus = original.image_id + "/boxes/" + std::to_string(i);
    const auto& b = boxes[i].box;
    detail::check_box(b, locus, violations);
    if (boxes[i].confidence < 0.0 || boxes[i].confidence > 1.0)
      violations.push_back({"confidence_range", locus, "confidence must lie in [0, 1]"});
    if ((original.image_width && b.x + b.width > *original.image_width) ||
        (original.image_height && b.y + b.height > *original.image_height))
      violations.push_back({"box_out_of_bounds", locus, "box exceeds the declared image bounds"});
  }
  if (!violations.empty()) throw ValidationError(std::move(violations));

  std::vector<ImageRecord> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (boxes[i].confidence < min_confidence) continue;
    ImageRecord child;
    child.image_id = original.image_id + "#" + std::to_string(i + 1);
    child.uri = original.uri;
    child.domain_hint = boxes[i].label ? boxes[i].label : original.domain_hint;
    child.crop = boxes[i].box;
    child.source = CroppedFromDetector{original.image_id, boxes[i].detector, boxes[i].confidence};
    child.image_width = original.image_width;
    child.image_height = original.image_height;
    out.push_back(std::move(child));
  }
  return out;
}

}  // namespace vislabel
