#include <limits>
#include <fstream>
#include <map>
#include <unordered_map>

#include "ges/dataset.hpp"
#include "ges/errors.hpp"

namespace ges {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw MalformedAnnotation(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
T field(const json& j, const char* key, const char* context) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw MalformedAnnotation(std::string(context) + " is missing \"" + key + "\"");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw MalformedAnnotation(std::string(context) + "." + key + ": " + e.what());
  }
}

}  // namespace

std::array<std::uint8_t, 3> encode_segment_id(std::uint32_t id) {
  if (id > kMaxSegmentId) {
    throw InvalidInput("segment id " + std::to_string(id) + " does not fit in 24-bit RGB");
  }
  return {static_cast<std::uint8_t>(id & 0xff), static_cast<std::uint8_t>((id >> 8) & 0xff),
          static_cast<std::uint8_t>((id >> 16) & 0xff)};
}

std::vector<SegmentEntry> segment_entries(const LabelMap& map) {
  std::vector<SegmentEntry> out;
  out.reserve(map.segment_count());
  for (std::size_t i = 0; i < map.segment_count(); ++i) {
    const auto& s = map.segments()[i];
    out.push_back({static_cast<std::uint32_t>(i + 1), s.category_id, s.is_thing});
  }
  return out;
}

RgbImage encode_label_map(const LabelMap& map) {
  if (map.segment_count() > kMaxSegmentId) {
    throw InvalidInput("label map has more segments than the RGB id encoding can hold");
  }
  RgbImage image(map.width(), map.height());
  for (std::size_t i = 0; i < map.size(); ++i) image.set_pixel(i, encode_segment_id(map.at(i)));
  return image;
}

LabelMap decode_label_map(const RgbImage& image, std::span<const SegmentEntry> entries) {
  std::unordered_map<std::uint32_t, std::uint32_t> label_of;
  std::vector<SegmentInfo> segments;
  segments.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.id == 0) throw MalformedAnnotation("segment id 0 is reserved for void");
    if (!label_of.emplace(e.id, static_cast<std::uint32_t>(segments.size() + 1)).second) {
      throw MalformedAnnotation("duplicate segment id " + std::to_string(e.id));
    }
    segments.push_back({e.category_id, e.is_thing});
  }
  std::vector<std::uint32_t> labels(static_cast<std::size_t>(image.width) * image.height, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto px = image.pixel(i);
    const std::uint32_t id = decode_segment_id(px[0], px[1], px[2]);
    if (id == 0) continue;
    auto it = label_of.find(id);
    if (it == label_of.end()) {
      throw MalformedAnnotation("map pixel carries segment id " + std::to_string(id) +
                                " missing from the segment list");
    }
    labels[i] = it->second;
  }
  return LabelMap(image.width, image.height, std::move(labels), std::move(segments));
}

PanopticDataset load_panoptic(const fs::path& annotation, const fs::path& map_dir) {
  const json doc = read_json(annotation);
  const fs::path base = annotation.parent_path();
  PanopticDataset ds;

  if (auto it = doc.find("categories"); it != doc.end()) {
    for (const auto& c : *it) {
      Category cat;
      cat.id = field<int>(c, "id", "category");
      cat.name = c.value("name", std::string{});
      cat.is_thing = c.value("isthing", 0) != 0;
      cat.familiar = c.value("familiar", true);
      ds.categories.push_back(cat);
    }
  }

  struct ImageInfo {
    int width;
    int height;
    std::string file;
  };
  std::map<std::int64_t, ImageInfo> images;
  for (const auto& im : field<json>(doc, "images", "document")) {
    ImageInfo info{field<int>(im, "width", "image"), field<int>(im, "height", "image"),
                   im.value("file", std::string{})};
    images[field<std::int64_t>(im, "id", "image")] = info;
  }

  for (const auto& ann : field<json>(doc, "annotations", "document")) {
    PanopticRecord rec;
    rec.image_id = field<std::int64_t>(ann, "image_id", "annotation");
    auto im = images.find(rec.image_id);
    if (im == images.end()) {
      throw MalformedAnnotation("annotation refers to unknown image " +
                                std::to_string(rec.image_id));
    }
    rec.width = im->second.width;
    rec.height = im->second.height;
    if (!im->second.file.empty()) rec.image_file = (base / im->second.file).string();

    std::vector<SegmentEntry> entries;
    for (const auto& s : field<json>(ann, "segments", "annotation")) {
      const auto id = field<std::int64_t>(s, "id", "segment");
      if (id <= 0 || id > kMaxSegmentId) {
        throw MalformedAnnotation("segment id " + std::to_string(id) + " out of range");
      }
      entries.push_back({static_cast<std::uint32_t>(id), field<int>(s, "category_id", "segment"),
                         field<int>(s, "isthing", "segment") != 0});
    }
    const RgbImage map_image = read_png(map_dir / field<std::string>(ann, "map_file", "annotation"));
    if (map_image.width != rec.width || map_image.height != rec.height) {
      throw MalformedAnnotation("map image size differs from image entry " +
                                std::to_string(rec.image_id));
    }
    rec.ground_truth = decode_label_map(map_image, entries);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void write_panoptic(const fs::path& annotation, const fs::path& map_dir,
                    const PanopticDataset& dataset) {
  fs::create_directories(map_dir);
  json doc;
  doc["categories"] = json::array();
  for (const auto& c : dataset.categories) {
    doc["categories"].push_back(
        {{"id", c.id}, {"name", c.name}, {"isthing", c.is_thing ? 1 : 0}, {"familiar", c.familiar}});
  }
  doc["images"] = json::array();
  doc["annotations"] = json::array();
  for (const auto& rec : dataset.records) {
    const std::string map_file = std::to_string(rec.image_id) + ".png";
    json image = {{"id", rec.image_id}, {"width", rec.width}, {"height", rec.height}};
    if (!rec.image_file.empty()) image["file"] = rec.image_file;
    doc["images"].push_back(image);

    json segments = json::array();
    for (const auto& e : segment_entries(rec.ground_truth)) {
      segments.push_back({{"id", e.id}, {"category_id", e.category_id}, {"isthing", e.is_thing ? 1 : 0}});
    }
    doc["annotations"].push_back(
        {{"image_id", rec.image_id}, {"segments", segments}, {"map_file", map_file}});
    write_png(map_dir / map_file, encode_label_map(rec.ground_truth));
  }
  write_json(annotation, doc);
}

json rle_to_json(const RleMask& rle) {
  return {{"size", {rle.height, rle.width}}, {"counts", rle.runs}};
}

RleMask rle_from_json(const json& j) {
  RleMask rle;
  try {
    const auto size = j.at("size");
    if (!size.is_array() || size.size() != 2) throw MalformedAnnotation("RLE size must be [H,W]");
    rle.height = size[0].get<int>();
    rle.width = size[1].get<int>();
    for (const auto& v : j.at("counts")) {
      const auto n = v.get<std::int64_t>();
      if (n < 0 || n > std::numeric_limits<std::uint32_t>::max()) {
        throw MalformedAnnotation("RLE run out of range");
      }
      rle.runs.push_back(static_cast<std::uint32_t>(n));
    }
  } catch (const json::exception& e) {
    throw MalformedAnnotation(std::string("bad RLE: ") + e.what());
  }
  if (rle.width < 0 || rle.height < 0) throw MalformedAnnotation("negative RLE size");
  return rle;
}

PartsLoadResult parse_parts(const json& document) {
  PartsLoadResult result;
  std::map<std::int64_t, int> next_object_id;
  for (const auto& obj : field<json>(document, "objects", "document")) {
    PartsRecord rec;
    rec.image_id = field<std::int64_t>(obj, "image_id", "object");
    rec.object_category_id = field<int>(obj, "category_id", "object");
    rec.familiar = obj.value("familiar", true);
    rec.object_id = obj.value("id", next_object_id[rec.image_id]);
    next_object_id[rec.image_id] = rec.object_id + 1;
    try {
      rec.object_mask = rle_decode(rle_from_json(field<json>(obj, "object_rle", "object")));
    } catch (const InvalidInput& e) {
      throw MalformedAnnotation(e.what());
    }

    const std::string where =
        "image " + std::to_string(rec.image_id) + " object " + std::to_string(rec.object_id);
    BitMask taken(rec.object_mask.width(), rec.object_mask.height());
    for (const auto& p : field<json>(obj, "parts", "object")) {
      PartMask part;
      part.category_id = field<int>(p, "category_id", "part");
      try {
        part.mask = rle_decode(rle_from_json(field<json>(p, "rle", "part")));
      } catch (const InvalidInput& e) {
        throw MalformedAnnotation(e.what());
      }
      if (!part.mask.same_shape(rec.object_mask)) {
        throw MalformedAnnotation(where + ": part mask size differs from object mask");
      }
      if (!part.mask.empty() && intersection_area(part.mask, rec.object_mask) == 0) {
        throw MalformedAnnotation(where + ": part lies entirely outside its object");
      }
      if (!part.mask.is_subset_of(rec.object_mask)) {
        result.warnings.push_back(where + ": part clipped to object mask");
        part.mask &= rec.object_mask;
      }
      if (intersection_area(part.mask, taken) != 0) {
        result.warnings.push_back(where + ": overlapping part trimmed");
        part.mask -= taken;
      }
      taken |= part.mask;
      rec.parts.push_back(std::move(part));
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

PartsLoadResult load_parts(const fs::path& annotation) { return parse_parts(read_json(annotation)); }

json parts_to_json(std::span<const PartsRecord> records) {
  json doc;
  std::map<std::int64_t, std::pair<int, int>> sizes;
  doc["objects"] = json::array();
  for (const auto& rec : records) {
    sizes[rec.image_id] = {rec.object_mask.width(), rec.object_mask.height()};
    json parts = json::array();
    for (const auto& p : rec.parts) {
      parts.push_back({{"category_id", p.category_id}, {"rle", rle_to_json(rle_encode(p.mask))}});
    }
    doc["objects"].push_back({{"image_id", rec.image_id},
                              {"id", rec.object_id},
                              {"category_id", rec.object_category_id},
                              {"familiar", rec.familiar},
                              {"object_rle", rle_to_json(rle_encode(rec.object_mask))},
                              {"parts", parts}});
  }
  doc["images"] = json::array();
  for (const auto& [id, wh] : sizes) {
    doc["images"].push_back({{"id", id}, {"width", wh.first}, {"height", wh.second}});
  }
  return doc;
}

void write_parts(const fs::path& annotation, std::span<const PartsRecord> records) {
  write_json(annotation, parts_to_json(records));
}

}  // namespace ges
