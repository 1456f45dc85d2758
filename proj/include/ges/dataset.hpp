#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ges/label_map.hpp"
#include "ges/mask.hpp"
#include "json.hpp"

namespace ges {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB, row-major

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::array<std::uint8_t, 3> pixel(std::size_t index) const {
    return {data[3 * index], data[3 * index + 1], data[3 * index + 2]};
  }
  void set_pixel(std::size_t index, std::array<std::uint8_t, 3> rgb) {
    data[3 * index] = rgb[0];
    data[3 * index + 1] = rgb[1];
    data[3 * index + 2] = rgb[2];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// 8-bit RGB PNG. Throws IoError on unreadable/unwritable files.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

struct Category {
  int id = 0;
  std::string name;
  bool is_thing = false;
  bool familiar = true;

  friend bool operator==(const Category&, const Category&) = default;
};

struct PanopticRecord {
  std::int64_t image_id = 0;
  int width = 0;
  int height = 0;
  std::string image_file;        // empty when pixels only live in memory
  std::optional<RgbImage> image;  // in-memory pixels, if any
  LabelMap ground_truth;
};

struct PanopticDataset {
  std::vector<Category> categories;
  std::vector<PanopticRecord> records;
};

// --- segment-id map images -------------------------------------------------

/// Largest id the 24-bit RGB encoding can hold.
inline constexpr std::uint32_t kMaxSegmentId = (1U << 24) - 1;

/// id = R + 256*G + 65536*B; 0 is void.
constexpr std::uint32_t decode_segment_id(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return std::uint32_t{r} + 256U * g + 65536U * b;
}
std::array<std::uint8_t, 3> encode_segment_id(std::uint32_t id);

struct SegmentEntry {
  std::uint32_t id = 0;
  int category_id = 0;
  bool is_thing = false;
};

/// Segment table of a map as written to annotations; id equals the label.
std::vector<SegmentEntry> segment_entries(const LabelMap& map);
RgbImage encode_label_map(const LabelMap& map);
/// Entries become labels 1..n in list order. Throws MalformedAnnotation for a
/// pixel id that is not listed.
LabelMap decode_label_map(const RgbImage& image, std::span<const SegmentEntry> entries);

/// Reads the panoptic annotation document. Map file names are resolved
/// against `map_dir`; image file names against the document's directory.
PanopticDataset load_panoptic(const std::filesystem::path& annotation,
                              const std::filesystem::path& map_dir);
/// Writes the annotation document plus one map PNG per record into
/// `map_dir`. Image file names are stored as given in each record.
void write_panoptic(const std::filesystem::path& annotation, const std::filesystem::path& map_dir,
                    const PanopticDataset& dataset);

// --- parts -----------------------------------------------------------------

struct PartMask {
  BitMask mask;
  int category_id = 0;

  friend bool operator==(const PartMask&, const PartMask&) = default;
};

struct PartsRecord {
  std::int64_t image_id = 0;
  int object_id = 0;  // unique within its image
  BitMask object_mask;
  int object_category_id = 0;
  bool familiar = true;
  std::vector<PartMask> parts;

  friend bool operator==(const PartsRecord&, const PartsRecord&) = default;
};

struct PartsLoadResult {
  std::vector<PartsRecord> records;
  std::vector<std::string> warnings;
};

nlohmann::json rle_to_json(const RleMask& rle);
/// Expects {"size":[H,W],"counts":[...]}; throws MalformedAnnotation.
RleMask rle_from_json(const nlohmann::json& j);

/// Parts that stick out of their object are clipped (with a warning); a part
/// entirely outside its object is a MalformedAnnotation. Overlap between
/// parts is resolved in favour of the earlier part, also with a warning.
PartsLoadResult parse_parts(const nlohmann::json& document);
PartsLoadResult load_parts(const std::filesystem::path& annotation);
nlohmann::json parts_to_json(std::span<const PartsRecord> records);
void write_parts(const std::filesystem::path& annotation, std::span<const PartsRecord> records);

// --- synthetic scenes ------------------------------------------------------

struct ShapeParams {
  double min_extent = 0.10;  // thing half-extent, as a fraction of min(w, h)
  double max_extent = 0.28;
  double ellipse_probability = 0.5;
  int stuff_regions = 0;  // Voronoi sites; 0 means twice the stuff class count
  double min_segment_fraction = 0.01;  // every segment covers at least this much
  int part_classes = 8;
  int noise_amplitude = 12;
  int max_attempts = 200;  // placement retries per thing
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int width = 128;
  int height = 128;
  int image_count = 1;
  int stuff_classes = 3;
  int thing_classes = 5;
  int min_things = 1;
  int max_things = 4;
  int min_parts = 2;
  int max_parts = 4;
  double unfamiliar_fraction = 0.2;
  ShapeParams shapes;

  /// Throws InvalidInput.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& cfg);
void from_json(const nlohmann::json& j, SynthConfig& cfg);

struct SynthDataset {
  std::vector<Category> categories;
  std::vector<PanopticRecord> panoptic;
  std::vector<PartsRecord> parts;
};

/// Voronoi stuff background with layered thing shapes on top; each thing is
/// cut into parts by an inner Voronoi partition. Deterministic in cfg.seed.
/// Throws GenerationError when the requested things cannot be placed.
SynthDataset generate_synthetic(const SynthConfig& cfg);

/// Writes images/, panoptic/, panoptic.json and parts.json under `dir`.
void write_synthetic(const std::filesystem::path& dir, const SynthDataset& data);

}  // namespace ges
