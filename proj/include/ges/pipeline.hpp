#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ges/dataset.hpp"
#include "ges/label_map.hpp"
#include "ges/mask.hpp"
#include "ges/rng.hpp"
#include "ges/sources.hpp"
#include "json.hpp"

namespace ges {

enum class FailurePolicy { skip_candidate, abort };

struct PipelineConfig {
  int points_per_cycle = 20;
  double score_threshold = 0.5;
  double overlap_threshold = 0.5;
  int max_cycles = 10;
  double min_unsegmented_fraction = 0.01;
  bool refine = true;
  bool rescore_after_refine = false;
  std::uint64_t seed = 0;
  FailurePolicy on_source_failure = FailurePolicy::skip_candidate;

  /// Settings for the parts loop: 100 points, every scored candidate enters
  /// selection.
  static PipelineConfig parts_defaults();
  /// Throws InvalidInput.
  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

enum class Decision {
  accepted,
  below_threshold,
  overlap,
  empty_after_subtraction,
  empty_mask,
  source_failure,
};

std::string_view to_string(Decision d);

struct CandidateRecord {
  std::size_t index = 0;
  Point point;
  std::size_t mask_area = 0;
  double score = 0.0;
  bool refined = false;
  std::optional<int> category;
  Decision decision = Decision::empty_mask;
  double overlap = 0.0;
  std::size_t stitched_area = 0;
  std::uint32_t segment = 0;  // label in the output map (panoptic) or part ordinal + 1
  std::string note;
};

struct CycleRecord {
  int cycle = 0;
  std::size_t roi_area = 0;
  std::vector<Point> points;
  std::vector<CandidateRecord> candidates;
};

/// Everything the loop decided, in order. Serializes to JSON lines: one
/// line per cycle header, one per candidate decision, one final summary.
struct PipelineTrace {
  std::int64_t image_id = 0;
  std::vector<CycleRecord> cycles;
  std::string stop_reason;

  void write_jsonl(std::ostream& out) const;
  std::string to_jsonl() const;
};

/// n pixels drawn uniformly with replacement from `roi`. Throws InvalidInput
/// on an empty ROI.
std::vector<Point> sample_points(const BitMask& roi, int n, Rng& rng);

struct SelectionOutcome {
  Decision decision = Decision::below_threshold;
  double overlap = 0.0;
  BitMask kept;  // mask after subtracting occupied pixels; empty unless accepted
};

/// Greedy overlap rule. Candidates under `score_threshold` are dropped; the
/// rest go in descending score (ties: lower index, then raster order of the
/// pointer point). A candidate whose overlap with `occupied` exceeds
/// `overlap_threshold` of its own area is dropped; otherwise the overlap is
/// cut away and the remainder claimed. Outcomes are indexed like
/// `candidates`. Throws InvariantViolation if a mask leaves `roi`.
std::vector<SelectionOutcome> select_masks(const std::vector<Candidate>& candidates,
                                           BitMask& occupied, const BitMask& roi,
                                           double score_threshold, double overlap_threshold);

struct StitchResult {
  std::vector<SelectionOutcome> outcomes;
  std::vector<std::size_t> accepted;  // candidate positions in stitching order
  std::vector<std::uint32_t> labels;  // new label per accepted candidate
};

/// select_masks against the occupied pixels of `map`, then paints each
/// survivor under a fresh label. Candidates must carry a category to be
/// stitched into a panoptic map.
StitchResult select_and_stitch(const std::vector<Candidate>& candidates, LabelMap& map,
                               const BitMask& roi, const PipelineConfig& cfg,
                               std::span<const Category> categories);

/// Non-owning view of the four roles. Refiner and classifier may be null;
/// a null classifier labels every segment with category 0.
struct Sources {
  Generator* generator = nullptr;
  Evaluator* evaluator = nullptr;
  Refiner* refiner = nullptr;
  Classifier* classifier = nullptr;
};

struct PanopticResult {
  LabelMap map;
  PipelineTrace trace;
};

PanopticResult segment_panoptic(const Scene& scene, const Sources& sources,
                                const PipelineConfig& cfg);

struct PartsResult {
  std::vector<BitMask> parts;
  PipelineTrace trace;
};

/// Throws InvalidInput on an empty object mask.
PartsResult segment_parts(const Scene& scene, const BitMask& object_mask, const Sources& sources,
                          const PipelineConfig& cfg);

/// Ground-truth parts of one object as a label map (one segment per part),
/// the form the oracle sources consume.
LabelMap parts_ground_truth(const PartsRecord& record);

}  // namespace ges
