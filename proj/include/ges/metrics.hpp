#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ges/dataset.hpp"
#include "ges/label_map.hpp"
#include "json.hpp"

namespace ges {

// --- panoptic quality ------------------------------------------------------

struct SegmentRef {
  std::uint32_t label = 0;
  int category_id = 0;
  bool is_thing = false;
};

struct SegmentMatch {
  SegmentRef gt;
  SegmentRef pred;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<SegmentMatch> matches;
  std::vector<SegmentRef> unmatched_gt;
  std::vector<SegmentRef> unmatched_pred;
};

/// Same-category pairs with IOU >= 0.5, chosen greedily by descending IOU
/// (ties: lower GT label, then lower predicted label). Segments with no
/// pixels take no part. Void pixels are ordinary unlabeled area.
MatchResult match_segments(const LabelMap& gt, const LabelMap& pred);

struct CategoryStats {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double iou_sum = 0.0;
  bool is_thing = false;
};

/// Per-category accumulators. Merging is summation, so per-image stats can
/// be combined in any order.
struct PqStats {
  std::map<int, CategoryStats> categories;

  void add(const MatchResult& result);
  PqStats& merge(const PqStats& other);
};

struct Quality {
  double pq = 0.0;
  double rq = 0.0;
  double sq = 0.0;
  int count = 0;  // categories averaged over
};

struct PqReport {
  std::map<int, Quality> per_category;
  Quality all;
  Quality things;
  Quality stuff;
};

/// RQ = TP / (TP + 0.5 (FP + FN)), SQ = mean matched IOU (0 without
/// matches), PQ = RQ * SQ, per category, then unweighted means over the
/// categories that occur in either GT or prediction.
PqReport compute_pq(const PqStats& stats);
PqReport evaluate_pq(const LabelMap& gt, const LabelMap& pred);

nlohmann::json to_json(const PqReport& report);
/// Header and one row in the PQ, RQ, SQ, then stuff, then things layout,
/// values scaled by 100.
std::string pq_table_header(std::string_view first_column = "Method");
std::string pq_table_row(std::string_view name, const PqReport& report);

// --- parts -----------------------------------------------------------------

/// Predicted parts for one object, keyed like PartsRecord.
struct PartsPrediction {
  std::int64_t image_id = 0;
  int object_id = 0;
  std::vector<BitMask> parts;
};

struct PartScores {
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int count = 0;
};

struct PartsReport {
  /// Per part category, split by whether the owning object class is familiar.
  std::map<int, PartScores> familiar;
  std::map<int, PartScores> unfamiliar;
  PartScores familiar_mean;    // unweighted over part categories
  PartScores unfamiliar_mean;
  PartScores overall_mean;     // unweighted over every (group, category) entry
  int evaluated_parts = 0;
  int skipped_parts = 0;
};

inline constexpr std::size_t kMinPartPixels = 100;
inline constexpr double kMinPartObjectFraction = 0.01;

/// True when a GT part enters evaluation: more than 100 pixels and more than
/// 1% of its object.
bool part_is_evaluated(std::size_t part_area, std::size_t object_area);

/// For every evaluated GT part, the predicted part of the same object with
/// the highest IOU (one prediction may serve several GT parts). Objects with
/// no prediction score zero on all their parts.
PartsReport evaluate_parts(std::span<const PartsRecord> gt, std::span<const PartsPrediction> pred);

nlohmann::json to_json(const PartsReport& report);
std::string parts_table(const PartsReport& report);

}  // namespace ges
