#include "ges/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include "ges/errors.hpp"

namespace ges {

using nlohmann::json;

namespace {

enum StreamPurpose : std::uint64_t { kSample = 11, kGenerate = 12, kScore = 13, kRescore = 14, kClassify = 15 };

Rng stream(const PipelineConfig& cfg, const Scene& scene, int cycle, std::uint64_t purpose,
           std::uint64_t index = 0) {
  return Rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(scene.image_id), scene.stream,
                                    static_cast<std::uint64_t>(cycle), purpose, index}));
}

bool is_thing_category(std::span<const Category> categories, int id) {
  for (const auto& c : categories) {
    if (c.id == id) return c.is_thing;
  }
  return false;
}

json point_json(Point p) { return json::array({p.x, p.y}); }

// Descending score, then generation index, then raster order of the point.
bool ranks_before(const Candidate& a, const Candidate& b) {
  const double sa = a.score.value_or(0.0);
  const double sb = b.score.value_or(0.0);
  if (sa != sb) return sa > sb;
  if (a.index != b.index) return a.index < b.index;
  return std::tie(a.point.y, a.point.x) < std::tie(b.point.y, b.point.x);
}

}  // namespace

PipelineConfig PipelineConfig::parts_defaults() {
  PipelineConfig cfg;
  cfg.points_per_cycle = 100;
  cfg.score_threshold = 0.0;
  cfg.max_cycles = 1;
  cfg.refine = false;
  return cfg;
}

void PipelineConfig::validate() const {
  if (points_per_cycle < 1) throw InvalidInput("points_per_cycle must be >= 1");
  if (max_cycles < 1) throw InvalidInput("max_cycles must be >= 1");
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput(std::string(name) + " must lie in [0,1]");
  };
  unit(score_threshold, "score_threshold");
  unit(overlap_threshold, "overlap_threshold");
  unit(min_unsegmented_fraction, "min_unsegmented_fraction");
}

void to_json(json& j, const PipelineConfig& c) {
  j = {{"points_per_cycle", c.points_per_cycle},
       {"score_threshold", c.score_threshold},
       {"overlap_threshold", c.overlap_threshold},
       {"max_cycles", c.max_cycles},
       {"min_unsegmented_fraction", c.min_unsegmented_fraction},
       {"refine", c.refine},
       {"rescore_after_refine", c.rescore_after_refine},
       {"seed", c.seed},
       {"on_source_failure", c.on_source_failure == FailurePolicy::abort ? "abort" : "skip"}};
}

void from_json(const json& j, PipelineConfig& c) {
  c.points_per_cycle = j.value("points_per_cycle", c.points_per_cycle);
  c.score_threshold = j.value("score_threshold", c.score_threshold);
  c.overlap_threshold = j.value("overlap_threshold", c.overlap_threshold);
  c.max_cycles = j.value("max_cycles", c.max_cycles);
  c.min_unsegmented_fraction = j.value("min_unsegmented_fraction", c.min_unsegmented_fraction);
  c.refine = j.value("refine", c.refine);
  c.rescore_after_refine = j.value("rescore_after_refine", c.rescore_after_refine);
  c.seed = j.value("seed", c.seed);
  if (j.contains("on_source_failure")) {
    const auto p = j["on_source_failure"].get<std::string>();
    if (p == "abort") {
      c.on_source_failure = FailurePolicy::abort;
    } else if (p == "skip") {
      c.on_source_failure = FailurePolicy::skip_candidate;
    } else {
      throw InvalidInput("on_source_failure must be 'skip' or 'abort'");
    }
  }
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::accepted:
      return "accepted";
    case Decision::below_threshold:
      return "below_threshold";
    case Decision::overlap:
      return "overlap";
    case Decision::empty_after_subtraction:
      return "empty_after_subtraction";
    case Decision::empty_mask:
      return "empty_mask";
    case Decision::source_failure:
      return "source_failure";
  }
  return "unknown";
}

void PipelineTrace::write_jsonl(std::ostream& out) const {
  for (const auto& cycle : cycles) {
    json points = json::array();
    for (const auto& p : cycle.points) points.push_back(point_json(p));
    out << json{{"type", "cycle"},
                {"image_id", image_id},
                {"cycle", cycle.cycle},
                {"roi_area", cycle.roi_area},
                {"points", points}}
               .dump()
        << '\n';
    for (const auto& c : cycle.candidates) {
      json line = {{"type", "candidate"},
                   {"image_id", image_id},
                   {"cycle", cycle.cycle},
                   {"index", c.index},
                   {"point", point_json(c.point)},
                   {"area", c.mask_area},
                   {"score", c.score},
                   {"refined", c.refined},
                   {"category", c.category ? json(*c.category) : json(nullptr)},
                   {"decision", std::string(to_string(c.decision))},
                   {"overlap", c.overlap},
                   {"stitched_area", c.stitched_area},
                   {"segment", c.segment}};
      if (!c.note.empty()) line["note"] = c.note;
      out << line.dump() << '\n';
    }
  }
  out << json{{"type", "stop"}, {"image_id", image_id}, {"cycles", cycles.size()}, {"reason", stop_reason}}
             .dump()
      << '\n';
}

std::string PipelineTrace::to_jsonl() const {
  std::ostringstream os;
  write_jsonl(os);
  return os.str();
}

std::vector<Point> sample_points(const BitMask& roi, int n, Rng& rng) {
  if (n < 0) throw InvalidInput("point count must be non-negative");
  const auto pixels = roi.set_indices();
  if (pixels.empty()) throw InvalidInput("cannot sample points from an empty ROI");
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(roi.point_of(pixels[rng.below(pixels.size())]));
  return out;
}

std::vector<SelectionOutcome> select_masks(const std::vector<Candidate>& candidates,
                                           BitMask& occupied, const BitMask& roi,
                                           double score_threshold, double overlap_threshold) {
  std::vector<SelectionOutcome> outcomes(candidates.size());
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!c.mask.is_subset_of(roi)) {
      throw InvariantViolation("candidate " + std::to_string(c.index) + " extends outside the ROI");
    }
    if (c.score.value_or(0.0) < score_threshold) {
      outcomes[i].decision = Decision::below_threshold;
      continue;
    }
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = candidates[a];
    const auto& cb = candidates[b];
    return ranks_before(ca, cb);
  });

  for (std::size_t i : order) {
    auto& out = outcomes[i];
    const BitMask& mask = candidates[i].mask;
    const std::size_t area = mask.area();
    if (area == 0) {
      out.decision = Decision::empty_mask;
      continue;
    }
    const std::size_t shared = intersection_area(mask, occupied);
    out.overlap = static_cast<double>(shared) / static_cast<double>(area);
    if (out.overlap > overlap_threshold) {
      out.decision = Decision::overlap;
      continue;
    }
    BitMask kept = mask - occupied;
    if (kept.empty()) {
      out.decision = Decision::empty_after_subtraction;
      continue;
    }
    occupied |= kept;
    out.decision = Decision::accepted;
    out.kept = std::move(kept);
  }
  return outcomes;
}

StitchResult select_and_stitch(const std::vector<Candidate>& candidates, LabelMap& map,
                               const BitMask& roi, const PipelineConfig& cfg,
                               std::span<const Category> categories) {
  BitMask occupied = map.occupied_mask();
  StitchResult result;
  result.outcomes =
      select_masks(candidates, occupied, roi, cfg.score_threshold, cfg.overlap_threshold);

  // Stitch in the order the selector claimed pixels, so labels follow score.
  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (result.outcomes[i].decision == Decision::accepted) accepted.push_back(i);
  }
  std::stable_sort(accepted.begin(), accepted.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = candidates[a];
    const auto& cb = candidates[b];
    return ranks_before(ca, cb);
  });
  for (std::size_t i : accepted) {
    const int category = candidates[i].category.value_or(0);
    const std::uint32_t label = map.add_segment({category, is_thing_category(categories, category)});
    map.paint(result.outcomes[i].kept, label);
    result.accepted.push_back(i);
    result.labels.push_back(label);
  }
  return result;
}

namespace {

/// Calls `f`; on SourceFailure applies the policy. Returns false when the
/// candidate should be skipped.
template <typename F>
bool guarded(const PipelineConfig& cfg, CandidateRecord& rec, F&& f) {
  try {
    f();
    return true;
  } catch (const SourceFailure& e) {
    if (cfg.on_source_failure == FailurePolicy::abort) throw;
    rec.decision = Decision::source_failure;
    rec.note = e.what();
    return false;
  }
}

}  // namespace

PanopticResult segment_panoptic(const Scene& scene, const Sources& sources,
                                const PipelineConfig& cfg) {
  cfg.validate();
  if (sources.generator == nullptr || sources.evaluator == nullptr) {
    throw InvalidInput("panoptic pipeline needs a generator and an evaluator");
  }
  PanopticResult result{LabelMap(scene.width, scene.height), {}};
  result.trace.image_id = scene.image_id;
  const double total = static_cast<double>(result.map.size());

  for (int cycle = 0; cycle < cfg.max_cycles; ++cycle) {
    const BitMask roi = result.map.void_mask();
    const std::size_t roi_area = roi.area();
    if (roi_area == 0) {
      result.trace.stop_reason = "fully_segmented";
      return result;
    }
    if (static_cast<double>(roi_area) / total < cfg.min_unsegmented_fraction) {
      result.trace.stop_reason = "unsegmented_fraction_below_minimum";
      return result;
    }

    CycleRecord rec;
    rec.cycle = cycle;
    rec.roi_area = roi_area;
    Rng point_rng = stream(cfg, scene, cycle, kSample);
    rec.points = sample_points(roi, cfg.points_per_cycle, point_rng);
    rec.candidates.resize(rec.points.size());

    // Generate and score.
    std::vector<Candidate> survivors;
    std::vector<std::size_t> survivor_pos;
    for (std::size_t k = 0; k < rec.points.size(); ++k) {
      CandidateRecord& cr = rec.candidates[k];
      cr.index = k;
      cr.point = rec.points[k];
      Candidate cand;
      Rng gen_rng = stream(cfg, scene, cycle, kGenerate, k);
      if (!guarded(cfg, cr, [&] { cand = sources.generator->generate(scene, roi, cr.point, gen_rng); })) {
        continue;
      }
      cand.index = k;
      cand.mask &= roi;
      cr.mask_area = cand.mask.area();
      if (cr.mask_area == 0) {
        cr.decision = Decision::empty_mask;
        continue;
      }
      Rng score_rng = stream(cfg, scene, cycle, kScore, k);
      if (!guarded(cfg, cr, [&] { cand.score = sources.evaluator->score(scene, cand.mask, nullptr, score_rng); })) {
        continue;
      }
      cr.score = *cand.score;
      if (*cand.score < cfg.score_threshold) {
        cr.decision = Decision::below_threshold;
        continue;
      }
      survivors.push_back(std::move(cand));
      survivor_pos.push_back(k);
    }

    if (survivors.empty()) {
      result.trace.cycles.push_back(std::move(rec));
      result.trace.stop_reason = "no_candidate_above_threshold";
      return result;
    }

    // Refine and classify survivors.
    std::vector<Candidate> ready;
    std::vector<std::size_t> ready_pos;
    for (std::size_t s = 0; s < survivors.size(); ++s) {
      Candidate& cand = survivors[s];
      CandidateRecord& cr = rec.candidates[survivor_pos[s]];
      if (cfg.refine && sources.refiner != nullptr) {
        BitMask refined;
        if (!guarded(cfg, cr, [&] { refined = sources.refiner->refine(scene, cand.mask); })) continue;
        refined &= roi;
        if (refined != cand.mask) {
          cand.mask = std::move(refined);
          cand.refined = true;
          cr.refined = true;
          cr.mask_area = cand.mask.area();
        }
        if (cand.mask.empty()) {
          cr.decision = Decision::empty_mask;
          continue;
        }
        if (cfg.rescore_after_refine && cand.refined) {
          Rng rescore_rng = stream(cfg, scene, cycle, kRescore, cand.index);
          if (!guarded(cfg, cr, [&] { cand.score = sources.evaluator->score(scene, cand.mask, nullptr, rescore_rng); })) {
            continue;
          }
          cr.score = *cand.score;
          if (*cand.score < cfg.score_threshold) {
            cr.decision = Decision::below_threshold;
            continue;
          }
        }
      }
      if (sources.classifier != nullptr) {
        Rng class_rng = stream(cfg, scene, cycle, kClassify, cand.index);
        int category = 0;
        if (!guarded(cfg, cr, [&] { category = sources.classifier->classify(scene, cand.mask, class_rng); })) {
          continue;
        }
        cand.category = category;
      } else {
        cand.category = 0;
      }
      cr.category = cand.category;
      ready.push_back(std::move(cand));
      ready_pos.push_back(survivor_pos[s]);
    }

    const StitchResult stitched = select_and_stitch(ready, result.map, roi, cfg, scene.categories);
    for (std::size_t r = 0; r < ready.size(); ++r) {
      CandidateRecord& cr = rec.candidates[ready_pos[r]];
      cr.decision = stitched.outcomes[r].decision;
      cr.overlap = stitched.outcomes[r].overlap;
      cr.stitched_area = stitched.outcomes[r].kept.area();
    }
    for (std::size_t a = 0; a < stitched.accepted.size(); ++a) {
      rec.candidates[ready_pos[stitched.accepted[a]]].segment = stitched.labels[a];
    }
    result.trace.cycles.push_back(std::move(rec));
  }
  result.trace.stop_reason = result.map.void_mask().empty() ? "fully_segmented" : "max_cycles";
  return result;
}

PartsResult segment_parts(const Scene& scene, const BitMask& object_mask, const Sources& sources,
                          const PipelineConfig& cfg) {
  cfg.validate();
  if (sources.generator == nullptr || sources.evaluator == nullptr) {
    throw InvalidInput("parts pipeline needs a generator and an evaluator");
  }
  if (object_mask.empty()) throw InvalidInput("object mask is empty");

  PartsResult result;
  result.trace.image_id = scene.image_id;
  CycleRecord rec;
  rec.roi_area = object_mask.area();
  Rng point_rng = stream(cfg, scene, 0, kSample);
  rec.points = sample_points(object_mask, cfg.points_per_cycle, point_rng);
  rec.candidates.resize(rec.points.size());

  std::vector<Candidate> scored;
  std::vector<std::size_t> scored_pos;
  for (std::size_t k = 0; k < rec.points.size(); ++k) {
    CandidateRecord& cr = rec.candidates[k];
    cr.index = k;
    cr.point = rec.points[k];
    Candidate cand;
    Rng gen_rng = stream(cfg, scene, 0, kGenerate, k);
    if (!guarded(cfg, cr, [&] { cand = sources.generator->generate(scene, object_mask, cr.point, gen_rng); })) {
      continue;
    }
    cand.index = k;
    cand.mask &= object_mask;
    cr.mask_area = cand.mask.area();
    if (cr.mask_area == 0) {
      cr.decision = Decision::empty_mask;
      continue;
    }
    Rng score_rng = stream(cfg, scene, 0, kScore, k);
    if (!guarded(cfg, cr, [&] { cand.score = sources.evaluator->score(scene, cand.mask, &object_mask, score_rng); })) {
      continue;
    }
    cr.score = *cand.score;
    scored.push_back(std::move(cand));
    scored_pos.push_back(k);
  }

  BitMask occupied(object_mask.width(), object_mask.height());
  auto outcomes = select_masks(scored, occupied, object_mask, cfg.score_threshold, cfg.overlap_threshold);

  std::vector<std::size_t> accepted;
  for (std::size_t s = 0; s < scored.size(); ++s) {
    CandidateRecord& cr = rec.candidates[scored_pos[s]];
    cr.decision = outcomes[s].decision;
    cr.overlap = outcomes[s].overlap;
    cr.stitched_area = outcomes[s].kept.area();
    if (outcomes[s].decision == Decision::accepted) accepted.push_back(s);
  }
  std::stable_sort(accepted.begin(), accepted.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(scored[a], scored[b]);
  });
  for (std::size_t s : accepted) {
    rec.candidates[scored_pos[s]].segment = static_cast<std::uint32_t>(result.parts.size() + 1);
    result.parts.push_back(std::move(outcomes[s].kept));
  }
  result.trace.cycles.push_back(std::move(rec));
  result.trace.stop_reason = "single_pass";
  return result;
}

LabelMap parts_ground_truth(const PartsRecord& record) {
  LabelMap map(record.object_mask.width(), record.object_mask.height());
  for (const auto& part : record.parts) {
    const std::uint32_t label = map.add_segment({part.category_id, false});
    map.paint(part.mask, label);
  }
  return map;
}

}  // namespace ges
