#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "ges/errors.hpp"
#include "ges/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ges;

namespace {

LabelMap single(int w, int h, const BitMask& m, int category, bool thing = true) {
  LabelMap map(w, h);
  map.paint(m, map.add_segment({category, thing}));
  return map;
}

/// Same segmentation with segment indices shuffled.
LabelMap shuffled(const LabelMap& m, Rng& rng) {
  const std::size_t n = m.segment_count();
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 1U);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<SegmentInfo> segs(n);
  for (std::size_t old = 1; old <= n; ++old) segs[perm[old - 1] - 1] = m.segment(static_cast<std::uint32_t>(old));
  std::vector<std::uint32_t> labels(m.labels().begin(), m.labels().end());
  for (auto& l : labels) {
    if (l != 0) l = perm[l - 1];
  }
  return LabelMap(m.width(), m.height(), labels, segs);
}

}  // namespace

TEST_CASE("identical maps score 1") {
  Rng rng(1);
  const LabelMap gt = fx::random_label_map(rng, 24, 24, 5, 8);
  const auto r = evaluate_pq(gt, gt);
  CHECK(r.all.pq == 1.0);
  CHECK(r.all.rq == 1.0);
  CHECK(r.all.sq == 1.0);
  for (const auto& m : match_segments(gt, gt).matches) CHECK(m.iou == 1.0);
}

TEST_CASE("all-void prediction scores 0") {
  Rng rng(2);
  const LabelMap gt = fx::random_label_map(rng, 16, 16, 4, 5);
  const auto r = evaluate_pq(gt, LabelMap(16, 16));
  CHECK(r.all.pq == 0.0);
  CHECK(r.all.count > 0);
}

TEST_CASE("IOU 0.49 does not match") {
  // gt 100 px; pred 49 px inside it: IOU 0.49
  const BitMask g = fx::rect(10, 10, 0, 0, 10, 10);
  const BitMask p = fx::rect(10, 10, 0, 0, 7, 7);
  CHECK(iou(g, p) == doctest::Approx(0.49));
  const auto m = match_segments(single(10, 10, g, 1), single(10, 10, p, 1));
  CHECK(m.matches.empty());
  CHECK(m.unmatched_gt.size() == 1);
  CHECK(m.unmatched_pred.size() == 1);
}

TEST_CASE("an even split matches exactly one half") {
  const BitMask g = fx::rect(10, 10, 0, 0, 10, 10);
  LabelMap gt = single(10, 10, g, 1);
  LabelMap pred(10, 10);
  pred.paint(fx::rect(10, 10, 0, 0, 5, 10), pred.add_segment({1, true}));
  pred.paint(fx::rect(10, 10, 5, 0, 10, 10), pred.add_segment({1, true}));
  const auto m = match_segments(gt, pred);
  REQUIRE(m.matches.size() == 1);
  CHECK(m.matches[0].iou == 0.5);
  CHECK(m.matches[0].pred.label == 1);  // tie goes to the lower label
  CHECK(m.unmatched_pred.size() == 1);
  const auto r = evaluate_pq(gt, pred);
  CHECK(r.all.rq == doctest::Approx(1.0 / 1.5));
  CHECK(r.all.sq == 0.5);
}

TEST_CASE("category mismatch prevents a match") {
  const BitMask g = fx::rect(6, 6, 0, 0, 6, 6);
  const auto r = evaluate_pq(single(6, 6, g, 1), single(6, 6, g, 2));
  CHECK(r.all.pq == 0.0);
  CHECK(r.per_category.size() == 2);
}

TEST_CASE("formula fixtures") {
  PqStats s;
  s.categories[1] = {1, 0, 0, 0.6, true};
  auto r = compute_pq(s);
  CHECK(r.all.rq == 1.0);
  CHECK(r.all.sq == doctest::Approx(0.6));
  CHECK(r.all.pq == doctest::Approx(0.6));

  s.categories[1] = {1, 1, 0, 0.8, true};
  r = compute_pq(s);
  CHECK(r.all.rq == doctest::Approx(2.0 / 3.0));
  CHECK(r.all.pq == doctest::Approx(0.8 * 2.0 / 3.0));

  // no true positives: SQ 0, PQ 0
  s.categories[1] = {0, 2, 3, 0.0, true};
  r = compute_pq(s);
  CHECK(r.all.sq == 0.0);
  CHECK(r.all.pq == 0.0);

  // things and stuff split, unweighted category means
  s.categories.clear();
  s.categories[1] = {1, 0, 0, 1.0, true};
  s.categories[2] = {0, 0, 1, 0.0, false};
  s.categories[3] = {1, 0, 1, 0.7, false};
  r = compute_pq(s);
  CHECK(r.things.count == 1);
  CHECK(r.stuff.count == 2);
  CHECK(r.things.pq == 1.0);
  CHECK(r.stuff.pq == doctest::Approx((0.0 + 0.7 / 1.5) / 2));
  CHECK(r.all.pq == doctest::Approx((1.0 + 0.0 + 0.7 / 1.5) / 3));
}

TEST_CASE("PQ equals the brute-force reference on random pairs") {
  Rng rng(42);
  for (int t = 0; t < 100; ++t) {
    const int w = rng.uniform_int(1, 24), h = rng.uniform_int(1, 24);
    const LabelMap gt = fx::random_label_map(rng, w, h, 6, rng.uniform_int(0, 8));
    const LabelMap pred = fx::perturb(rng, gt, 6);
    const auto mine = evaluate_pq(gt, pred);
    const auto theirs = ref::panoptic_quality(fx::to_ref(gt), fx::to_ref(pred));
    CHECK(mine.all.pq == doctest::Approx(theirs.pq).epsilon(1e-12));
    CHECK(mine.all.rq == doctest::Approx(theirs.rq).epsilon(1e-12));
    CHECK(mine.all.sq == doctest::Approx(theirs.sq).epsilon(1e-12));
  }
}

TEST_CASE("relabeling and RQ decomposition") {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const LabelMap gt = fx::random_label_map(rng, 20, 20, 5, 7);
    const LabelMap pred = fx::perturb(rng, gt, 5);
    const auto a = evaluate_pq(gt, pred);
    const auto b = evaluate_pq(shuffled(gt, rng), shuffled(pred, rng));
    CHECK(a.all.pq == doctest::Approx(b.all.pq).epsilon(1e-12));
    CHECK(a.things.pq == doctest::Approx(b.things.pq).epsilon(1e-12));

    PqStats s;
    s.add(match_segments(gt, pred));
    const auto r = compute_pq(s);
    for (const auto& [id, c] : s.categories) {
      const double tp = static_cast<double>(c.tp);
      CHECK(r.per_category.at(id).rq * (tp + 0.5 * static_cast<double>(c.fp + c.fn)) ==
            doctest::Approx(tp).epsilon(1e-12));
    }
  }
}

TEST_CASE("merging per-image stats is order independent") {
  Rng rng(8);
  std::vector<PqStats> parts;
  for (int i = 0; i < 6; ++i) {
    const LabelMap gt = fx::random_label_map(rng, 16, 16, 4, 5);
    PqStats s;
    s.add(match_segments(gt, fx::perturb(rng, gt, 4)));
    parts.push_back(s);
  }
  PqStats forward, backward, nested;
  for (const auto& p : parts) forward.merge(p);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) backward.merge(*it);
  PqStats left, right;
  for (int i = 0; i < 3; ++i) left.merge(parts[i]);
  for (int i = 3; i < 6; ++i) right.merge(parts[i]);
  nested.merge(right).merge(left);
  for (const PqStats* s : {&backward, &nested}) {
    CHECK(compute_pq(*s).all.pq == doctest::Approx(compute_pq(forward).all.pq).epsilon(1e-12));
  }
}

TEST_CASE("size mismatch is rejected") {
  CHECK_THROWS_AS(match_segments(LabelMap(3, 3), LabelMap(3, 4)), InvalidInput);
}

TEST_CASE("report json and table") {
  Rng rng(3);
  const LabelMap gt = fx::random_label_map(rng, 16, 16, 4, 5);
  const auto r = evaluate_pq(gt, gt);
  const auto j = to_json(r);
  CHECK(j["all"]["pq"] == 1.0);
  CHECK(j.contains("things"));
  CHECK(j.contains("stuff"));
  const std::string header = pq_table_header();
  for (const char* col : {"PQ", "RQ", "SQ", "PQ^St", "RQ^St", "SQ^St", "PQ^Th", "RQ^Th", "SQ^Th"}) {
    CHECK(header.find(col) != std::string::npos);
  }
  CHECK(pq_table_row("x", r).find("100.0") != std::string::npos);
}

// --- parts -------------------------------------------------------------------

namespace {

PartsRecord object_with(const std::vector<BitMask>& parts, bool familiar = true, int w = 100, int h = 100) {
  PartsRecord rec;
  rec.image_id = 1;
  rec.object_mask = BitMask::full(w, h);
  rec.familiar = familiar;
  int cat = 1;
  for (const auto& p : parts) rec.parts.push_back({p, cat++});
  return rec;
}

}  // namespace

TEST_CASE("parts: size filters") {
  CHECK_FALSE(part_is_evaluated(100, 1000));
  CHECK(part_is_evaluated(101, 1000));
  CHECK_FALSE(part_is_evaluated(150, 15000));  // exactly 1%
  CHECK(part_is_evaluated(151, 15000));
  CHECK_FALSE(part_is_evaluated(50, 60));

  // 50 px part and a 1% part are skipped; 1000 px part is kept
  const auto rec = object_with({fx::rect(100, 100, 0, 0, 10, 5), fx::rect(100, 100, 0, 10, 100, 11),
                                fx::rect(100, 100, 0, 20, 100, 30)});
  const PartsPrediction pred{1, 0, {rec.parts[2].mask}};
  const std::vector<PartsRecord> gt{rec};
  const std::vector<PartsPrediction> preds{pred};
  const auto r = evaluate_parts(gt, preds);
  CHECK(r.evaluated_parts == 1);
  CHECK(r.skipped_parts == 2);
  CHECK(r.familiar.size() == 1);
  CHECK(r.familiar.count(3) == 1);
  CHECK(r.familiar_mean.iou == 1.0);
}

TEST_CASE("parts: IOU, precision and recall of the best prediction") {
  const BitMask g = fx::rect(100, 100, 0, 0, 100, 10);     // 1000 px
  const BitMask p = fx::rect(100, 100, 40, 0, 100, 10) | fx::rect(100, 100, 0, 50, 40, 55);  // 600 + 200
  REQUIRE(p.area() == 800);
  REQUIRE(intersection_area(g, p) == 600);
  const std::vector<PartsRecord> gt{object_with({g})};
  const std::vector<PartsPrediction> preds{{1, 0, {fx::rect(100, 100, 0, 90, 5, 100), p}}};
  const auto r = evaluate_parts(gt, preds);
  const auto& s = r.familiar.at(1);
  CHECK(s.iou == doctest::Approx(0.5));
  CHECK(s.precision == doctest::Approx(0.75));
  CHECK(s.recall == doctest::Approx(0.6));
}

TEST_CASE("parts: missing predictions score 0, groups are split") {
  const BitMask g = fx::rect(100, 100, 0, 0, 50, 50);
  auto fam = object_with({g}, true);
  auto unfam = object_with({g}, false);
  unfam.object_id = 1;
  const std::vector<PartsRecord> gt{fam, unfam};
  const std::vector<PartsPrediction> preds{{1, 0, {g}}};
  const auto r = evaluate_parts(gt, preds);
  CHECK(r.familiar_mean.iou == 1.0);
  CHECK(r.unfamiliar_mean.iou == 0.0);
  CHECK(r.unfamiliar_mean.recall == 0.0);
  CHECK(r.overall_mean.iou == doctest::Approx(0.5));
  CHECK(parts_table(r).find("Unfamiliar") != std::string::npos);
  CHECK(to_json(r)["familiar"]["iou"] == 1.0);
}

TEST_CASE("parts: invariant under permutation of predicted parts") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<BitMask> gparts;
    for (int k = 0; k < 3; ++k) {
      const int y0 = k * 30;
      gparts.push_back(fx::rect(100, 100, 0, y0, 100, y0 + 30));
    }
    const std::vector<PartsRecord> gt{object_with(gparts)};
    PartsPrediction pred{1, 0, {}};
    for (int k = 0; k < 6; ++k) {
      const int x0 = rng.uniform_int(0, 80), y0 = rng.uniform_int(0, 80);
      pred.parts.push_back(fx::rect(100, 100, x0, y0, std::min(100, x0 + rng.uniform_int(1, 20)),
                                    std::min(100, y0 + rng.uniform_int(1, 40))));
    }
    pred.parts.push_back(pred.parts[0]);  // a duplicate makes ties
    const auto a = evaluate_parts(gt, std::vector<PartsPrediction>{pred});
    std::reverse(pred.parts.begin(), pred.parts.end());
    std::swap(pred.parts[1], pred.parts[4]);
    const auto b = evaluate_parts(gt, std::vector<PartsPrediction>{pred});
    CHECK(a.overall_mean.iou == b.overall_mean.iou);
    CHECK(a.overall_mean.precision == b.overall_mean.precision);
    CHECK(a.overall_mean.recall == b.overall_mean.recall);
  }
}
