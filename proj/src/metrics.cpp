#include "ges/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <tuple>
#include <unordered_map>

#include "ges/errors.hpp"

namespace ges {

using nlohmann::json;

MatchResult match_segments(const LabelMap& gt, const LabelMap& pred) {
  if (gt.width() != pred.width() || gt.height() != pred.height()) {
    throw InvalidInput("ground truth and prediction differ in size");
  }
  const auto gt_area = gt.areas();
  const auto pred_area = pred.areas();

  // One pass over the pixels gives every pairwise intersection.
  std::unordered_map<std::uint64_t, std::size_t> inter;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint32_t g = gt.at(i);
    const std::uint32_t p = pred.at(i);
    if (g != 0 && p != 0) ++inter[(std::uint64_t{g} << 32) | p];
  }

  struct Pair {
    std::uint32_t g;
    std::uint32_t p;
    std::size_t inter;
    std::size_t uni;
  };
  std::vector<Pair> pairs;
  for (const auto& [key, n] : inter) {
    const auto g = static_cast<std::uint32_t>(key >> 32);
    const auto p = static_cast<std::uint32_t>(key & 0xffffffffU);
    if (gt.segment(g).category_id != pred.segment(p).category_id) continue;
    const std::size_t uni = gt_area[g] + pred_area[p] - n;
    if (2 * n >= uni) pairs.push_back({g, p, n, uni});  // IOU >= 0.5, exactly
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    // a.inter/a.uni > b.inter/b.uni without rounding.
    const auto lhs = static_cast<unsigned __int128>(a.inter) * b.uni;
    const auto rhs = static_cast<unsigned __int128>(b.inter) * a.uni;
    if (lhs != rhs) return lhs > rhs;
    return std::tie(a.g, a.p) < std::tie(b.g, b.p);
  });

  MatchResult out;
  std::vector<bool> gt_used(gt.segment_count() + 1, false);
  std::vector<bool> pred_used(pred.segment_count() + 1, false);
  auto ref = [](const LabelMap& m, std::uint32_t l) {
    const auto& s = m.segment(l);
    return SegmentRef{l, s.category_id, s.is_thing};
  };
  for (const auto& pr : pairs) {
    if (gt_used[pr.g] || pred_used[pr.p]) continue;
    gt_used[pr.g] = pred_used[pr.p] = true;
    out.matches.push_back({ref(gt, pr.g), ref(pred, pr.p),
                           static_cast<double>(pr.inter) / static_cast<double>(pr.uni)});
  }
  for (std::uint32_t g = 1; g <= gt.segment_count(); ++g) {
    if (!gt_used[g] && gt_area[g] > 0) out.unmatched_gt.push_back(ref(gt, g));
  }
  for (std::uint32_t p = 1; p <= pred.segment_count(); ++p) {
    if (!pred_used[p] && pred_area[p] > 0) out.unmatched_pred.push_back(ref(pred, p));
  }
  return out;
}

void PqStats::add(const MatchResult& result) {
  for (const auto& m : result.matches) {
    auto& c = categories[m.gt.category_id];
    c.is_thing = m.gt.is_thing;
    ++c.tp;
    c.iou_sum += m.iou;
  }
  for (const auto& g : result.unmatched_gt) {
    auto& c = categories[g.category_id];
    c.is_thing = g.is_thing;
    ++c.fn;
  }
  for (const auto& p : result.unmatched_pred) {
    auto [it, inserted] = categories.try_emplace(p.category_id);
    // Ground truth decides thing/stuff when it has seen the category.
    if (inserted || (it->second.tp == 0 && it->second.fn == 0)) it->second.is_thing = p.is_thing;
    ++it->second.fp;
  }
}

PqStats& PqStats::merge(const PqStats& other) {
  for (const auto& [id, o] : other.categories) {
    auto [it, inserted] = categories.try_emplace(id, o);
    if (inserted) continue;
    auto& c = it->second;
    if (c.tp == 0 && c.fn == 0 && (o.tp > 0 || o.fn > 0)) c.is_thing = o.is_thing;
    c.tp += o.tp;
    c.fp += o.fp;
    c.fn += o.fn;
    c.iou_sum += o.iou_sum;
  }
  return *this;
}

PqReport compute_pq(const PqStats& stats) {
  PqReport report;
  auto accumulate = [](Quality& q, const Quality& v) {
    q.pq += v.pq;
    q.rq += v.rq;
    q.sq += v.sq;
    ++q.count;
  };
  for (const auto& [id, c] : stats.categories) {
    if (c.tp + c.fp + c.fn == 0) continue;
    Quality q;
    const double tp = static_cast<double>(c.tp);
    q.rq = tp / (tp + 0.5 * static_cast<double>(c.fp + c.fn));
    q.sq = c.tp > 0 ? c.iou_sum / tp : 0.0;
    q.pq = q.rq * q.sq;
    q.count = 1;
    report.per_category[id] = q;
    accumulate(report.all, q);
    accumulate(c.is_thing ? report.things : report.stuff, q);
  }
  for (Quality* q : {&report.all, &report.things, &report.stuff}) {
    if (q->count > 0) {
      q->pq /= q->count;
      q->rq /= q->count;
      q->sq /= q->count;
    }
  }
  return report;
}

PqReport evaluate_pq(const LabelMap& gt, const LabelMap& pred) {
  PqStats stats;
  stats.add(match_segments(gt, pred));
  return compute_pq(stats);
}

namespace {

json quality_json(const Quality& q) {
  return {{"pq", q.pq}, {"rq", q.rq}, {"sq", q.sq}, {"n", q.count}};
}

}  // namespace

json to_json(const PqReport& report) {
  json per = json::object();
  for (const auto& [id, q] : report.per_category) per[std::to_string(id)] = quality_json(q);
  return {{"all", quality_json(report.all)},
          {"stuff", quality_json(report.stuff)},
          {"things", quality_json(report.things)},
          {"per_category", per}};
}

std::string pq_table_header(std::string_view first_column) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24.*s %6s %6s %6s %6s %6s %6s %6s %6s %6s\n",
                static_cast<int>(first_column.size()), first_column.data(), "PQ", "RQ", "SQ",
                "PQ^St", "RQ^St", "SQ^St", "PQ^Th", "RQ^Th", "SQ^Th");
  return buf;
}

std::string pq_table_row(std::string_view name, const PqReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%-24.*s %6.1f %6.1f %6.1f %6.1f %6.1f %6.1f %6.1f %6.1f %6.1f\n",
                static_cast<int>(name.size()), name.data(), 100 * r.all.pq, 100 * r.all.rq,
                100 * r.all.sq, 100 * r.stuff.pq, 100 * r.stuff.rq, 100 * r.stuff.sq,
                100 * r.things.pq, 100 * r.things.rq, 100 * r.things.sq);
  return buf;
}

bool part_is_evaluated(std::size_t part_area, std::size_t object_area) {
  return part_area > kMinPartPixels &&
         static_cast<double>(part_area) > kMinPartObjectFraction * static_cast<double>(object_area);
}

PartsReport evaluate_parts(std::span<const PartsRecord> gt, std::span<const PartsPrediction> pred) {
  std::map<std::pair<std::int64_t, int>, const PartsPrediction*> by_object;
  for (const auto& p : pred) by_object[{p.image_id, p.object_id}] = &p;

  struct Sums {
    double iou = 0, precision = 0, recall = 0;
    int count = 0;
  };
  std::map<int, Sums> fam, unfam;
  PartsReport report;

  for (const auto& obj : gt) {
    const std::size_t object_area = obj.object_mask.area();
    auto it = by_object.find({obj.image_id, obj.object_id});
    const PartsPrediction* prediction = it == by_object.end() ? nullptr : it->second;
    for (const auto& part : obj.parts) {
      const std::size_t area = part.mask.area();
      if (!part_is_evaluated(area, object_area)) {
        ++report.skipped_parts;
        continue;
      }
      ++report.evaluated_parts;
      double best_iou = 0.0, best_p = 0.0, best_r = 0.0;
      bool found = false;
      if (prediction != nullptr) {
        for (const auto& p : prediction->parts) {
          const std::size_t inter = intersection_area(part.mask, p);
          const std::size_t parea = p.area();
          const std::size_t uni = area + parea - inter;
          const double v = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
          if (!found || v > best_iou) {
            found = true;
            best_iou = v;
            best_p = parea == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(parea);
            best_r = static_cast<double>(inter) / static_cast<double>(area);
          } else if (v == best_iou) {
            // Same IOU: prefer the larger precision so the result does not
            // depend on prediction order.
            const double pp = parea == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(parea);
            if (pp > best_p) {
              best_p = pp;
              best_r = static_cast<double>(inter) / static_cast<double>(area);
            }
          }
        }
      }
      Sums& s = (obj.familiar ? fam : unfam)[part.category_id];
      s.iou += best_iou;
      s.precision += best_p;
      s.recall += best_r;
      ++s.count;
    }
  }

  auto finish = [](const std::map<int, Sums>& sums, std::map<int, PartScores>& out,
                   PartScores& mean, PartScores& overall) {
    for (const auto& [cat, s] : sums) {
      PartScores ps{s.iou / s.count, s.precision / s.count, s.recall / s.count, s.count};
      out[cat] = ps;
      mean.iou += ps.iou;
      mean.precision += ps.precision;
      mean.recall += ps.recall;
      ++mean.count;
      overall.iou += ps.iou;
      overall.precision += ps.precision;
      overall.recall += ps.recall;
      ++overall.count;
    }
    if (mean.count > 0) {
      mean.iou /= mean.count;
      mean.precision /= mean.count;
      mean.recall /= mean.count;
    }
  };
  finish(fam, report.familiar, report.familiar_mean, report.overall_mean);
  finish(unfam, report.unfamiliar, report.unfamiliar_mean, report.overall_mean);
  if (report.overall_mean.count > 0) {
    report.overall_mean.iou /= report.overall_mean.count;
    report.overall_mean.precision /= report.overall_mean.count;
    report.overall_mean.recall /= report.overall_mean.count;
  }
  return report;
}

namespace {

json scores_json(const PartScores& s) {
  return {{"iou", s.iou}, {"precision", s.precision}, {"recall", s.recall}, {"n", s.count}};
}

}  // namespace

json to_json(const PartsReport& r) {
  json fam = json::object();
  json unfam = json::object();
  for (const auto& [c, s] : r.familiar) fam[std::to_string(c)] = scores_json(s);
  for (const auto& [c, s] : r.unfamiliar) unfam[std::to_string(c)] = scores_json(s);
  return {{"familiar", scores_json(r.familiar_mean)},
          {"unfamiliar", scores_json(r.unfamiliar_mean)},
          {"overall", scores_json(r.overall_mean)},
          {"familiar_categories", fam},
          {"unfamiliar_categories", unfam},
          {"evaluated_parts", r.evaluated_parts},
          {"skipped_parts", r.skipped_parts}};
}

std::string parts_table(const PartsReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %6s %9s %6s %10s\n", "Object classes", "IOU",
                "Precision", "Recall", "Part cats");
  out += buf;
  auto row = [&](const char* name, const PartScores& s) {
    std::snprintf(buf, sizeof buf, "%-20s %6.1f %9.1f %6.1f %10d\n", name, 100 * s.iou,
                  100 * s.precision, 100 * s.recall, s.count);
    out += buf;
  };
  row("Unfamiliar", r.unfamiliar_mean);
  row("Familiar", r.familiar_mean);
  row("All", r.overall_mean);
  return out;
}

}  // namespace ges
