#pragma once
// Slow reference implementations over plain byte/label vectors. They share
// no code with the library on purpose.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <vector>

namespace ref {

inline double iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::vector<std::uint32_t> rle(const std::vector<std::uint8_t>& px) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t n = 0;
  for (std::uint8_t v : px) {
    const std::uint8_t b = v ? 1 : 0;
    if (b != current) {
      runs.push_back(n);
      n = 0;
      current = b;
    }
    ++n;
  }
  if (n > 0) runs.push_back(n);
  return runs;
}

/// 4-connected components by flood fill, as sorted pixel index lists.
inline std::set<std::vector<std::size_t>> components(const std::vector<std::uint8_t>& px, int w, int h) {
  std::set<std::vector<std::size_t>> out;
  std::vector<bool> seen(px.size(), false);
  for (std::size_t s = 0; s < px.size(); ++s) {
    if (!px[s] || seen[s]) continue;
    std::vector<std::size_t> comp;
    std::deque<std::size_t> q{s};
    seen[s] = true;
    while (!q.empty()) {
      const std::size_t i = q.front();
      q.pop_front();
      comp.push_back(i);
      const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (auto& n : nb) {
        if (n[0] < 0 || n[1] < 0 || n[0] >= w || n[1] >= h) continue;
        const std::size_t j = static_cast<std::size_t>(n[1]) * w + n[0];
        if (px[j] && !seen[j]) {
          seen[j] = true;
          q.push_back(j);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.insert(comp);
  }
  return out;
}

struct Map {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> labels;  // 0 = void, k = segment k
  std::vector<int> category;          // per segment, index k-1
  std::vector<bool> thing;
};

struct Pq {
  double pq = 0, rq = 0, sq = 0;
  std::map<int, double> per_category_pq;
};

/// Every GT/pred pair is compared pixel by pixel; matches are picked
/// greedily by IOU (exact rational order, ties by GT then pred label).
inline Pq panoptic_quality(const Map& gt, const Map& pred) {
  const std::size_t n = gt.labels.size();
  auto area = [&](const Map& m, std::uint32_t l) {
    std::size_t a = 0;
    for (std::size_t i = 0; i < n; ++i) a += m.labels[i] == l;
    return a;
  };
  struct P {
    std::uint32_t g, p;
    long long inter, uni;
  };
  std::vector<P> pairs;
  for (std::uint32_t g = 1; g <= gt.category.size(); ++g) {
    for (std::uint32_t p = 1; p <= pred.category.size(); ++p) {
      if (gt.category[g - 1] != pred.category[p - 1]) continue;
      long long inter = 0, uni = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool a = gt.labels[i] == g, b = pred.labels[i] == p;
        inter += a && b;
        uni += a || b;
      }
      if (uni > 0 && 2 * inter >= uni) pairs.push_back({g, p, inter, uni});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const P& a, const P& b) {
    if (a.inter * b.uni != b.inter * a.uni) return a.inter * b.uni > b.inter * a.uni;
    if (a.g != b.g) return a.g < b.g;
    return a.p < b.p;
  });
  std::set<std::uint32_t> gused, pused;
  std::map<int, double> tp, fp, fn, iou_sum;
  std::map<int, bool> is_thing;
  for (const auto& pr : pairs) {
    if (gused.count(pr.g) || pused.count(pr.p)) continue;
    gused.insert(pr.g);
    pused.insert(pr.p);
    const int c = gt.category[pr.g - 1];
    tp[c] += 1;
    iou_sum[c] += static_cast<double>(pr.inter) / static_cast<double>(pr.uni);
  }
  for (std::uint32_t g = 1; g <= gt.category.size(); ++g) {
    if (area(gt, g) == 0) continue;
    is_thing[gt.category[g - 1]] = gt.thing[g - 1];
    if (!gused.count(g)) fn[gt.category[g - 1]] += 1;
  }
  for (std::uint32_t p = 1; p <= pred.category.size(); ++p) {
    if (area(pred, p) == 0) continue;
    is_thing.try_emplace(pred.category[p - 1], pred.thing[p - 1]);
    if (!pused.count(p)) fp[pred.category[p - 1]] += 1;
  }
  Pq out;
  int cats = 0;
  for (const auto& [c, th] : is_thing) {
    const double t = tp[c];
    const double rq = t / (t + (fp[c] + fn[c]) * 0.5);
    const double sq = t > 0 ? iou_sum[c] / t : 0.0;
    out.rq += rq;
    out.sq += sq;
    out.pq += rq * sq;
    out.per_category_pq[c] = rq * sq;
    ++cats;
  }
  if (cats > 0) {
    out.pq /= cats;
    out.rq /= cats;
    out.sq /= cats;
  }
  return out;
}

}  // namespace ref
