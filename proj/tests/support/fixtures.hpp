#pragma once

#include <cstdint>
#include <vector>

#include "ges/label_map.hpp"
#include "ges/mask.hpp"
#include "ges/rng.hpp"
#include "oracles.hpp"

namespace fx {

inline ges::BitMask random_mask(ges::Rng& rng, int w, int h, double density) {
  ges::BitMask m(w, h);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.bernoulli(density));
  return m;
}

inline ges::BitMask rect(int w, int h, int x0, int y0, int x1, int y1) {
  ges::BitMask m(w, h);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m.set(x, y);
  }
  return m;
}

inline std::vector<std::uint8_t> bytes(const ges::BitMask& m) {
  std::vector<std::uint8_t> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m.test(i);
  return out;
}

/// Random rectangles painted in order; later ones cover earlier ones, some
/// pixels stay void. Categories 1..cats; odd categories are things.
inline ges::LabelMap random_label_map(ges::Rng& rng, int w, int h, int cats, int rects) {
  ges::LabelMap map(w, h);
  for (int r = 0; r < rects; ++r) {
    const int x0 = rng.uniform_int(0, w - 1), y0 = rng.uniform_int(0, h - 1);
    const int x1 = rng.uniform_int(x0 + 1, w), y1 = rng.uniform_int(y0 + 1, h);
    const int c = rng.uniform_int(1, cats);
    const auto l = map.add_segment({c, c % 2 == 1});
    map.paint(rect(w, h, x0, y0, x1, y1), l);
  }
  return map;
}

/// A prediction near `gt`: a few rectangles repainted, some categories changed.
inline ges::LabelMap perturb(ges::Rng& rng, const ges::LabelMap& gt, int cats) {
  std::vector<std::uint32_t> labels(gt.labels().begin(), gt.labels().end());
  std::vector<ges::SegmentInfo> segs = gt.segments();
  for (auto& s : segs) {
    if (rng.bernoulli(0.2)) {
      s.category_id = rng.uniform_int(1, cats);
      s.is_thing = s.category_id % 2 == 1;
    }
  }
  ges::LabelMap pred(gt.width(), gt.height(), labels, segs);
  const int edits = rng.uniform_int(0, 4);
  const int w = gt.width(), h = gt.height();
  for (int e = 0; e < edits; ++e) {
    const int x0 = rng.uniform_int(0, w - 1), y0 = rng.uniform_int(0, h - 1);
    const int x1 = rng.uniform_int(x0 + 1, std::min(w, x0 + w / 2 + 1));
    const int y1 = rng.uniform_int(y0 + 1, std::min(h, y0 + h / 2 + 1));
    std::uint32_t l = 0;
    if (!rng.bernoulli(0.25)) {
      const int c = rng.uniform_int(1, cats);
      l = pred.add_segment({c, c % 2 == 1});
    }
    pred.paint(rect(w, h, x0, y0, x1, y1), l);
  }
  return pred;
}

inline ref::Map to_ref(const ges::LabelMap& m) {
  ref::Map r;
  r.width = m.width();
  r.height = m.height();
  r.labels.assign(m.labels().begin(), m.labels().end());
  for (const auto& s : m.segments()) {
    r.category.push_back(s.category_id);
    r.thing.push_back(s.is_thing);
  }
  return r;
}

}  // namespace fx
