#include "ges/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ges/errors.hpp"

namespace ges {
namespace {

std::size_t word_count(std::size_t bits) { return (bits + 63) / 64; }

std::string shape_str(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

void check_dims(int width, int height) {
  if (width < 0 || height < 0) {
    throw InvalidInput("negative mask dimensions " + shape_str(width, height));
  }
}

// Minimal union-find over provisional labels; label 0 is unused.
class DisjointSet {
 public:
  std::uint32_t make() {
    parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return parent_.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

 private:
  std::vector<std::uint32_t> parent_{0};
};

}  // namespace

BitMask::BitMask(int width, int height) : width_(width), height_(height) {
  check_dims(width, height);
  words_.assign(word_count(size()), 0);
}

BitMask BitMask::full(int width, int height) {
  BitMask m(width, height);
  std::fill(m.words_.begin(), m.words_.end(), ~std::uint64_t{0});
  m.clear_tail();
  return m;
}

BitMask BitMask::from_bytes(int width, int height, std::span<const std::uint8_t> values) {
  BitMask m(width, height);
  if (values.size() != m.size()) {
    throw InvalidInput("byte buffer of length " + std::to_string(values.size()) +
                       " does not match " + shape_str(width, height));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0) m.set(i);
  }
  return m;
}

void BitMask::clear_tail() noexcept {
  const std::size_t rem = size() & 63;
  if (rem != 0 && !words_.empty()) {
    words_.back() &= (std::uint64_t{1} << rem) - 1;
  }
}

void BitMask::require_same_shape(const BitMask& other) const {
  if (!same_shape(other)) {
    throw InvalidInput("mask dimension mismatch: " + shape_str(width_, height_) + " vs " +
                       shape_str(other.width_, other.height_));
  }
}

std::size_t BitMask::area() const noexcept {
  std::size_t n = 0;
  for (std::uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

bool BitMask::empty() const noexcept {
  return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
}

bool BitMask::is_subset_of(const BitMask& other) const {
  require_same_shape(other);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if ((words_[i] & ~other.words_[i]) != 0) return false;
  }
  return true;
}

std::vector<std::size_t> BitMask::set_indices() const {
  std::vector<std::size_t> out;
  out.reserve(area());
  for_each_set([&](std::size_t i) { out.push_back(i); });
  return out;
}

std::vector<std::uint8_t> BitMask::to_bytes() const {
  std::vector<std::uint8_t> out(size(), 0);
  for_each_set([&](std::size_t i) { out[i] = 1; });
  return out;
}

BitMask BitMask::complement() const {
  BitMask m = *this;
  for (auto& w : m.words_) w = ~w;
  m.clear_tail();
  return m;
}

BitMask& BitMask::operator&=(const BitMask& other) {
  require_same_shape(other);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
  return *this;
}

BitMask& BitMask::operator|=(const BitMask& other) {
  require_same_shape(other);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

BitMask& BitMask::operator-=(const BitMask& other) {
  require_same_shape(other);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= ~other.words_[i];
  return *this;
}

BitMask mask_algebra(const BitMask& a, const BitMask& b, MaskOp op) {
  switch (op) {
    case MaskOp::intersect:
      return a & b;
    case MaskOp::unite:
      return a | b;
    case MaskOp::subtract:
      return a - b;
  }
  throw InvalidInput("unknown mask operation");
}

std::size_t intersection_area(const BitMask& a, const BitMask& b) {
  if (!a.same_shape(b)) {
    throw InvalidInput("mask dimension mismatch: " + shape_str(a.width(), a.height()) + " vs " +
                       shape_str(b.width(), b.height()));
  }
  const auto wa = a.words();
  const auto wb = b.words();
  std::size_t n = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    n += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
  }
  return n;
}

double iou(const BitMask& a, const BitMask& b) {
  const std::size_t inter = intersection_area(a, b);
  const std::size_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool RleMask::is_canonical() const {
  if (runs.empty()) return width == 0 || height == 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i] == 0) return false;
  }
  // A lone leading zero is only meaningful when followed by a ones-run.
  if (runs[0] == 0 && runs.size() == 1) return false;
  return true;
}

RleMask rle_encode(const BitMask& mask) {
  RleMask rle{mask.width(), mask.height(), {}};
  const std::size_t n = mask.size();
  if (n == 0) return rle;
  bool current = false;
  std::uint32_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool bit = mask.test(i);
    if (bit != current) {
      rle.runs.push_back(count);
      count = 0;
      current = bit;
    }
    ++count;
  }
  rle.runs.push_back(count);
  return rle;
}

BitMask rle_decode(const RleMask& rle) {
  BitMask m(rle.width, rle.height);
  std::uint64_t total = 0;
  for (std::uint32_t r : rle.runs) total += r;
  if (total != m.size()) {
    throw InvalidInput("RLE runs sum to " + std::to_string(total) + " but mask is " +
                       shape_str(rle.width, rle.height));
  }
  std::size_t pos = 0;
  bool value = false;
  for (std::uint32_t r : rle.runs) {
    if (value) {
      for (std::size_t i = pos; i < pos + r; ++i) m.set(i);
    }
    pos += r;
    value = !value;
  }
  return m;
}

std::uint32_t label_regions(std::span<const std::uint32_t> values, int width, int height,
                            Connectivity connectivity, std::uint32_t background,
                            std::vector<std::uint32_t>& labels_out) {
  check_dims(width, height);
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (values.size() != n) throw InvalidInput("value buffer does not match dimensions");
  labels_out.assign(n, 0);
  DisjointSet sets;

  // First pass: provisional labels from already-visited neighbors.
  const bool diag = connectivity == Connectivity::eight;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const std::uint32_t v = values[i];
      if (v == background) continue;
      std::uint32_t label = 0;
      auto consider = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= width) return;
        const std::size_t j = static_cast<std::size_t>(ny) * width + nx;
        if (values[j] != v) return;
        if (label == 0) {
          label = labels_out[j];
        } else {
          sets.unite(label, labels_out[j]);
        }
      };
      consider(x - 1, y);
      consider(x, y - 1);
      if (diag) {
        consider(x - 1, y - 1);
        consider(x + 1, y - 1);
      }
      labels_out[i] = label != 0 ? label : sets.make();
    }
  }

  // Second pass: resolve to roots and renumber in raster order of first pixel.
  std::vector<std::uint32_t> remap;
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels_out[i] == 0) continue;
    const std::uint32_t root = sets.find(labels_out[i]);
    if (root >= remap.size()) remap.resize(static_cast<std::size_t>(root) + 1, 0);
    if (remap[root] == 0) remap[root] = ++next;
    labels_out[i] = remap[root];
  }
  return next;
}

std::vector<BitMask> connected_components(const BitMask& region, Connectivity connectivity) {
  std::vector<std::uint32_t> values(region.size(), 0);
  region.for_each_set([&](std::size_t i) { values[i] = 1; });
  std::vector<std::uint32_t> labels;
  const std::uint32_t count =
      label_regions(values, region.width(), region.height(), connectivity, 0, labels);
  std::vector<BitMask> out(count, BitMask(region.width(), region.height()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) out[labels[i] - 1].set(i);
  }
  return out;
}

namespace {

BitMask dilate_once(const BitMask& m) {
  BitMask out = m;
  const int w = m.width();
  const int h = m.height();
  m.for_each_set([&](std::size_t i) {
    const Point p = m.point_of(i);
    if (p.x > 0) out.set(i - 1);
    if (p.x + 1 < w) out.set(i + 1);
    if (p.y > 0) out.set(i - static_cast<std::size_t>(w));
    if (p.y + 1 < h) out.set(i + static_cast<std::size_t>(w));
  });
  return out;
}

}  // namespace

BitMask dilate(const BitMask& mask, int radius) {
  if (radius < 0) throw InvalidInput("dilation radius must be non-negative");
  BitMask out = mask;
  for (int r = 0; r < radius; ++r) out = dilate_once(out);
  return out;
}

BitMask erode(const BitMask& mask, int radius) {
  if (radius < 0) throw InvalidInput("erosion radius must be non-negative");
  return dilate(mask.complement(), radius).complement();
}

BitMask translate(const BitMask& mask, int dx, int dy) {
  BitMask out(mask.width(), mask.height());
  if (dx == 0 && dy == 0) return mask;
  mask.for_each_set([&](std::size_t i) {
    const Point p = mask.point_of(i);
    const int nx = p.x + dx;
    const int ny = p.y + dy;
    if (nx >= 0 && ny >= 0 && nx < mask.width() && ny < mask.height()) out.set(nx, ny);
  });
  return out;
}

}  // namespace ges
