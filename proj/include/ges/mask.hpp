#pragma once

#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ges {

struct Point {
  int x = 0;
  int y = 0;

  friend auto operator<=>(const Point&, const Point&) = default;
};

enum class Connectivity { four = 4, eight = 8 };

/// Dense binary mask, row-major, bit-packed into 64-bit words. Bits past
/// width*height in the last word are always zero so popcount and equality
/// work word-wise.
class BitMask {
 public:
  BitMask() = default;
  BitMask(int width, int height);

  static BitMask full(int width, int height);
  /// Nonzero bytes become set pixels. `values.size()` must equal width*height.
  static BitMask from_bytes(int width, int height, std::span<const std::uint8_t> values);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  bool test(std::size_t index) const noexcept {
    return (words_[index >> 6] >> (index & 63)) & 1U;
  }
  bool get(int x, int y) const noexcept { return test(index_of(x, y)); }
  bool contains(Point p) const noexcept {
    return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_ && get(p.x, p.y);
  }

  void set(std::size_t index, bool value = true) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (index & 63);
    if (value) {
      words_[index >> 6] |= bit;
    } else {
      words_[index >> 6] &= ~bit;
    }
  }
  void set(int x, int y, bool value = true) noexcept { set(index_of(x, y), value); }

  std::size_t index_of(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  Point point_of(std::size_t index) const noexcept {
    return {static_cast<int>(index % static_cast<std::size_t>(width_)),
            static_cast<int>(index / static_cast<std::size_t>(width_))};
  }

  std::size_t area() const noexcept;
  bool empty() const noexcept;
  bool same_shape(const BitMask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }
  bool is_subset_of(const BitMask& other) const;

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  /// Calls f(index) for every set pixel in raster order.
  template <typename F>
  void for_each_set(F&& f) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits != 0) {
        const int tz = std::countr_zero(bits);
        f(w * 64 + static_cast<std::size_t>(tz));
        bits &= bits - 1;
      }
    }
  }

  std::vector<std::size_t> set_indices() const;
  std::vector<std::uint8_t> to_bytes() const;
  BitMask complement() const;

  BitMask& operator&=(const BitMask& other);
  BitMask& operator|=(const BitMask& other);
  /// Set difference: this \ other.
  BitMask& operator-=(const BitMask& other);

  friend BitMask operator&(BitMask a, const BitMask& b) { return a &= b; }
  friend BitMask operator|(BitMask a, const BitMask& b) { return a |= b; }
  friend BitMask operator-(BitMask a, const BitMask& b) { return a -= b; }

  friend bool operator==(const BitMask&, const BitMask&) = default;

 private:
  void require_same_shape(const BitMask& other) const;
  void clear_tail() noexcept;

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint64_t> words_;
};

enum class MaskOp { intersect, unite, subtract };

BitMask mask_algebra(const BitMask& a, const BitMask& b, MaskOp op);

/// |a ∩ b| without materializing the intersection.
std::size_t intersection_area(const BitMask& a, const BitMask& b);

/// |a∩b| / |a∪b|, and 0 when both masks are empty.
double iou(const BitMask& a, const BitMask& b);

/// Row-major run lengths, the first run counting zeros. Canonical form has
/// no zero-length run except a leading one when the first pixel is set.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> runs;

  bool is_canonical() const;
  friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask rle_encode(const BitMask& mask);
/// Accepts non-canonical input; throws InvalidInput unless the runs sum to
/// width*height.
BitMask rle_decode(const RleMask& rle);

/// Maximal connected regions of set pixels, each as its own mask, ordered by
/// the raster position of their first pixel.
std::vector<BitMask> connected_components(const BitMask& region,
                                          Connectivity connectivity = Connectivity::four);

/// Labels connected regions of equal value. Pixels equal to `background` get
/// label 0; the rest get 1..n in raster order of first appearance. Returns n.
std::uint32_t label_regions(std::span<const std::uint32_t> values, int width, int height,
                            Connectivity connectivity, std::uint32_t background,
                            std::vector<std::uint32_t>& labels_out);

/// Morphology with the 4-neighborhood structuring element applied `radius`
/// times (a diamond of the given L1 radius).
BitMask dilate(const BitMask& mask, int radius);
/// Pixels outside the image count as set, so erosion never eats in from the
/// border.
BitMask erode(const BitMask& mask, int radius);
/// Shifts every pixel by (dx, dy); pixels leaving the image are dropped.
BitMask translate(const BitMask& mask, int dx, int dy);

}  // namespace ges
