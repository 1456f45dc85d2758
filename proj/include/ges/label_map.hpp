#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ges/mask.hpp"

namespace ges {

struct SegmentInfo {
  int category_id = 0;
  bool is_thing = false;

  friend bool operator==(const SegmentInfo&, const SegmentInfo&) = default;
};

/// Per-pixel segment index map. Label 0 is void; label k >= 1 refers to
/// segments()[k - 1]. Segments are disjoint by construction since every pixel
/// carries one label.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int width, int height);
  /// Throws MalformedAnnotation if a label has no segment entry.
  LabelMap(int width, int height, std::vector<std::uint32_t> labels,
           std::vector<SegmentInfo> segments);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::span<const std::uint32_t> labels() const noexcept { return labels_; }
  std::uint32_t at(int x, int y) const noexcept {
    return labels_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                   static_cast<std::size_t>(x)];
  }
  std::uint32_t at(std::size_t index) const noexcept { return labels_[index]; }

  const std::vector<SegmentInfo>& segments() const noexcept { return segments_; }
  std::size_t segment_count() const noexcept { return segments_.size(); }
  const SegmentInfo& segment(std::uint32_t label) const;

  /// Appends a segment entry and returns its label.
  std::uint32_t add_segment(SegmentInfo info);
  /// Writes `label` to every set pixel of `mask`, overwriting what was there.
  void paint(const BitMask& mask, std::uint32_t label);

  BitMask segment_mask(std::uint32_t label) const;
  BitMask void_mask() const;
  BitMask occupied_mask() const;
  /// Pixel count per label; index 0 is the void area.
  std::vector<std::size_t> areas() const;

  /// Checks every label refers to a segment entry; throws MalformedAnnotation.
  void validate() const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> labels_;
  std::vector<SegmentInfo> segments_;
};

struct LabeledComponent {
  std::uint32_t label = 0;
  BitMask mask;
};

/// Connected regions of equal nonzero label, in raster order of first pixel.
std::vector<LabeledComponent> connected_components(const LabelMap& map,
                                                   Connectivity connectivity = Connectivity::four);

/// Same map with segments renumbered in raster order of first appearance and
/// empty segments dropped. Two maps that differ only by segment numbering
/// have equal canonical forms.
LabelMap canonical_relabel(const LabelMap& map);

}  // namespace ges
