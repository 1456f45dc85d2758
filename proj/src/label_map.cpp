#include "ges/label_map.hpp"

#include <string>

#include "ges/errors.hpp"

namespace ges {

LabelMap::LabelMap(int width, int height)
    : width_(width),
      height_(height),
      labels_(static_cast<std::size_t>(width < 0 ? 0 : width) *
                  static_cast<std::size_t>(height < 0 ? 0 : height),
              0) {
  if (width < 0 || height < 0) throw InvalidInput("negative label map dimensions");
}

LabelMap::LabelMap(int width, int height, std::vector<std::uint32_t> labels,
                   std::vector<SegmentInfo> segments)
    : width_(width), height_(height), labels_(std::move(labels)), segments_(std::move(segments)) {
  if (width < 0 || height < 0) throw InvalidInput("negative label map dimensions");
  if (labels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw InvalidInput("label buffer does not match dimensions");
  }
  validate();
}

const SegmentInfo& LabelMap::segment(std::uint32_t label) const {
  if (label == 0 || label > segments_.size()) {
    throw InvalidInput("no segment with label " + std::to_string(label));
  }
  return segments_[label - 1];
}

std::uint32_t LabelMap::add_segment(SegmentInfo info) {
  segments_.push_back(info);
  return static_cast<std::uint32_t>(segments_.size());
}

void LabelMap::paint(const BitMask& mask, std::uint32_t label) {
  if (mask.width() != width_ || mask.height() != height_) {
    throw InvalidInput("mask does not match label map dimensions");
  }
  if (label > segments_.size()) throw InvalidInput("painting with unknown label");
  mask.for_each_set([&](std::size_t i) { labels_[i] = label; });
}

BitMask LabelMap::segment_mask(std::uint32_t label) const {
  BitMask m(width_, height_);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) m.set(i);
  }
  return m;
}

BitMask LabelMap::void_mask() const { return segment_mask(0); }

BitMask LabelMap::occupied_mask() const { return void_mask().complement(); }

std::vector<std::size_t> LabelMap::areas() const {
  std::vector<std::size_t> out(segments_.size() + 1, 0);
  for (std::uint32_t l : labels_) ++out[l];
  return out;
}

void LabelMap::validate() const {
  for (std::uint32_t l : labels_) {
    if (l > segments_.size()) {
      throw MalformedAnnotation("label " + std::to_string(l) + " has no segment entry");
    }
  }
}

std::vector<LabeledComponent> connected_components(const LabelMap& map,
                                                   Connectivity connectivity) {
  std::vector<std::uint32_t> comp;
  const std::uint32_t n =
      label_regions(map.labels(), map.width(), map.height(), connectivity, 0, comp);
  std::vector<LabeledComponent> out(n, LabeledComponent{0, BitMask(map.width(), map.height())});
  for (std::size_t i = 0; i < comp.size(); ++i) {
    if (comp[i] == 0) continue;
    auto& c = out[comp[i] - 1];
    c.label = map.at(i);
    c.mask.set(i);
  }
  return out;
}

LabelMap canonical_relabel(const LabelMap& map) {
  std::vector<std::uint32_t> remap(map.segment_count() + 1, 0);
  std::vector<SegmentInfo> segments;
  std::vector<std::uint32_t> labels(map.size(), 0);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const std::uint32_t l = map.at(i);
    if (l == 0) continue;
    if (remap[l] == 0) {
      segments.push_back(map.segment(l));
      remap[l] = static_cast<std::uint32_t>(segments.size());
    }
    labels[i] = remap[l];
  }
  return LabelMap(map.width(), map.height(), std::move(labels), std::move(segments));
}

}  // namespace ges
