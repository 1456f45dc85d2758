#include <algorithm>
#include <cmath>
#include <numeric>

#include "ges/dataset.hpp"
#include "ges/errors.hpp"
#include "ges/rng.hpp"

namespace ges {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum StreamTag : std::uint64_t { kFamiliarity = 1, kScene = 2, kPixels = 3, kPalette = 4 };

struct Shape {
  bool ellipse = true;
  double cx = 0, cy = 0, rx = 1, ry = 1;

  bool contains(int x, int y) const {
    const double dx = (x + 0.5 - cx) / rx;
    const double dy = (y + 0.5 - cy) / ry;
    if (ellipse) return dx * dx + dy * dy <= 1.0;
    return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
  }
};

struct Site {
  int x;
  int y;
  int category;
};

/// Index of the nearest site; ties go to the lower index.
std::size_t nearest_site(const std::vector<Site>& sites, int x, int y) {
  std::size_t best = 0;
  long best_d = std::numeric_limits<long>::max();
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const long dx = x - sites[s].x;
    const long dy = y - sites[s].y;
    const long d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }
  return best;
}

struct SceneLayout {
  std::vector<std::uint32_t> stuff_class;  // per pixel
  std::vector<int> owner;                  // per pixel thing index, -1 for stuff
  std::vector<Shape> things;
  std::vector<int> thing_category;
};

/// Stuff components (per class, 4-connected) and visible thing areas all reach
/// `min_area`.
bool layout_ok(const SceneLayout& layout, int width, int height, std::size_t min_area) {
  std::vector<std::uint32_t> values(layout.stuff_class.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = layout.owner[i] < 0 ? layout.stuff_class[i] : 0;
  }
  std::vector<std::uint32_t> comp;
  const std::uint32_t n = label_regions(values, width, height, Connectivity::four, 0, comp);
  std::vector<std::size_t> area(n + 1, 0);
  for (std::uint32_t c : comp) ++area[c];
  for (std::uint32_t c = 1; c <= n; ++c) {
    if (area[c] < min_area) return false;
  }
  std::vector<std::size_t> thing_area(layout.things.size(), 0);
  for (int o : layout.owner) {
    if (o >= 0) ++thing_area[static_cast<std::size_t>(o)];
  }
  return std::all_of(thing_area.begin(), thing_area.end(),
                     [&](std::size_t a) { return a >= min_area; });
}

std::array<std::uint8_t, 3> palette_color(std::uint64_t seed, std::uint64_t key) {
  Rng rng(derive_seed(seed, {kPalette, key}));
  return {static_cast<std::uint8_t>(40 + rng.below(200)), static_cast<std::uint8_t>(40 + rng.below(200)),
          static_cast<std::uint8_t>(40 + rng.below(200))};
}

std::uint8_t clamp_channel(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace

void SynthConfig::validate() const {
  if (width < 8 || height < 8) throw InvalidInput("synthetic images must be at least 8x8");
  if (image_count < 1) throw InvalidInput("image_count must be >= 1");
  if (stuff_classes < 1 || thing_classes < 1) throw InvalidInput("class counts must be >= 1");
  if (min_things < 0 || max_things < min_things) throw InvalidInput("bad things-per-image range");
  if (min_parts < 1 || max_parts < min_parts) throw InvalidInput("bad parts-per-thing range");
  if (unfamiliar_fraction < 0.0 || unfamiliar_fraction > 1.0) {
    throw InvalidInput("unfamiliar_fraction must lie in [0,1]");
  }
  if (shapes.min_extent <= 0.0 || shapes.max_extent < shapes.min_extent) {
    throw InvalidInput("bad shape extent range");
  }
  if (shapes.part_classes < 1) throw InvalidInput("part_classes must be >= 1");
  if (shapes.stuff_regions < 0) throw InvalidInput("stuff_regions must be >= 0");
  if (shapes.max_attempts < 1) throw InvalidInput("max_attempts must be >= 1");
}

void to_json(json& j, const SynthConfig& c) {
  j = {{"seed", c.seed},
       {"width", c.width},
       {"height", c.height},
       {"image_count", c.image_count},
       {"stuff_classes", c.stuff_classes},
       {"thing_classes", c.thing_classes},
       {"things", {c.min_things, c.max_things}},
       {"parts", {c.min_parts, c.max_parts}},
       {"unfamiliar_fraction", c.unfamiliar_fraction},
       {"shapes",
        {{"min_extent", c.shapes.min_extent},
         {"max_extent", c.shapes.max_extent},
         {"ellipse_probability", c.shapes.ellipse_probability},
         {"stuff_regions", c.shapes.stuff_regions},
         {"min_segment_fraction", c.shapes.min_segment_fraction},
         {"part_classes", c.shapes.part_classes},
         {"noise_amplitude", c.shapes.noise_amplitude},
         {"max_attempts", c.shapes.max_attempts}}}};
}

void from_json(const json& j, SynthConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.image_count = j.value("image_count", c.image_count);
  c.stuff_classes = j.value("stuff_classes", c.stuff_classes);
  c.thing_classes = j.value("thing_classes", c.thing_classes);
  if (j.contains("things")) {
    c.min_things = j["things"].at(0).get<int>();
    c.max_things = j["things"].at(1).get<int>();
  }
  if (j.contains("parts")) {
    c.min_parts = j["parts"].at(0).get<int>();
    c.max_parts = j["parts"].at(1).get<int>();
  }
  c.unfamiliar_fraction = j.value("unfamiliar_fraction", c.unfamiliar_fraction);
  if (j.contains("shapes")) {
    const json& s = j["shapes"];
    c.shapes.min_extent = s.value("min_extent", c.shapes.min_extent);
    c.shapes.max_extent = s.value("max_extent", c.shapes.max_extent);
    c.shapes.ellipse_probability = s.value("ellipse_probability", c.shapes.ellipse_probability);
    c.shapes.stuff_regions = s.value("stuff_regions", c.shapes.stuff_regions);
    c.shapes.min_segment_fraction = s.value("min_segment_fraction", c.shapes.min_segment_fraction);
    c.shapes.part_classes = s.value("part_classes", c.shapes.part_classes);
    c.shapes.noise_amplitude = s.value("noise_amplitude", c.shapes.noise_amplitude);
    c.shapes.max_attempts = s.value("max_attempts", c.shapes.max_attempts);
  }
}

SynthDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset out;

  // Things take ids 1..T, stuff T+1..T+S.
  std::vector<int> thing_ids(static_cast<std::size_t>(cfg.thing_classes));
  std::iota(thing_ids.begin(), thing_ids.end(), 1);
  {
    const auto unfamiliar = static_cast<std::size_t>(
        std::lround(cfg.unfamiliar_fraction * static_cast<double>(cfg.thing_classes)));
    std::vector<int> order = thing_ids;
    Rng rng(derive_seed(cfg.seed, {kFamiliarity}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<bool> familiar(thing_ids.size() + 1, true);
    for (std::size_t i = 0; i < unfamiliar; ++i) familiar[static_cast<std::size_t>(order[i])] = false;
    for (int id : thing_ids) {
      out.categories.push_back({id, "thing_" + std::to_string(id), true, familiar[id]});
    }
  }
  for (int s = 1; s <= cfg.stuff_classes; ++s) {
    const int id = cfg.thing_classes + s;
    out.categories.push_back({id, "stuff_" + std::to_string(s), false, true});
  }
  auto is_familiar = [&](int id) { return out.categories[static_cast<std::size_t>(id - 1)].familiar; };

  const int W = cfg.width;
  const int H = cfg.height;
  const std::size_t N = static_cast<std::size_t>(W) * H;
  const std::size_t min_area = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.shapes.min_segment_fraction * static_cast<double>(N))));
  const int site_count =
      cfg.shapes.stuff_regions > 0 ? cfg.shapes.stuff_regions : 2 * cfg.stuff_classes;
  const double base_extent = std::min(W, H);

  for (int img = 0; img < cfg.image_count; ++img) {
    const std::int64_t image_id = img + 1;
    Rng rng(derive_seed(cfg.seed, {kScene, static_cast<std::uint64_t>(img)}));
    SceneLayout layout;
    layout.owner.assign(N, -1);
    layout.stuff_class.assign(N, 0);

    bool stuff_ok = false;
    for (int attempt = 0; attempt < cfg.shapes.max_attempts && !stuff_ok; ++attempt) {
      std::vector<Site> sites;
      for (int s = 0; s < site_count; ++s) {
        sites.push_back({rng.uniform_int(0, W - 1), rng.uniform_int(0, H - 1),
                         cfg.thing_classes + rng.uniform_int(1, cfg.stuff_classes)});
      }
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          layout.stuff_class[static_cast<std::size_t>(y) * W + x] =
              static_cast<std::uint32_t>(sites[nearest_site(sites, x, y)].category);
        }
      }
      stuff_ok = layout_ok(layout, W, H, min_area);
    }
    if (!stuff_ok) throw GenerationError("could not lay out stuff regions above the minimum area");

    const int thing_count = rng.uniform_int(cfg.min_things, cfg.max_things);
    for (int t = 0; t < thing_count; ++t) {
      bool placed = false;
      for (int attempt = 0; attempt < cfg.shapes.max_attempts && !placed; ++attempt) {
        Shape shape;
        shape.ellipse = rng.bernoulli(cfg.shapes.ellipse_probability);
        shape.cx = rng.uniform(0.0, W);
        shape.cy = rng.uniform(0.0, H);
        shape.rx = base_extent * rng.uniform(cfg.shapes.min_extent, cfg.shapes.max_extent);
        shape.ry = base_extent * rng.uniform(cfg.shapes.min_extent, cfg.shapes.max_extent);
        const int category = rng.uniform_int(1, cfg.thing_classes);

        SceneLayout trial = layout;
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            if (shape.contains(x, y)) trial.owner[static_cast<std::size_t>(y) * W + x] = t;
          }
        }
        trial.things.push_back(shape);
        trial.thing_category.push_back(category);
        if (layout_ok(trial, W, H, min_area)) {
          layout = std::move(trial);
          placed = true;
        }
      }
      if (!placed) {
        throw GenerationError("could not place thing " + std::to_string(t + 1) + " of " +
                              std::to_string(thing_count) + " in a " + std::to_string(W) + "x" +
                              std::to_string(H) + " image");
      }
    }

    // Ground truth: stuff components first (raster order), then things in
    // layering order.
    std::vector<std::uint32_t> stuff_values(N);
    for (std::size_t i = 0; i < N; ++i) {
      stuff_values[i] = layout.owner[i] < 0 ? layout.stuff_class[i] : 0;
    }
    std::vector<std::uint32_t> comp;
    const std::uint32_t stuff_segments =
        label_regions(stuff_values, W, H, Connectivity::four, 0, comp);
    std::vector<SegmentInfo> segments(stuff_segments);
    std::vector<std::uint32_t> labels(N, 0);
    for (std::size_t i = 0; i < N; ++i) {
      if (comp[i] != 0) {
        segments[comp[i] - 1] = {static_cast<int>(stuff_values[i]), false};
        labels[i] = comp[i];
      }
    }
    for (std::size_t t = 0; t < layout.things.size(); ++t) {
      segments.push_back({layout.thing_category[t], true});
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (layout.owner[i] >= 0) labels[i] = stuff_segments + 1 + static_cast<std::uint32_t>(layout.owner[i]);
    }

    // Parts and pixel colours.
    std::vector<int> part_of(N, -1);  // running part index over the whole image
    std::vector<std::array<std::uint8_t, 3>> part_color;
    for (std::size_t t = 0; t < layout.things.size(); ++t) {
      const Shape& shape = layout.things[t];
      std::vector<std::size_t> shape_pixels;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          if (shape.contains(x, y)) shape_pixels.push_back(static_cast<std::size_t>(y) * W + x);
        }
      }
      const int n_parts = rng.uniform_int(cfg.min_parts, cfg.max_parts);
      std::vector<Site> sites;
      for (int k = 0; k < n_parts; ++k) {
        const std::size_t p = shape_pixels[rng.below(shape_pixels.size())];
        sites.push_back({static_cast<int>(p % W), static_cast<int>(p / W),
                         rng.uniform_int(1, cfg.shapes.part_classes)});
      }
      PartsRecord rec;
      rec.image_id = image_id;
      rec.object_id = static_cast<int>(t);
      rec.object_category_id = layout.thing_category[t];
      rec.familiar = is_familiar(rec.object_category_id);
      rec.object_mask = BitMask(W, H);
      std::vector<BitMask> cells(sites.size(), BitMask(W, H));
      const auto base = palette_color(cfg.seed, 1000 + image_id * 64 + t);
      const int first_part = static_cast<int>(part_color.size());
      for (std::size_t k = 0; k < sites.size(); ++k) {
        const int shade = static_cast<int>(k) * 22 - 30;
        part_color.push_back({clamp_channel(base[0] + shade), clamp_channel(base[1] + shade),
                              clamp_channel(base[2] - shade)});
      }
      for (std::size_t p : shape_pixels) {
        if (layout.owner[p] != static_cast<int>(t)) continue;
        const std::size_t k = nearest_site(sites, static_cast<int>(p % W), static_cast<int>(p / W));
        rec.object_mask.set(p);
        cells[k].set(p);
        part_of[p] = first_part + static_cast<int>(k);
      }
      for (std::size_t k = 0; k < sites.size(); ++k) {
        if (!cells[k].empty()) rec.parts.push_back({std::move(cells[k]), sites[k].category});
      }
      out.parts.push_back(std::move(rec));
    }

    RgbImage image(W, H);
    Rng noise(derive_seed(cfg.seed, {kPixels, static_cast<std::uint64_t>(img)}));
    const int amp = cfg.shapes.noise_amplitude;
    for (std::size_t i = 0; i < N; ++i) {
      const auto color = part_of[i] >= 0 ? part_color[static_cast<std::size_t>(part_of[i])]
                                         : palette_color(cfg.seed, layout.stuff_class[i]);
      std::array<std::uint8_t, 3> px{};
      for (int c = 0; c < 3; ++c) {
        px[c] = clamp_channel(color[c] + (amp > 0 ? noise.uniform_int(-amp, amp) : 0));
      }
      image.set_pixel(i, px);
    }

    PanopticRecord rec;
    rec.image_id = image_id;
    rec.width = W;
    rec.height = H;
    rec.image = std::move(image);
    rec.ground_truth = LabelMap(W, H, std::move(labels), std::move(segments));
    out.panoptic.push_back(std::move(rec));
  }
  return out;
}

void write_synthetic(const fs::path& dir, const SynthDataset& data) {
  fs::create_directories(dir / "images");
  PanopticDataset ds;
  ds.categories = data.categories;
  for (const auto& rec : data.panoptic) {
    PanopticRecord copy;
    copy.image_id = rec.image_id;
    copy.width = rec.width;
    copy.height = rec.height;
    copy.image_file = "images/" + std::to_string(rec.image_id) + ".png";
    copy.ground_truth = rec.ground_truth;
    if (rec.image) write_png(dir / copy.image_file, *rec.image);
    ds.records.push_back(std::move(copy));
  }
  write_panoptic(dir / "panoptic.json", dir / "panoptic", ds);
  write_parts(dir / "parts.json", data.parts);
}

}  // namespace ges
