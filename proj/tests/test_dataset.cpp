#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ges/dataset.hpp"
#include "ges/errors.hpp"
#include "support/fixtures.hpp"

using namespace ges;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ges_test_dataset_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json rle_json(const BitMask& m) { return rle_to_json(rle_encode(m)); }

}  // namespace

TEST_CASE("segment id colour encoding") {
  CHECK(decode_segment_id(0, 0, 0) == 0);
  CHECK(encode_segment_id(0) == std::array<std::uint8_t, 3>{0, 0, 0});
  CHECK(encode_segment_id(300) == std::array<std::uint8_t, 3>{44, 1, 0});
  CHECK(decode_segment_id(44, 1, 0) == 300);
  CHECK(encode_segment_id(65536) == std::array<std::uint8_t, 3>{0, 0, 1});
  CHECK(decode_segment_id(0, 0, 1) == 65536);
  CHECK(decode_segment_id(255, 255, 255) == kMaxSegmentId);
  CHECK_THROWS_AS(encode_segment_id(kMaxSegmentId + 1), InvalidInput);
}

TEST_CASE("label map colour roundtrip and unknown ids") {
  Rng rng(2);
  const LabelMap m = fx::random_label_map(rng, 20, 10, 5, 6);
  const RgbImage img = encode_label_map(m);
  const auto entries = segment_entries(m);
  CHECK(decode_label_map(img, entries) == m);
  // Drop the entry of a painted segment: its colour is now unknown.
  std::vector<SegmentEntry> partial(entries.begin(), entries.end());
  partial.erase(partial.begin() + static_cast<long>(m.at(0, 0) > 0 ? m.at(0, 0) - 1 : 0));
  if (m.at(0, 0) > 0) CHECK_THROWS_AS(decode_label_map(img, partial), MalformedAnnotation);
}

TEST_CASE("png roundtrip") {
  const fs::path dir = scratch("png");
  RgbImage img(5, 3);
  for (std::size_t i = 0; i < 15; ++i) {
    img.set_pixel(i, {static_cast<std::uint8_t>(i * 17), static_cast<std::uint8_t>(255 - i), 7});
  }
  write_png(dir / "a.png", img);
  CHECK(read_png(dir / "a.png") == img);
  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  CHECK_THROWS_AS(write_png(dir / "no" / "such" / "dir.png", img), IoError);
}

TEST_CASE("panoptic write then load is the identity on 50 fixtures") {
  const fs::path dir = scratch("roundtrip");
  Rng rng(9);
  PanopticDataset ds;
  for (int c = 1; c <= 6; ++c) ds.categories.push_back({c, "c" + std::to_string(c), c % 2 == 1, c != 3});
  for (int i = 0; i < 50; ++i) {
    PanopticRecord r;
    r.image_id = 100 + i;
    r.width = rng.uniform_int(1, 40);
    r.height = rng.uniform_int(1, 40);
    r.ground_truth = fx::random_label_map(rng, r.width, r.height, 6, rng.uniform_int(0, 8));
    ds.records.push_back(std::move(r));
  }
  write_panoptic(dir / "panoptic.json", dir / "maps", ds);
  const PanopticDataset back = load_panoptic(dir / "panoptic.json", dir / "maps");
  CHECK(back.categories == ds.categories);
  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(back.records[i].image_id == ds.records[i].image_id);
    CHECK(back.records[i].width == ds.records[i].width);
    CHECK(back.records[i].ground_truth == ds.records[i].ground_truth);
  }
}

TEST_CASE("load_panoptic rejects broken annotations") {
  const fs::path dir = scratch("broken");
  CHECK_THROWS_AS(load_panoptic(dir / "none.json", dir), IoError);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_panoptic(dir / "bad.json", dir), MalformedAnnotation);
  std::ofstream(dir / "nofields.json") << R"({"images": 3})";
  CHECK_THROWS_AS(load_panoptic(dir / "nofields.json", dir), MalformedAnnotation);
}

TEST_CASE("parts parsing clips and trims with warnings") {
  const BitMask object = fx::rect(20, 10, 0, 0, 10, 10);  // 100 px
  // 40% of this part lies inside the object
  const BitMask straddle = fx::rect(20, 10, 6, 0, 16, 10);
  const BitMask inside = fx::rect(20, 10, 0, 0, 4, 10);
  json doc = {{"objects",
               {{{"image_id", 1},
                 {"category_id", 2},
                 {"object_rle", rle_json(object)},
                 {"parts",
                  {{{"category_id", 1}, {"rle", rle_json(straddle)}},
                   {{"category_id", 3}, {"rle", rle_json(inside)}}}}}}}};
  const auto res = parse_parts(doc);
  REQUIRE(res.records.size() == 1);
  const auto& rec = res.records[0];
  CHECK(rec.object_id == 0);
  CHECK(rec.familiar);
  REQUIRE(rec.parts.size() == 2);
  CHECK(rec.parts[0].mask == (straddle & object));
  CHECK(rec.parts[0].mask.area() == 40);
  CHECK(rec.parts[1].mask == inside);
  CHECK(res.warnings.size() == 1);

  // overlapping parts: the later one loses the shared pixels
  doc["objects"][0]["parts"][1]["rle"] = rle_json(fx::rect(20, 10, 4, 0, 8, 10));
  const auto res2 = parse_parts(doc);
  CHECK(res2.records[0].parts[1].mask == fx::rect(20, 10, 4, 0, 6, 10));
  CHECK(res2.warnings.size() == 2);

  doc["objects"][0]["parts"][1]["rle"] = rle_json(fx::rect(20, 10, 12, 0, 14, 10));
  CHECK_THROWS_AS(parse_parts(doc), MalformedAnnotation);
  doc["objects"][0]["parts"][1]["rle"] = rle_json(fx::rect(20, 11, 0, 0, 2, 2));
  CHECK_THROWS_AS(parse_parts(doc), MalformedAnnotation);
  doc["objects"][0].erase("object_rle");
  CHECK_THROWS_AS(parse_parts(doc), MalformedAnnotation);
}

TEST_CASE("parts write then load") {
  SynthConfig cfg;
  cfg.image_count = 3;
  cfg.seed = 4;
  const auto data = generate_synthetic(cfg);
  const fs::path dir = scratch("parts");
  write_parts(dir / "parts.json", data.parts);
  const auto back = load_parts(dir / "parts.json");
  CHECK(back.warnings.empty());
  CHECK(back.records == data.parts);
}

TEST_CASE("synthetic data invariants") {
  SynthConfig cfg;
  cfg.image_count = 10;
  cfg.seed = 21;
  cfg.thing_classes = 5;
  cfg.unfamiliar_fraction = 0.4;
  const auto data = generate_synthetic(cfg);
  CHECK(data.panoptic.size() == 10);
  CHECK(data.categories.size() == 8);
  int unfamiliar = 0;
  for (const auto& c : data.categories) unfamiliar += c.is_thing && !c.familiar;
  CHECK(unfamiliar == 2);

  const std::size_t min_area = (128 * 128 + 99) / 100;
  for (const auto& rec : data.panoptic) {
    CHECK(rec.image.has_value());
    CHECK(rec.ground_truth.void_mask().empty());
    const auto areas = rec.ground_truth.areas();
    int things = 0;
    for (std::uint32_t l = 1; l < areas.size(); ++l) {
      CHECK(areas[l] >= min_area);
      things += rec.ground_truth.segment(l).is_thing;
      // every segment is a single 4-connected piece
      CHECK(connected_components(rec.ground_truth.segment_mask(l)).size() == 1);
    }
    CHECK(things >= cfg.min_things);
    CHECK(things <= cfg.max_things);
  }
  for (const auto& obj : data.parts) {
    BitMask seen(obj.object_mask.width(), obj.object_mask.height());
    for (const auto& p : obj.parts) {
      CHECK_FALSE(p.mask.empty());
      CHECK(p.mask.is_subset_of(obj.object_mask));
      CHECK((p.mask & seen).empty());
      seen |= p.mask;
    }
    CHECK(seen == obj.object_mask);
  }
}

TEST_CASE("synthetic generation is deterministic per seed") {
  SynthConfig cfg;
  cfg.image_count = 2;
  cfg.seed = 77;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  for (std::size_t i = 0; i < a.panoptic.size(); ++i) {
    CHECK(a.panoptic[i].ground_truth == b.panoptic[i].ground_truth);
    CHECK(*a.panoptic[i].image == *b.panoptic[i].image);
  }
  CHECK(a.parts == b.parts);
  cfg.seed = 78;
  CHECK_FALSE(generate_synthetic(cfg).panoptic[0].ground_truth == a.panoptic[0].ground_truth);
}

TEST_CASE("synthetic config validation and json") {
  SynthConfig cfg;
  cfg.width = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = SynthConfig{};
  cfg.min_things = 5;
  cfg.max_things = 2;
  CHECK_THROWS_AS(generate_synthetic(cfg), InvalidInput);

  SynthConfig c2;
  c2.seed = 3;
  c2.max_parts = 6;
  c2.shapes.part_classes = 4;
  const json j = c2;
  const SynthConfig back = j.get<SynthConfig>();
  CHECK(json(back) == j);
}

TEST_CASE("impossible layouts raise a generation error") {
  SynthConfig cfg;
  cfg.width = cfg.height = 8;
  cfg.min_things = cfg.max_things = 6;
  cfg.shapes.min_segment_fraction = 0.2;
  cfg.shapes.max_attempts = 5;
  CHECK_THROWS_AS(generate_synthetic(cfg), GenerationError);
}
