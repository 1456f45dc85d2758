// Stand-in worker for protocol tests.
//
//   fake_worker <behaviour> [panoptic.json]
//
// echo       generate returns the ROI, score 0.5, refine returns its input, class 1
// oracle     exact ground-truth answers from the given panoptic annotation
// crash      handshake, then exit on the first request
// hang       handshake, then never answer
// silent     never answer the handshake
// garbage    answer requests with a line that is not JSON
// bad_rle    masks whose runs do not sum to H*W
// noncanon   masks with an interior zero run
// wrong_id   echo the wrong id
// error      answer every request with an error response
// out_of_range  score 1.5

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <thread>

#include "ges/dataset.hpp"
#include "ges/sources.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

ges::BitMask mask_of(const json& counts, int h, int w) {
  ges::RleMask rle{w, h, counts.get<std::vector<std::uint32_t>>()};
  return ges::rle_decode(rle);
}

void reply(json r) { std::cout << r.dump() << "\n" << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return 2;
  const std::string mode = argv[1];

  ges::PanopticDataset data;
  std::map<std::string, const ges::PanopticRecord*> by_image;
  if (mode == "oracle") {
    if (argc < 3) return 2;
    data = ges::load_panoptic(argv[2], std::filesystem::path(argv[2]).parent_path() / "panoptic");
    for (const auto& r : data.records) by_image[r.image_file] = &r;
  }

  std::string line;
  if (!std::getline(std::cin, line)) return 1;
  if (mode == "silent") {
    std::this_thread::sleep_for(std::chrono::seconds(60));
    return 0;
  }
  const json hello = json::parse(line);
  if (hello.value("version", 0) != ges::kProtocolVersion) {
    reply({{"type", "error"}, {"message", "version mismatch"}});
    return 1;
  }
  reply({{"type", "ready"}});

  while (std::getline(std::cin, line)) {
    const json req = json::parse(line);
    const auto id = req.at("id");
    const std::string type = req.at("type");
    const int h = req["size"][0], w = req["size"][1];

    if (mode == "crash") return 3;
    if (mode == "hang") {
      std::this_thread::sleep_for(std::chrono::seconds(60));
      return 0;
    }
    if (mode == "garbage") {
      std::cout << "not json {\n" << std::flush;
      continue;
    }
    if (mode == "error") {
      reply({{"type", "error"}, {"id", id}, {"message", "cannot do " + type}});
      continue;
    }
    if (mode == "wrong_id") {
      reply({{"type", "score"}, {"id", id.get<long long>() + 100}, {"value", 0.5}});
      continue;
    }

    ges::BitMask out(w, h);
    json r = {{"id", id}};
    const ges::PanopticRecord* rec = nullptr;
    if (mode == "oracle") {
      auto it = by_image.find(req.value("image", std::string{}));
      if (it == by_image.end()) {
        reply({{"type", "error"}, {"id", id}, {"message", "unknown image"}});
        continue;
      }
      rec = it->second;
    }

    if (type == "generate") {
      const ges::BitMask roi = mask_of(req["roi_rle"], h, w);
      if (rec != nullptr) {
        ges::Rng unused(0);
        out = ges::oracle_generate(rec->ground_truth, roi, {req["point"][0], req["point"][1]}, {}, unused)
                  .mask;
      } else {
        out = roi;
      }
    } else if (type == "score") {
      double v = 0.5;
      if (rec != nullptr) {
        ges::Rng unused(0);
        v = ges::oracle_score(mask_of(req["mask_rle"], h, w), rec->ground_truth, true, 0.0, unused);
      }
      if (mode == "out_of_range") v = 1.5;
      r["type"] = "score";
      r["value"] = v;
      reply(r);
      continue;
    } else if (type == "refine") {
      out = mask_of(req["mask_rle"], h, w);
      if (rec != nullptr) out = ges::oracle_refine(out, rec->ground_truth, 0.75);
    } else if (type == "classify") {
      int c = 1;
      if (rec != nullptr) {
        ges::Rng unused(0);
        c = ges::oracle_classify(mask_of(req["mask_rle"], h, w), rec->ground_truth, data.categories, 0.0,
                                 unused);
      }
      r["type"] = "class";
      r["category"] = c;
      reply(r);
      continue;
    } else {
      reply({{"type", "error"}, {"id", id}, {"message", "unknown request " + type}});
      continue;
    }

    auto runs = ges::rle_encode(out).runs;
    if (mode == "bad_rle") runs.push_back(1);
    if (mode == "noncanon" && runs.size() >= 2) {
      runs.insert(runs.begin() + 1, {0, 0});
    }
    r["type"] = "mask";
    r["rle"] = runs;
    reply(r);
  }
  return 0;
}
