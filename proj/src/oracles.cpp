#include <algorithm>
#include <cmath>

#include "ges/errors.hpp"
#include "ges/sources.hpp"

namespace ges {

using nlohmann::json;

Scene make_scene(const PanopticRecord& record, std::span<const Category> categories) {
  Scene scene;
  scene.image_id = record.image_id;
  scene.width = record.width;
  scene.height = record.height;
  scene.image_path = record.image_file;
  scene.ground_truth = &record.ground_truth;
  scene.categories = categories;
  return scene;
}

void NoiseConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput(std::string(name) + " must lie in [0,1]");
  };
  prob(drop_probability, "drop_probability");
  prob(blob_probability, "blob_probability");
  prob(confusion_probability, "confusion_probability");
  if (!(jitter_sigma >= 0.0)) throw InvalidInput("jitter_sigma must be >= 0");
  if (!(score_sigma >= 0.0)) throw InvalidInput("score_sigma must be >= 0");
  if (max_radius < min_radius) throw InvalidInput("radius range is empty");
  if (min_blob_radius < 0 || max_blob_radius < min_blob_radius) {
    throw InvalidInput("blob radius range is invalid");
  }
}

void to_json(json& j, const NoiseConfig& n) {
  j = {{"radius", {n.min_radius, n.max_radius}},
       {"jitter_sigma", n.jitter_sigma},
       {"drop_probability", n.drop_probability},
       {"blob_probability", n.blob_probability},
       {"blob_radius", {n.min_blob_radius, n.max_blob_radius}},
       {"score_sigma", n.score_sigma},
       {"confusion_probability", n.confusion_probability},
       {"refine_threshold", n.refine_threshold}};
}

void from_json(const json& j, NoiseConfig& n) {
  if (j.contains("radius")) {
    n.min_radius = j["radius"].at(0).get<int>();
    n.max_radius = j["radius"].at(1).get<int>();
  }
  n.jitter_sigma = j.value("jitter_sigma", n.jitter_sigma);
  n.drop_probability = j.value("drop_probability", n.drop_probability);
  n.blob_probability = j.value("blob_probability", n.blob_probability);
  if (j.contains("blob_radius")) {
    n.min_blob_radius = j["blob_radius"].at(0).get<int>();
    n.max_blob_radius = j["blob_radius"].at(1).get<int>();
  }
  n.score_sigma = j.value("score_sigma", n.score_sigma);
  n.confusion_probability = j.value("confusion_probability", n.confusion_probability);
  n.refine_threshold = j.value("refine_threshold", n.refine_threshold);
}

BestMatch best_match(const BitMask& mask, const LabelMap& gt) {
  if (mask.width() != gt.width() || mask.height() != gt.height()) {
    throw InvalidInput("candidate mask does not match ground-truth dimensions");
  }
  std::vector<std::size_t> inter(gt.segment_count() + 1, 0);
  mask.for_each_set([&](std::size_t i) { ++inter[gt.at(i)]; });
  const auto areas = gt.areas();
  const std::size_t mask_area = mask.area();
  BestMatch best;
  for (std::uint32_t l = 1; l < inter.size(); ++l) {
    if (inter[l] == 0) continue;
    const double v = static_cast<double>(inter[l]) /
                     static_cast<double>(mask_area + areas[l] - inter[l]);
    if (v > best.iou) best = {l, v};
  }
  return best;
}

namespace {

BitMask disk(int width, int height, Point c, int radius) {
  BitMask m(width, height);
  const int r2 = radius * radius;
  for (int y = std::max(0, c.y - radius); y <= std::min(height - 1, c.y + radius); ++y) {
    for (int x = std::max(0, c.x - radius); x <= std::min(width - 1, c.x + radius); ++x) {
      const int dx = x - c.x;
      const int dy = y - c.y;
      if (dx * dx + dy * dy <= r2) m.set(x, y);
    }
  }
  return m;
}

}  // namespace

Candidate oracle_generate(const LabelMap& gt, const BitMask& roi, Point point,
                          const NoiseConfig& noise, Rng& rng) {
  if (roi.width() != gt.width() || roi.height() != gt.height()) {
    throw InvalidInput("ROI does not match ground-truth dimensions");
  }
  if (!roi.contains(point)) throw InvalidInput("pointer point lies outside the ROI");

  Candidate c;
  c.point = point;
  c.source = "oracle";
  const std::uint32_t label = gt.at(point.x, point.y);
  c.mask = label == 0 ? BitMask(gt.width(), gt.height()) : gt.segment_mask(label) & roi;
  if (noise.zero_generator_noise()) return c;

  // Draw every random quantity up front so the stream layout does not depend
  // on intermediate mask contents.
  const int radius = rng.uniform_int(noise.min_radius, noise.max_radius);
  const int dx = noise.jitter_sigma > 0.0
                     ? static_cast<int>(std::lround(rng.normal(0.0, noise.jitter_sigma)))
                     : 0;
  const int dy = noise.jitter_sigma > 0.0
                     ? static_cast<int>(std::lround(rng.normal(0.0, noise.jitter_sigma)))
                     : 0;
  const bool cut = rng.bernoulli(noise.drop_probability);
  const double cut_angle = rng.uniform(0.0, 2.0 * 3.141592653589793);
  const double cut_pick = rng.uniform();
  const bool blob = rng.bernoulli(noise.blob_probability);
  const double blob_pick = rng.uniform();
  const int blob_radius = rng.uniform_int(noise.min_blob_radius, noise.max_blob_radius);

  BitMask m = std::move(c.mask);
  if (radius > 0) m = dilate(m, radius);
  if (radius < 0) m = erode(m, -radius);
  m = translate(m, dx, dy);

  if (cut && !m.empty()) {
    // Half-plane through a random mask pixel; the side holding the pointer
    // point survives.
    const auto pixels = m.set_indices();
    const auto pivot = m.point_of(pixels[static_cast<std::size_t>(cut_pick * static_cast<double>(pixels.size()))]);
    const double nx = std::cos(cut_angle);
    const double ny = std::sin(cut_angle);
    const double side = (point.x - pivot.x) * nx + (point.y - pivot.y) * ny;
    const double sign = side >= 0.0 ? 1.0 : -1.0;
    BitMask kept(m.width(), m.height());
    for (std::size_t i : pixels) {
      const Point q = m.point_of(i);
      if (sign * ((q.x - pivot.x) * nx + (q.y - pivot.y) * ny) >= 0.0) kept.set(i);
    }
    m = std::move(kept);
  }

  if (blob) {
    const auto roi_pixels = roi.set_indices();
    const Point center = roi.point_of(
        roi_pixels[static_cast<std::size_t>(blob_pick * static_cast<double>(roi_pixels.size()))]);
    m |= disk(m.width(), m.height(), center, blob_radius);
  }

  m &= roi;
  c.mask = std::move(m);
  return c;
}

double oracle_score(const BitMask& mask, const LabelMap& gt, bool exact, double sigma, Rng& rng) {
  const double truth = best_match(mask, gt).iou;
  if (exact || sigma <= 0.0) return truth;
  return std::clamp(truth + rng.normal(0.0, sigma), 0.0, 1.0);
}

BitMask oracle_refine(const BitMask& mask, const LabelMap& gt, double threshold) {
  const BestMatch best = best_match(mask, gt);
  if (best.label != 0 && best.iou >= threshold) return gt.segment_mask(best.label);
  return mask;
}

int oracle_classify(const BitMask& mask, const LabelMap& gt, std::span<const Category> categories,
                    double confusion, Rng& rng) {
  if (mask.empty()) throw InvalidInput("cannot classify an empty mask");
  const BestMatch best = best_match(mask, gt);
  const bool confuse = rng.bernoulli(confusion);
  const double pick = rng.uniform();
  int truth = 0;
  if (best.label != 0) {
    truth = gt.segment(best.label).category_id;
  } else if (!categories.empty()) {
    // Lies entirely in void: no true class to report.
    truth = categories[static_cast<std::size_t>(pick * static_cast<double>(categories.size()))].id;
  } else {
    throw InvalidInput("mask overlaps no ground-truth segment and no categories are known");
  }
  if (!confuse) return truth;
  std::vector<int> others;
  for (const auto& c : categories) {
    if (c.id != truth) others.push_back(c.id);
  }
  if (others.empty()) return truth;
  return others[static_cast<std::size_t>(pick * static_cast<double>(others.size()))];
}

namespace {

const LabelMap& require_gt(const Scene& scene) {
  if (scene.ground_truth == nullptr) {
    throw InvalidInput("oracle source needs ground truth for image " + std::to_string(scene.image_id));
  }
  return *scene.ground_truth;
}

}  // namespace

Candidate OracleGenerator::generate(const Scene& scene, const BitMask& roi, Point point, Rng& rng) {
  return oracle_generate(require_gt(scene), roi, point, noise_, rng);
}

double OracleEvaluator::score(const Scene& scene, const BitMask& mask, const BitMask*, Rng& rng) {
  return oracle_score(mask, require_gt(scene), exact_, sigma_, rng);
}

BitMask OracleRefiner::refine(const Scene& scene, const BitMask& mask) {
  return oracle_refine(mask, require_gt(scene), threshold_);
}

int OracleClassifier::classify(const Scene& scene, const BitMask& mask, Rng& rng) {
  return oracle_classify(mask, require_gt(scene), scene.categories, confusion_, rng);
}

}  // namespace ges
