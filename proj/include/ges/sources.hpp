#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ges/dataset.hpp"
#include "ges/label_map.hpp"
#include "ges/mask.hpp"
#include "ges/rng.hpp"
#include "json.hpp"

namespace ges {

/// Everything a source may look at for one image. Oracles read the ground
/// truth; worker-backed sources forward the image path.
struct Scene {
  std::int64_t image_id = 0;
  int width = 0;
  int height = 0;
  std::string image_path;
  const LabelMap* ground_truth = nullptr;
  std::span<const Category> categories;
  std::uint64_t stream = 0;  // mixed into every RNG stream; tells objects of one image apart
};

Scene make_scene(const PanopticRecord& record, std::span<const Category> categories);

struct Candidate {
  BitMask mask;
  Point point;
  std::optional<double> score;
  std::optional<int> category;
  std::string source;
  std::size_t index = 0;  // generation order within its batch
  bool refined = false;
};

struct NoiseConfig {
  int min_radius = 0;  // morphology radius range; negative erodes, positive dilates
  int max_radius = 0;
  double jitter_sigma = 0.0;     // translation, pixels
  double drop_probability = 0.0;  // chance a random half-plane cut removes part of the mask
  double blob_probability = 0.0;
  int min_blob_radius = 2;
  int max_blob_radius = 6;
  double score_sigma = 0.0;  // evaluator noise
  double confusion_probability = 0.0;  // classifier
  double refine_threshold = 0.75;  // refiner snaps to GT at or above this IOU

  bool zero_generator_noise() const {
    return min_radius == 0 && max_radius == 0 && jitter_sigma == 0.0 && drop_probability == 0.0 &&
           blob_probability == 0.0;
  }
  /// Throws InvalidInput.
  void validate() const;
};

void to_json(nlohmann::json& j, const NoiseConfig& n);
void from_json(const nlohmann::json& j, NoiseConfig& n);

// --- roles -----------------------------------------------------------------

class Generator {
 public:
  virtual ~Generator() = default;
  /// Mask of the segment containing `point`, confined to `roi`.
  virtual Candidate generate(const Scene& scene, const BitMask& roi, Point point, Rng& rng) = 0;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  /// Predicted IOU of `mask` with its closest real segment, in [0,1].
  /// `object` is the enclosing object mask in the parts loop, else null.
  virtual double score(const Scene& scene, const BitMask& mask, const BitMask* object, Rng& rng) = 0;
};

class Refiner {
 public:
  virtual ~Refiner() = default;
  virtual BitMask refine(const Scene& scene, const BitMask& mask) = 0;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int classify(const Scene& scene, const BitMask& mask, Rng& rng) = 0;
};

// --- ground-truth oracles --------------------------------------------------

struct BestMatch {
  std::uint32_t label = 0;  // 0 when nothing overlaps
  double iou = 0.0;
};

/// Ground-truth segment with the highest IOU against `mask`; ties go to the
/// lower label.
BestMatch best_match(const BitMask& mask, const LabelMap& gt);

Candidate oracle_generate(const LabelMap& gt, const BitMask& roi, Point point,
                          const NoiseConfig& noise, Rng& rng);
double oracle_score(const BitMask& mask, const LabelMap& gt, bool exact, double sigma, Rng& rng);
/// Snaps to the best-matching GT segment when its IOU reaches `threshold`.
BitMask oracle_refine(const BitMask& mask, const LabelMap& gt, double threshold);
/// With probability 1-p the category of the best-matching GT segment, else a
/// uniformly drawn different category from `categories`.
int oracle_classify(const BitMask& mask, const LabelMap& gt, std::span<const Category> categories,
                    double confusion, Rng& rng);

class OracleGenerator final : public Generator {
 public:
  explicit OracleGenerator(NoiseConfig noise) : noise_(noise) { noise_.validate(); }
  Candidate generate(const Scene& scene, const BitMask& roi, Point point, Rng& rng) override;

 private:
  NoiseConfig noise_;
};

class OracleEvaluator final : public Evaluator {
 public:
  OracleEvaluator(bool exact, double sigma) : exact_(exact), sigma_(sigma) {}
  double score(const Scene& scene, const BitMask& mask, const BitMask* object, Rng& rng) override;

 private:
  bool exact_;
  double sigma_;
};

/// Approves everything with the same score.
class ConstantEvaluator final : public Evaluator {
 public:
  explicit ConstantEvaluator(double value) : value_(value) {}
  double score(const Scene&, const BitMask&, const BitMask*, Rng&) override { return value_; }

 private:
  double value_;
};

class OracleRefiner final : public Refiner {
 public:
  explicit OracleRefiner(double threshold) : threshold_(threshold) {}
  BitMask refine(const Scene& scene, const BitMask& mask) override;

 private:
  double threshold_;
};

class OracleClassifier final : public Classifier {
 public:
  explicit OracleClassifier(double confusion) : confusion_(confusion) {}
  int classify(const Scene& scene, const BitMask& mask, Rng& rng) override;

 private:
  double confusion_;
};

// --- external workers ------------------------------------------------------

enum class Role { generator, evaluator, refiner, classifier };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

inline constexpr int kProtocolVersion = 1;

struct WorkerEndpoint {
  Role role = Role::generator;
  std::vector<std::string> command;  // argv; command[0] is looked up on PATH
  int protocol_version = kProtocolVersion;
  std::chrono::milliseconds timeout{10000};
};

/// A running worker speaking line-delimited JSON over stdin/stdout. The
/// handshake runs in the constructor. Calls are serialized, so one request
/// is in flight at a time even when several threads share the endpoint.
class WorkerProcess {
 public:
  explicit WorkerProcess(WorkerEndpoint endpoint);
  ~WorkerProcess();
  WorkerProcess(const WorkerProcess&) = delete;
  WorkerProcess& operator=(const WorkerProcess&) = delete;

  const WorkerEndpoint& endpoint() const noexcept { return endpoint_; }

  /// Sends `request` with a fresh "id" and returns the response whose "id"
  /// matches. Throws EndpointFailure or ProtocolError.
  nlohmann::json call(nlohmann::json request);

 private:
  void send_line(const std::string& line);
  std::string read_line();
  void shutdown() noexcept;

  WorkerEndpoint endpoint_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::int64_t next_id_ = 1;
  bool broken_ = false;
  std::mutex mutex_;
};

/// Validates an RLE received from a worker against the expected size and
/// canonical form. Throws ProtocolError.
BitMask decode_worker_mask(const nlohmann::json& rle, int height, int width);

class WorkerGenerator final : public Generator {
 public:
  explicit WorkerGenerator(std::shared_ptr<WorkerProcess> worker) : worker_(std::move(worker)) {}
  Candidate generate(const Scene& scene, const BitMask& roi, Point point, Rng& rng) override;

 private:
  std::shared_ptr<WorkerProcess> worker_;
};

class WorkerEvaluator final : public Evaluator {
 public:
  explicit WorkerEvaluator(std::shared_ptr<WorkerProcess> worker) : worker_(std::move(worker)) {}
  double score(const Scene& scene, const BitMask& mask, const BitMask* object, Rng& rng) override;

 private:
  std::shared_ptr<WorkerProcess> worker_;
};

class WorkerRefiner final : public Refiner {
 public:
  explicit WorkerRefiner(std::shared_ptr<WorkerProcess> worker) : worker_(std::move(worker)) {}
  BitMask refine(const Scene& scene, const BitMask& mask) override;

 private:
  std::shared_ptr<WorkerProcess> worker_;
};

class WorkerClassifier final : public Classifier {
 public:
  explicit WorkerClassifier(std::shared_ptr<WorkerProcess> worker) : worker_(std::move(worker)) {}
  int classify(const Scene& scene, const BitMask& mask, Rng& rng) override;

 private:
  std::shared_ptr<WorkerProcess> worker_;
};

}  // namespace ges
