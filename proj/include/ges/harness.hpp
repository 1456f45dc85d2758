#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ges/dataset.hpp"
#include "ges/metrics.hpp"
#include "ges/pipeline.hpp"
#include "ges/sources.hpp"
#include "json.hpp"

namespace ges {

enum class AblationMode { full, no_evaluator, perfect_evaluator, no_refinement, perfect_classification };

std::string_view to_string(AblationMode mode);
AblationMode ablation_mode_from_string(std::string_view name);
std::vector<AblationMode> all_ablation_modes();

struct RunConfig {
  std::optional<SynthConfig> synth;      // synthetic dataset, regenerated per trial...
  std::filesystem::path annotation;      // ...or a panoptic dataset on disk
  std::filesystem::path map_dir;
  PipelineConfig pipeline;
  NoiseConfig noise;
  std::vector<AblationMode> modes = all_ablation_modes();
  std::vector<WorkerEndpoint> endpoints;  // replaces the in-process oracle for that role
  std::filesystem::path output_dir;       // empty: nothing is written
  int trials = 1;
  std::uint64_t base_seed = 0;
  int threads = 1;

  /// Throws InvalidInput.
  void validate() const;
};

/// Missing keys keep their defaults. "dataset" is either {"synthetic":{...}}
/// or {"annotation":path,"maps":path}.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

/// The role implementations for one mode. Owns whatever it creates.
class SourceSet {
 public:
  SourceSet(AblationMode mode, const NoiseConfig& noise, const std::vector<WorkerEndpoint>& endpoints);
  SourceSet(const SourceSet&) = delete;
  SourceSet& operator=(const SourceSet&) = delete;

  Sources view() const;
  /// Pipeline settings adjusted for the mode (no_refinement turns refine off).
  PipelineConfig adjust(PipelineConfig cfg) const;

 private:
  AblationMode mode_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<Evaluator> evaluator_;
  std::unique_ptr<Refiner> refiner_;
  std::unique_ptr<Classifier> classifier_;
};

struct SegmentRun {
  std::vector<LabelMap> predictions;  // aligned with the dataset records
  std::vector<PipelineTrace> traces;
  PqStats stats;
};

/// Runs the panoptic loop over every record. Per-image RNG streams are
/// derived from `cfg.seed` and the image id, so `threads` does not change
/// the result.
SegmentRun run_segment(const PanopticDataset& dataset, const Sources& sources,
                       const PipelineConfig& cfg, int threads = 1);

struct PartsRun {
  std::vector<PartsPrediction> predictions;  // aligned with the records
  std::vector<PipelineTrace> traces;
  PartsReport report;
};

/// Runs the parts loop on every object, with the object's GT parts as the
/// oracle ground truth, and evaluates the result.
PartsRun run_parts(std::span<const PartsRecord> records, const Sources& sources,
                   const PipelineConfig& cfg, int threads = 1);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  int n = 0;
  double stderr_of_mean() const;
};

inline constexpr std::array<const char*, 9> kAblationColumns = {
    "PQ", "RQ", "SQ", "PQ^St", "RQ^St", "SQ^St", "PQ^Th", "RQ^Th", "SQ^Th"};

struct ModeRow {
  AblationMode mode = AblationMode::full;
  bool failed = false;
  std::string error;
  std::vector<PqReport> trials;
  std::array<MeanStd, 9> columns{};
};

struct AblationReport {
  int trials = 0;
  std::uint64_t base_seed = 0;
  std::vector<ModeRow> rows;

  const ModeRow* find(AblationMode mode) const;
  nlohmann::json to_json() const;
  std::string table() const;
};

/// Every mode x trial. Trial t uses the same dataset and seeds in every
/// mode, so modes differ only in the component they change. With
/// `output_dir` set, writes report.json, report.txt and one trace file per
/// mode and trial.
AblationReport run_ablations(const RunConfig& cfg);

struct ModularityReport {
  int alphabet = 0;
  int length = 0;
  int trials = 0;
  double mean_guesses = 0.0;
  double stddev_guesses = 0.0;
  double expected_guesses = 0.0;  // alphabet * length
  double log10_monolithic = 0.0;  // length * log10(alphabet), never simulated

  nlohmann::json to_json() const;
};

/// Per-letter guess-and-check: each position is guessed uniformly until it
/// matches, so a position costs `alphabet` guesses on average.
ModularityReport modularity_demo(int alphabet, int length, int trials, std::uint64_t seed);

/// Seeded per-segment colours blended over `base` (when given); void is black.
RgbImage render_overlay(const RgbImage* base, const LabelMap& result, std::uint64_t seed,
                        double alpha = 0.5);
/// Throws IoError when the file cannot be written.
void emit_overlay(const std::filesystem::path& path, const RgbImage* base, const LabelMap& result,
                  std::uint64_t seed);

}  // namespace ges
