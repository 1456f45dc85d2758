// gesseg: command-line driver for the segmentation loop, ablations and metrics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ges/dataset.hpp"
#include "ges/errors.hpp"
#include "ges/harness.hpp"
#include "ges/metrics.hpp"
#include "ges/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ges::IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ges::InvalidInput(path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw ges::IoError("cannot write " + path.string());
}

ges::RunConfig load_run_config(const Common& c) {
  ges::RunConfig cfg = c.config.empty() ? ges::RunConfig{} : ges::run_config_from_json(read_json(c.config));
  if (c.seed) cfg.base_seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.threads = c.workers;
  if (!cfg.synth && cfg.annotation.empty()) cfg.synth = ges::SynthConfig{};
  return cfg;
}

ges::PanopticDataset dataset_of(const ges::RunConfig& cfg, std::uint64_t synth_seed) {
  if (!cfg.synth) return ges::load_panoptic(cfg.annotation, cfg.map_dir);
  ges::SynthConfig sc = *cfg.synth;
  sc.seed = synth_seed;
  auto sd = ges::generate_synthetic(sc);
  return {std::move(sd.categories), std::move(sd.panoptic)};
}

int cmd_segment(const Common& c, const std::string& mode_name, bool overlays) {
  ges::RunConfig cfg = load_run_config(c);
  cfg.validate();
  const auto mode = ges::ablation_mode_from_string(mode_name);
  // Same seeds as trial 0 of `ablate`.
  ges::PanopticDataset ds = dataset_of(cfg, ges::derive_seed(cfg.base_seed, {0, 0x5e}));
  ges::SourceSet sources(mode, cfg.noise, cfg.endpoints);
  ges::PipelineConfig pc = sources.adjust(cfg.pipeline);
  pc.seed = ges::derive_seed(cfg.base_seed, {0, 0x9e});
  ges::SegmentRun run = ges::run_segment(ds, sources.view(), pc, cfg.threads);
  const ges::PqReport report = ges::compute_pq(run.stats);

  if (!cfg.output_dir.empty()) {
    const fs::path out = cfg.output_dir;
    fs::create_directories(overlays ? out / "overlays" : out);
    ges::PanopticDataset pred;
    pred.categories = ds.categories;
    std::string traces;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      ges::PanopticRecord r;
      r.image_id = ds.records[i].image_id;
      r.width = ds.records[i].width;
      r.height = ds.records[i].height;
      r.ground_truth = run.predictions[i];
      pred.records.push_back(std::move(r));
      traces += run.traces[i].to_jsonl();
      if (overlays) {
        std::optional<ges::RgbImage> base = ds.records[i].image;
        if (!base && !ds.records[i].image_file.empty() && fs::exists(ds.records[i].image_file)) {
          base = ges::read_png(ds.records[i].image_file);
        }
        ges::emit_overlay(out / "overlays" / (std::to_string(r.image_id) + ".png"),
                          base ? &*base : nullptr, run.predictions[i], pc.seed);
      }
    }
    ges::write_panoptic(out / "prediction.json", out / "prediction", pred);
    write_file(out / "traces.jsonl", traces);
    write_file(out / "pq.json", ges::to_json(report).dump(2) + "\n");
  }
  std::cout << ges::pq_table_header("Mode") << ges::pq_table_row(mode_name, report);
  return 0;
}

int cmd_ablate(const Common& c, std::optional<int> trials) {
  ges::RunConfig cfg = load_run_config(c);
  if (trials) cfg.trials = *trials;
  const ges::AblationReport report = ges::run_ablations(cfg);
  std::cout << report.table();
  for (const auto& row : report.rows) {
    if (row.failed) return 3;
  }
  return 0;
}

int cmd_eval_pq(const Common& c, const std::string& gt, const std::string& gt_maps,
                const std::string& pred, const std::string& pred_maps) {
  auto maps_of = [](const std::string& ann, const std::string& maps) {
    return maps.empty() ? fs::path(ann).parent_path() : fs::path(maps);
  };
  const ges::PanopticDataset g = ges::load_panoptic(gt, maps_of(gt, gt_maps));
  const ges::PanopticDataset p = ges::load_panoptic(pred, maps_of(pred, pred_maps));
  std::map<std::int64_t, const ges::LabelMap*> by_id;
  for (const auto& r : p.records) by_id[r.image_id] = &r.ground_truth;

  ges::PqStats stats;
  for (const auto& r : g.records) {
    auto it = by_id.find(r.image_id);
    if (it == by_id.end()) {
      // Missing prediction: everything in this image is a false negative.
      stats.add(ges::match_segments(r.ground_truth, ges::LabelMap(r.width, r.height)));
    } else {
      stats.add(ges::match_segments(r.ground_truth, *it->second));
    }
  }
  const ges::PqReport report = ges::compute_pq(stats);
  if (!c.out.empty()) write_file(c.out, ges::to_json(report).dump(2) + "\n");
  std::cout << ges::pq_table_header() << ges::pq_table_row("prediction", report);
  return 0;
}

int cmd_eval_parts(const Common& c, const std::string& gt, const std::string& pred) {
  const auto g = ges::load_parts(gt);
  const auto p = ges::load_parts(pred);
  for (const auto& w : g.warnings) std::cerr << json{{"warning", w}}.dump() << "\n";
  std::vector<ges::PartsPrediction> predictions;
  for (const auto& r : p.records) {
    ges::PartsPrediction pp{r.image_id, r.object_id, {}};
    for (const auto& part : r.parts) pp.parts.push_back(part.mask);
    predictions.push_back(std::move(pp));
  }
  const ges::PartsReport report = ges::evaluate_parts(g.records, predictions);
  if (!c.out.empty()) write_file(c.out, ges::to_json(report).dump(2) + "\n");
  std::cout << ges::parts_table(report);
  return 0;
}

/// Parts loop on synthetic objects (or a parts file), with and without the evaluator.
int cmd_segment_parts(const Common& c, const std::string& parts_file) {
  ges::RunConfig cfg = load_run_config(c);
  std::vector<ges::PartsRecord> records;
  if (!parts_file.empty()) {
    records = ges::load_parts(parts_file).records;
  } else {
    ges::SynthConfig sc = cfg.synth.value_or(ges::SynthConfig{});
    sc.seed = ges::derive_seed(cfg.base_seed, {0, 0x5e});
    records = ges::generate_synthetic(sc).parts;
  }
  ges::PipelineConfig pc = ges::PipelineConfig::parts_defaults();
  if (!c.config.empty()) {
    const json j = read_json(c.config);
    if (j.contains("parts_pipeline")) pc = j["parts_pipeline"].get<ges::PipelineConfig>();
  }
  pc.seed = ges::derive_seed(cfg.base_seed, {0, 0x9e});

  ges::OracleGenerator generator(cfg.noise);
  ges::OracleEvaluator evaluator(cfg.noise.score_sigma == 0.0, cfg.noise.score_sigma);
  ges::ConstantEvaluator constant(1.0);
  const auto with = ges::run_parts(records, {&generator, &evaluator, nullptr, nullptr}, pc, cfg.threads);
  const auto without = ges::run_parts(records, {&generator, &constant, nullptr, nullptr}, pc, cfg.threads);

  if (!cfg.output_dir.empty()) {
    const json doc = {{"with_evaluator", ges::to_json(with.report)},
                      {"without_evaluator", ges::to_json(without.report)}};
    write_file(cfg.output_dir / "parts_report.json", doc.dump(2) + "\n");
    std::string traces;
    for (const auto& t : with.traces) traces += t.to_jsonl();
    write_file(cfg.output_dir / "parts_traces.jsonl", traces);
  }
  std::cout << "with evaluator\n" << ges::parts_table(with.report);
  std::cout << "without evaluator\n" << ges::parts_table(without.report);
  return 0;
}

int cmd_synth(const Common& c, std::optional<int> count, std::optional<int> size) {
  ges::SynthConfig sc;
  if (!c.config.empty()) {
    const json j = read_json(c.config);
    if (j.contains("dataset") && j["dataset"].contains("synthetic")) {
      sc = j["dataset"]["synthetic"].get<ges::SynthConfig>();
    } else {
      sc = j.get<ges::SynthConfig>();
    }
  }
  if (c.seed) sc.seed = *c.seed;
  if (count) sc.image_count = *count;
  if (size) sc.width = sc.height = *size;
  if (c.out.empty()) throw ges::InvalidInput("synth needs --out");
  const auto data = ges::generate_synthetic(sc);
  ges::write_synthetic(c.out, data);
  std::cout << json{{"images", data.panoptic.size()}, {"objects", data.parts.size()}, {"out", c.out}}.dump()
            << "\n";
  return 0;
}

int cmd_modularity(const Common& c, int alphabet, int length, int trials) {
  const auto r = ges::modularity_demo(alphabet, length, trials, c.seed.value_or(0));
  const std::string text = r.to_json().dump(2) + "\n";
  if (!c.out.empty()) write_file(c.out, text);
  std::cout << text;
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "JSON config file");
  sub->add_option("--seed", c.seed, "base seed");
  sub->add_option("-o,--out", c.out, "output path");
  sub->add_option("-w,--workers", c.workers, "threads")->check(CLI::PositiveNumber);
}

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generator-evaluator-selector segmentation tools"};
  app.require_subcommand(1);
  Common common;

  auto* segment = app.add_subcommand("segment", "run the panoptic loop over one dataset in one mode");
  add_common(segment, common);
  std::string mode = "full";
  bool overlays = false;
  segment->add_option("-m,--mode", mode, "full, no_evaluator, perfect_evaluator, no_refinement, perfect_classification");
  segment->add_flag("--overlays", overlays, "write overlay images");

  auto* ablate = app.add_subcommand("ablate", "run every mode over several seeded trials");
  add_common(ablate, common);
  std::optional<int> trials;
  ablate->add_option("-t,--trials", trials, "trial count")->check(CLI::PositiveNumber);

  auto* eval_pq = app.add_subcommand("eval-pq", "PQ of a predicted panoptic set against ground truth");
  add_common(eval_pq, common);
  std::string gt, gt_maps, pred, pred_maps;
  eval_pq->add_option("--gt", gt, "ground-truth annotation JSON")->required();
  eval_pq->add_option("--gt-maps", gt_maps, "ground-truth map directory");
  eval_pq->add_option("--pred", pred, "predicted annotation JSON")->required();
  eval_pq->add_option("--pred-maps", pred_maps, "predicted map directory");

  auto* eval_parts = app.add_subcommand("eval-parts", "parts IOU/precision/recall against ground truth");
  add_common(eval_parts, common);
  std::string parts_gt, parts_pred;
  eval_parts->add_option("--gt", parts_gt, "ground-truth parts JSON")->required();
  eval_parts->add_option("--pred", parts_pred, "predicted parts JSON")->required();

  auto* seg_parts = app.add_subcommand("segment-parts", "parts loop with and without the evaluator");
  add_common(seg_parts, common);
  std::string parts_file;
  seg_parts->add_option("--parts", parts_file, "parts JSON (default: synthetic objects)");

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  add_common(synth, common);
  std::optional<int> count, size;
  synth->add_option("-n,--count", count, "image count")->check(CLI::PositiveNumber);
  synth->add_option("--size", size, "image width and height")->check(CLI::PositiveNumber);

  auto* demo = app.add_subcommand("demo-modularity", "per-letter guessing versus the monolithic count");
  add_common(demo, common);
  int alphabet = 9, length = 1000, demo_trials = 200;
  demo->add_option("-a,--alphabet", alphabet, "alphabet size");
  demo->add_option("-k,--length", length, "string length");
  demo->add_option("-t,--trials", demo_trials, "trials");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*segment) return cmd_segment(common, mode, overlays);
    if (*ablate) return cmd_ablate(common, trials);
    if (*eval_pq) return cmd_eval_pq(common, gt, gt_maps, pred, pred_maps);
    if (*eval_parts) return cmd_eval_parts(common, parts_gt, parts_pred);
    if (*seg_parts) return cmd_segment_parts(common, parts_file);
    if (*synth) return cmd_synth(common, count, size);
    if (*demo) return cmd_modularity(common, alphabet, length, demo_trials);
  } catch (const ges::Error& e) {
    return report_error(e.kind(), e.what(), 1);
  } catch (const fs::filesystem_error& e) {
    return report_error("io_error", e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
  return 0;
}
