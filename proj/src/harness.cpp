#include "ges/harness.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <thread>

#include "ges/errors.hpp"
#include "ges/rng.hpp"

namespace ges {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full:
      return "full";
    case AblationMode::no_evaluator:
      return "no_evaluator";
    case AblationMode::perfect_evaluator:
      return "perfect_evaluator";
    case AblationMode::no_refinement:
      return "no_refinement";
    case AblationMode::perfect_classification:
      return "perfect_classification";
  }
  return "unknown";
}

std::vector<AblationMode> all_ablation_modes() {
  return {AblationMode::full, AblationMode::no_evaluator, AblationMode::perfect_evaluator,
          AblationMode::no_refinement, AblationMode::perfect_classification};
}

AblationMode ablation_mode_from_string(std::string_view name) {
  for (AblationMode m : all_ablation_modes()) {
    if (to_string(m) == name) return m;
  }
  throw InvalidInput("unknown ablation mode '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (trials < 1) throw InvalidInput("trials must be >= 1");
  if (threads < 1) throw InvalidInput("threads must be >= 1");
  if (modes.empty()) throw InvalidInput("at least one mode is required");
  if (!synth && annotation.empty()) throw InvalidInput("no dataset configured");
  if (synth) synth->validate();
  pipeline.validate();
  noise.validate();
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  try {
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      if (d.contains("synthetic")) {
        cfg.synth = d["synthetic"].get<SynthConfig>();
      } else {
        cfg.annotation = d.at("annotation").get<std::string>();
        cfg.map_dir = d.value("maps", cfg.annotation.parent_path().string());
      }
    }
    if (j.contains("pipeline")) cfg.pipeline = j["pipeline"].get<PipelineConfig>();
    if (j.contains("noise")) cfg.noise = j["noise"].get<NoiseConfig>();
    if (j.contains("modes")) {
      cfg.modes.clear();
      for (const auto& m : j["modes"]) cfg.modes.push_back(ablation_mode_from_string(m.get<std::string>()));
    }
    if (j.contains("endpoints")) {
      for (const auto& [role, e] : j["endpoints"].items()) {
        WorkerEndpoint ep;
        ep.role = role_from_string(role);
        ep.command = e.at("command").get<std::vector<std::string>>();
        ep.protocol_version = e.value("version", kProtocolVersion);
        ep.timeout = std::chrono::milliseconds(e.value("timeout_ms", 10000));
        cfg.endpoints.push_back(std::move(ep));
      }
    }
    cfg.output_dir = j.value("output_dir", std::string{});
    cfg.trials = j.value("trials", cfg.trials);
    cfg.base_seed = j.value("seed", cfg.base_seed);
    cfg.threads = j.value("threads", cfg.threads);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad run config: ") + e.what());
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  if (cfg.synth) {
    j["dataset"] = {{"synthetic", *cfg.synth}};
  } else {
    j["dataset"] = {{"annotation", cfg.annotation.string()}, {"maps", cfg.map_dir.string()}};
  }
  j["pipeline"] = cfg.pipeline;
  j["noise"] = cfg.noise;
  j["modes"] = json::array();
  for (auto m : cfg.modes) j["modes"].push_back(std::string(to_string(m)));
  j["endpoints"] = json::object();
  for (const auto& e : cfg.endpoints) {
    j["endpoints"][std::string(to_string(e.role))] = {
        {"command", e.command}, {"version", e.protocol_version}, {"timeout_ms", e.timeout.count()}};
  }
  j["trials"] = cfg.trials;
  j["seed"] = cfg.base_seed;
  return j;
}

SourceSet::SourceSet(AblationMode mode, const NoiseConfig& noise,
                     const std::vector<WorkerEndpoint>& endpoints)
    : mode_(mode) {
  noise.validate();
  auto endpoint_for = [&](Role r) -> const WorkerEndpoint* {
    for (const auto& e : endpoints) {
      if (e.role == r) return &e;
    }
    return nullptr;
  };

  if (const auto* e = endpoint_for(Role::generator)) {
    generator_ = std::make_unique<WorkerGenerator>(std::make_shared<WorkerProcess>(*e));
  } else {
    generator_ = std::make_unique<OracleGenerator>(noise);
  }

  if (mode == AblationMode::no_evaluator) {
    evaluator_ = std::make_unique<ConstantEvaluator>(1.0);
  } else if (mode == AblationMode::perfect_evaluator) {
    evaluator_ = std::make_unique<OracleEvaluator>(true, 0.0);
  } else if (const auto* e = endpoint_for(Role::evaluator)) {
    evaluator_ = std::make_unique<WorkerEvaluator>(std::make_shared<WorkerProcess>(*e));
  } else {
    evaluator_ = std::make_unique<OracleEvaluator>(noise.score_sigma == 0.0, noise.score_sigma);
  }

  if (mode != AblationMode::no_refinement) {
    if (const auto* e = endpoint_for(Role::refiner)) {
      refiner_ = std::make_unique<WorkerRefiner>(std::make_shared<WorkerProcess>(*e));
    } else {
      refiner_ = std::make_unique<OracleRefiner>(noise.refine_threshold);
    }
  }

  if (mode == AblationMode::perfect_classification) {
    classifier_ = std::make_unique<OracleClassifier>(0.0);
  } else if (const auto* e = endpoint_for(Role::classifier)) {
    classifier_ = std::make_unique<WorkerClassifier>(std::make_shared<WorkerProcess>(*e));
  } else {
    classifier_ = std::make_unique<OracleClassifier>(noise.confusion_probability);
  }
}

Sources SourceSet::view() const {
  return {generator_.get(), evaluator_.get(), refiner_.get(), classifier_.get()};
}

PipelineConfig SourceSet::adjust(PipelineConfig cfg) const {
  if (mode_ == AblationMode::no_refinement) cfg.refine = false;
  return cfg;
}

namespace {

/// Runs f(i) for i in [0, n) on up to `threads` threads. The first exception
/// is rethrown after all threads finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

SegmentRun run_segment(const PanopticDataset& dataset, const Sources& sources,
                       const PipelineConfig& cfg, int threads) {
  SegmentRun run;
  const std::size_t n = dataset.records.size();
  run.predictions.resize(n);
  run.traces.resize(n);
  std::vector<PqStats> stats(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto& rec = dataset.records[i];
    const Scene scene = make_scene(rec, dataset.categories);
    PanopticResult result = segment_panoptic(scene, sources, cfg);
    stats[i].add(match_segments(rec.ground_truth, result.map));
    run.predictions[i] = std::move(result.map);
    run.traces[i] = std::move(result.trace);
  });
  for (const auto& s : stats) run.stats.merge(s);
  return run;
}

PartsRun run_parts(std::span<const PartsRecord> records, const Sources& sources,
                   const PipelineConfig& cfg, int threads) {
  PartsRun run;
  run.predictions.resize(records.size());
  run.traces.resize(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const PartsRecord& rec = records[i];
    const LabelMap gt = parts_ground_truth(rec);
    Scene scene;
    scene.image_id = rec.image_id;
    scene.width = rec.object_mask.width();
    scene.height = rec.object_mask.height();
    scene.ground_truth = &gt;
    scene.stream = static_cast<std::uint64_t>(rec.object_id);
    PartsResult result = segment_parts(scene, rec.object_mask, sources, cfg);
    run.predictions[i] = {rec.image_id, rec.object_id, std::move(result.parts)};
    run.traces[i] = std::move(result.trace);
  });
  run.report = evaluate_parts(records, run.predictions);
  return run;
}

double MeanStd::stderr_of_mean() const {
  return n > 0 ? stddev / std::sqrt(static_cast<double>(n)) : 0.0;
}

namespace {

std::array<double, 9> columns_of(const PqReport& r) {
  return {r.all.pq, r.all.rq, r.all.sq, r.stuff.pq, r.stuff.rq, r.stuff.sq,
          r.things.pq, r.things.rq, r.things.sq};
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.n = static_cast<int>(v.size());
  if (v.empty()) return m;
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

const ModeRow* AblationReport::find(AblationMode mode) const {
  for (const auto& r : rows) {
    if (r.mode == mode) return &r;
  }
  return nullptr;
}

json AblationReport::to_json() const {
  json j = {{"trials", trials}, {"seed", base_seed}, {"modes", json::array()}};
  for (const auto& row : rows) {
    json r = {{"mode", std::string(to_string(row.mode))}, {"failed", row.failed}};
    if (row.failed) {
      r["error"] = row.error;
    } else {
      json mean = json::object();
      json sd = json::object();
      for (std::size_t c = 0; c < kAblationColumns.size(); ++c) {
        mean[kAblationColumns[c]] = row.columns[c].mean;
        sd[kAblationColumns[c]] = row.columns[c].stddev;
      }
      r["mean"] = mean;
      r["stddev"] = sd;
      json per_trial = json::array();
      for (const auto& t : row.trials) per_trial.push_back(ges::to_json(t));
      r["per_trial"] = per_trial;
    }
    j["modes"].push_back(r);
  }
  return j;
}

std::string AblationReport::table() const {
  std::string out = pq_table_header("Mode");
  char buf[256];
  for (const auto& row : rows) {
    const std::string name(to_string(row.mode));
    if (row.failed) {
      out += name + "  FAILED: " + row.error + "\n";
      continue;
    }
    int n = std::snprintf(buf, sizeof buf, "%-24s", name.c_str());
    for (const auto& c : row.columns) {
      n += std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), " %6.1f", 100 * c.mean);
    }
    out += buf;
    out += "\n";
    n = std::snprintf(buf, sizeof buf, "%-24s", "  +/- stddev");
    for (const auto& c : row.columns) {
      n += std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), " %6.1f", 100 * c.stddev);
    }
    out += buf;
    out += "\n";
  }
  return out;
}

AblationReport run_ablations(const RunConfig& cfg) {
  cfg.validate();
  AblationReport report;
  report.trials = cfg.trials;
  report.base_seed = cfg.base_seed;

  std::optional<PanopticDataset> on_disk;
  if (!cfg.synth) on_disk = load_panoptic(cfg.annotation, cfg.map_dir);

  const std::size_t modes = cfg.modes.size();
  const auto trials = static_cast<std::size_t>(cfg.trials);

  // Datasets are shared between modes of the same trial.
  std::vector<PanopticDataset> datasets(cfg.synth ? trials : 0);
  parallel_for(datasets.size(), cfg.threads, [&](std::size_t t) {
    SynthConfig sc = *cfg.synth;
    sc.seed = derive_seed(cfg.base_seed, {t, 0x5e});
    SynthDataset sd = generate_synthetic(sc);
    datasets[t] = {std::move(sd.categories), std::move(sd.panoptic)};
  });

  struct Slot {
    std::optional<PqReport> report;
    std::string trace;
    std::string error;
  };
  std::vector<Slot> slots(modes * trials);
  parallel_for(slots.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t m = k / trials;
    const std::size_t t = k % trials;
    Slot& slot = slots[k];
    try {
      const PanopticDataset& ds = cfg.synth ? datasets[t] : *on_disk;
      SourceSet sources(cfg.modes[m], cfg.noise, cfg.endpoints);
      PipelineConfig pc = sources.adjust(cfg.pipeline);
      pc.seed = derive_seed(cfg.base_seed, {t, 0x9e});
      SegmentRun run = run_segment(ds, sources.view(), pc, 1);
      slot.report = compute_pq(run.stats);
      for (const auto& tr : run.traces) slot.trace += tr.to_jsonl();
    } catch (const Error& e) {
      slot.error = e.what();
    }
  });

  for (std::size_t m = 0; m < modes; ++m) {
    ModeRow row;
    row.mode = cfg.modes[m];
    for (std::size_t t = 0; t < trials; ++t) {
      const Slot& slot = slots[m * trials + t];
      if (!slot.report) {
        row.failed = true;
        row.error = slot.error;
        row.trials.clear();
        break;
      }
      row.trials.push_back(*slot.report);
    }
    if (!row.failed) {
      for (std::size_t c = 0; c < kAblationColumns.size(); ++c) {
        std::vector<double> values;
        for (const auto& r : row.trials) values.push_back(columns_of(r)[c]);
        row.columns[c] = mean_std(values);
      }
    }
    report.rows.push_back(std::move(row));
  }

  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir / "traces");
    write_text(cfg.output_dir / "report.json", report.to_json().dump(2) + "\n");
    write_text(cfg.output_dir / "report.txt", report.table());
    for (std::size_t m = 0; m < modes; ++m) {
      for (std::size_t t = 0; t < trials; ++t) {
        const Slot& slot = slots[m * trials + t];
        if (!slot.report) continue;
        write_text(cfg.output_dir / "traces" /
                       (std::string(to_string(cfg.modes[m])) + "_trial" + std::to_string(t) + ".jsonl"),
                   slot.trace);
      }
    }
  }
  return report;
}

json ModularityReport::to_json() const {
  return {{"alphabet", alphabet},
          {"length", length},
          {"trials", trials},
          {"mean_guesses", mean_guesses},
          {"stddev_guesses", stddev_guesses},
          {"expected_guesses", expected_guesses},
          {"log10_monolithic_guesses", log10_monolithic}};
}

ModularityReport modularity_demo(int alphabet, int length, int trials, std::uint64_t seed) {
  if (alphabet < 1 || length < 1 || trials < 1) {
    throw InvalidInput("alphabet, length and trials must all be >= 1");
  }
  ModularityReport r;
  r.alphabet = alphabet;
  r.length = length;
  r.trials = trials;
  r.expected_guesses = static_cast<double>(alphabet) * length;
  r.log10_monolithic = length * std::log10(static_cast<double>(alphabet));

  std::vector<double> totals;
  const auto a = static_cast<std::uint64_t>(alphabet);
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    std::uint64_t guesses = 0;
    for (int pos = 0; pos < length; ++pos) {
      const std::uint64_t target = rng.below(a);
      do {
        ++guesses;
      } while (rng.below(a) != target);
    }
    totals.push_back(static_cast<double>(guesses));
  }
  const MeanStd m = mean_std(totals);
  r.mean_guesses = m.mean;
  r.stddev_guesses = m.stddev;
  return r;
}

RgbImage render_overlay(const RgbImage* base, const LabelMap& result, std::uint64_t seed,
                        double alpha) {
  if (base != nullptr && (base->width != result.width() || base->height != result.height())) {
    throw InvalidInput("overlay base image does not match the result size");
  }
  std::vector<std::array<std::uint8_t, 3>> palette(result.segment_count() + 1, {0, 0, 0});
  for (std::uint32_t l = 1; l < palette.size(); ++l) {
    Rng rng(derive_seed(seed, {l}));
    palette[l] = {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                  static_cast<std::uint8_t>(rng.below(256))};
  }
  RgbImage out(result.width(), result.height());
  for (std::size_t i = 0; i < result.size(); ++i) {
    const std::uint32_t l = result.at(i);
    if (l == 0) continue;  // black
    std::array<std::uint8_t, 3> px = palette[l];
    if (base != nullptr) {
      const auto b = base->pixel(i);
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<std::uint8_t>(std::lround(alpha * px[c] + (1.0 - alpha) * b[c]));
      }
    }
    out.set_pixel(i, px);
  }
  return out;
}

void emit_overlay(const fs::path& path, const RgbImage* base, const LabelMap& result,
                  std::uint64_t seed) {
  write_png(path, render_overlay(base, result, seed));
}

}  // namespace ges
