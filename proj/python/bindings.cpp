// Python entry points. Structured results cross the boundary as JSON text
// (decoded on the Python side); masks and label maps as numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "ges/dataset.hpp"
#include "ges/errors.hpp"
#include "ges/harness.hpp"
#include "ges/metrics.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Segments = std::vector<std::pair<int, bool>>;

ges::BitMask to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ges::InvalidInput("mask must be a 2-D array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return ges::BitMask::from_bytes(w, h, {a.data(), static_cast<std::size_t>(a.size())});
}

py::array_t<bool> from_mask(const ges::BitMask& m) {
  py::array_t<bool> out({m.height(), m.width()});
  bool* p = out.mutable_data();
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m.test(i);
  return out;
}

ges::LabelMap to_label_map(const py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>& a,
                           const Segments& segs) {
  if (a.ndim() != 2) throw ges::InvalidInput("label map must be a 2-D array");
  std::vector<std::uint32_t> labels(a.data(), a.data() + a.size());
  std::vector<ges::SegmentInfo> info;
  for (auto [c, thing] : segs) info.push_back({c, thing});
  return {static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), std::move(labels), std::move(info)};
}

py::tuple from_label_map(const ges::LabelMap& m) {
  py::array_t<std::uint32_t> labels({m.height(), m.width()});
  std::memcpy(labels.mutable_data(), m.labels().data(), m.size() * sizeof(std::uint32_t));
  Segments segs;
  for (const auto& s : m.segments()) segs.emplace_back(s.category_id, s.is_thing);
  return py::make_tuple(labels, segs);
}

ges::RunConfig config_of(const std::string& text) {
  ges::RunConfig cfg = ges::run_config_from_json(text.empty() ? json::object() : json::parse(text));
  if (!cfg.synth && cfg.annotation.empty()) cfg.synth = ges::SynthConfig{};
  cfg.validate();
  return cfg;
}

json categories_json(const std::vector<ges::Category>& cats) {
  json out = json::array();
  for (const auto& c : cats) {
    out.push_back({{"id", c.id}, {"name", c.name}, {"isthing", c.is_thing}, {"familiar", c.familiar}});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "generate-evaluate-select panoptic segmentation engine";

  // GesError carries the machine-readable kind as an attribute.
  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
  error.call_once_and_store_result(
      [&] { return py::exception<ges::Error>(m, "GesError", PyExc_RuntimeError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ges::Error& e) {
      const py::object& type = error.get_stored();
      py::object exc = type(py::str(e.what()));
      exc.attr("kind") = e.kind();
      PyErr_SetObject(type.ptr(), exc.ptr());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("rle_encode", [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a) {
    return ges::rle_to_json(ges::rle_encode(to_mask(a))).dump();
  });
  m.def("rle_decode", [](const std::string& text) { return from_mask(ges::rle_decode(ges::rle_from_json(json::parse(text)))); });
  m.def("iou", [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a,
                  py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> b) {
    return ges::iou(to_mask(a), to_mask(b));
  });

  m.def("evaluate_pq",
        [](py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast> gt, const Segments& gt_segs,
           py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast> pred, const Segments& pred_segs) {
          return ges::to_json(ges::evaluate_pq(to_label_map(gt, gt_segs), to_label_map(pred, pred_segs))).dump();
        });

  m.def("synthesize", [](const std::string& config_text) {
    ges::SynthConfig sc = config_text.empty() ? ges::SynthConfig{} : json::parse(config_text).get<ges::SynthConfig>();
    ges::SynthDataset data;
    {
      py::gil_scoped_release release;
      data = ges::generate_synthetic(sc);
    }
    py::list records;
    for (const auto& r : data.panoptic) {
      py::tuple map = from_label_map(r.ground_truth);
      py::object image = py::none();
      if (r.image) {
        py::array_t<std::uint8_t> px({r.image->height, r.image->width, 3});
        std::memcpy(px.mutable_data(), r.image->data.data(), r.image->data.size());
        image = px;
      }
      records.append(py::make_tuple(r.image_id, map[0], map[1], image));
    }
    return py::make_tuple(categories_json(data.categories).dump(), records, ges::parts_to_json(data.parts).dump());
  });

  m.def("write_synthetic", [](const std::string& config_text, const std::string& dir) {
    ges::SynthConfig sc = config_text.empty() ? ges::SynthConfig{} : json::parse(config_text).get<ges::SynthConfig>();
    py::gil_scoped_release release;
    ges::write_synthetic(dir, ges::generate_synthetic(sc));
  });

  m.def("segment", [](const std::string& config_text, const std::string& mode_name) {
    const ges::RunConfig cfg = config_of(config_text);
    const auto mode = ges::ablation_mode_from_string(mode_name);
    ges::SegmentRun run;
    ges::PqReport report;
    {
      py::gil_scoped_release release;
      // trial 0 seeds, as in the CLI
      ges::PanopticDataset ds;
      if (cfg.synth) {
        ges::SynthConfig sc = *cfg.synth;
        sc.seed = ges::derive_seed(cfg.base_seed, {0, 0x5e});
        auto sd = ges::generate_synthetic(sc);
        ds = {std::move(sd.categories), std::move(sd.panoptic)};
      } else {
        ds = ges::load_panoptic(cfg.annotation, cfg.map_dir);
      }
      ges::SourceSet sources(mode, cfg.noise, cfg.endpoints);
      ges::PipelineConfig pc = sources.adjust(cfg.pipeline);
      pc.seed = ges::derive_seed(cfg.base_seed, {0, 0x9e});
      run = ges::run_segment(ds, sources.view(), pc, cfg.threads);
      report = ges::compute_pq(run.stats);
    }
    py::list preds;
    for (const auto& p : run.predictions) preds.append(from_label_map(p));
    return py::make_tuple(ges::to_json(report).dump(), preds);
  });

  m.def("run_ablations", [](const std::string& config_text) {
    const ges::RunConfig cfg = config_of(config_text);
    std::string report, table;
    {
      py::gil_scoped_release release;
      const ges::AblationReport r = ges::run_ablations(cfg);
      report = r.to_json().dump();
      table = r.table();
    }
    return py::make_tuple(report, table);
  });

  m.def("modularity_demo", [](int alphabet, int length, int trials, std::uint64_t seed) {
    py::gil_scoped_release release;
    return ges::modularity_demo(alphabet, length, trials, seed).to_json().dump();
  });

  m.def("ablation_modes", [] {
    std::vector<std::string> out;
    for (auto mode : ges::all_ablation_modes()) out.emplace_back(ges::to_string(mode));
    return out;
  });
}
