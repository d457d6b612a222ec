// Python bindings: data generation, log-mel frontend, metrics, training and
// evaluation. Tensors cross the boundary as float32 numpy arrays.
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "havt/harness/ablation.hpp"
#include "havt/postprocess.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace havt;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Array to_numpy(const FloatTensor& t) {
  Array a(t.shape());
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

FloatTensor from_numpy(const Array& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return FloatTensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

ConfigFile overrides_from(const py::dict& d) {
  ConfigFile f;
  for (const auto& [k, v] : d) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& item : v) value += (value.empty() ? "" : ",") + py::str(item).cast<std::string>();
    } else {
      value = py::str(v).cast<std::string>();
    }
    f.set(py::str(k).cast<std::string>(), value);
  }
  return f;
}

RunConfig run_config(const std::string& preset, const py::dict& overrides) {
  if (preset != "paper" && preset != "desk") throw ConfigError("unknown preset '" + preset + "'");
  return run_config_from(overrides_from(overrides), preset == "desk" ? desk_run_config() : RunConfig{});
}

CorpusConfig corpus_config(const std::string& preset, const py::dict& overrides) {
  if (preset != "paper" && preset != "desk") throw ConfigError("unknown preset '" + preset + "'");
  return corpus_config_from(overrides_from(overrides), preset == "desk" ? desk_corpus_config() : CorpusConfig{});
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["AP(M)"] = r.ap_per_class[0];
  d["AP(I)"] = r.ap_per_class[1];
  d["AP(Eoff)"] = r.ap_per_class[2];
  d["mAP@0.5"] = r.map_50;
  d["mAP@0.75"] = r.map_75;
  d["mAP@Avg"] = r.map_avg;
  return d;
}

py::dict epoch_dict(const EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["loss_conf"] = r.loss_conf;
  d["loss_cls"] = r.loss_cls;
  d["loss_bbox"] = r.loss_bbox;
  d["val_map"] = r.val_map;
  return d;
}

MelConfig::Normalization normalization_from(const std::string& s) {
  if (s == "joint") return MelConfig::Normalization::kJoint;
  if (s == "per_channel") return MelConfig::Normalization::kPerChannel;
  if (s == "none") return MelConfig::Normalization::kNone;
  throw ConfigError("unknown normalization '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_havt, m) {
  m.doc() = "Audio-visual idling vehicle detection";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::enum_<VehicleState>(m, "VehicleState")
      .value("moving", VehicleState::kMoving)
      .value("idling", VehicleState::kIdling)
      .value("engine_off", VehicleState::kEngineOff);

  py::class_<Box>(m, "Box")
      .def(py::init<double, double, double, double>(), py::arg("cx"), py::arg("cy"), py::arg("w"), py::arg("h"))
      .def_readwrite("cx", &Box::cx)
      .def_readwrite("cy", &Box::cy)
      .def_readwrite("w", &Box::w)
      .def_readwrite("h", &Box::h)
      .def("__eq__", [](const Box& a, const Box& b) { return a == b; })
      .def("__repr__", [](const Box& b) {
        return "Box(" + std::to_string(b.cx) + ", " + std::to_string(b.cy) + ", " + std::to_string(b.w) + ", " +
               std::to_string(b.h) + ")";
      });

  py::class_<GroundTruthBox>(m, "GroundTruthBox")
      .def(py::init([](Box b, VehicleState c) { return GroundTruthBox{b, c}; }), py::arg("box"), py::arg("cls"))
      .def_readwrite("box", &GroundTruthBox::box)
      .def_readwrite("cls", &GroundTruthBox::cls);

  py::class_<Detection>(m, "Detection")
      .def(py::init([](Box b, VehicleState c, double s) { return Detection{b, c, s}; }), py::arg("box"),
           py::arg("cls"), py::arg("score"))
      .def_readwrite("box", &Detection::box)
      .def_readwrite("cls", &Detection::cls)
      .def_readwrite("score", &Detection::score);

  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def("nms", &nms, py::arg("dets"), py::arg("iou_threshold") = 0.45, py::arg("score_threshold") = 0.05);
  m.def(
      "evaluate",
      [](const std::vector<std::vector<Detection>>& dets, const std::vector<std::vector<GroundTruthBox>>& gts,
         std::optional<std::vector<double>> thresholds) {
        return report_dict(evaluate(dets, gts, thresholds.value_or(coco_thresholds())));
      },
      py::arg("dets"), py::arg("gts"), py::arg("thresholds") = py::none(),
      "Per-class AP at IoU 0.5 and mAP@0.5/0.75/Avg, as fractions.");

  m.def(
      "split_dataset",
      [](size_t n, std::array<double, 3> ratios, uint64_t seed) {
        Split s = split_dataset(n, ratios, seed);
        return py::make_tuple(s.train, s.val, s.test);
      },
      py::arg("n"), py::arg("ratios") = std::array<double, 3>{0.8, 0.1, 0.1}, py::arg("seed") = 0);

  m.def(
      "melspec",
      [](const Array& audio, double sample_rate, int n_fft, int hop, int n_mels, const std::string& normalization) {
        if (audio.ndim() != 2) throw ShapeError("melspec: audio must be [mics, samples]");
        MelConfig cfg;
        cfg.n_fft = n_fft;
        cfg.hop = hop;
        cfg.n_mels = n_mels;
        cfg.normalization = normalization_from(normalization);
        AudioSegment seg{from_numpy(audio), sample_rate};
        MelSpectrogram mel;
        {
          py::gil_scoped_release nogil;
          mel = compute_melspec(seg, cfg);
        }
        return to_numpy(mel.values);
      },
      py::arg("audio"), py::arg("sample_rate") = 48000.0, py::arg("n_fft") = 1024, py::arg("hop") = 512,
      py::arg("n_mels") = 128, py::arg("normalization") = "joint", "Log-mel spectrogram, [mics, n_mels, frames].");

  m.def(
      "generate_scene",
      [](uint64_t seed, const std::string& preset, const py::dict& overrides) {
        const CorpusConfig cc = corpus_config(preset, overrides);
        Sample s;
        {
          py::gil_scoped_release nogil;
          s = generate_scene(cc.scene, seed);
        }
        py::dict d;
        d["video"] = to_numpy(s.clip.frames);
        d["frame_rate"] = s.clip.frame_rate;
        d["audio"] = to_numpy(s.audio.samples);
        d["sample_rate"] = s.audio.sample_rate;
        d["boxes"] = s.boxes;
        d["meta"] = s.scene_meta;
        return d;
      },
      py::arg("seed"), py::arg("preset") = "paper", py::arg("overrides") = py::dict(),
      "One synthetic sample: video [D,3,H,W], audio [M,S], boxes, meta.");

  m.def(
      "generate_corpus",
      [](const fs::path& root, std::optional<size_t> n, std::optional<uint64_t> seed, const std::string& preset,
         const py::dict& overrides) {
        CorpusConfig cc = corpus_config(preset, overrides);
        if (n) cc.n = *n;
        if (seed) cc.scene.seed = *seed;
        Manifest man;
        {
          py::gil_scoped_release nogil;
          man = generate_corpus(cc.scene, cc.n, root, cc.split);
          std::ofstream(root / "corpus.cfg") << to_config_text(cc);
        }
        const auto t = man.totals();
        py::dict d;
        d["samples"] = man.entries.size();
        d["moving"] = t[0];
        d["idling"] = t[1];
        d["engine_off"] = t[2];
        return d;
      },
      py::arg("root"), py::arg("n") = py::none(), py::arg("seed") = py::none(), py::arg("preset") = "paper",
      py::arg("overrides") = py::dict());

  m.def(
      "train",
      [](const fs::path& data, const fs::path& out, const std::string& preset, const py::dict& overrides,
         std::function<void(py::dict)> on_epoch) {
        const RunConfig rc = run_config(preset, overrides);
        TrainResult r;
        {
          py::gil_scoped_release nogil;
          const PreparedSet tr = load_split(data / "train", rc.mel);
          const PreparedSet va = load_split(data / "val", rc.mel);
          TrainOptions opt;
          opt.out_dir = out;
          if (on_epoch) {
            opt.on_epoch = [&](const EpochRecord& e) {
              py::gil_scoped_acquire gil;
              on_epoch(epoch_dict(e));
            };
          }
          r = train(rc, tr, va, opt);
        }
        py::list history;
        for (const auto& e : r.history) history.append(epoch_dict(e));
        py::dict d;
        d["best_epoch"] = r.best_epoch;
        d["best_val_map"] = r.best_val_map;
        d["stopped_early"] = r.stopped_early;
        d["history"] = history;
        d["checkpoint"] = out / "best.pt";
        d["train_hash"] = r.train_hash;
        d["val_hash"] = r.val_hash;
        return d;
      },
      py::arg("data"), py::arg("out"), py::arg("preset") = "paper", py::arg("overrides") = py::dict(),
      py::arg("on_epoch") = nullptr, "Trains on <data>/train with early stopping on <data>/val.");

  m.def(
      "evaluate_checkpoint",
      [](const fs::path& ckpt, const fs::path& split_dir) {
        EvalReport rep;
        {
          py::gil_scoped_release nogil;
          LoadedModel lm = load_checkpoint(ckpt);
          const PreparedSet set = load_split(split_dir, lm.config.mel);
          rep = evaluate_model(lm.model, set, lm.config);
        }
        return report_dict(rep);
      },
      py::arg("ckpt"), py::arg("split_dir"));

  m.def(
      "ablate",
      [](const std::string& axis, const fs::path& data, const std::string& preset, const py::dict& overrides) {
        const AblationAxis a = axis_from_name(axis);
        const RunConfig rc = run_config(preset, overrides);
        AblationTable table{a, {}};
        {
          py::gil_scoped_release nogil;
          const PreparedSet tr = load_split(data / "train", rc.mel);
          const PreparedSet va = load_split(data / "val", rc.mel);
          const PreparedSet te = load_split(data / "test", rc.mel);
          table = run_ablation(a, rc, tr, va, te);
        }
        py::list rows;
        for (const auto& r : table.rows) {
          py::dict d = report_dict(r.report);
          d["setting"] = r.setting;
          d["best_epoch"] = r.best_epoch;
          rows.append(d);
        }
        py::dict d;
        d["rows"] = rows;
        d["text"] = table.to_text();
        return d;
      },
      py::arg("axis"), py::arg("data"), py::arg("preset") = "paper", py::arg("overrides") = py::dict());
}
