#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "xic/config.hpp"
#include "xic/error.hpp"
#include "xic/eval.hpp"
#include "xic/gradcheck.hpp"
#include "xic/selfsup.hpp"
#include "xic/tracker.hpp"

namespace py = pybind11;
using namespace xic;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

RealPlane to_plane(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  RealPlane p(a.shape(0), a.shape(1));
  std::memcpy(p.data.data(), a.data(), p.data.size() * sizeof(double));
  return p;
}

Tensor3 to_tensor(const Array& a) {
  if (a.ndim() != 3) throw py::value_error("expected a (channels, height, width) array");
  Tensor3 t(a.shape(0), a.shape(1), a.shape(2));
  std::memcpy(t.data.data(), a.data(), t.data.size() * sizeof(double));
  return t;
}

Array from_plane(const RealPlane& p) {
  Array out({p.height, p.width});
  std::memcpy(out.mutable_data(), p.data.data(), p.data.size() * sizeof(double));
  return out;
}

BoundingBox to_box(const std::vector<double>& v) {
  if (v.size() != 4) throw py::value_error("a box is [x, y, w, h]");
  return {v[0], v[1], v[2], v[3]};
}

std::vector<BoundingBox> to_boxes(const std::vector<std::vector<double>>& v) {
  std::vector<BoundingBox> out;
  for (const auto& b : v) out.push_back(to_box(b));
  return out;
}

RunConfig config_from(const std::optional<std::string>& path) {
  return path ? load_config(*path) : RunConfig{};
}

}  // namespace

PYBIND11_MODULE(_xic, m) {
  m.doc() = "Self-supervised RGB-T correlation-filter tracking core.";

  py::register_exception<Error>(m, "XicError", PyExc_RuntimeError);

  m.def("gaussian_label",
        [](std::size_t h, std::size_t w, double sigma, std::size_t row, std::size_t col) {
          return from_plane(gaussian_label(h, w, sigma, row, col).map);
        },
        py::arg("height"), py::arg("width"), py::arg("sigma"), py::arg("center_row"),
        py::arg("center_col"));

  m.def("dcf_response",
        [](const Array& template_features, const Array& label, double lambda,
           const Array& search_features) {
          const CorrelationFilter f =
              solve_filter(to_tensor(template_features), to_plane(label), lambda);
          return from_plane(response(f, to_tensor(search_features)).map);
        },
        py::arg("template_features"), py::arg("label"), py::arg("lam"),
        py::arg("search_features"),
        "Solves the filter on (C,H,W) template features and applies it to the search features.");

  m.def("consistency_loss",
        [](const Array& a, const Array& b, const std::string& norm) {
          return consistency_loss(to_plane(a), to_plane(b), parse_loss_norm(norm)).value;
        },
        py::arg("a"), py::arg("b"), py::arg("norm") = "l1");

  m.def("sample_weights",
        [](const std::vector<double>& d, double noisy_frac, double bg_frac) {
          const SampleWeights w = compute_sample_weights(d, noisy_frac, bg_frac);
          py::dict out;
          out["noisy_mask"] = w.noisy_mask;
          out["background_mask"] = w.background_mask;
          out["weights"] = w.d_norm;
          return out;
        },
        py::arg("differences"), py::arg("noisy_frac") = 0.10, py::arg("bg_frac") = 0.25);

  m.def("weighted_loss",
        [](const std::vector<double>& losses, const std::vector<double>& weights) {
          return weighted_loss(losses, weights);
        },
        py::arg("losses"), py::arg("weights"));

  m.def("lr_at", &lr_at, py::arg("epoch"), py::arg("epochs"), py::arg("start"), py::arg("end"));

  m.def("center_error",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return center_error(to_box(a), to_box(b));
        });
  m.def("iou", [](const std::vector<double>& a, const std::vector<double>& b) {
    return iou(to_box(a), to_box(b));
  });

  m.def("evaluate",
        [](const std::vector<std::vector<double>>& predicted,
           const std::vector<std::vector<double>>& ground_truth, double px_threshold) {
          EvalRecord r;
          r.name = "sequence";
          r.predicted = to_boxes(predicted);
          r.ground_truth.push_back(to_boxes(ground_truth));
          const MetricReport rep = mpr_msr({r}, px_threshold);
          py::dict out;
          out["mpr"] = rep.mpr;
          out["msr"] = rep.msr;
          out["precision"] = rep.precision;
          out["success"] = rep.success;
          out["frames"] = rep.frames;
          return out;
        },
        py::arg("predicted"), py::arg("ground_truth"), py::arg("px_threshold") = 5.0);

  m.def("gradcheck",
        [](std::size_t size, std::size_t channels, std::size_t batch, const std::string& variant,
           bool inject_wrong_sign) {
          GradcheckOptions opt;
          opt.size = size;
          opt.channels = channels;
          opt.batch = batch;
          opt.variant = parse_variant(variant);
          opt.inject_wrong_sign = inject_wrong_sign;
          GradcheckReport rep;
          {
            py::gil_scoped_release release;
            rep = run_gradcheck(opt);
          }
          py::dict stages;
          for (const auto& s : rep.stages) stages[py::str(s.name)] = s.max_rel_error;
          py::dict out;
          out["passed"] = rep.passed();
          out["seconds"] = rep.seconds;
          out["stages"] = stages;
          return out;
        },
        py::arg("size") = 16, py::arg("channels") = 8, py::arg("batch") = 2,
        py::arg("variant") = "xic2", py::arg("inject_wrong_sign") = false);

  m.def("config_text",
        [](const std::optional<std::string>& path) { return to_text(config_from(path)); },
        py::arg("path") = py::none(), "Every configuration key with its resolved value.");

  m.def("synth",
        [](const std::string& out_dir, const std::optional<std::string>& config) {
          const RunConfig cfg = config_from(config);
          py::gil_scoped_release release;
          const SynthDataset ds = synth_generate(cfg.synth);
          for (const auto& s : ds.train) write_sequence(s, out_dir + "/train");
          for (const auto& s : ds.test) write_sequence(s, out_dir + "/test");
        },
        py::arg("out_dir"), py::arg("config") = py::none(),
        "Renders the synthetic dataset into <out_dir>/train and <out_dir>/test.");

  m.def("train",
        [](const std::string& data_dir, const std::string& out_dir,
           const std::optional<std::string>& config, int epochs) {
          RunConfig cfg = config_from(config);
          if (epochs > 0) cfg.training.epochs = epochs;
          cfg.validate();
          std::vector<double> losses;
          {
            py::gil_scoped_release release;
            std::vector<TrainingPair> pairs;
            for (const auto& dir : list_sequences(data_dir)) {
              auto p = center_crop_pairs(load_sequence(dir), cfg.crop_options());
              pairs.insert(pairs.end(), p.begin(), p.end());
            }
            const TrainResult r =
                train(pairs, cfg.model_config(), cfg.train_options(out_dir, 1));
            for (const auto& e : r.epochs) losses.push_back(e.mean_loss);
          }
          return losses;
        },
        py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = py::none(),
        py::arg("epochs") = 0, "Trains and returns the mean loss of every epoch.");

  m.def("track",
        [](const std::string& checkpoint, const std::string& sequence_dir,
           const std::optional<std::string>& config) {
          const RunConfig cfg = config_from(config);
          std::vector<std::vector<double>> boxes;
          double fps = 0.0;
          {
            py::gil_scoped_release release;
            const ModelParams params = load_checkpoint(checkpoint, cfg.model_config());
            const SequenceRun run =
                run_sequence(load_sequence(sequence_dir), std::nullopt, params, cfg.tracker_config());
            for (const auto& b : run.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
            fps = run.fps;
          }
          py::dict out;
          out["boxes"] = boxes;
          out["fps"] = fps;
          return out;
        },
        py::arg("checkpoint"), py::arg("sequence_dir"), py::arg("config") = py::none());
}
