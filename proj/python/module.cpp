#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sfl/checkpoint.hpp"
#include "sfl/commands.hpp"
#include "sfl/errors.hpp"
#include "sfl/image_io.hpp"
#include "sfl/log_bank.hpp"
#include "sfl/losses.hpp"
#include "sfl/model.hpp"

namespace py = pybind11;
using namespace sfl;

namespace {

// numpy arrays are (channels, height, width), matching the Volume layout.
template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Volume<T> to_volume(const Array<T>& a) {
  if (a.ndim() != 3) {
    throw ConfigError("expected a (channels, height, width) array, got " +
                      std::to_string(a.ndim()) + " dimensions");
  }
  const auto c = static_cast<int>(a.shape(0));
  const auto h = static_cast<int>(a.shape(1));
  const auto w = static_cast<int>(a.shape(2));
  return Volume<T>(c, w, h, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
Array<T> to_array(const Volume<T>& v) {
  Array<T> out({v.channels(), v.height(), v.width()});
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const LossReport& r) {
  py::dict d;
  d["e_pl"] = r.e_pl;
  d["e_sfl_per_band"] = r.e_sfl_per_band;
  d["e_sfl_weighted"] = r.e_sfl_weighted;
  d["e_total"] = r.e_total;
  return d;
}

std::vector<Volume<float>> to_volumes(const std::vector<Array<float>>& images) {
  std::vector<Volume<float>> out;
  out.reserve(images.size());
  for (const auto& a : images) out.push_back(to_volume(a));
  return out;
}

struct PyModel {
  TrainConfig config;
  ModelAndState<float> ms;
  std::uint32_t epoch = 0;

  PyModel(const TrainConfig& cfg, CaeWidths widths) : config(cfg) {
    config.validate();
    ms = build_cae<float>(config.seed, config, widths);
  }
  explicit PyModel(Checkpoint ck)
      : config(std::move(ck.config)), ms{std::move(ck.model), std::move(ck.state)},
        epoch(ck.epoch) {}

  py::dict train_epoch(const std::vector<Array<float>>& images) {
    const TrainingSet<float> set(to_volumes(images), ms.model.bank);
    LossReport r;
    {
      py::gil_scoped_release release;
      r = sfl::train_epoch(ms.model, ms.state, set, config);
    }
    ++epoch;
    return report_dict(r);
  }

  py::dict evaluate(const std::vector<Array<float>>& images) const {
    const TrainingSet<float> set(to_volumes(images), ms.model.bank);
    return report_dict(sfl::evaluate(ms.model, set, config));
  }
};

}  // namespace

PYBIND11_MODULE(_sflcae, m) {
  m.doc() = "Convolutional autoencoder training with a Laplacian-of-Gaussian subband loss.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  auto io_error = py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<CheckpointError>(m, "CheckpointError", io_error.ptr());

  m.attr("DEFAULT_SCALES") = kDefaultScales;
  m.attr("DEFAULT_SUBBAND_WEIGHTS") = kDefaultSubbandWeights;

  m.def("kernel_size", &kernel_size, py::arg("sigma"));
  m.def(
      "make_log_kernel",
      [](double sigma) {
        const auto k = make_log_kernel(sigma);
        py::array_t<double> out({k.side, k.side});
        auto view = out.mutable_unchecked<2>();
        for (int b = -k.half(); b <= k.half(); ++b)
          for (int a = -k.half(); a <= k.half(); ++a) view(b + k.half(), a + k.half()) = k.at(a, b);
        return out;
      },
      py::arg("sigma"), "Zero-sum LoG kernel indexed [y, x].");
  m.def(
      "frequency_response",
      [](double sigma, int fft_size) {
        const auto r = frequency_response(make_log_kernel(sigma), fft_size);
        py::array_t<double> out({r.size, r.size});
        std::copy(r.magnitude.begin(), r.magnitude.end(), out.mutable_data());
        return out;
      },
      py::arg("sigma"), py::arg("fft_size") = 128, "Centred DFT magnitude indexed [v, u]; DC sits at [n/2, n/2].");
  m.def(
      "bank_forward",
      [](const Array<double>& image, const std::vector<double>& scales) {
        const auto v = to_volume(image);
        const auto bank =
            build_bank<double>(scales, std::vector<double>(scales.size(), 1.0), v.channels());
        return to_array(bank_forward(bank, v));
      },
      py::arg("image"), py::arg("scales") = kDefaultScales,
      "One band-pass response per scale, summed over colour channels.");

  m.def(
      "pixel_loss",
      [](const Array<double>& recon, const Array<double>& orig, const std::vector<double>& w_pl) {
        return pixel_loss(to_volume(recon), to_volume(orig), w_pl);
      },
      py::arg("recon"), py::arg("original"), py::arg("w_pl") = std::vector<double>{1, 1, 1});
  m.def(
      "sfl_loss",
      [](const Array<double>& recon, const Array<double>& orig, const std::vector<double>& scales,
         const std::vector<double>& w_sfl) {
        const auto r = to_volume(recon);
        const auto bank = build_bank<double>(scales, w_sfl, r.channels());
        const auto l = sfl_loss(bank, r, to_volume(orig), w_sfl);
        return py::make_tuple(l.per_band, l.weighted);
      },
      py::arg("recon"), py::arg("original"), py::arg("scales") = kDefaultScales,
      py::arg("w_sfl") = kDefaultSubbandWeights, "Returns (per_band, weighted).");

  m.def(
      "load_image", [](const std::filesystem::path& p) { return to_array(load_image(p)); },
      py::arg("path"), "PPM/PGM file as a (3, H, W) float32 array in [-1, 1].");
  m.def(
      "save_image",
      [](const Array<float>& image, const std::filesystem::path& p) { save_image(to_volume(image), p); },
      py::arg("image"), py::arg("path"));
  m.def(
      "resize_larger_side",
      [](const Array<float>& image, int target) {
        return to_array(resize_larger_side(to_volume(image), target));
      },
      py::arg("image"), py::arg("target"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("init_std", &TrainConfig::init_std)
      .def_readwrite("mini_batch", &TrainConfig::mini_batch)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("sfl_enabled", &TrainConfig::sfl_enabled)
      .def_readwrite("threads", &TrainConfig::threads)
      .def_readwrite("scales", &TrainConfig::scales)
      .def_property(
          "w_pl", [](const TrainConfig& c) { return c.weights.pixel; },
          [](TrainConfig& c, std::vector<double> w) { c.weights.pixel = std::move(w); })
      .def_property(
          "w_sfl", [](const TrainConfig& c) { return c.weights.subband; },
          [](TrainConfig& c, std::vector<double> w) { c.weights.subband = std::move(w); })
      .def("validate", &TrainConfig::validate);

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const TrainConfig& cfg, int h1, int h2, int h3) {
             return PyModel(cfg, CaeWidths{h1, h2, h3});
           }),
           py::arg("config") = TrainConfig{}, py::arg("hidden1") = 32, py::arg("hidden2") = 16,
           py::arg("hidden3") = 32)
      .def_static(
          "load", [](const std::filesystem::path& p) { return PyModel(load_checkpoint(p)); },
          py::arg("path"))
      .def(
          "save",
          [](const PyModel& self, const std::filesystem::path& p) {
            save_checkpoint(self.ms.model, self.ms.state, self.epoch, self.config, p);
          },
          py::arg("path"))
      .def_readonly("epoch", &PyModel::epoch)
      .def_readonly("config", &PyModel::config)
      .def_property_readonly("parameter_count",
                             [](const PyModel& self) {
                               std::size_t n = 0;
                               for (const auto& l : self.ms.model.layers)
                                 n += l.weights.size() + l.biases.size();
                               return n;
                             })
      .def(
          "reconstruct",
          [](const PyModel& self, const Array<float>& image) {
            return to_array(reconstruct(self.ms.model, to_volume(image)));
          },
          py::arg("image"))
      .def("train_epoch", &PyModel::train_epoch, py::arg("images"),
           "One pass with momentum updates; returns losses measured before each update.")
      .def("evaluate", &PyModel::evaluate, py::arg("images"));

  m.def(
      "run_keys", [] { return run_config_keys(); }, "Setting names accepted by train_run.");
  m.def(
      "train_run",
      [](const std::map<std::string, std::string>& settings) {
        RunConfig cfg;
        for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
        std::ostringstream log;
        int code;
        {
          py::gil_scoped_release release;
          code = cmd_train(cfg, log);
        }
        return py::make_tuple(code, log.str());
      },
      py::arg("settings"), "Runs the train command; returns (exit_code, log_text).");
}
