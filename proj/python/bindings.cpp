// Python bindings for the core kernels and checkpoint inference.
//
// Waveforms cross the boundary as 1-D float64 numpy arrays; feature matrices
// come back as 2-D arrays. Training stays on the C++ side (see the CLI); the
// module covers the exact metrics, mixing, features, corpus synthesis, and
// running saved checkpoints.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "snrilab/audio/buffer.hpp"
#include "snrilab/audio/corpus.hpp"
#include "snrilab/audio/melbank.hpp"
#include "snrilab/audio/mixing.hpp"
#include "snrilab/audio/wav.hpp"
#include "snrilab/common/errors.hpp"
#include "snrilab/grad/checkpoint.hpp"
#include "snrilab/grad/tape.hpp"
#include "snrilab/harness/harness.hpp"
#include "snrilab/metrics/metrics.hpp"
#include "snrilab/models/models.hpp"

namespace py = pybind11;

namespace {

std::vector<double> as_vector(const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& a) {
  if (a.ndim() != 1) throw snrilab::ShapeMismatch("expected a 1-D waveform array");
  const double* p = a.data();
  return std::vector<double>(p, p + a.size());
}

py::array_t<double> as_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> as_array2d(const snrilab::audio::FeatureMatrix& m) {
  py::array_t<double> out({static_cast<py::ssize_t>(m.rows),
                           static_cast<py::ssize_t>(m.cols)});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

snrilab::audio::AudioBuffer as_buffer(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
    int sample_rate) {
  return snrilab::audio::AudioBuffer{as_vector(a), sample_rate};
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

// Loads a saved frontend (or joint) checkpoint and runs its networks.
class Enhancer {
 public:
  explicit Enhancer(const std::string& path) {
    std::string network = "snri_net";
    {
      // Peek at the tag so both frontend-only and joint checkpoints load.
      const auto ck = snrilab::grad::load_checkpoint(path);
      if (ck.meta.contains("network") && ck.meta.at("network").is_string()) {
        network = ck.meta.at("network").get<std::string>();
      }
    }
    ck_ = snrilab::harness::load_model_checkpoint(path, network);
    ms_ = snrilab::harness::model_set_from_meta(ck_.meta);
    ms_.build();
    network_ = network;
  }

  bool conditioned() const { return ms_.snri.conditioned; }

  bool has_predictor() const {
    for (const auto& [key, p] : ck_.params) {
      if (key.rfind("pred_net/", 0) == 0) return true;
    }
    return false;
  }

  bool has_backend() const {
    for (const auto& [key, p] : ck_.params) {
      if (key.rfind("backend/", 0) == 0) return true;
    }
    return false;
  }

  const std::string& network() const { return network_; }

  std::pair<py::array_t<double>, py::array_t<double>> enhance(
      const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
      std::optional<double> lambda_db) const {
    snrilab::grad::Tape t;
    snrilab::grad::Tensor x_t =
        t.constant({static_cast<int>(x.size())}, as_vector(x));
    snrilab::grad::Tensor lam;
    if (ms_.snri.conditioned) {
      if (!lambda_db.has_value()) {
        throw snrilab::InvalidParams(
            "this frontend is conditioned; pass lambda_db");
      }
      lam = t.scalar_const(*lambda_db);
    } else if (lambda_db.has_value()) {
      throw snrilab::InvalidParams(
          "this frontend is unconditioned; lambda_db does not apply");
    }
    const snrilab::models::SeparatedTensors y =
        snrilab::models::snri_net_forward(t, ck_.params, ms_.snri, x_t, lam);
    return {as_array(y.speech.values()), as_array(y.noise.values())};
  }

  double predict_lambda(const py::array_t<double, py::array::c_style |
                                                      py::array::forcecast>& x) const {
    if (!has_predictor()) {
      throw snrilab::IncompatibleCheckpoint(
          "checkpoint has no target predictor (expected a joint checkpoint)");
    }
    snrilab::grad::Tape t;
    snrilab::grad::Tensor x_t =
        t.constant({static_cast<int>(x.size())}, as_vector(x));
    const snrilab::grad::Tensor lam =
        snrilab::models::pred_net_forward(t, ck_.params, ms_.pred, x_t, *ms_.pred_lm);
    return lam.values()[0];
  }

  py::array_t<double> log_probs(const py::array_t<double, py::array::c_style |
                                                              py::array::forcecast>& x) const {
    if (!has_backend()) {
      throw snrilab::IncompatibleCheckpoint("checkpoint has no backend");
    }
    snrilab::grad::Tape t;
    snrilab::grad::Tensor x_t =
        t.constant({static_cast<int>(x.size())}, as_vector(x));
    const snrilab::grad::Tensor lp = snrilab::models::backend_forward(
        t, ck_.params, ms_.backend, x_t, *ms_.backend_lm);
    return as_array(lp.values());
  }

 private:
  snrilab::grad::Checkpoint ck_;
  snrilab::models::ModelSet ms_;
  std::string network_;
};

}  // namespace

PYBIND11_MODULE(_snrilab, m) {
  m.doc() = "Exact metric kernels, audio utilities, and checkpoint inference";

  py::register_exception<snrilab::Error>(m, "Error");

  using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

  // --- metrics ----------------------------------------------------------
  m.def(
      "snr", [](const DArray& s, const DArray& n) {
        return snrilab::metrics::snr(as_vector(s), as_vector(n));
      },
      py::arg("s"), py::arg("n"),
      "10*log10(||s||^2 / ||n||^2)");

  m.def(
      "snri", [](const DArray& s, const DArray& n, const DArray& y1) {
        return snrilab::metrics::snri(as_vector(s), as_vector(n), as_vector(y1));
      },
      py::arg("s"), py::arg("n"), py::arg("y1"),
      "Output SNR of the speech estimate minus the input SNR");

  m.def(
      "sar", [](const DArray& s, const DArray& n, const DArray& y1, double tau) {
        snrilab::metrics::ThresholdConfig cfg;
        cfg.tau = tau;
        return snrilab::metrics::sar_decompose(as_vector(s), as_vector(n),
                                               as_vector(y1), cfg)
            .sar_db;
      },
      py::arg("s"), py::arg("n"), py::arg("y1"), py::arg("tau") = 1e-3,
      "Speech-to-artifact ratio of the estimate, in dB");

  m.def(
      "thresholded_snr_loss",
      [](const DArray& ref, const DArray& est, double tau) {
        return snrilab::metrics::thresholded_snr_loss(as_vector(ref),
                                                      as_vector(est), tau);
      },
      py::arg("ref"), py::arg("est"), py::arg("tau") = 1e-3,
      "-10*log10(||ref||^2 / (||ref - est||^2 + tau*||ref||^2))");

  m.def(
      "snri_target_loss",
      [](const DArray& s, const DArray& n, const DArray& y1, double lambda_db,
         double tau, double beta) {
        snrilab::metrics::ThresholdConfig cfg;
        cfg.tau = tau;
        cfg.beta = beta;
        const auto r = snrilab::metrics::snri_target_loss(
            as_vector(s), as_vector(n), as_vector(y1), lambda_db, cfg);
        py::dict d;
        d["total"] = r.total;
        d["snri_term"] = r.snri_term;
        d["sar_term"] = r.sar_term;
        return d;
      },
      py::arg("s"), py::arg("n"), py::arg("y1"), py::arg("lambda_db"),
      py::arg("tau") = 1e-3, py::arg("beta") = 0.01,
      "|lambda - snri|^2 + beta * artifact loss, with per-term breakdown");

  m.def(
      "postmix_control",
      [](const DArray& speech, const DArray& noise, double lambda_db,
         int sample_rate) {
        snrilab::metrics::SeparatedPair y{as_buffer(speech, sample_rate),
                                          as_buffer(noise, sample_rate)};
        return as_array(snrilab::metrics::postmix_control(y, lambda_db).samples);
      },
      py::arg("speech"), py::arg("noise"), py::arg("lambda_db"),
      py::arg("sample_rate") = 16000,
      "speech + 10^(-lambda/20) * noise: improvement control by remixing");

  m.def(
      "mixture_consistency",
      [](const DArray& x, const DArray& speech, const DArray& noise, double zeta,
         int sample_rate) {
        snrilab::metrics::SeparatedPair y{as_buffer(speech, sample_rate),
                                          as_buffer(noise, sample_rate)};
        const auto out = snrilab::metrics::mixture_consistency(
            as_buffer(x, sample_rate), y, zeta);
        return py::make_tuple(as_array(out.speech.samples),
                              as_array(out.noise.samples));
      },
      py::arg("x"), py::arg("speech"), py::arg("noise"), py::arg("zeta") = 0.5,
      py::arg("sample_rate") = 16000,
      "Distributes x - (speech + noise) so the estimates sum to x");

  // --- audio --------------------------------------------------------------
  m.def(
      "mix_at_snr",
      [](const DArray& s, const DArray& n, double snr_db, int sample_rate) {
        const auto r = snrilab::audio::mix_at_snr(as_buffer(s, sample_rate),
                                                  as_buffer(n, sample_rate), snr_db);
        return py::make_tuple(as_array(r.mixture.samples),
                              as_array(r.scaled_noise.samples), r.gain);
      },
      py::arg("s"), py::arg("n"), py::arg("snr_db"), py::arg("sample_rate") = 16000,
      "Returns (mixture, scaled_noise, gain) with snr(s, scaled_noise) = snr_db");

  m.def(
      "logmel",
      [](const DArray& x, int sample_rate, int n_mels, double window_ms,
         double hop_ms) {
        const auto fb = snrilab::audio::MelFilterbank::make(n_mels, window_ms,
                                                            hop_ms, sample_rate);
        return as_array2d(snrilab::audio::logmel(as_buffer(x, sample_rate), fb));
      },
      py::arg("x"), py::arg("sample_rate") = 16000, py::arg("n_mels") = 32,
      py::arg("window_ms") = 25.0, py::arg("hop_ms") = 10.0,
      "Log mel-power features, frames by bands");

  m.def(
      "pcm16_quantize",
      [](const DArray& x) {
        std::vector<double> v = as_vector(x);
        for (double& s : v) s = snrilab::audio::pcm16_quantize(s);
        return as_array(v);
      },
      py::arg("x"), "Rounds samples through 16-bit PCM, clipping to [-1, 1)");

  m.def(
      "wav_read",
      [](const std::filesystem::path& path) {
        const auto b = snrilab::audio::wav_read(path);
        return py::make_tuple(as_array(b.samples), b.sample_rate);
      },
      py::arg("path"), "Reads a 16-bit PCM WAV as (samples, sample_rate)");

  m.def(
      "wav_write",
      [](const std::filesystem::path& path, const DArray& x, int sample_rate) {
        snrilab::audio::wav_write(path, as_buffer(x, sample_rate));
      },
      py::arg("path"), py::arg("x"), py::arg("sample_rate") = 16000,
      "Writes samples as a 16-bit PCM WAV");

  m.def(
      "make_corpus",
      [](const std::filesystem::path& root, int n_speech, int n_noise,
         double duration_s, int sample_rate, std::uint64_t seed) {
        snrilab::audio::CorpusConfig cfg;
        cfg.n_speech = n_speech;
        cfg.n_noise = n_noise;
        cfg.duration_s = duration_s;
        cfg.sample_rate = sample_rate;
        cfg.seed = seed;
        const auto manifest = snrilab::audio::make_corpus(root, cfg);
        return static_cast<int>(manifest.entries.size());
      },
      py::arg("root"), py::arg("n_speech") = 24, py::arg("n_noise") = 12,
      py::arg("duration_s") = 1.0, py::arg("sample_rate") = 16000,
      py::arg("seed") = 1,
      "Synthesizes a labelled corpus under root; returns the entry count");

  // --- self-test and inference ------------------------------------------------
  m.def(
      "gradcheck",
      [](std::uint64_t seed) { return json_to_py(snrilab::harness::run_gradcheck(seed)); },
      py::arg("seed") = 7,
      "Finite-difference check of the joint loss; returns the report dict");

  py::class_<Enhancer>(m, "Enhancer",
                       "Runs the networks stored in a saved checkpoint")
      .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
      .def_property_readonly("conditioned", &Enhancer::conditioned)
      .def_property_readonly("has_predictor", &Enhancer::has_predictor)
      .def_property_readonly("has_backend", &Enhancer::has_backend)
      .def_property_readonly("network", &Enhancer::network)
      .def("enhance", &Enhancer::enhance, py::arg("x"),
           py::arg("lambda_db") = py::none(),
           "Separates x into (speech, noise); lambda_db sets the improvement "
           "target when the frontend is conditioned")
      .def("predict_lambda", &Enhancer::predict_lambda, py::arg("x"),
           "Improvement target the predictor picks for this mixture (dB)")
      .def("log_probs", &Enhancer::log_probs, py::arg("x"),
           "Backend class log-probabilities for a waveform");
}
