// Acceptance gate: ten numbered criteria spanning exact metric algebra up to
// full desk-scale training runs. Prints one PASS/FAIL line per criterion and
// exits nonzero if any hard-gated criterion fails. Runtime targets on the
// training criteria are reported but never gate (machine-speed dependent);
// everything else gates.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "snrilab/audio/corpus.hpp"
#include "snrilab/audio/wav.hpp"
#include "snrilab/common/errors.hpp"
#include "snrilab/common/rng.hpp"
#include "snrilab/grad/grad_check.hpp"
#include "snrilab/grad/tape.hpp"
#include "snrilab/harness/harness.hpp"
#include "snrilab/harness/run_config.hpp"
#include "snrilab/metrics/metrics.hpp"
#include "snrilab/models/models.hpp"
#include "snrilab/trainer/trainer.hpp"

using namespace snrilab;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Summary CSV -> (method, target) -> mean achieved, for one input SNR.
std::map<std::pair<std::string, double>, double> summary_means(
    const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot read '" + csv.string() + "'");
  std::string line;
  std::getline(in, line);  // header
  std::map<std::pair<std::string, double>, double> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string method, snr, target, mean, rest;
    std::getline(ss, method, ',');
    std::getline(ss, snr, ',');
    std::getline(ss, target, ',');
    std::getline(ss, mean, ',');
    out[{method, std::stod(target)}] = std::stod(mean);
  }
  return out;
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[idx[i]] = static_cast<double>(i + 1);
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mean = (n + 1) / 2.0;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  return num / std::sqrt(dx * dy);
}

// --- shared state across criteria ------------------------------------------------

struct Artifacts {
  std::filesystem::path root;
  audio::CorpusManifest corpus;
  std::filesystem::path manifest_path;

  models::SnriNetConfig cond_cfg, uncond_cfg;
  grad::Params cond_params, uncond_params;
  std::filesystem::path cond_ckpt, uncond_ckpt;
  bool frontends_ready = false;

  models::ModelSet joint_ms;
  grad::Params joint_params;
  std::filesystem::path joint_ckpt;
  bool joint_ready = false;
};

json frontend_meta(const models::SnriNetConfig& cfg) {
  return json{{"network", "snri_net"},
              {"configs", json{{"snri_net", harness::to_json(cfg)}}}};
}

json joint_meta(const models::ModelSet& ms) {
  return json{{"network", "joint"},
              {"configs", json{{"snri_net", harness::to_json(ms.snri)},
                               {"pred_net", harness::to_json(ms.pred)},
                               {"backend", harness::to_json(ms.backend)},
                               {"thresholds",
                                harness::to_json(metrics::ThresholdConfig{})}}}};
}

// Fine-tune starting point: trained frontend and backend parameters plus a
// freshly initialized predictor, assembled the same way the fine-tune itself
// would, so start-vs-final comparisons measure the same deployment.
grad::Params assemble_joint_start(const models::ModelSet& ms,
                                  const grad::Params& frontend,
                                  const grad::Params& backend,
                                  std::uint64_t seed) {
  grad::Params start;
  Rng rng(seed);
  models::init_snri_net(start, ms.snri, rng);
  models::init_backend(start, ms.backend, rng);
  models::init_pred_net(start, ms.pred, rng);
  for (const auto& [key, p] : frontend) start[key] = p;
  for (const auto& [key, p] : backend) start[key] = p;
  return start;
}

// --- criteria ------------------------------------------------------------------

Outcome criterion_1() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  double worst_snri = 0.0, worst_tsl = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_vec(rng, 64, 0.7);
    const auto n = random_vec(rng, 64, 0.9);
    std::vector<double> x(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) x[k] = s[k] + n[k];
    worst_snri = std::max(worst_snri, std::abs(metrics::snri(s, n, x)));
    worst_tsl = std::max(
        worst_tsl, std::abs(metrics::thresholded_snr_loss(s, s, 1e-3) + 30.0));
  }
  const double dt = seconds_since(t0);
  const bool pass = worst_snri <= 1e-12 && worst_tsl <= 1e-12 && dt < 1.0;
  return {pass, "identity snri err " + fmt(worst_snri) + ", floored loss err " +
                    fmt(worst_tsl) + ", " + fmt(dt) + " s (< 1 s)"};
}

Outcome criterion_2() {
  const auto t0 = Clock::now();
  Rng rng(1002);
  const metrics::ThresholdConfig cfg;
  double worst_complete = 0.0, worst_ortho = 0.0;
  bool optimal = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_vec(rng, 32, 0.7);
    const auto n = random_vec(rng, 32, 0.9);
    auto y1 = random_vec(rng, 32, 0.5);
    for (std::size_t i = 0; i < y1.size(); ++i) y1[i] += s[i];
    const auto d = metrics::sar_decompose(s, n, y1, cfg);

    double rnorm = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double r = y1[i] - s[i];
      comp = std::max(comp, std::abs(d.e_interf[i] + d.e_artif[i] - r));
      rnorm = std::max(rnorm, std::abs(r));
    }
    worst_complete = std::max(worst_complete, comp / std::max(1.0, rnorm));

    double ip = 0.0, ei = 0.0, ea = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      ip += d.e_interf[i] * d.e_artif[i];
      ei += d.e_interf[i] * d.e_interf[i];
      ea += d.e_artif[i] * d.e_artif[i];
    }
    const double scale = std::max(std::sqrt(ei) * std::sqrt(ea), 1e-30);
    worst_ortho = std::max(worst_ortho, std::abs(ip) / scale);

    const double best = ea;
    for (int probe = 0; probe < 1000; ++probe) {
      const double a = rng.uniform(-2.0, 2.0);
      const double b = rng.uniform(-2.0, 2.0);
      double cand = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double diff = (y1[i] - s[i]) - (a * s[i] + b * n[i]);
        cand += diff * diff;
      }
      optimal = optimal && best <= cand + 1e-12;
    }
  }
  const double dt = seconds_since(t0);
  const bool pass =
      worst_complete <= 1e-12 && worst_ortho <= 1e-9 && optimal && dt < 5.0;
  return {pass, "completeness " + fmt(worst_complete) + ", orthogonality " +
                    fmt(worst_ortho) + ", optimality " +
                    (optimal ? "holds" : "VIOLATED") + ", " + fmt(dt) +
                    " s (< 5 s)"};
}

Outcome criterion_3() {
  const auto t0 = Clock::now();
  Rng rng(1003);
  double worst_sum = 0.0, worst_idem = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto xs = random_vec(rng, 48, 0.8);
    const audio::AudioBuffer x{xs, 16000};
    metrics::SeparatedPair y{
        audio::AudioBuffer{random_vec(rng, 48, 0.5), 16000},
        audio::AudioBuffer{random_vec(rng, 48, 0.5), 16000}};
    const double zeta = rng.uniform(0.0, 1.0);
    const auto out = metrics::mixture_consistency(x, y, zeta);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double sum = out.speech.samples[i] + out.noise.samples[i];
      worst_sum = std::max(worst_sum,
                           std::abs(sum - xs[i]) / std::max(1.0, std::abs(xs[i])));
    }
    const auto again = metrics::mixture_consistency(x, out, zeta);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      worst_idem = std::max(
          worst_idem, std::abs(again.speech.samples[i] - out.speech.samples[i]));
      worst_idem = std::max(
          worst_idem, std::abs(again.noise.samples[i] - out.noise.samples[i]));
    }
  }
  const double dt = seconds_since(t0);
  const bool pass = worst_sum <= 1e-12 && worst_idem <= 1e-12 && dt < 1.0;
  return {pass, "sum preservation " + fmt(worst_sum) + ", idempotence " +
                    fmt(worst_idem) + ", " + fmt(dt) + " s (< 1 s)"};
}

Outcome criterion_4() {
  const auto t0 = Clock::now();
  Rng rng(1004);
  const auto s = random_vec(rng, 256, 0.5);
  const auto n = random_vec(rng, 256, 0.6);
  const metrics::SeparatedPair perfect{audio::AudioBuffer{s, 16000},
                                       audio::AudioBuffer{n, 16000}};
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double lambda = rng.uniform(0.0, 20.0);
    const auto y = metrics::postmix_control(perfect, lambda);
    worst = std::max(worst, std::abs(metrics::snri(s, n, y.samples) - lambda));
  }
  const double dt = seconds_since(t0);
  const bool pass = worst <= 1e-6 && dt < 1.0;
  return {pass, "|achieved - lambda| max " + fmt(worst) + " over 100 targets, " +
                    fmt(dt) + " s (< 1 s)"};
}

Outcome criterion_5() {
  const auto t0 = Clock::now();
  using grad::Tape;
  using grad::Tensor;

  auto make_param = [](std::vector<int> shape, Rng& rng, double scale) {
    grad::Param p;
    p.shape = std::move(shape);
    p.value.resize(grad::shape_product(p.shape));
    for (double& v : p.value) v = scale * rng.normal();
    return p;
  };
  auto make_pos = [](std::vector<int> shape, Rng& rng, double lo, double hi) {
    grad::Param p;
    p.shape = std::move(shape);
    p.value.resize(grad::shape_product(p.shape));
    for (double& v : p.value) v = rng.uniform(lo, hi);
    return p;
  };
  auto make_off = [](std::vector<int> shape, Rng& rng) {
    grad::Param p;
    p.shape = std::move(shape);
    p.value.resize(grad::shape_product(p.shape));
    for (double& v : p.value) {
      const double mag = rng.uniform(0.2, 1.2);
      v = rng.bernoulli(0.5) ? mag : -mag;
    }
    return p;
  };
  auto contract = [](Tape& t, const Tensor& out) {
    Rng wr(0x5eedu);
    std::vector<double> w(out.size());
    for (double& v : w) v = wr.uniform(-1.0, 1.0);
    return grad::sum(grad::mul(t.constant(out.shape(), std::move(w)), out));
  };

  using Leaves = std::map<std::string, Tensor>;
  using Builder = std::function<Tensor(Tape&, Leaves&)>;
  struct OpCase {
    const char* name;
    grad::Params params;
    Builder build;
  };

  Rng rng(1005);
  std::vector<OpCase> cases;
  cases.push_back({"add", {{"a", make_param({3, 4}, rng, 1)}, {"b", make_param({3, 4}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::add(l["a"], l["b"])); }});
  cases.push_back({"sub", {{"a", make_param({3, 4}, rng, 1)}, {"b", make_param({3, 4}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::sub(l["a"], l["b"])); }});
  cases.push_back({"mul", {{"a", make_param({3, 4}, rng, 1)}, {"b", make_param({3, 4}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::mul(l["a"], l["b"])); }});
  cases.push_back({"affine", {{"a", make_param({2, 5}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::affine(l["a"], 2.5, -0.7)); }});
  cases.push_back({"matmul", {{"a", make_param({3, 4}, rng, 1)}, {"b", make_param({4, 2}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::matmul(l["a"], l["b"])); }});
  cases.push_back({"conv1d", {{"x", make_param({2, 16}, rng, 0.7)}, {"w", make_param({3, 2, 4}, rng, 0.5)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::conv1d(l["x"], l["w"], 2, 2, 1, 2)); }});
  cases.push_back({"transposed_conv1d", {{"x", make_param({2, 5}, rng, 1)}, {"w", make_param({2, 3, 4}, rng, 0.5)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::transposed_conv1d(l["x"], l["w"], 2)); }});
  cases.push_back({"add_channel_bias", {{"a", make_param({3, 5}, rng, 1)}, {"b", make_param({3}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::add_channel_bias(l["a"], l["b"])); }});
  cases.push_back({"concat", {{"a", make_param({3, 2}, rng, 1)}, {"b", make_param({3, 1}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::concat(l["a"], l["b"], 1)); }});
  cases.push_back({"slice", {{"a", make_param({4, 6}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::slice(l["a"], 1, 2, 3)); }});
  cases.push_back({"expand", {{"a", make_param({3, 1}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::expand(l["a"], 1, 4)); }});
  cases.push_back({"reshape", {{"a", make_param({4, 6}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::reshape(l["a"], {3, 8})); }});
  cases.push_back({"transpose2d", {{"a", make_param({3, 5}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::transpose2d(l["a"])); }});
  cases.push_back({"frame", {{"x", make_param({20}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::frame(l["x"], 6, 3)); }});
  cases.push_back({"relu", {{"a", make_off({4, 5}, rng)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::relu(l["a"])); }});
  cases.push_back({"sigmoid", {{"a", make_param({4, 5}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::sigmoid(l["a"])); }});
  cases.push_back({"tanh", {{"a", make_param({4, 5}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::tanh_op(l["a"])); }});
  cases.push_back({"log", {{"a", make_pos({4, 5}, rng, 0.5, 2.0)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::log_op(l["a"])); }});
  cases.push_back({"square", {{"a", make_param({4, 5}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::square(l["a"])); }});
  cases.push_back({"sum", {{"a", make_param({4, 5}, rng, 1)}},
                   [&](Tape& t, Leaves& l) {
                     return grad::mul(grad::sum(l["a"]), grad::sum(grad::square(l["a"])));
                   }});
  cases.push_back({"mean", {{"a", make_param({4, 5}, rng, 1)}},
                   [&](Tape& t, Leaves& l) {
                     return grad::mul(grad::mean(l["a"]), grad::mean(grad::square(l["a"])));
                   }});
  cases.push_back({"mean_pool_time", {{"a", make_param({3, 7}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::mean_pool_time(l["a"])); }});
  cases.push_back({"layer_norm",
                   {{"a", make_param({4, 6}, rng, 1)},
                    {"gain", make_pos({4}, rng, 0.5, 1.5)},
                    {"bias", make_param({4}, rng, 0.3)}},
                   [&](Tape& t, Leaves& l) {
                     return contract(t, grad::layer_norm(l["a"], l["gain"], l["bias"]));
                   }});
  cases.push_back({"mel_apply", {{"p", make_pos({3, 5}, rng, 0.5, 1.5)}},
                   [&](Tape& t, Leaves& l) {
                     auto w = std::make_shared<std::vector<double>>();
                     Rng wr(55);
                     for (int i = 0; i < 2 * 5; ++i) w->push_back(wr.uniform(0.1, 1.0));
                     return contract(t, grad::mel_apply(l["p"], w, 2, 1e-10));
                   }});
  cases.push_back({"log_softmax", {{"a", make_param({7}, rng, 1)}},
                   [&](Tape& t, Leaves& l) { return contract(t, grad::log_softmax(l["a"])); }});

  int failed = 0;
  double worst = 0.0;
  std::string first_fail;
  for (auto& c : cases) {
    grad::LossWithGrad eval = [&c](const grad::Params& p, grad::GradMap* g) {
      Tape tape;
      Leaves leaves;
      for (const auto& [name, param] : p) leaves[name] = tape.leaf(name, param);
      Tensor loss = c.build(tape, leaves);
      const double v = loss.scalar();
      if (g) *g = tape.backward(loss);
      return v;
    };
    const auto report = grad::grad_check(eval, c.params, grad::GradCheckOptions{});
    worst = std::max(worst, report.max_rel_err);
    if (!report.passed) {
      ++failed;
      if (first_fail.empty()) first_fail = c.name;
    }
  }

  const json joint = harness::run_gradcheck(1005);
  const bool joint_ok = joint.at("joint_loss_check").at("passed").get<bool>() &&
                        joint.at("task_term_predictor_check").at("passed").get<bool>();

  const double dt = seconds_since(t0);
  const bool pass = failed == 0 && joint_ok && dt < 60.0;
  std::string detail = std::to_string(cases.size()) +
                       " primitives, worst rel err " + fmt(worst) +
                       (failed ? ", FAILED at " + first_fail : "") +
                       "; joint loss " + (joint_ok ? "passes" : "FAILS") + ", " +
                       fmt(dt) + " s (< 60 s)";
  return {pass, detail};
}

Outcome criterion_6() {
  const auto t0 = Clock::now();
  const json report = harness::run_gradcheck(7);
  const double aux_norm =
      report.at("improvement_term_pred_grad_norm").get<double>();
  const double task_norm = report.at("task_term_pred_grad_norm").get<double>();
  const double dt = seconds_since(t0);
  const bool pass = aux_norm == 0.0 && task_norm > 0.0 && dt < 10.0;
  return {pass, "improvement-term predictor grad " + fmt(aux_norm) +
                    " (exact zero required), task-term " + fmt(task_norm) +
                    ", " + fmt(dt) + " s (< 10 s)"};
}

Outcome criterion_7(Artifacts& art) {
  const auto t0 = Clock::now();

  art.corpus = audio::make_corpus(art.root / "corpus", audio::CorpusConfig{});
  art.manifest_path = art.root / "corpus" / "manifest.json";

  trainer::TrainConfig cfg;  // 2000 steps, batch 8, lr 1e-3, seed 1
  const metrics::ThresholdConfig tcfg;
  art.cond_cfg = models::SnriNetConfig{};
  art.uncond_cfg = models::SnriNetConfig{};
  art.uncond_cfg.conditioned = false;

  const auto cond =
      trainer::pretrain_snri_net(cfg, art.cond_cfg, tcfg, art.corpus, nullptr);
  const auto uncond =
      trainer::pretrain_snri_net(cfg, art.uncond_cfg, tcfg, art.corpus, nullptr);
  art.cond_params = cond.params;
  art.uncond_params = uncond.params;
  art.cond_ckpt = art.root / "snri_net_cond.json";
  art.uncond_ckpt = art.root / "snri_net_uncond.json";
  harness::save_model_checkpoint(art.cond_ckpt, art.cond_params,
                                 frontend_meta(art.cond_cfg));
  harness::save_model_checkpoint(art.uncond_ckpt, art.uncond_params,
                                 frontend_meta(art.uncond_cfg));
  art.frontends_ready = true;

  harness::EvalControlArgs eargs;
  eargs.manifest_path = art.manifest_path;
  eargs.ckpt_path = art.cond_ckpt;
  eargs.baseline_ckpt_path = art.uncond_ckpt;
  eargs.out_dir = art.root / "eval_control";
  eargs.targets = {0.0, 3.0, 6.0, 9.0, 12.0};
  eargs.input_snrs = {5.0};
  eargs.utterances = 24;
  eargs.seed = 1;
  const auto paths = harness::cmd_eval_control(eargs);
  const auto means = summary_means(paths.summary_csv);

  const double err3 = std::abs(means.at({"snri_net", 3.0}) - 3.0);
  const double err6 = std::abs(means.at({"snri_net", 6.0}) - 6.0);

  std::vector<double> targets = {0.0, 3.0, 6.0, 9.0, 12.0};
  std::vector<double> achieved;
  for (double t : targets) achieved.push_back(means.at({"snri_net", t}));
  const double rho = spearman_rho(targets, achieved);

  bool under = true;
  double worst_over = -1e9;
  for (double t : targets) {
    const double over = means.at({"postmix", t}) - t;
    worst_over = std::max(worst_over, over);
    under = under && over <= 0.5;
  }

  const double dt = seconds_since(t0);
  const bool pass = err3 <= 2.0 && err6 <= 2.0 && rho > 0.9 && under;
  return {pass, "|mean-target| " + fmt(err3) + " @3 dB, " + fmt(err6) +
                    " @6 dB (<= 2); Spearman rho " + fmt(rho, 4) +
                    " (> 0.9); postmix overshoot max " + fmt(worst_over) +
                    " dB (<= 0.5); " + fmt(dt / 60.0) +
                    " min (target < 30, reported only)"};
}

Outcome criterion_8(Artifacts& art) {
  if (!art.frontends_ready) {
    return {false, "prerequisite criterion 7 did not produce checkpoints"};
  }
  const auto t0 = Clock::now();
  const metrics::ThresholdConfig tcfg;

  trainer::TrainConfig pre_cfg;  // 2000 steps
  const auto backend_params =
      trainer::pretrain_backend(pre_cfg, models::BackendConfig{}, art.corpus,
                                nullptr);

  art.joint_ms.snri = art.cond_cfg;
  art.joint_ms.pred = models::PredNetConfig{};
  art.joint_ms.backend = models::BackendConfig{};
  art.joint_ms.build();

  trainer::TrainConfig ft_cfg;
  ft_cfg.steps = 1000;
  const grad::Params start = assemble_joint_start(art.joint_ms, art.cond_params,
                                                  backend_params, ft_cfg.seed);

  const auto result = trainer::finetune_joint(
      ft_cfg, art.joint_ms, tcfg, start, art.corpus,
      models::JointMode::proposed, nullptr);
  art.joint_params = result.params;
  art.joint_ckpt = art.root / "joint.json";
  harness::save_model_checkpoint(art.joint_ckpt, art.joint_params,
                                 joint_meta(art.joint_ms));
  art.joint_ready = true;

  const auto held_out = trainer::make_eval_examples(art.corpus, 24, 5.0, 777);
  const double loss_start = trainer::mean_task_loss(
      start, art.joint_ms, held_out, trainer::EvalPipeline::proposed);
  const double loss_final = trainer::mean_task_loss(
      art.joint_params, art.joint_ms, held_out, trainer::EvalPipeline::proposed);

  double lam_lo = 1e9, lam_hi = -1e9;
  for (const auto& ex : held_out) {
    grad::Tape t;
    grad::Tensor x_t =
        t.constant({static_cast<int>(ex.x.size())}, ex.x.samples);
    const double lam = models::pred_net_forward(t, art.joint_params,
                                                art.joint_ms.pred, x_t,
                                                *art.joint_ms.pred_lm)
                           .scalar();
    lam_lo = std::min(lam_lo, lam);
    lam_hi = std::max(lam_hi, lam);
  }
  const bool lam_ok = lam_lo >= 0.0 && lam_hi <= 20.0;

  const double dt = seconds_since(t0);
  const bool pass = loss_final <= loss_start && lam_ok &&
                    result.max_audit_pred_grad == 0.0;
  return {pass, "held-out task loss " + fmt(loss_start, 5) + " -> " +
                    fmt(loss_final, 5) + " (must not increase); lambda_hat in [" +
                    fmt(lam_lo) + ", " + fmt(lam_hi) +
                    "] (within [0, 20]); audit pred grad " +
                    fmt(result.max_audit_pred_grad) + "; " + fmt(dt / 60.0) +
                    " min (target < 20, reported only)"};
}

Outcome criterion_9(Artifacts& art) {
  if (!art.joint_ready) {
    return {false, "prerequisite criterion 8 did not produce a joint checkpoint"};
  }
  harness::EvalLambdaArgs args;
  args.manifest_path = art.manifest_path;
  args.ckpt_path = art.joint_ckpt;
  args.out_dir = art.root / "eval_lambda";
  args.utterances = 12;
  args.seed = 1;
  const auto paths = harness::cmd_eval_lambda(args);
  const json report = json::parse(read_file(paths.report_json));

  const double lam_min = report.at("lambda_hat_min_db").get<double>();
  const double lam_max = report.at("lambda_hat_max_db").get<double>();
  const bool range_ok = lam_min >= 0.0 && lam_max <= 20.0;

  int held = 0, total = 0;
  std::string flagged;
  for (const auto& e : report.at("expectations")) {
    ++total;
    if (e.at("holds").get<bool>()) {
      ++held;
    } else {
      flagged += (flagged.empty() ? "" : ", ") + e.at("name").get<std::string>();
    }
  }

  // The directional expectations are reported and flagged, never gated.
  return {range_ok, "lambda_hat in [" + fmt(lam_min) + ", " + fmt(lam_max) +
                        "] (hard gate); " + std::to_string(held) + "/" +
                        std::to_string(total) + " soft expectations hold" +
                        (flagged.empty() ? "" : " (flagged: " + flagged + ")")};
}

Outcome criterion_10(Artifacts& art) {
  const auto t0 = Clock::now();
  const auto dir = art.root / "repro";
  std::filesystem::create_directories(dir);
  std::string failures;

  // Corpus synthesis: identical bytes for every file.
  const audio::CorpusConfig ccfg;
  audio::make_corpus(dir / "corpus_a", ccfg);
  audio::make_corpus(dir / "corpus_b", ccfg);
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(dir / "corpus_a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir / "corpus_a");
    if (read_file(entry.path()) != read_file(dir / "corpus_b" / rel)) {
      failures += "corpus file " + rel.string() + "; ";
    }
  }

  // Mixture sets.
  harness::MixArgs margs;
  margs.manifest_path = dir / "corpus_a" / "manifest.json";
  margs.out_dir = dir / "mix_a";
  margs.count = 6;
  margs.seed = 11;
  harness::cmd_mix(margs);
  margs.out_dir = dir / "mix_b";
  harness::cmd_mix(margs);
  for (const auto& entry : std::filesystem::directory_iterator(dir / "mix_a")) {
    const auto rel = entry.path().filename();
    if (read_file(entry.path()) != read_file(dir / "mix_b" / rel)) {
      failures += "mixture file " + rel.string() + "; ";
    }
  }

  // Short desk-config training runs, checkpointed and hashed as bytes.
  const auto corpus = audio::CorpusManifest::load(dir / "corpus_a" / "manifest.json");
  const metrics::ThresholdConfig tcfg;
  trainer::TrainConfig cfg;
  cfg.steps = 20;

  models::ModelSet ms;
  ms.snri = models::SnriNetConfig{};
  ms.pred = models::PredNetConfig{};
  ms.backend = models::BackendConfig{};
  ms.build();
  models::SnriNetConfig ucfg;
  ucfg.conditioned = false;

  auto ckpt_bytes = [&](const grad::Params& p, const json& meta,
                        const std::string& name) {
    const auto path = dir / name;
    harness::save_model_checkpoint(path, p, meta);
    return read_file(path);
  };

  const auto cond1 =
      trainer::pretrain_snri_net(cfg, ms.snri, tcfg, corpus, nullptr).params;
  const auto cond2 =
      trainer::pretrain_snri_net(cfg, ms.snri, tcfg, corpus, nullptr).params;
  if (ckpt_bytes(cond1, frontend_meta(ms.snri), "cond1.json") !=
      ckpt_bytes(cond2, frontend_meta(ms.snri), "cond2.json")) {
    failures += "conditioned pretraining; ";
  }

  const auto un1 =
      trainer::pretrain_snri_net(cfg, ucfg, tcfg, corpus, nullptr).params;
  const auto un2 =
      trainer::pretrain_snri_net(cfg, ucfg, tcfg, corpus, nullptr).params;
  if (ckpt_bytes(un1, frontend_meta(ucfg), "un1.json") !=
      ckpt_bytes(un2, frontend_meta(ucfg), "un2.json")) {
    failures += "unconditioned pretraining; ";
  }

  const auto be1 = trainer::pretrain_backend(cfg, ms.backend, corpus, nullptr);
  const auto be2 = trainer::pretrain_backend(cfg, ms.backend, corpus, nullptr);
  if (ckpt_bytes(be1, joint_meta(ms), "be1.json") !=
      ckpt_bytes(be2, joint_meta(ms), "be2.json")) {
    failures += "backend pretraining; ";
  }

  const grad::Params start = assemble_joint_start(ms, cond1, be1, cfg.seed);
  const auto ft1 = trainer::finetune_joint(cfg, ms, tcfg, start, corpus,
                                           models::JointMode::proposed, nullptr);
  const auto ft2 = trainer::finetune_joint(cfg, ms, tcfg, start, corpus,
                                           models::JointMode::proposed, nullptr);
  const std::string joint1 = ckpt_bytes(ft1.params, joint_meta(ms), "joint1.json");
  if (joint1 != ckpt_bytes(ft2.params, joint_meta(ms), "joint2.json")) {
    failures += "joint fine-tune; ";
  }

  // Evaluation commands: byte-identical CSVs across runs.
  harness::save_model_checkpoint(dir / "ck_cond.json", cond1,
                                 frontend_meta(ms.snri));
  harness::save_model_checkpoint(dir / "ck_un.json", un1, frontend_meta(ucfg));
  harness::EvalControlArgs eargs;
  eargs.manifest_path = dir / "corpus_a" / "manifest.json";
  eargs.ckpt_path = dir / "ck_cond.json";
  eargs.baseline_ckpt_path = dir / "ck_un.json";
  eargs.targets = {3.0, 6.0};
  eargs.input_snrs = {5.0};
  eargs.utterances = 6;
  eargs.seed = 1;
  eargs.out_dir = dir / "ec_a";
  const auto ec1 = harness::cmd_eval_control(eargs);
  eargs.out_dir = dir / "ec_b";
  const auto ec2 = harness::cmd_eval_control(eargs);
  if (read_file(ec1.per_utterance_csv) != read_file(ec2.per_utterance_csv) ||
      read_file(ec1.summary_csv) != read_file(ec2.summary_csv)) {
    failures += "eval-control CSVs; ";
  }

  harness::save_model_checkpoint(dir / "ck_joint.json", ft1.params,
                                 joint_meta(ms));
  harness::EvalLambdaArgs largs;
  largs.manifest_path = dir / "corpus_a" / "manifest.json";
  largs.ckpt_path = dir / "ck_joint.json";
  largs.utterances = 4;
  largs.seed = 1;
  largs.out_dir = dir / "el_a";
  const auto el1 = harness::cmd_eval_lambda(largs);
  largs.out_dir = dir / "el_b";
  const auto el2 = harness::cmd_eval_lambda(largs);
  if (read_file(el1.csv) != read_file(el2.csv) ||
      read_file(el1.report_json) != read_file(el2.report_json)) {
    failures += "eval-lambda outputs; ";
  }

  const double dt = seconds_since(t0);
  const bool pass = failures.empty();
  return {pass, pass ? "corpus, mixtures, 4 training procedures, and both eval "
                       "commands byte-identical across reruns (" +
                           fmt(dt / 60.0) + " min)"
                     : "mismatches: " + failures};
}

}  // namespace

int main() {
  std::filesystem::path root =
      std::filesystem::temp_directory_path() /
      ("snrilab_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);

  Artifacts art;
  art.root = root;

  struct Criterion {
    int number;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, [] { return criterion_1(); }},
      {2, [] { return criterion_2(); }},
      {3, [] { return criterion_3(); }},
      {4, [] { return criterion_4(); }},
      {5, [] { return criterion_5(); }},
      {6, [] { return criterion_6(); }},
      {7, [&art] { return criterion_7(art); }},
      {8, [&art] { return criterion_8(art); }},
      {9, [&art] { return criterion_9(art); }},
      {10, [&art] { return criterion_10(art); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    try {
      out = c.run();
    } catch (const Error& e) {
      out = {false, std::string(e.name()) + ": " + e.what()};
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    if (!out.pass) ++failures;
    std::printf("CRITERION %2d: %s — %s\n", c.number,
                out.pass ? "PASS" : "FAIL", out.detail.c_str());
    std::fflush(stdout);
  }

  std::filesystem::remove_all(root);
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
