#include "snrilab/models/models.hpp"

#include <cmath>
#include <cstddef>
#include <string>

#include "snrilab/common/errors.hpp"

namespace snrilab::models {

namespace {

constexpr double kPi = 3.14159265358979323846;

grad::Tensor leafp(grad::Tape& t, const grad::Params& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) {
    throw IncompatibleCheckpoint("missing parameter '" + key + "'");
  }
  return t.leaf(key, it->second);
}

void insert_param(grad::Params& params, const std::string& key,
                  std::vector<int> shape, std::vector<double> values) {
  grad::Param p;
  p.shape = std::move(shape);
  p.value = std::move(values);
  params[key] = std::move(p);
}

std::vector<double> normal_values(Rng& rng, std::size_t n, double stddev) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal(0.0, stddev);
  return v;
}

// Conv-style init: zero-mean normals at 1/sqrt(fan_in), zero biases.
void init_conv(grad::Params& params, Rng& rng, const std::string& wkey,
               const std::string& bkey, int c_out, int c_in, int k) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(c_in) * k);
  insert_param(params, wkey, {c_out, c_in, k},
               normal_values(rng, static_cast<std::size_t>(c_out) * c_in * k, stddev));
  if (!bkey.empty()) {
    insert_param(params, bkey, {c_out}, std::vector<double>(c_out, 0.0));
  }
}

void init_block(grad::Params& params, Rng& rng, const std::string& prefix,
                int width, int hidden, int kernel) {
  init_conv(params, rng, prefix + "wf", prefix + "bf", hidden, width, kernel);
  init_conv(params, rng, prefix + "wg", prefix + "bg", hidden, width, kernel);
  init_conv(params, rng, prefix + "wp", prefix + "bp", width, hidden, 1);
  insert_param(params, prefix + "ln_g", {width}, std::vector<double>(width, 1.0));
  insert_param(params, prefix + "ln_b", {width}, std::vector<double>(width, 0.0));
}

// Dilation schedule for the temporal blocks: 1, 4, 16, ... — a wide receptive
// field per parameter, which matters for estimating noise statistics.
int block_dilation(int block_index) {
  int d = 1;
  for (int i = 0; i < block_index; ++i) d *= 4;
  return d;
}

// Gated dilated residual block over h (C, N).
grad::Tensor temporal_block(grad::Tape& t, const grad::Params& params,
                            const std::string& prefix, const grad::Tensor& h,
                            int dilation) {
  const int kernel = params.at(prefix + "wf").shape[2];
  const int pad = dilation * (kernel - 1) / 2;
  grad::Tensor f = grad::add_channel_bias(
      grad::conv1d(h, leafp(t, params, prefix + "wf"), 1, dilation, pad, pad),
      leafp(t, params, prefix + "bf"));
  grad::Tensor g = grad::add_channel_bias(
      grad::conv1d(h, leafp(t, params, prefix + "wg"), 1, dilation, pad, pad),
      leafp(t, params, prefix + "bg"));
  grad::Tensor u = grad::mul(grad::tanh_op(f), grad::sigmoid(g));
  grad::Tensor p = grad::add_channel_bias(
      grad::conv1d(u, leafp(t, params, prefix + "wp"), 1, 1, 0, 0),
      leafp(t, params, prefix + "bp"));
  grad::Tensor normed = grad::layer_norm(p, leafp(t, params, prefix + "ln_g"),
                                         leafp(t, params, prefix + "ln_b"));
  return grad::add(h, normed);
}

// Shared trunk of the scalar heads: log-mel -> 1x1 projection -> blocks -> pool.
grad::Tensor pooled_features(grad::Tape& t, const grad::Params& params,
                             const std::string& group, int n_blocks,
                             const grad::Tensor& wave, const LogMelGraph& lm) {
  grad::Tensor feats = lm.apply(t, wave);          // (frames, n_mels)
  grad::Tensor ft = grad::transpose2d(feats);      // (n_mels, frames)
  grad::Tensor h = grad::add_channel_bias(
      grad::conv1d(ft, leafp(t, params, group + "/in_w"), 1, 1, 0, 0),
      leafp(t, params, group + "/in_b"));
  for (int i = 0; i < n_blocks; ++i) {
    const std::string prefix = group + "/blk" + std::to_string(i) + "_";
    h = temporal_block(t, params, prefix, h, block_dilation(i));
  }
  return grad::mean_pool_time(h);  // (hidden,)
}

// 10/ln(10); converts natural logs of energies to decibels.
constexpr double kDbPerNat = 4.342944819032518;

double energy_of(const std::vector<double>& v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

// sum((est - ref)^2) as a scalar tensor.
grad::Tensor residual_energy(grad::Tape& t, const grad::Tensor& est,
                             const std::vector<double>& ref) {
  grad::Tensor ref_t = t.constant({static_cast<int>(ref.size())}, ref);
  return grad::sum(grad::square(grad::sub(est, ref_t)));
}

}  // namespace

// --- configs -----------------------------------------------------------------

int SnriNetConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * 1e-3 * sample_rate));
}

int SnriNetConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * 1e-3 * sample_rate));
}

void SnriNetConfig::validate() const {
  if (encoder_basis < 1 || bottleneck < 1 || n_blocks < 1 || hidden < 1) {
    throw InvalidParams("frontend widths and depth must be positive");
  }
  if (sample_rate <= 0) throw InvalidParams("sample_rate must be positive");
  if (window_samples() < 1 || hop_samples() < 1 || hop_samples() > window_samples()) {
    throw InvalidParams("encoder window/hop configuration is invalid");
  }
  if (!(zeta >= 0.0 && zeta <= 1.0)) {
    throw InvalidParams("zeta must lie in [0, 1]");
  }
  if (!(lambda_min < lambda_max) || !std::isfinite(lambda_min) ||
      !std::isfinite(lambda_max)) {
    throw InvalidParams("lambda range must be finite with min < max");
  }
}

void PredNetConfig::validate() const {
  if (n_blocks < 1 || hidden < 1 || n_mels < 1) {
    throw InvalidParams("predictor widths and depth must be positive");
  }
  if (!(lambda_min < lambda_max) || !std::isfinite(lambda_min) ||
      !std::isfinite(lambda_max)) {
    throw InvalidParams("lambda range must be finite with min < max");
  }
  // The filterbank constructor rejects the remaining combinations.
  audio::MelFilterbank::make(n_mels, window_ms, hop_ms, sample_rate);
}

void BackendConfig::validate() const {
  if (n_classes < 2) throw InvalidParams("need at least two classes");
  if (n_blocks < 1 || hidden < 1 || n_mels < 1) {
    throw InvalidParams("backend widths and depth must be positive");
  }
  audio::MelFilterbank::make(n_mels, window_ms, hop_ms, sample_rate);
}

// --- LogMelGraph ---------------------------------------------------------------

LogMelGraph::LogMelGraph(int n_mels, double window_ms, double hop_ms, int sample_rate)
    : fb_(audio::MelFilterbank::make(n_mels, window_ms, hop_ms, sample_rate)) {
  const int win = fb_.window_samples;
  const int n_fft = fb_.n_fft;
  const int n_bins = fb_.n_bins();
  const std::vector<double> window = audio::hann_window(win);
  // Column k holds cos, column n_bins + k holds sin; the power of bin k is
  // then (x.D[:,k])^2 + (x.D[:,n_bins+k])^2, identical to |rfft|^2 of the
  // windowed, zero-padded frame.
  auto dft = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(win) * 2 * n_bins, 0.0);
  for (int i = 0; i < win; ++i) {
    for (int k = 0; k < n_bins; ++k) {
      const double phase = 2.0 * kPi * static_cast<double>(k) * i / n_fft;
      (*dft)[static_cast<std::size_t>(i) * 2 * n_bins + k] =
          window[static_cast<std::size_t>(i)] * std::cos(phase);
      (*dft)[static_cast<std::size_t>(i) * 2 * n_bins + n_bins + k] =
          window[static_cast<std::size_t>(i)] * std::sin(phase);
    }
  }
  dft_ = std::move(dft);
  mel_w_ = std::shared_ptr<const std::vector<double>>(
      std::make_shared<std::vector<double>>(fb_.weights));
}

grad::Tensor LogMelGraph::apply(grad::Tape& t, const grad::Tensor& wave) const {
  if (wave.shape().size() != 1) {
    throw ShapeMismatch("feature front expects a rank-1 waveform");
  }
  const int win = fb_.window_samples;
  if (wave.shape()[0] < win) {
    throw TooShort("waveform shorter than one analysis window");
  }
  const int n_bins = fb_.n_bins();
  grad::Tensor frames = grad::frame(wave, win, fb_.hop_samples);  // (F, win)
  grad::Tensor dft = t.constant_shared({win, 2 * n_bins}, dft_);
  grad::Tensor spec = grad::matmul(frames, dft);                  // (F, 2B)
  grad::Tensor re = grad::slice(spec, 1, 0, n_bins);
  grad::Tensor im = grad::slice(spec, 1, n_bins, n_bins);
  grad::Tensor power = grad::add(grad::square(re), grad::square(im));
  return grad::mel_apply(power, mel_w_, fb_.n_mels, audio::kLogmelFloor);
}

// --- initialization ---------------------------------------------------------------

// Windowed quadrature basis for the encoder/decoder convolutions. Rows come
// in sign-complete groups {+cos, -cos, +sin, -sin} per center frequency, so
// the ReLU-rectified analysis stays linearly invertible
// (relu(u) - relu(-u) = u) and masking acts on a meaningful time-frequency
// representation from the first step; training refines it from there. Rows
// are unit-L2. Frequencies avoid exact DC/Nyquist; when the basis count is
// not a multiple of four the remainder rows fall back to random init.
std::vector<double> quadrature_basis(Rng& rng, int n_rows, int win) {
  std::vector<double> w(static_cast<std::size_t>(n_rows) * win);
  const int n_freq = n_rows / 4;
  std::vector<double> hann(win);
  for (int n = 0; n < win; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / win);
  }
  for (int row = 0; row < n_rows; ++row) {
    double* dst = w.data() + static_cast<std::size_t>(row) * win;
    if (row < 4 * n_freq) {
      const int k = row / 4;
      const int phase = row % 4;  // +cos, -cos, +sin, -sin
      const double omega = kPi * (k + 0.5) / n_freq;
      double norm = 0.0;
      for (int n = 0; n < win; ++n) {
        const double arg = omega * (n - 0.5 * (win - 1));
        double v = (phase < 2) ? std::cos(arg) : std::sin(arg);
        if (phase % 2 == 1) v = -v;
        dst[n] = hann[n] * v;
        norm += dst[n] * dst[n];
      }
      norm = std::sqrt(norm);
      for (int n = 0; n < win; ++n) dst[n] /= norm;
    } else {
      const double stddev = 1.0 / std::sqrt(static_cast<double>(win));
      for (int n = 0; n < win; ++n) dst[n] = rng.normal(0.0, stddev);
    }
  }
  return w;
}

void init_snri_net(grad::Params& params, const SnriNetConfig& cfg, Rng& rng) {
  cfg.validate();
  Rng r = rng.child("init_snri_net");
  const int de = cfg.encoder_basis;
  const int win = cfg.window_samples();
  const int width = cfg.block_width();
  insert_param(params, "snri_net/enc_w", {de, 1, win}, quadrature_basis(r, de, win));
  insert_param(params, "snri_net/enc_b", {de}, std::vector<double>(de, 0.0));
  init_conv(params, r, "snri_net/bot_w", "snri_net/bot_b", cfg.bottleneck, de, 1);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    init_block(params, r, "snri_net/blk" + std::to_string(i) + "_", width,
               cfg.hidden, 3);
  }
  init_conv(params, r, "snri_net/mask_w", "snri_net/mask_b", 2 * de, width, 1);
  insert_param(params, "snri_net/dec_w", {de, 1, win}, quadrature_basis(r, de, win));
}

namespace {

void init_scalar_head(grad::Params& params, Rng& r, const std::string& group,
                      int n_blocks, int hidden, int n_mels, int out_dim) {
  init_conv(params, r, group + "/in_w", group + "/in_b", hidden, n_mels, 1);
  for (int i = 0; i < n_blocks; ++i) {
    init_block(params, r, group + "/blk" + std::to_string(i) + "_", hidden,
               hidden, 3);
  }
  const double stddev = 1.0 / std::sqrt(static_cast<double>(hidden));
  insert_param(params, group + "/out_w", {hidden, out_dim},
               normal_values(r, static_cast<std::size_t>(hidden) * out_dim, stddev));
  insert_param(params, group + "/out_b", {out_dim},
               std::vector<double>(out_dim, 0.0));
}

}  // namespace

void init_pred_net(grad::Params& params, const PredNetConfig& cfg, Rng& rng) {
  cfg.validate();
  Rng r = rng.child("init_pred_net");
  init_scalar_head(params, r, "pred_net", cfg.n_blocks, cfg.hidden, cfg.n_mels, 1);
}

void init_backend(grad::Params& params, const BackendConfig& cfg, Rng& rng) {
  cfg.validate();
  Rng r = rng.child("init_backend");
  init_scalar_head(params, r, "backend", cfg.n_blocks, cfg.hidden, cfg.n_mels,
                   cfg.n_classes);
}

// --- forwards ---------------------------------------------------------------------

SeparatedTensors snri_net_forward(grad::Tape& t, const grad::Params& params,
                                  const SnriNetConfig& cfg, const grad::Tensor& x,
                                  const grad::Tensor& lambda_db) {
  if (x.shape().size() != 1) {
    throw ShapeMismatch("frontend expects a rank-1 waveform");
  }
  const int total = x.shape()[0];
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  if (total < win) {
    throw TooShort("waveform shorter than one encoder window");
  }
  if (cfg.conditioned != lambda_db.defined()) {
    throw InvalidParams(
        cfg.conditioned ? "conditioned frontend needs a lambda tensor"
                        : "unconditioned frontend takes no lambda tensor");
  }

  grad::Tensor x2 = grad::reshape(x, {1, total});
  grad::Tensor enc = grad::relu(grad::add_channel_bias(
      grad::conv1d(x2, leafp(t, params, "snri_net/enc_w"), hop, 1, 0, 0),
      leafp(t, params, "snri_net/enc_b")));                     // (De, N)
  const int n_frames = enc.shape()[1];

  grad::Tensor h = grad::add_channel_bias(
      grad::conv1d(enc, leafp(t, params, "snri_net/bot_w"), 1, 1, 0, 0),
      leafp(t, params, "snri_net/bot_b"));                      // (Db, N)
  if (cfg.conditioned) {
    const double span = cfg.lambda_max - cfg.lambda_min;
    grad::Tensor lam_norm =
        grad::affine(lambda_db, 1.0 / span, -cfg.lambda_min / span);
    grad::Tensor row =
        grad::expand(grad::reshape(lam_norm, {1, 1}), 1, n_frames);  // (1, N)
    h = grad::concat(h, row, 0);                                // (Db + 1, N)
  }

  for (int i = 0; i < cfg.n_blocks; ++i) {
    const std::string prefix = "snri_net/blk" + std::to_string(i) + "_";
    h = temporal_block(t, params, prefix, h, block_dilation(i));
  }

  grad::Tensor masks = grad::sigmoid(grad::add_channel_bias(
      grad::conv1d(h, leafp(t, params, "snri_net/mask_w"), 1, 1, 0, 0),
      leafp(t, params, "snri_net/mask_b")));                    // (2De, N)
  const int de = cfg.encoder_basis;
  grad::Tensor m1 = grad::slice(masks, 0, 0, de);
  grad::Tensor m2 = grad::slice(masks, 0, de, de);

  grad::Tensor dec_w = leafp(t, params, "snri_net/dec_w");
  auto decode = [&](const grad::Tensor& masked) {
    grad::Tensor out2 = grad::transposed_conv1d(masked, dec_w, hop);  // (1, T')
    grad::Tensor out = grad::reshape(out2, {out2.shape()[1]});
    const int missing = total - out.shape()[0];
    if (missing > 0) {
      grad::Tensor pad = t.zeros({missing});
      out = grad::concat(out, pad, 0);
    }
    return out;
  };
  grad::Tensor y1 = decode(grad::mul(m1, enc));
  grad::Tensor y2 = decode(grad::mul(m2, enc));

  // Consistency projection: estimates sum exactly to the input.
  grad::Tensor e = grad::sub(x, grad::add(y1, y2));
  SeparatedTensors out;
  out.speech = grad::add(y1, grad::affine(e, cfg.zeta, 0.0));
  out.noise = grad::add(y2, grad::affine(e, 1.0 - cfg.zeta, 0.0));
  return out;
}

grad::Tensor pred_net_forward(grad::Tape& t, const grad::Params& params,
                              const PredNetConfig& cfg, const grad::Tensor& x,
                              const LogMelGraph& lm) {
  grad::Tensor pooled =
      pooled_features(t, params, "pred_net", cfg.n_blocks, x, lm);  // (H,)
  grad::Tensor row = grad::reshape(pooled, {1, cfg.hidden});
  grad::Tensor pre =
      grad::add(grad::matmul(row, leafp(t, params, "pred_net/out_w")),
                grad::reshape(leafp(t, params, "pred_net/out_b"), {1, 1}));
  grad::Tensor squashed = grad::sigmoid(grad::reshape(pre, std::vector<int>{}));
  return grad::affine(squashed, cfg.lambda_max - cfg.lambda_min, cfg.lambda_min);
}

grad::Tensor backend_forward(grad::Tape& t, const grad::Params& params,
                             const BackendConfig& cfg, const grad::Tensor& wave,
                             const LogMelGraph& lm) {
  grad::Tensor pooled =
      pooled_features(t, params, "backend", cfg.n_blocks, wave, lm);  // (H,)
  grad::Tensor row = grad::reshape(pooled, {1, cfg.hidden});
  grad::Tensor logits = grad::add(
      grad::reshape(grad::matmul(row, leafp(t, params, "backend/out_w")),
                    {cfg.n_classes}),
      leafp(t, params, "backend/out_b"));
  return grad::log_softmax(logits);
}

grad::Tensor task_loss(const grad::Tensor& log_probs, int label) {
  if (log_probs.shape().size() != 1) {
    throw ShapeMismatch("task loss expects rank-1 log-probabilities");
  }
  if (label < 0 || label >= log_probs.shape()[0]) {
    throw InvalidLabel("label " + std::to_string(label) +
                               " outside [0, " +
                               std::to_string(log_probs.shape()[0]) + ")");
  }
  grad::Tensor picked = grad::slice(log_probs, 0, label, 1);
  return grad::affine(grad::sum(picked), -1.0, 0.0);
}

// --- losses -----------------------------------------------------------------------

grad::Tensor thresholded_snr_loss_graph(grad::Tape& t,
                                        const std::vector<double>& ref,
                                        const grad::Tensor& est, double tau) {
  if (est.shape().size() != 1 ||
      est.shape()[0] != static_cast<int>(ref.size())) {
    throw LengthMismatch("loss reference/estimate lengths differ");
  }
  const double ea = energy_of(ref);
  if (ea <= 0.0) throw SilentReference("loss reference is silent");
  grad::Tensor ed = residual_energy(t, est, ref);
  // -10 log10(ea / (ed + tau*ea)) = 10 log10(ed + tau*ea) - 10 log10(ea)
  return grad::affine(grad::log_op(grad::affine(ed, 1.0, tau * ea)), kDbPerNat,
                      -kDbPerNat * std::log(ea));
}

grad::Tensor se_loss_graph(grad::Tape& t, const std::vector<double>& s,
                           const std::vector<double>& n,
                           const SeparatedTensors& y,
                           const metrics::ThresholdConfig& cfg) {
  cfg.validate();
  grad::Tensor ls = thresholded_snr_loss_graph(t, s, y.speech, cfg.tau);
  grad::Tensor ln = thresholded_snr_loss_graph(t, n, y.noise, cfg.tau);
  return grad::add(grad::affine(ls, cfg.alpha, 0.0),
                   grad::affine(ln, 1.0 - cfg.alpha, 0.0));
}

SnriLossGraph snri_target_loss_graph(grad::Tape& t, const std::vector<double>& s,
                                     const std::vector<double>& n,
                                     const grad::Tensor& y1,
                                     const grad::Tensor& lambda_db,
                                     const metrics::ThresholdConfig& cfg) {
  cfg.validate();
  if (s.size() != n.size()) {
    throw LengthMismatch("speech/noise lengths differ");
  }
  if (y1.shape().size() != 1 || y1.shape()[0] != static_cast<int>(s.size())) {
    throw LengthMismatch("estimate length differs from references");
  }
  const double es = energy_of(s);
  const double en = energy_of(n);
  if (es <= 0.0) throw SilentReference("clean reference is silent");
  if (en <= 0.0) throw SilentNoise("noise reference is silent");

  const int len = static_cast<int>(s.size());
  grad::Tensor s_t = t.constant({len}, s);
  grad::Tensor n_t = t.constant({len}, n);
  grad::Tensor r = grad::sub(y1, s_t);

  // Improvement: 10 log10(es/er) - 10 log10(es/en) = 10 log10(en) - 10 log10(er).
  grad::Tensor er = grad::sum(grad::square(r));
  grad::Tensor snri =
      grad::affine(grad::log_op(er), -kDbPerNat, kDbPerNat * std::log(en));
  grad::Tensor snri_term = grad::square(grad::sub(lambda_db, snri));

  // Artifact energy after projecting the residual onto span{s, n}.
  double sn = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) sn += s[i] * n[i];
  const double det = es * en - sn * sn;
  if (det <= 1e-12 * es * en) {
    throw DegenerateSubspace("references are numerically collinear");
  }
  grad::Tensor sr = grad::sum(grad::mul(s_t, r));
  grad::Tensor nr = grad::sum(grad::mul(n_t, r));
  grad::Tensor a = grad::add(grad::affine(sr, en / det, 0.0),
                             grad::affine(nr, -sn / det, 0.0));
  grad::Tensor b = grad::add(grad::affine(nr, es / det, 0.0),
                             grad::affine(sr, -sn / det, 0.0));
  grad::Tensor e_artif =
      grad::sub(r, grad::add(grad::mul(a, s_t), grad::mul(b, n_t)));
  grad::Tensor ea = grad::sum(grad::square(e_artif));
  grad::Tensor sar_term =
      grad::affine(grad::log_op(grad::affine(ea, 1.0, cfg.tau * es)), kDbPerNat,
                   -kDbPerNat * std::log(es));

  SnriLossGraph out;
  out.snri_term = snri_term;
  out.sar_term = sar_term;
  out.total = grad::add(snri_term, grad::affine(sar_term, cfg.beta, 0.0));
  out.achieved_snri_db = snri.scalar();
  return out;
}

// --- joint objective ----------------------------------------------------------------

void ModelSet::build() {
  snri.validate();
  pred.validate();
  backend.validate();
  pred_lm = std::make_shared<LogMelGraph>(pred.n_mels, pred.window_ms,
                                          pred.hop_ms, pred.sample_rate);
  backend_lm = std::make_shared<LogMelGraph>(
      backend.n_mels, backend.window_ms, backend.hop_ms, backend.sample_rate);
}

JointLossResult joint_loss(grad::Tape& t, const grad::Params& params,
                           const ModelSet& models, const std::vector<double>& x,
                           const std::vector<double>& s,
                           const std::vector<double>& n, int label,
                           JointMode mode, double eta, double gamma,
                           const metrics::ThresholdConfig& tcfg,
                           std::optional<double> forced_lambda) {
  if (x.size() != s.size() || x.size() != n.size()) {
    throw LengthMismatch("mixture/reference lengths differ");
  }
  if (!models.backend_lm) {
    throw InvalidParams("ModelSet::build() was not called");
  }
  grad::Tensor x_t = t.constant({static_cast<int>(x.size())}, x);
  JointLossResult out;

  if (mode == JointMode::baseline) {
    SeparatedTensors y =
        snri_net_forward(t, params, models.snri, x_t, grad::Tensor{});
    grad::Tensor log_probs =
        backend_forward(t, params, models.backend, y.speech, *models.backend_lm);
    out.task_term = task_loss(log_probs, label);
    out.aux_term = se_loss_graph(t, s, n, y, tcfg);
    out.total =
        grad::add(out.task_term, grad::affine(out.aux_term, gamma, 0.0));
    return out;
  }

  // Proposed objective.
  grad::Tensor lambda_t;
  if (forced_lambda.has_value()) {
    if (!std::isfinite(*forced_lambda)) {
      throw InvalidParams("forced lambda must be finite");
    }
    lambda_t = t.scalar_const(*forced_lambda);
    out.lambda_pred_db = *forced_lambda;
  } else {
    lambda_t = pred_net_forward(t, params, models.pred, x_t, *models.pred_lm);
    out.lambda_pred_db = lambda_t.scalar();
  }
  out.lambda_used_db = lambda_t.scalar();

  // Task path: the prediction conditions the frontend unbarriered.
  SeparatedTensors y_task = snri_net_forward(t, params, models.snri, x_t, lambda_t);
  grad::Tensor log_probs = backend_forward(t, params, models.backend,
                                           y_task.speech, *models.backend_lm);
  out.task_term = task_loss(log_probs, label);

  // Improvement path: a second pass under stop_gradient(lambda), so this term
  // moves the frontend but contributes nothing to the predictor.
  grad::Tensor lambda_sg = grad::stop_gradient(lambda_t);
  SeparatedTensors y_se = snri_net_forward(t, params, models.snri, x_t, lambda_sg);
  SnriLossGraph snri = snri_target_loss_graph(t, s, n, y_se.speech, lambda_sg, tcfg);
  out.aux_term = snri.total;
  out.achieved_snri_db = snri.achieved_snri_db;
  out.total = grad::add(out.task_term, grad::affine(snri.total, eta, 0.0));
  return out;
}

}  // namespace snrilab::models
