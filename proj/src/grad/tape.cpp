#include "snrilab/grad/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "snrilab/common/errors.hpp"

namespace snrilab::grad {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using MapC = Eigen::Map<const Mat>;

void check_finite_vec(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NonFiniteValue(std::string(op) + " produced a non-finite value");
    }
  }
}

std::shared_ptr<std::vector<double>> alloc(std::size_t n) {
  return std::make_shared<std::vector<double>>(n);
}

Tape* same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined()) {
    throw InvalidParams(std::string(op) + ": undefined tensor");
  }
  if (a.tape() != b.tape()) {
    throw InvalidParams(std::string(op) + ": operands from different tapes");
  }
  return a.tape();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw ShapeMismatch(std::string(op) + ": unsupported shape " +
                      shape_to_string(a.shape()));
}

void require_rank(const Tensor& a, int rank, const char* op) {
  if (static_cast<int>(a.shape().size()) != rank) shape_error(op, a);
}

}  // namespace

double Tensor::scalar() const {
  if (size() != 1) {
    throw ShapeMismatch("scalar() on tensor of shape " + shape_to_string(shape_));
  }
  return (*values_)[0];
}

bool Tensor::requires_grad() const {
  return tape_ != nullptr && tape_->node_requires(node_);
}

// --- Tape internals ----------------------------------------------------------

int Tape::add_node(std::size_t out_size, bool requires_grad, std::string param_name) {
  Node nd;
  nd.out_size = out_size;
  nd.requires_grad = requires_grad;
  nd.param_name = std::move(param_name);
  nodes_.push_back(std::move(nd));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_live(const char* op) const {
  if (spent_) {
    throw TapeSpent(std::string(op) + ": tape already consumed by backward()");
  }
}

void Tape::ensure_grad(int id) {
  Node& nd = nodes_[id];
  if (nd.grad.empty()) nd.grad.assign(nd.out_size, 0.0);
}

void Tape::accum(int id, const double* g, std::size_t n) {
  if (!node_requires(id)) return;
  ensure_grad(id);
  std::vector<double>& dst = nodes_[id].grad;
  for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
}

void Tape::set_backprop(int id, std::function<void()> fn) {
  nodes_[id].backprop = std::move(fn);
}

// OpBuilder centralizes node creation so every op gets the same finiteness
// and lifecycle checks.
class OpBuilder {
 public:
  static Tensor make(Tape* t, std::vector<int> shape,
                     std::shared_ptr<std::vector<double>> values,
                     bool requires_grad, const char* op,
                     std::string param_name = "") {
    t->check_live(op);
    if (shape_product(shape) != values->size()) {
      throw ShapeMismatch(std::string(op) + ": shape " + shape_to_string(shape) +
                          " does not match " + std::to_string(values->size()) +
                          " values");
    }
    check_finite_vec(*values, op);
    Tensor out;
    out.tape_ = t;
    out.node_ = t->add_node(values->size(), requires_grad, std::move(param_name));
    out.shape_ = std::move(shape);
    out.values_ = std::move(values);
    return out;
  }
};

Tensor Tape::constant(std::vector<int> shape, std::vector<double> values) {
  return OpBuilder::make(this, std::move(shape),
                         std::make_shared<std::vector<double>>(std::move(values)),
                         false, "constant");
}

Tensor Tape::constant_shared(std::vector<int> shape,
                             std::shared_ptr<std::vector<double>> values) {
  return OpBuilder::make(this, std::move(shape), std::move(values), false,
                         "constant");
}

Tensor Tape::scalar_const(double v) { return constant({}, {v}); }

Tensor Tape::zeros(std::vector<int> shape) {
  const std::size_t n = shape_product(shape);
  return OpBuilder::make(this, std::move(shape), alloc(n), false, "zeros");
}

Tensor Tape::leaf(const std::string& name, const Param& p) {
  if (name.empty()) throw InvalidParams("leaf: empty parameter name");
  if (p.size() != shape_product(p.shape)) {
    throw ShapeMismatch("leaf " + name + ": inconsistent parameter record");
  }
  return OpBuilder::make(this, p.shape,
                         std::make_shared<std::vector<double>>(p.value), true,
                         "leaf", name);
}

GradMap Tape::backward(const Tensor& loss) {
  if (spent_) throw TapeSpent("backward: tape already consumed");
  if (loss.tape() != this) throw InvalidParams("backward: loss from another tape");
  if (loss.size() != 1) {
    throw NonScalarLoss("backward: loss has shape " + shape_to_string(loss.shape()));
  }

  nodes_[loss.node()].grad.assign(1, 1.0);
  for (int i = loss.node(); i >= 0; --i) {
    Node& nd = nodes_[i];
    if (!nd.grad.empty() && nd.backprop) nd.backprop();
  }

  GradMap out;
  for (const Node& nd : nodes_) {
    if (nd.param_name.empty()) continue;
    auto& slot = out[nd.param_name];
    if (slot.empty()) slot.assign(nd.out_size, 0.0);
    if (!nd.grad.empty()) {
      for (std::size_t i = 0; i < nd.out_size; ++i) slot[i] += nd.grad[i];
    }
  }
  for (const auto& [name, g] : out) {
    (void)name;
    check_finite_vec(g, "backward");
  }

  nodes_.clear();
  spent_ = true;
  return out;
}

// --- elementwise arithmetic --------------------------------------------------

namespace {

enum class Pairing { same, b_scalar, a_scalar };

Pairing classify(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Pairing::same;
  if (b.size() == 1) return Pairing::b_scalar;
  if (a.size() == 1) return Pairing::a_scalar;
  throw ShapeMismatch(std::string(op) + ": shapes " + shape_to_string(a.shape()) +
                      " and " + shape_to_string(b.shape()) +
                      " (only scalar broadcast is allowed; use expand)");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b, "add");
  const Pairing p = classify(a, b, "add");
  const Tensor& big = (p == Pairing::a_scalar) ? b : a;
  const std::size_t n = big.size();
  auto vals = alloc(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  switch (p) {
    case Pairing::same:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[i] + bv[i];
      break;
    case Pairing::b_scalar:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[i] + bv[0];
      break;
    case Pairing::a_scalar:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[0] + bv[i];
      break;
  }
  const bool req = a.requires_grad() || b.requires_grad();
  Tensor out = OpBuilder::make(t, big.shape(), std::move(vals), req, "add");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 bid = b.node(), n, p]() {
      const auto& g = t->grad_ref(oid);
      auto side = [&](int id, bool scalar_side) {
        if (!t->node_requires(id)) return;
        if (!scalar_side) {
          t->accum(id, g.data(), n);
        } else {
          double s = 0.0;
          for (double v : g) s += v;
          t->accum(id, &s, 1);
        }
      };
      side(aid, p == Pairing::a_scalar);
      side(bid, p == Pairing::b_scalar);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b, "sub");
  const Pairing p = classify(a, b, "sub");
  const Tensor& big = (p == Pairing::a_scalar) ? b : a;
  const std::size_t n = big.size();
  auto vals = alloc(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  switch (p) {
    case Pairing::same:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[i] - bv[i];
      break;
    case Pairing::b_scalar:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[i] - bv[0];
      break;
    case Pairing::a_scalar:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[0] - bv[i];
      break;
  }
  const bool req = a.requires_grad() || b.requires_grad();
  Tensor out = OpBuilder::make(t, big.shape(), std::move(vals), req, "sub");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 bid = b.node(), n, p]() {
      const auto& g = t->grad_ref(oid);
      if (t->node_requires(aid)) {
        if (p == Pairing::a_scalar) {
          double s = 0.0;
          for (double v : g) s += v;
          t->accum(aid, &s, 1);
        } else {
          t->accum(aid, g.data(), n);
        }
      }
      if (t->node_requires(bid)) {
        if (p == Pairing::b_scalar) {
          double s = 0.0;
          for (double v : g) s += v;
          s = -s;
          t->accum(bid, &s, 1);
        } else {
          std::vector<double> neg(n);
          for (std::size_t i = 0; i < n; ++i) neg[i] = -g[i];
          t->accum(bid, neg.data(), n);
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b, "mul");
  const Pairing p = classify(a, b, "mul");
  const Tensor& big = (p == Pairing::a_scalar) ? b : a;
  const std::size_t n = big.size();
  auto vals = alloc(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  switch (p) {
    case Pairing::same:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[i] * bv[i];
      break;
    case Pairing::b_scalar:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[i] * bv[0];
      break;
    case Pairing::a_scalar:
      for (std::size_t i = 0; i < n; ++i) (*vals)[i] = av[0] * bv[i];
      break;
  }
  const bool req = a.requires_grad() || b.requires_grad();
  Tensor out = OpBuilder::make(t, big.shape(), std::move(vals), req, "mul");
  if (req) {
    auto ap = a.values_ptr();
    auto bp = b.values_ptr();
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 bid = b.node(), n, p, ap, bp]() {
      const auto& g = t->grad_ref(oid);
      const auto& av = *ap;
      const auto& bv = *bp;
      if (t->node_requires(aid)) {
        if (p == Pairing::a_scalar) {
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) s += g[i] * bv[i];
          t->accum(aid, &s, 1);
        } else {
          std::vector<double> da(n);
          for (std::size_t i = 0; i < n; ++i) {
            da[i] = g[i] * (p == Pairing::b_scalar ? bv[0] : bv[i]);
          }
          t->accum(aid, da.data(), n);
        }
      }
      if (t->node_requires(bid)) {
        if (p == Pairing::b_scalar) {
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) s += g[i] * av[i];
          t->accum(bid, &s, 1);
        } else {
          std::vector<double> db(n);
          for (std::size_t i = 0; i < n; ++i) {
            db[i] = g[i] * (p == Pairing::a_scalar ? av[0] : av[i]);
          }
          t->accum(bid, db.data(), n);
        }
      }
    });
  }
  return out;
}

Tensor affine(const Tensor& a, double k, double c) {
  if (!a.defined()) throw InvalidParams("affine: undefined tensor");
  if (!std::isfinite(k) || !std::isfinite(c)) {
    throw InvalidParams("affine: coefficients must be finite");
  }
  Tape* t = a.tape();
  const std::size_t n = a.size();
  auto vals = alloc(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) (*vals)[i] = k * av[i] + c;
  const bool req = a.requires_grad();
  Tensor out = OpBuilder::make(t, a.shape(), std::move(vals), req, "affine");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(), n, k]() {
      const auto& g = t->grad_ref(oid);
      std::vector<double> da(n);
      for (std::size_t i = 0; i < n; ++i) da[i] = k * g[i];
      t->accum(aid, da.data(), n);
    });
  }
  return out;
}

// --- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b, "matmul");
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.shape()[0], p = a.shape()[1];
  const int p2 = b.shape()[0], n = b.shape()[1];
  if (p != p2) {
    throw ShapeMismatch("matmul: inner dims " + std::to_string(p) + " vs " +
                        std::to_string(p2));
  }
  auto vals = alloc(static_cast<std::size_t>(m) * n);
  {
    MapC A(a.values().data(), m, p);
    MapC B(b.values().data(), p, n);
    MapM C(vals->data(), m, n);
    C.noalias() = A * B;
  }
  const bool req = a.requires_grad() || b.requires_grad();
  Tensor out = OpBuilder::make(t, {m, n}, std::move(vals), req, "matmul");
  if (req) {
    auto ap = a.values_ptr();
    auto bp = b.values_ptr();
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 bid = b.node(), m, p, n, ap, bp]() {
      const auto& g = t->grad_ref(oid);
      MapC G(g.data(), m, n);
      if (t->node_requires(aid)) {
        std::vector<double> da(static_cast<std::size_t>(m) * p);
        MapC B(bp->data(), p, n);
        MapM DA(da.data(), m, p);
        DA.noalias() = G * B.transpose();
        t->accum(aid, da.data(), da.size());
      }
      if (t->node_requires(bid)) {
        std::vector<double> db(static_cast<std::size_t>(p) * n);
        MapC A(ap->data(), m, p);
        MapM DB(db.data(), p, n);
        DB.noalias() = A.transpose() * G;
        t->accum(bid, db.data(), db.size());
      }
    });
  }
  return out;
}

namespace {

// Gathers the padded, dilated receptive fields into a (C_in*K, T_out) matrix.
void im2col(const std::vector<double>& x, int c_in, int tin, int k, int stride,
            int dilation, int pad_left, int t_out, std::vector<double>& col) {
  col.assign(static_cast<std::size_t>(c_in) * k * t_out, 0.0);
  for (int c = 0; c < c_in; ++c) {
    const double* xr = &x[static_cast<std::size_t>(c) * tin];
    for (int kk = 0; kk < k; ++kk) {
      double* dst = &col[(static_cast<std::size_t>(c) * k + kk) * t_out];
      for (int tt = 0; tt < t_out; ++tt) {
        const int pos = tt * stride - pad_left + kk * dilation;
        if (pos >= 0 && pos < tin) dst[tt] = xr[pos];
      }
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, int stride, int dilation,
              int pad_left, int pad_right) {
  Tape* t = same_tape(x, w, "conv1d");
  require_rank(x, 2, "conv1d");
  require_rank(w, 3, "conv1d");
  const int c_in = x.shape()[0], tin = x.shape()[1];
  const int c_out = w.shape()[0], k = w.shape()[2];
  if (w.shape()[1] != c_in) {
    throw ShapeMismatch("conv1d: weight expects " + std::to_string(w.shape()[1]) +
                        " input channels, got " + std::to_string(c_in));
  }
  if (stride < 1 || dilation < 1 || pad_left < 0 || pad_right < 0) {
    throw InvalidParams("conv1d: bad stride/dilation/padding");
  }
  const int span = dilation * (k - 1) + 1;
  const int t_out = (tin + pad_left + pad_right - span) / stride + 1;
  if (tin + pad_left + pad_right < span || t_out < 1) {
    throw ShapeMismatch("conv1d: input too short for kernel span");
  }

  std::vector<double> col;
  im2col(x.values(), c_in, tin, k, stride, dilation, pad_left, t_out, col);
  auto vals = alloc(static_cast<std::size_t>(c_out) * t_out);
  {
    MapC W(w.values().data(), c_out, c_in * k);
    MapC Col(col.data(), c_in * k, t_out);
    MapM Y(vals->data(), c_out, t_out);
    Y.noalias() = W * Col;
  }
  const bool req = x.requires_grad() || w.requires_grad();
  Tensor out = OpBuilder::make(t, {c_out, t_out}, std::move(vals), req, "conv1d");
  if (req) {
    auto xp = x.values_ptr();
    auto wp = w.values_ptr();
    t->set_backprop(out.node(), [t, oid = out.node(), xid = x.node(),
                                 wid = w.node(), xp, wp, c_in, tin, c_out, k,
                                 stride, dilation, pad_left, t_out]() {
      const auto& g = t->grad_ref(oid);
      MapC G(g.data(), c_out, t_out);
      if (t->node_requires(wid)) {
        std::vector<double> col;
        im2col(*xp, c_in, tin, k, stride, dilation, pad_left, t_out, col);
        MapC Col(col.data(), c_in * k, t_out);
        std::vector<double> dw(static_cast<std::size_t>(c_out) * c_in * k);
        MapM DW(dw.data(), c_out, c_in * k);
        DW.noalias() = G * Col.transpose();
        t->accum(wid, dw.data(), dw.size());
      }
      if (t->node_requires(xid)) {
        std::vector<double> dcol(static_cast<std::size_t>(c_in) * k * t_out);
        MapC W(wp->data(), c_out, c_in * k);
        MapM DCol(dcol.data(), c_in * k, t_out);
        DCol.noalias() = W.transpose() * G;
        t->ensure_grad(xid);
        auto& dx = t->grad_ref(xid);
        for (int c = 0; c < c_in; ++c) {
          for (int kk = 0; kk < k; ++kk) {
            const double* src = &dcol[(static_cast<std::size_t>(c) * k + kk) * t_out];
            for (int tt = 0; tt < t_out; ++tt) {
              const int pos = tt * stride - pad_left + kk * dilation;
              if (pos >= 0 && pos < tin) {
                dx[static_cast<std::size_t>(c) * tin + pos] += src[tt];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor transposed_conv1d(const Tensor& x, const Tensor& w, int stride) {
  Tape* t = same_tape(x, w, "transposed_conv1d");
  require_rank(x, 2, "transposed_conv1d");
  require_rank(w, 3, "transposed_conv1d");
  const int c_in = x.shape()[0], nframes = x.shape()[1];
  const int c_out = w.shape()[1], k = w.shape()[2];
  if (w.shape()[0] != c_in) {
    throw ShapeMismatch("transposed_conv1d: weight expects " +
                        std::to_string(w.shape()[0]) + " input channels");
  }
  if (stride < 1) throw InvalidParams("transposed_conv1d: stride must be >= 1");
  const int t_out = (nframes - 1) * stride + k;

  // Ycol = W^T X, then overlap-add the kernel taps into the output.
  std::vector<double> ycol(static_cast<std::size_t>(c_out) * k * nframes);
  {
    MapC W(w.values().data(), c_in, c_out * k);
    MapC X(x.values().data(), c_in, nframes);
    MapM Y(ycol.data(), c_out * k, nframes);
    Y.noalias() = W.transpose() * X;
  }
  auto vals = alloc(static_cast<std::size_t>(c_out) * t_out);
  for (int o = 0; o < c_out; ++o) {
    double* dst = &(*vals)[static_cast<std::size_t>(o) * t_out];
    for (int kk = 0; kk < k; ++kk) {
      const double* src = &ycol[(static_cast<std::size_t>(o) * k + kk) * nframes];
      for (int f = 0; f < nframes; ++f) dst[f * stride + kk] += src[f];
    }
  }
  const bool req = x.requires_grad() || w.requires_grad();
  Tensor out =
      OpBuilder::make(t, {c_out, t_out}, std::move(vals), req, "transposed_conv1d");
  if (req) {
    auto xp = x.values_ptr();
    auto wp = w.values_ptr();
    t->set_backprop(out.node(), [t, oid = out.node(), xid = x.node(),
                                 wid = w.node(), xp, wp, c_in, nframes, c_out, k,
                                 stride, t_out]() {
      const auto& g = t->grad_ref(oid);
      // Gather dYcol[(o*K + k), f] = dOut[o, f*stride + k].
      std::vector<double> dycol(static_cast<std::size_t>(c_out) * k * nframes);
      for (int o = 0; o < c_out; ++o) {
        const double* src = &g[static_cast<std::size_t>(o) * t_out];
        for (int kk = 0; kk < k; ++kk) {
          double* dst = &dycol[(static_cast<std::size_t>(o) * k + kk) * nframes];
          for (int f = 0; f < nframes; ++f) dst[f] = src[f * stride + kk];
        }
      }
      MapC DY(dycol.data(), c_out * k, nframes);
      if (t->node_requires(xid)) {
        std::vector<double> dx(static_cast<std::size_t>(c_in) * nframes);
        MapC W(wp->data(), c_in, c_out * k);
        MapM DX(dx.data(), c_in, nframes);
        DX.noalias() = W * DY;
        t->accum(xid, dx.data(), dx.size());
      }
      if (t->node_requires(wid)) {
        std::vector<double> dw(static_cast<std::size_t>(c_in) * c_out * k);
        MapC X(xp->data(), c_in, nframes);
        MapM DW(dw.data(), c_in, c_out * k);
        DW.noalias() = X * DY.transpose();
        t->accum(wid, dw.data(), dw.size());
      }
    });
  }
  return out;
}

Tensor add_channel_bias(const Tensor& a, const Tensor& bias) {
  Tape* t = same_tape(a, bias, "add_channel_bias");
  require_rank(a, 2, "add_channel_bias");
  require_rank(bias, 1, "add_channel_bias");
  const int c = a.shape()[0], n = a.shape()[1];
  if (bias.shape()[0] != c) {
    throw ShapeMismatch("add_channel_bias: bias length " +
                        std::to_string(bias.shape()[0]) + " vs " +
                        std::to_string(c) + " channels");
  }
  auto vals = alloc(a.size());
  const auto& av = a.values();
  const auto& bv = bias.values();
  for (int ci = 0; ci < c; ++ci) {
    for (int tt = 0; tt < n; ++tt) {
      (*vals)[static_cast<std::size_t>(ci) * n + tt] =
          av[static_cast<std::size_t>(ci) * n + tt] + bv[ci];
    }
  }
  const bool req = a.requires_grad() || bias.requires_grad();
  Tensor out = OpBuilder::make(t, a.shape(), std::move(vals), req, "add_channel_bias");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 bid = bias.node(), c, n]() {
      const auto& g = t->grad_ref(oid);
      t->accum(aid, g.data(), g.size());
      if (t->node_requires(bid)) {
        std::vector<double> db(static_cast<std::size_t>(c), 0.0);
        for (int ci = 0; ci < c; ++ci) {
          for (int tt = 0; tt < n; ++tt) {
            db[ci] += g[static_cast<std::size_t>(ci) * n + tt];
          }
        }
        t->accum(bid, db.data(), db.size());
      }
    });
  }
  return out;
}

// --- shape manipulation ------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  Tape* t = same_tape(a, b, "concat");
  const int rank = static_cast<int>(a.shape().size());
  if (rank != static_cast<int>(b.shape().size()) || rank < 1 || rank > 2) {
    throw ShapeMismatch("concat: ranks must match and be 1 or 2");
  }
  if (axis < 0 || axis >= rank) throw InvalidParams("concat: bad axis");
  for (int d = 0; d < rank; ++d) {
    if (d != axis && a.shape()[d] != b.shape()[d]) {
      throw ShapeMismatch("concat: shapes " + shape_to_string(a.shape()) +
                          " and " + shape_to_string(b.shape()) + " on axis " +
                          std::to_string(axis));
    }
  }

  std::vector<int> oshape = a.shape();
  oshape[axis] += b.shape()[axis];
  auto vals = alloc(a.size() + b.size());
  const auto& av = a.values();
  const auto& bv = b.values();

  if (rank == 1 || axis == 0) {
    std::copy(av.begin(), av.end(), vals->begin());
    std::copy(bv.begin(), bv.end(), vals->begin() + static_cast<std::ptrdiff_t>(av.size()));
  } else {
    const int rows = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    for (int r = 0; r < rows; ++r) {
      std::copy(av.begin() + static_cast<std::ptrdiff_t>(r) * ca,
                av.begin() + static_cast<std::ptrdiff_t>(r + 1) * ca,
                vals->begin() + static_cast<std::ptrdiff_t>(r) * (ca + cb));
      std::copy(bv.begin() + static_cast<std::ptrdiff_t>(r) * cb,
                bv.begin() + static_cast<std::ptrdiff_t>(r + 1) * cb,
                vals->begin() + static_cast<std::ptrdiff_t>(r) * (ca + cb) + ca);
    }
  }
  const bool req = a.requires_grad() || b.requires_grad();
  Tensor out = OpBuilder::make(t, std::move(oshape), std::move(vals), req, "concat");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 bid = b.node(), ashape = a.shape(),
                                 bshape = b.shape(), rank, axis]() {
      const auto& g = t->grad_ref(oid);
      const std::size_t na = shape_product(ashape), nb = shape_product(bshape);
      if (rank == 1 || axis == 0) {
        t->accum(aid, g.data(), na);
        t->accum(bid, g.data() + na, nb);
      } else {
        const int rows = ashape[0], ca = ashape[1], cb = bshape[1];
        if (t->node_requires(aid)) {
          std::vector<double> da(na);
          for (int r = 0; r < rows; ++r) {
            for (int cc = 0; cc < ca; ++cc) {
              da[static_cast<std::size_t>(r) * ca + cc] =
                  g[static_cast<std::size_t>(r) * (ca + cb) + cc];
            }
          }
          t->accum(aid, da.data(), na);
        }
        if (t->node_requires(bid)) {
          std::vector<double> db(nb);
          for (int r = 0; r < rows; ++r) {
            for (int cc = 0; cc < cb; ++cc) {
              db[static_cast<std::size_t>(r) * cb + cc] =
                  g[static_cast<std::size_t>(r) * (ca + cb) + ca + cc];
            }
          }
          t->accum(bid, db.data(), nb);
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  if (!a.defined()) throw InvalidParams("slice: undefined tensor");
  Tape* t = a.tape();
  const int rank = static_cast<int>(a.shape().size());
  if (rank < 1 || rank > 2) throw ShapeMismatch("slice: rank must be 1 or 2");
  if (axis < 0 || axis >= rank) throw InvalidParams("slice: bad axis");
  const int dim = a.shape()[axis];
  if (start < 0 || len < 1 || start + len > dim) {
    throw InvalidParams("slice: range [" + std::to_string(start) + ", " +
                        std::to_string(start + len) + ") outside dim " +
                        std::to_string(dim));
  }

  std::vector<int> oshape = a.shape();
  oshape[axis] = len;
  auto vals = alloc(shape_product(oshape));
  const auto& av = a.values();
  if (rank == 1 || axis == 0) {
    const int cols = (rank == 2) ? a.shape()[1] : 1;
    std::copy(av.begin() + static_cast<std::ptrdiff_t>(start) * cols,
              av.begin() + static_cast<std::ptrdiff_t>(start + len) * cols,
              vals->begin());
  } else {
    const int rows = a.shape()[0], cols = a.shape()[1];
    for (int r = 0; r < rows; ++r) {
      std::copy(av.begin() + static_cast<std::ptrdiff_t>(r) * cols + start,
                av.begin() + static_cast<std::ptrdiff_t>(r) * cols + start + len,
                vals->begin() + static_cast<std::ptrdiff_t>(r) * len);
    }
  }
  const bool req = a.requires_grad();
  Tensor out = OpBuilder::make(t, std::move(oshape), std::move(vals), req, "slice");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 ashape = a.shape(), rank, axis, start, len]() {
      const auto& g = t->grad_ref(oid);
      t->ensure_grad(aid);
      auto& da = t->grad_ref(aid);
      if (rank == 1 || axis == 0) {
        const int cols = (rank == 2) ? ashape[1] : 1;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[static_cast<std::size_t>(start) * cols + i] += g[i];
        }
      } else {
        const int rows = ashape[0], cols = ashape[1];
        for (int r = 0; r < rows; ++r) {
          for (int cc = 0; cc < len; ++cc) {
            da[static_cast<std::size_t>(r) * cols + start + cc] +=
                g[static_cast<std::size_t>(r) * len + cc];
          }
        }
      }
    });
  }
  return out;
}

Tensor expand(const Tensor& a, int axis, int n) {
  if (!a.defined()) throw InvalidParams("expand: undefined tensor");
  Tape* t = a.tape();
  require_rank(a, 2, "expand");
  if (axis < 0 || axis > 1) throw InvalidParams("expand: bad axis");
  if (a.shape()[axis] != 1) {
    throw ShapeMismatch("expand: axis " + std::to_string(axis) +
                        " must have size 1, shape is " + shape_to_string(a.shape()));
  }
  if (n < 1) throw InvalidParams("expand: n must be >= 1");

  std::vector<int> oshape = a.shape();
  oshape[axis] = n;
  auto vals = alloc(shape_product(oshape));
  const auto& av = a.values();
  if (axis == 0) {
    const int cols = a.shape()[1];
    for (int r = 0; r < n; ++r) {
      std::copy(av.begin(), av.end(), vals->begin() + static_cast<std::ptrdiff_t>(r) * cols);
    }
  } else {
    const int rows = a.shape()[0];
    for (int r = 0; r < rows; ++r) {
      for (int cc = 0; cc < n; ++cc) {
        (*vals)[static_cast<std::size_t>(r) * n + cc] = av[r];
      }
    }
  }
  const bool req = a.requires_grad();
  Tensor out = OpBuilder::make(t, std::move(oshape), std::move(vals), req, "expand");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 ashape = a.shape(), axis, n]() {
      const auto& g = t->grad_ref(oid);
      if (axis == 0) {
        const int cols = ashape[1];
        std::vector<double> da(static_cast<std::size_t>(cols), 0.0);
        for (int r = 0; r < n; ++r) {
          for (int cc = 0; cc < cols; ++cc) {
            da[cc] += g[static_cast<std::size_t>(r) * cols + cc];
          }
        }
        t->accum(aid, da.data(), da.size());
      } else {
        const int rows = ashape[0];
        std::vector<double> da(static_cast<std::size_t>(rows), 0.0);
        for (int r = 0; r < rows; ++r) {
          for (int cc = 0; cc < n; ++cc) {
            da[r] += g[static_cast<std::size_t>(r) * n + cc];
          }
        }
        t->accum(aid, da.data(), da.size());
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (!a.defined()) throw InvalidParams("reshape: undefined tensor");
  Tape* t = a.tape();
  if (shape_product(shape) != a.size()) {
    throw ShapeMismatch("reshape: " + shape_to_string(a.shape()) + " to " +
                        shape_to_string(shape));
  }
  const bool req = a.requires_grad();
  // Values are shared, not copied; only the shape changes.
  Tensor out = OpBuilder::make(t, std::move(shape), a.values_ptr(), req, "reshape");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node()]() {
      const auto& g = t->grad_ref(oid);
      t->accum(aid, g.data(), g.size());
    });
  }
  return out;
}

Tensor transpose2d(const Tensor& a) {
  if (!a.defined()) throw InvalidParams("transpose2d: undefined tensor");
  Tape* t = a.tape();
  require_rank(a, 2, "transpose2d");
  const int r = a.shape()[0], c = a.shape()[1];
  auto vals = alloc(a.size());
  const auto& av = a.values();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      (*vals)[static_cast<std::size_t>(j) * r + i] = av[static_cast<std::size_t>(i) * c + j];
    }
  }
  const bool req = a.requires_grad();
  Tensor out = OpBuilder::make(t, {c, r}, std::move(vals), req, "transpose2d");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(), r, c]() {
      const auto& g = t->grad_ref(oid);
      std::vector<double> da(static_cast<std::size_t>(r) * c);
      for (int j = 0; j < c; ++j) {
        for (int i = 0; i < r; ++i) {
          da[static_cast<std::size_t>(i) * c + j] = g[static_cast<std::size_t>(j) * r + i];
        }
      }
      t->accum(aid, da.data(), da.size());
    });
  }
  return out;
}

Tensor frame(const Tensor& x, int win, int hop) {
  if (!x.defined()) throw InvalidParams("frame: undefined tensor");
  Tape* t = x.tape();
  require_rank(x, 1, "frame");
  if (win < 1 || hop < 1) throw InvalidParams("frame: win and hop must be >= 1");
  const int n = x.shape()[0];
  if (n < win) {
    throw ShapeMismatch("frame: input length " + std::to_string(n) +
                        " shorter than window " + std::to_string(win));
  }
  const int frames = (n - win) / hop + 1;
  auto vals = alloc(static_cast<std::size_t>(frames) * win);
  const auto& xv = x.values();
  for (int f = 0; f < frames; ++f) {
    std::copy(xv.begin() + static_cast<std::ptrdiff_t>(f) * hop,
              xv.begin() + static_cast<std::ptrdiff_t>(f) * hop + win,
              vals->begin() + static_cast<std::ptrdiff_t>(f) * win);
  }
  const bool req = x.requires_grad();
  Tensor out = OpBuilder::make(t, {frames, win}, std::move(vals), req, "frame");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), xid = x.node(), frames,
                                 win, hop]() {
      const auto& g = t->grad_ref(oid);
      t->ensure_grad(xid);
      auto& dx = t->grad_ref(xid);
      for (int f = 0; f < frames; ++f) {
        for (int i = 0; i < win; ++i) {
          dx[static_cast<std::size_t>(f) * hop + i] +=
              g[static_cast<std::size_t>(f) * win + i];
        }
      }
    });
  }
  return out;
}

// --- elementwise nonlinearities ----------------------------------------------

namespace {

template <typename Fwd, typename MakeBp>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, MakeBp make_bp) {
  if (!a.defined()) throw InvalidParams(std::string(name) + ": undefined tensor");
  Tape* t = a.tape();
  const std::size_t n = a.size();
  auto vals = alloc(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) (*vals)[i] = fwd(av[i]);
  const bool req = a.requires_grad();
  Tensor out = OpBuilder::make(t, a.shape(), std::move(vals), req, name);
  if (req) t->set_backprop(out.node(), make_bp(t, out, a));
  return out;
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](Tape* t, const Tensor& out, const Tensor& a) {
        return [t, oid = out.node(), aid = a.node(), ap = a.values_ptr()]() {
          const auto& g = t->grad_ref(oid);
          std::vector<double> da(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] = (*ap)[i] > 0.0 ? g[i] : 0.0;
          }
          t->accum(aid, da.data(), da.size());
        };
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid",
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                     : std::exp(v) / (1.0 + std::exp(v)); },
      [](Tape* t, const Tensor& out, const Tensor& a) {
        return [t, oid = out.node(), aid = a.node(), op = out.values_ptr()]() {
          const auto& g = t->grad_ref(oid);
          std::vector<double> da(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = (*op)[i];
            da[i] = g[i] * s * (1.0 - s);
          }
          t->accum(aid, da.data(), da.size());
        };
      });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op(
      a, "tanh", [](double v) { return std::tanh(v); },
      [](Tape* t, const Tensor& out, const Tensor& a) {
        return [t, oid = out.node(), aid = a.node(), op = out.values_ptr()]() {
          const auto& g = t->grad_ref(oid);
          std::vector<double> da(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double th = (*op)[i];
            da[i] = g[i] * (1.0 - th * th);
          }
          t->accum(aid, da.data(), da.size());
        };
      });
}

Tensor log_op(const Tensor& a) {
  return unary_op(
      a, "log", [](double v) { return std::log(v); },
      [](Tape* t, const Tensor& out, const Tensor& a) {
        return [t, oid = out.node(), aid = a.node(), ap = a.values_ptr()]() {
          const auto& g = t->grad_ref(oid);
          std::vector<double> da(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] / (*ap)[i];
          t->accum(aid, da.data(), da.size());
        };
      });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, "square", [](double v) { return v * v; },
      [](Tape* t, const Tensor& out, const Tensor& a) {
        return [t, oid = out.node(), aid = a.node(), ap = a.values_ptr()]() {
          const auto& g = t->grad_ref(oid);
          std::vector<double> da(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) da[i] = 2.0 * (*ap)[i] * g[i];
          t->accum(aid, da.data(), da.size());
        };
      });
}

// --- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a) {
  if (!a.defined()) throw InvalidParams("sum: undefined tensor");
  Tape* t = a.tape();
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const bool req = a.requires_grad();
  Tensor out = OpBuilder::make(t, {}, std::make_shared<std::vector<double>>(1, acc),
                               req, "sum");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 n = a.size()]() {
      const double g0 = t->grad_ref(oid)[0];
      std::vector<double> da(n, g0);
      t->accum(aid, da.data(), n);
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  if (!a.defined()) throw InvalidParams("mean: undefined tensor");
  return affine(sum(a), 1.0 / static_cast<double>(a.size()), 0.0);
}

Tensor mean_pool_time(const Tensor& a) {
  if (!a.defined()) throw InvalidParams("mean_pool_time: undefined tensor");
  Tape* t = a.tape();
  require_rank(a, 2, "mean_pool_time");
  const int c = a.shape()[0], n = a.shape()[1];
  auto vals = alloc(static_cast<std::size_t>(c));
  const auto& av = a.values();
  for (int ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    for (int tt = 0; tt < n; ++tt) acc += av[static_cast<std::size_t>(ci) * n + tt];
    (*vals)[ci] = acc / n;
  }
  const bool req = a.requires_grad();
  Tensor out = OpBuilder::make(t, {c}, std::move(vals), req, "mean_pool_time");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(), c, n]() {
      const auto& g = t->grad_ref(oid);
      std::vector<double> da(static_cast<std::size_t>(c) * n);
      for (int ci = 0; ci < c; ++ci) {
        const double v = g[ci] / n;
        for (int tt = 0; tt < n; ++tt) da[static_cast<std::size_t>(ci) * n + tt] = v;
      }
      t->accum(aid, da.data(), da.size());
    });
  }
  return out;
}

// --- normalization and features -------------------------------------------------

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
  Tape* t = same_tape(a, gain, "layer_norm");
  same_tape(a, bias, "layer_norm");
  require_rank(a, 2, "layer_norm");
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  const int c = a.shape()[0], n = a.shape()[1];
  if (gain.shape()[0] != c || bias.shape()[0] != c) {
    throw ShapeMismatch("layer_norm: gain/bias must have one entry per channel");
  }
  constexpr double kEps = 1e-5;

  auto vals = alloc(a.size());
  auto xhat = alloc(a.size());
  auto inv_std = alloc(static_cast<std::size_t>(n));
  const auto& av = a.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int tt = 0; tt < n; ++tt) {
    double mu = 0.0;
    for (int ci = 0; ci < c; ++ci) mu += av[static_cast<std::size_t>(ci) * n + tt];
    mu /= c;
    double var = 0.0;
    for (int ci = 0; ci < c; ++ci) {
      const double d = av[static_cast<std::size_t>(ci) * n + tt] - mu;
      var += d * d;
    }
    var /= c;
    const double is = 1.0 / std::sqrt(var + kEps);
    (*inv_std)[tt] = is;
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t idx = static_cast<std::size_t>(ci) * n + tt;
      const double xh = (av[idx] - mu) * is;
      (*xhat)[idx] = xh;
      (*vals)[idx] = gv[ci] * xh + bv[ci];
    }
  }
  const bool req = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
  Tensor out = OpBuilder::make(t, a.shape(), std::move(vals), req, "layer_norm");
  if (req) {
    auto gp = gain.values_ptr();
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 gid = gain.node(), bid = bias.node(), xhat,
                                 inv_std, gp, c, n]() {
      const auto& g = t->grad_ref(oid);
      if (t->node_requires(aid)) {
        std::vector<double> da(static_cast<std::size_t>(c) * n);
        for (int tt = 0; tt < n; ++tt) {
          double m1 = 0.0, m2 = 0.0;
          for (int ci = 0; ci < c; ++ci) {
            const std::size_t idx = static_cast<std::size_t>(ci) * n + tt;
            const double dxh = g[idx] * (*gp)[ci];
            m1 += dxh;
            m2 += dxh * (*xhat)[idx];
          }
          m1 /= c;
          m2 /= c;
          const double is = (*inv_std)[tt];
          for (int ci = 0; ci < c; ++ci) {
            const std::size_t idx = static_cast<std::size_t>(ci) * n + tt;
            const double dxh = g[idx] * (*gp)[ci];
            da[idx] = is * (dxh - m1 - (*xhat)[idx] * m2);
          }
        }
        t->accum(aid, da.data(), da.size());
      }
      if (t->node_requires(gid)) {
        std::vector<double> dg(static_cast<std::size_t>(c), 0.0);
        for (int ci = 0; ci < c; ++ci) {
          for (int tt = 0; tt < n; ++tt) {
            const std::size_t idx = static_cast<std::size_t>(ci) * n + tt;
            dg[ci] += g[idx] * (*xhat)[idx];
          }
        }
        t->accum(gid, dg.data(), dg.size());
      }
      if (t->node_requires(bid)) {
        std::vector<double> db(static_cast<std::size_t>(c), 0.0);
        for (int ci = 0; ci < c; ++ci) {
          for (int tt = 0; tt < n; ++tt) {
            db[ci] += g[static_cast<std::size_t>(ci) * n + tt];
          }
        }
        t->accum(bid, db.data(), db.size());
      }
    });
  }
  return out;
}

Tensor mel_apply(const Tensor& p, std::shared_ptr<const std::vector<double>> w,
                 int n_mels, double eps) {
  if (!p.defined()) throw InvalidParams("mel_apply: undefined tensor");
  if (!w) throw InvalidParams("mel_apply: null filterbank");
  if (!(eps > 0.0)) throw InvalidParams("mel_apply: eps must be > 0");
  Tape* t = p.tape();
  require_rank(p, 2, "mel_apply");
  const int frames = p.shape()[0], bins = p.shape()[1];
  if (w->size() != static_cast<std::size_t>(n_mels) * bins) {
    throw ShapeMismatch("mel_apply: filterbank size " + std::to_string(w->size()) +
                        " vs " + std::to_string(n_mels) + "x" + std::to_string(bins));
  }

  auto lin = alloc(static_cast<std::size_t>(frames) * n_mels);
  {
    MapC P(p.values().data(), frames, bins);
    MapC W(w->data(), n_mels, bins);
    MapM A(lin->data(), frames, n_mels);
    A.noalias() = P * W.transpose();
  }
  auto vals = alloc(lin->size());
  for (std::size_t i = 0; i < lin->size(); ++i) {
    (*lin)[i] += eps;
    (*vals)[i] = std::log((*lin)[i]);
  }
  const bool req = p.requires_grad();
  Tensor out = OpBuilder::make(t, {frames, n_mels}, std::move(vals), req, "mel_apply");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), pid = p.node(), lin, w,
                                 frames, bins, n_mels]() {
      const auto& g = t->grad_ref(oid);
      std::vector<double> gl(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gl[i] = g[i] / (*lin)[i];
      std::vector<double> dp(static_cast<std::size_t>(frames) * bins);
      MapC GL(gl.data(), frames, n_mels);
      MapC W(w->data(), n_mels, bins);
      MapM DP(dp.data(), frames, bins);
      DP.noalias() = GL * W;
      t->accum(pid, dp.data(), dp.size());
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& a) {
  if (!a.defined()) throw InvalidParams("log_softmax: undefined tensor");
  Tape* t = a.tape();
  require_rank(a, 1, "log_softmax");
  const int k = a.shape()[0];
  const auto& av = a.values();
  const double mx = *std::max_element(av.begin(), av.end());
  double z = 0.0;
  for (double v : av) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  auto vals = alloc(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) (*vals)[i] = av[i] - lse;
  const bool req = a.requires_grad();
  Tensor out = OpBuilder::make(t, {k}, std::move(vals), req, "log_softmax");
  if (req) {
    t->set_backprop(out.node(), [t, oid = out.node(), aid = a.node(),
                                 op = out.values_ptr(), k]() {
      const auto& g = t->grad_ref(oid);
      double gsum = 0.0;
      for (double v : g) gsum += v;
      std::vector<double> da(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) da[i] = g[i] - std::exp((*op)[i]) * gsum;
      t->accum(aid, da.data(), da.size());
    });
  }
  return out;
}

Tensor stop_gradient(const Tensor& a) {
  if (!a.defined()) throw InvalidParams("stop_gradient: undefined tensor");
  Tape* t = a.tape();
  // A fresh untracked node sharing the input's values: forward identity,
  // nothing flows back through it.
  return OpBuilder::make(t, a.shape(), a.values_ptr(), false, "stop_gradient");
}

}  // namespace snrilab::grad
