#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "snrilab/grad/params.hpp"

namespace snrilab::grad {

class Tape;

// Value plus an optional handle into the tape that produced it. Copying a
// Tensor is cheap (shared values). Tensors from different tapes must not mix.
class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return values_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t size() const { return values_ ? values_->size() : 0; }
  const std::vector<double>& values() const { return *values_; }
  std::shared_ptr<std::vector<double>> values_ptr() const { return values_; }
  double scalar() const;
  int node() const { return node_; }
  Tape* tape() const { return tape_; }
  bool requires_grad() const;

 private:
  friend class Tape;
  friend class OpBuilder;
  Tape* tape_ = nullptr;
  int node_ = -1;
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> values_;
};

// Define-by-run reverse-mode tape. Every operation appends a node; backward
// walks the nodes once in reverse and then frees them — a spent tape rejects
// further use. All values are checked finite after every op.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Untracked input (no gradient flows into it).
  Tensor constant(std::vector<int> shape, std::vector<double> values);
  // Same, sharing an existing buffer (for large fixed matrices).
  Tensor constant_shared(std::vector<int> shape,
                         std::shared_ptr<std::vector<double>> values);
  Tensor scalar_const(double v);
  Tensor zeros(std::vector<int> shape);

  // Tracked leaf; backward reports its gradient under `name`. Leafing the
  // same name twice (parameter sharing) accumulates both contributions.
  Tensor leaf(const std::string& name, const Param& p);

  // Reverse pass from a scalar loss. Returns gradients for every leaf on the
  // tape (zeros for leaves the loss does not reach) and spends the tape.
  GradMap backward(const Tensor& loss);

  bool spent() const { return spent_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class OpBuilder;

  struct Node {
    std::function<void()> backprop;  // reads grad, accumulates into inputs
    std::vector<double> grad;        // allocated lazily during backward
    std::string param_name;          // nonempty for tracked leaves
    std::size_t out_size = 0;
    bool requires_grad = false;
  };

  int add_node(std::size_t out_size, bool requires_grad,
               std::string param_name = "");
  void check_live(const char* op) const;

  std::vector<Node> nodes_;
  bool spent_ = false;

 public:
  // Internal plumbing shared by the op implementations; not for model code.
  std::vector<double>& grad_ref(int id) { return nodes_[id].grad; }
  bool node_requires(int id) const { return id >= 0 && nodes_[id].requires_grad; }
  void ensure_grad(int id);
  void accum(int id, const double* g, std::size_t n);
  void set_backprop(int id, std::function<void()> fn);
};

// ---- primitives -----------------------------------------------------------
// Shapes must match exactly unless one operand is scalar (size 1); any other
// broadcast must be spelled with expand().

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// k * a + c with plain-number coefficients.
Tensor affine(const Tensor& a, double k, double c);

// (m,k) x (k,n) -> (m,n).
Tensor matmul(const Tensor& a, const Tensor& b);

// x: (C_in, T), w: (C_out, C_in, K) -> (C_out, T_out); zero padding.
Tensor conv1d(const Tensor& x, const Tensor& w, int stride, int dilation,
              int pad_left, int pad_right);
// x: (C_in, N), w: (C_in, C_out, K) -> (C_out, (N-1)*stride + K).
Tensor transposed_conv1d(const Tensor& x, const Tensor& w, int stride);
// a: (C, N), bias: (C,) added per channel row.
Tensor add_channel_bias(const Tensor& a, const Tensor& bias);

Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
// a has size 1 along `axis`; repeats it n times.
Tensor expand(const Tensor& a, int axis, int n);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor transpose2d(const Tensor& a);
// x: (T,) -> (frames, win) with the usual floor((T-win)/hop)+1 frame count.
Tensor frame(const Tensor& x, int win, int hop);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// a: (C, N) -> (C,), mean over the time axis.
Tensor mean_pool_time(const Tensor& a);

// a: (C, N) normalized per time step across channels; gain/bias: (C,).
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias);

// p: (frames, n_bins) power; returns log(p * w^T + eps), shape (frames, n_mels).
// w is a fixed (n_mels x n_bins) row-major filterbank, not a graph input.
Tensor mel_apply(const Tensor& p,
                 std::shared_ptr<const std::vector<double>> w, int n_mels,
                 double eps);

// logits: (K,) -> log-probabilities (K,).
Tensor log_softmax(const Tensor& a);

// Forward identity; backward contributes exactly zero upstream.
Tensor stop_gradient(const Tensor& a);

}  // namespace snrilab::grad
