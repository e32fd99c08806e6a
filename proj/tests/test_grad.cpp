#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unistd.h>
#include <vector>

#include "snrilab/common/errors.hpp"
#include "snrilab/common/rng.hpp"
#include "snrilab/grad/adam.hpp"
#include "snrilab/grad/grad_check.hpp"
#include "snrilab/grad/tape.hpp"
#include "test_support.hpp"

using namespace snrilab;
using grad::Tape;
using grad::Tensor;

namespace {

grad::Param make_param(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  grad::Param p;
  p.shape = std::move(shape);
  p.value = testutil::random_vector(rng, grad::shape_product(p.shape), scale);
  return p;
}

grad::Param make_positive_param(std::vector<int> shape, Rng& rng, double lo,
                                double hi) {
  grad::Param p;
  p.shape = std::move(shape);
  p.value.resize(grad::shape_product(p.shape));
  for (double& v : p.value) v = rng.uniform(lo, hi);
  return p;
}

// Values bounded away from zero so relu's kink never sits under the FD probe.
grad::Param make_offset_param(std::vector<int> shape, Rng& rng) {
  grad::Param p;
  p.shape = std::move(shape);
  p.value.resize(grad::shape_product(p.shape));
  for (double& v : p.value) {
    const double mag = rng.uniform(0.2, 1.2);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return p;
}

using Leaves = std::map<std::string, Tensor>;
using Builder = std::function<Tensor(Tape&, Leaves&)>;

// Contracts an arbitrary-shaped output against fixed pseudo-random weights so
// every output coordinate influences the scalar loss.
Tensor contract(Tape& tape, const Tensor& out) {
  Rng rng(0x5eedu);
  std::vector<double> w(out.size());
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return grad::sum(grad::mul(tape.constant(out.shape(), std::move(w)), out));
}

grad::GradCheckReport fd_check(const grad::Params& params, const Builder& build) {
  grad::LossWithGrad eval = [&build](const grad::Params& p, grad::GradMap* g) {
    Tape tape;
    Leaves leaves;
    for (const auto& [name, param] : p) leaves[name] = tape.leaf(name, param);
    Tensor loss = build(tape, leaves);
    const double v = loss.scalar();
    if (g != nullptr) *g = tape.backward(loss);
    return v;
  };
  return grad::grad_check(eval, params, grad::GradCheckOptions{});
}

}  // namespace

TEST_CASE("sigmoid at zero") {
  Tape tape;
  grad::Param p;
  p.shape = {1};
  p.value = {0.0};
  Tensor x = tape.leaf("x", p);
  Tensor y = grad::sigmoid(x);
  CHECK(y.values()[0] == 0.5);
  auto g = tape.backward(grad::sum(y));
  CHECK(g.at("x")[0] == 0.25);
}

TEST_CASE("concat shape") {
  Tape tape;
  Tensor a = tape.zeros({5, 3});
  Tensor b = tape.zeros({5, 1});
  Tensor c = grad::concat(a, b, 1);
  CHECK(c.shape() == std::vector<int>{5, 4});
  Tensor d = grad::concat(tape.zeros({2, 4}), tape.zeros({3, 4}), 0);
  CHECK(d.shape() == std::vector<int>{5, 4});
}

TEST_CASE("conv1d gradient is finite-difference exact") {
  Rng rng(101);
  grad::Params params;
  params["x"] = make_param({8, 16}, rng, 0.7);
  params["w"] = make_param({4, 8, 3}, rng, 0.5);
  auto report = fd_check(params, [](Tape& tape, Leaves& l) {
    return grad::sum(grad::square(grad::conv1d(l["x"], l["w"], 1, 1, 1, 1)));
  });
  CHECK(report.passed);
  CHECK(report.max_rel_err < 1e-6);
  CHECK(report.n_checked > 0);
}

TEST_CASE("finite differences across every primitive") {
  struct OpCase {
    const char* name;
    grad::Params params;
    Builder build;
  };

  Rng rng(2024);
  std::vector<OpCase> cases;

  cases.push_back({"add", {{"a", make_param({3, 4}, rng)}, {"b", make_param({3, 4}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::add(l["a"], l["b"])); }});
  cases.push_back({"sub", {{"a", make_param({3, 4}, rng)}, {"b", make_param({3, 4}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::sub(l["a"], l["b"])); }});
  cases.push_back({"mul", {{"a", make_param({3, 4}, rng)}, {"b", make_param({3, 4}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::mul(l["a"], l["b"])); }});
  cases.push_back({"mul_scalar_broadcast",
                   {{"a", make_param({3, 4}, rng)}, {"s", make_param({1}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::mul(l["a"], l["s"])); }});
  cases.push_back({"affine", {{"a", make_param({2, 5}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::affine(l["a"], 2.5, -0.7)); }});
  cases.push_back({"matmul", {{"a", make_param({3, 4}, rng)}, {"b", make_param({4, 2}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::matmul(l["a"], l["b"])); }});
  cases.push_back({"conv1d_strided_dilated",
                   {{"x", make_param({2, 16}, rng)}, {"w", make_param({3, 2, 4}, rng)}},
                   [](Tape& t, Leaves& l) {
                     return contract(t, grad::conv1d(l["x"], l["w"], 2, 2, 1, 2));
                   }});
  cases.push_back({"transposed_conv1d",
                   {{"x", make_param({2, 5}, rng)}, {"w", make_param({2, 3, 4}, rng)}},
                   [](Tape& t, Leaves& l) {
                     return contract(t, grad::transposed_conv1d(l["x"], l["w"], 2));
                   }});
  cases.push_back({"add_channel_bias",
                   {{"a", make_param({3, 5}, rng)}, {"b", make_param({3}, rng)}},
                   [](Tape& t, Leaves& l) {
                     return contract(t, grad::add_channel_bias(l["a"], l["b"]));
                   }});
  cases.push_back({"concat_axis0",
                   {{"a", make_param({2, 4}, rng)}, {"b", make_param({3, 4}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::concat(l["a"], l["b"], 0)); }});
  cases.push_back({"concat_axis1",
                   {{"a", make_param({3, 2}, rng)}, {"b", make_param({3, 1}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::concat(l["a"], l["b"], 1)); }});
  cases.push_back({"slice", {{"a", make_param({4, 6}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::slice(l["a"], 1, 2, 3)); }});
  cases.push_back({"expand", {{"a", make_param({3, 1}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::expand(l["a"], 1, 4)); }});
  cases.push_back({"reshape", {{"a", make_param({4, 6}, rng)}},
                   [](Tape& t, Leaves& l) {
                     return contract(t, grad::reshape(l["a"], {3, 8}));
                   }});
  cases.push_back({"transpose2d", {{"a", make_param({3, 5}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::transpose2d(l["a"])); }});
  cases.push_back({"frame", {{"x", make_param({20}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::frame(l["x"], 6, 3)); }});
  cases.push_back({"relu", {{"a", make_offset_param({4, 5}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::relu(l["a"])); }});
  cases.push_back({"sigmoid", {{"a", make_param({4, 5}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::sigmoid(l["a"])); }});
  cases.push_back({"tanh", {{"a", make_param({4, 5}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::tanh_op(l["a"])); }});
  cases.push_back({"log", {{"a", make_positive_param({4, 5}, rng, 0.5, 2.0)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::log_op(l["a"])); }});
  cases.push_back({"square", {{"a", make_param({4, 5}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::square(l["a"])); }});
  cases.push_back({"sum", {{"a", make_param({4, 5}, rng)}},
                   [](Tape& t, Leaves& l) {
                     return grad::mul(grad::sum(l["a"]), grad::sum(grad::square(l["a"])));
                   }});
  cases.push_back({"mean", {{"a", make_param({4, 5}, rng)}},
                   [](Tape& t, Leaves& l) {
                     return grad::mul(grad::mean(l["a"]), grad::mean(grad::square(l["a"])));
                   }});
  cases.push_back({"mean_pool_time", {{"a", make_param({3, 7}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::mean_pool_time(l["a"])); }});
  cases.push_back({"layer_norm",
                   {{"a", make_param({4, 6}, rng)},
                    {"gain", make_positive_param({4}, rng, 0.5, 1.5)},
                    {"bias", make_param({4}, rng, 0.3)}},
                   [](Tape& t, Leaves& l) {
                     return contract(t, grad::layer_norm(l["a"], l["gain"], l["bias"]));
                   }});
  cases.push_back({"mel_apply", {{"p", make_positive_param({3, 5}, rng, 0.5, 1.5)}},
                   [](Tape& t, Leaves& l) {
                     auto w = std::make_shared<std::vector<double>>();
                     Rng wr(55);
                     for (int i = 0; i < 2 * 5; ++i) w->push_back(wr.uniform(0.1, 1.0));
                     return contract(t, grad::mel_apply(l["p"], w, 2, 1e-10));
                   }});
  cases.push_back({"log_softmax", {{"a", make_param({7}, rng)}},
                   [](Tape& t, Leaves& l) { return contract(t, grad::log_softmax(l["a"])); }});

  for (auto& c : cases) {
    CAPTURE(c.name);
    auto report = fd_check(c.params, c.build);
    CAPTURE(report.max_rel_err);
    CAPTURE(report.worst.param);
    CHECK(report.passed);
    CHECK(report.n_checked > 0);
  }
}

TEST_CASE("stop_gradient") {
  Rng rng(7);
  grad::Param p = make_param({4}, rng);

  SUBCASE("forward identity") {
    Tape tape;
    Tensor x = tape.leaf("p", p);
    Tensor y = grad::stop_gradient(x);
    CHECK(y.values() == x.values());
  }

  SUBCASE("fully blocked branch yields an exactly zero gradient") {
    Tape tape;
    Tensor x = tape.leaf("p", p);
    auto g = tape.backward(grad::sum(grad::square(grad::stop_gradient(x))));
    REQUIRE(g.count("p") == 1);
    for (double v : g.at("p")) CHECK(v == 0.0);
  }

  SUBCASE("mixed branches keep only the live contribution") {
    Tape tape;
    Tensor x = tape.leaf("p", p);
    Tensor live = grad::sum(grad::square(x));
    Tensor dead = grad::sum(grad::square(grad::stop_gradient(x)));
    auto g = tape.backward(grad::add(live, dead));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      CHECK(g.at("p")[i] == doctest::Approx(2.0 * p.value[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("backward") {
  SUBCASE("matmul quadratic has the closed-form gradient") {
    Rng rng(41);
    grad::Param W = make_param({2, 3}, rng);
    const std::vector<double> xv = testutil::random_vector(rng, 3, 1.0);

    Tape tape;
    Tensor w = tape.leaf("W", W);
    Tensor x = tape.constant({3, 1}, xv);
    Tensor y = grad::matmul(w, x);
    auto g = tape.backward(grad::sum(grad::square(y)));

    // d/dW sum((Wx)^2) = 2 (Wx) x^T.
    std::vector<double> wx(2, 0.0);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) wx[r] += W.value[r * 3 + c] * xv[c];
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 3; ++c) {
        CHECK(g.at("W")[r * 3 + c] ==
              doctest::Approx(2.0 * wx[r] * xv[c]).epsilon(1e-10));
      }
    }
  }

  SUBCASE("disconnected leaves report zero gradients") {
    Rng rng(43);
    Tape tape;
    Tensor a = tape.leaf("a", make_param({3}, rng));
    Tensor b = tape.leaf("unused", make_param({2}, rng));
    auto g = tape.backward(grad::sum(grad::square(a)));
    REQUIRE(g.count("unused") == 1);
    CHECK(g.at("unused").size() == 2);
    for (double v : g.at("unused")) CHECK(v == 0.0);
  }

  SUBCASE("a tape can only be walked once") {
    Rng rng(47);
    Tape tape;
    Tensor a = tape.leaf("a", make_param({3}, rng));
    Tensor loss = grad::sum(grad::square(a));
    tape.backward(loss);
    CHECK(tape.spent());
    CHECK_THROWS_AS(tape.backward(loss), TapeSpent);
  }

  SUBCASE("fan-out accumulates both paths") {
    grad::Param p;
    p.shape = {3};
    p.value = {0.5, -1.0, 2.0};
    Tape tape;
    Tensor x = tape.leaf("p", p);
    Tensor y = grad::square(x);
    auto g = tape.backward(grad::sum(grad::add(y, y)));
    for (int i = 0; i < 3; ++i) {
      CHECK(g.at("p")[i] == doctest::Approx(4.0 * p.value[i]).epsilon(1e-15));
    }
  }

  SUBCASE("shared leaf names accumulate as one parameter") {
    grad::Param p;
    p.shape = {2};
    p.value = {1.5, -0.5};
    Tape tape;
    Tensor a = tape.leaf("shared", p);
    Tensor b = tape.leaf("shared", p);
    auto g = tape.backward(grad::add(grad::sum(grad::square(a)),
                                     grad::sum(grad::square(b))));
    REQUIRE(g.count("shared") == 1);
    for (int i = 0; i < 2; ++i) {
      CHECK(g.at("shared")[i] == doctest::Approx(4.0 * p.value[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("contract violations") {
  SUBCASE("non-scalar losses are rejected") {
    Rng rng(51);
    Tape tape;
    Tensor a = tape.leaf("a", make_param({3}, rng));
    CHECK_THROWS_AS(tape.backward(grad::square(a)), NonScalarLoss);
  }

  SUBCASE("non-finite results are caught at the op") {
    Tape tape;
    Tensor a = tape.constant({2}, {1.0, -1.0});
    CHECK_THROWS_AS(grad::log_op(a), NonFiniteValue);
  }

  SUBCASE("shape mismatches are rejected, scalar broadcast allowed") {
    Tape tape;
    Tensor a = tape.zeros({2, 2});
    Tensor s = tape.scalar_const(3.0);
    Tensor ok = grad::add(a, s);
    CHECK(ok.shape() == std::vector<int>{2, 2});
    Tensor bad = tape.zeros({3});
    CHECK_THROWS_AS(grad::add(a, bad), ShapeMismatch);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves values in place but advances the step") {
    grad::Params params;
    params["w"].shape = {3};
    params["w"].value = {1.0, -2.0, 0.5};
    grad::AdamState state;
    grad::GradMap grads;
    grads["w"] = {0.0, 0.0, 0.0};
    grad::adam_step(params, grads, state, grad::AdamConfig{});
    CHECK(state.step == 1);
    CHECK(params["w"].value == std::vector<double>{1.0, -2.0, 0.5});
  }

  SUBCASE("first step moves opposite the gradient at roughly lr") {
    grad::Params params;
    params["w"].shape = {2};
    params["w"].value = {0.0, 0.0};
    grad::AdamState state;
    grad::GradMap grads;
    grads["w"] = {0.3, -0.8};
    grad::AdamConfig cfg;
    grad::adam_step(params, grads, state, cfg);
    CHECK(params["w"].value[0] == doctest::Approx(-cfg.lr).epsilon(1e-4));
    CHECK(params["w"].value[1] == doctest::Approx(cfg.lr).epsilon(1e-4));
  }

  SUBCASE("quadratic bowl converges") {
    grad::Params params;
    params["theta"].shape = {1};
    params["theta"].value = {1.0};
    grad::AdamState state;
    grad::AdamConfig cfg;
    cfg.lr = 1e-2;
    for (int step = 0; step < 5000; ++step) {
      grad::GradMap grads;
      grads["theta"] = {2.0 * params["theta"].value[0]};
      grad::adam_step(params, grads, state, cfg);
    }
    CHECK(std::abs(params["theta"].value[0]) < 1e-3);
  }

  SUBCASE("parameters absent from the gradient map stay untouched") {
    grad::Params params;
    params["w"].shape = {1};
    params["w"].value = {1.0};
    params["frozen"].shape = {1};
    params["frozen"].value = {4.0};
    grad::AdamState state;
    grad::GradMap grads;
    grads["w"] = {1.0};
    grad::adam_step(params, grads, state, grad::AdamConfig{});
    CHECK(params["frozen"].value[0] == 4.0);
    CHECK(params["w"].value[0] != 1.0);
  }
}

TEST_CASE("grad_check flags a corrupted gradient") {
  Rng rng(61);
  grad::Params params;
  params["a"] = make_param({6}, rng);

  grad::LossWithGrad eval = [](const grad::Params& p, grad::GradMap* g) {
    double loss = 0.0;
    for (double v : p.at("a").value) loss += v * v;
    if (g != nullptr) {
      auto& ga = (*g)["a"];
      ga.resize(p.at("a").value.size());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = 2.0 * p.at("a").value[i];
      ga[2] *= 1.5;  // deliberately wrong coordinate
    }
    return loss;
  };

  grad::GradCheckOptions opt;
  opt.samples_per_param = 6;  // cover every coordinate
  auto report = grad::grad_check(eval, params, opt);
  CHECK_FALSE(report.passed);
  CHECK(report.failures.size() > 0);
  CHECK(report.max_rel_err > 0.1);
}

TEST_CASE("gradients are bit-deterministic") {
  Rng rng(71);
  grad::Params params;
  params["x"] = make_param({2, 16}, rng, 0.7);
  params["w"] = make_param({3, 2, 4}, rng, 0.5);

  auto run = [&params]() {
    Tape tape;
    Leaves leaves;
    for (const auto& [name, param] : params) leaves[name] = tape.leaf(name, param);
    Tensor out = grad::conv1d(leaves["x"], leaves["w"], 2, 1, 1, 1);
    Tensor loss = grad::sum(grad::square(grad::layer_norm(
        out, tape.constant({3}, {1.0, 1.0, 1.0}), tape.zeros({3}))));
    return tape.backward(loss);
  };

  const auto g1 = run();
  const auto g2 = run();
  REQUIRE(g1.size() == g2.size());
  for (const auto& [name, vec] : g1) {
    CHECK(vec == g2.at(name));
  }
}
