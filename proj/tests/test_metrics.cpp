#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <unistd.h>
#include <vector>

#include "snrilab/audio/buffer.hpp"
#include "snrilab/common/errors.hpp"
#include "snrilab/common/rng.hpp"
#include "snrilab/metrics/metrics.hpp"
#include "test_support.hpp"

using namespace snrilab;
using testutil::random_vector;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

metrics::SeparatedPair pair(std::vector<double> sp, std::vector<double> no,
                            int rate = 16000) {
  return {audio::AudioBuffer{std::move(sp), rate},
          audio::AudioBuffer{std::move(no), rate}};
}

}  // namespace

TEST_CASE("snr") {
  CHECK(metrics::snr({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
  CHECK(metrics::snr({2.0, 0.0}, {0.0, 1.0}) ==
        doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
  CHECK(metrics::snr({2.0, 0.0}, {0.0, 1.0}) == doctest::Approx(6.0206).epsilon(1e-5));
  CHECK_THROWS_AS(metrics::snr({0.0, 0.0}, {0.0, 1.0}), SilentReference);
  CHECK_THROWS_AS(metrics::snr({1.0, 0.0}, {0.0, 0.0}), SilentNoise);
  CHECK_THROWS_AS(metrics::snr({1.0}, {0.0, 1.0}), LengthMismatch);
}

TEST_CASE("snri") {
  SUBCASE("identity frontend scores zero") {
    Rng rng(31);
    for (int i = 0; i < 100; ++i) {
      const auto s = random_vector(rng, 48, 0.5);
      const auto n = random_vector(rng, 48, 0.8);
      std::vector<double> y1(s.size());
      for (std::size_t k = 0; k < s.size(); ++k) y1[k] = s[k] + n[k];
      CHECK(std::abs(metrics::snri(s, n, y1)) <= 1e-12);
    }
  }

  SUBCASE("hand example: residual energy one quarter of the noise") {
    CHECK(metrics::snri({1.0, 0.0}, {0.0, 1.0}, {1.0, 0.5}) ==
          doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
  }

  SUBCASE("perfect estimate hits the cap") {
    CHECK(metrics::snri({1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}) ==
          metrics::kSnriCapDb);
  }

  SUBCASE("silent inputs rejected") {
    CHECK_THROWS_AS(metrics::snri({0.0}, {1.0}, {1.0}), SilentReference);
    CHECK_THROWS_AS(metrics::snri({1.0}, {0.0}, {1.0}), SilentNoise);
  }
}

TEST_CASE("sar decomposition") {
  metrics::ThresholdConfig cfg;

  SUBCASE("exact estimate floors the loss at -30") {
    const std::vector<double> s{1.0, 0.0, 0.0};
    const std::vector<double> n{0.0, 1.0, 0.0};
    const auto d = metrics::sar_decompose(s, n, s, cfg);
    for (double v : d.e_interf) CHECK(v == 0.0);
    for (double v : d.e_artif) CHECK(v == 0.0);
    CHECK(d.sar_loss == doctest::Approx(-30.0).epsilon(1e-12));
  }

  SUBCASE("hand example splits interference from artifacts") {
    const std::vector<double> s{1.0, 0.0, 0.0};
    const std::vector<double> n{0.0, 1.0, 0.0};
    const std::vector<double> y1{1.0, 0.2, 0.3};
    const auto d = metrics::sar_decompose(s, n, y1, cfg);
    CHECK(d.e_interf[0] == doctest::Approx(0.0));
    CHECK(d.e_interf[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(d.e_interf[2] == doctest::Approx(0.0));
    CHECK(d.e_artif[0] == doctest::Approx(0.0));
    CHECK(d.e_artif[1] == doctest::Approx(0.0));
    CHECK(d.e_artif[2] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(d.sar_db == doctest::Approx(10.0 * std::log10(1.0 / 0.09)).epsilon(1e-10));
    CHECK(d.sar_db == doctest::Approx(10.46).epsilon(1e-3));
  }

  SUBCASE("collinear references are degenerate") {
    const std::vector<double> s{1.0, 2.0, 3.0};
    std::vector<double> n(s);
    for (double& v : n) v *= 2.0;
    CHECK_THROWS_AS(metrics::sar_decompose(s, n, s, cfg), DegenerateSubspace);
  }

  SUBCASE("completeness, orthogonality, and optimality on random triples") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
      const auto s = random_vector(rng, 32, 0.7);
      const auto n = random_vector(rng, 32, 0.9);
      auto y1 = random_vector(rng, 32, 0.5);
      for (std::size_t i = 0; i < y1.size(); ++i) y1[i] += s[i];
      const auto d = metrics::sar_decompose(s, n, y1, cfg);

      double worst = 0.0, rnorm = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double r = y1[i] - s[i];
        worst = std::max(worst, std::abs(d.e_interf[i] + d.e_artif[i] - r));
        rnorm = std::max(rnorm, std::abs(r));
      }
      CHECK(worst <= 1e-12 * std::max(1.0, rnorm));

      const double ip = std::abs(dot(d.e_interf, d.e_artif));
      const double bound = 1e-9 * std::sqrt(audio::energy(d.e_interf)) *
                           std::sqrt(audio::energy(d.e_artif));
      CHECK(ip <= std::max(bound, 1e-18));

      // Least squares: no point of span{s, n} beats the projection.
      const double best = audio::energy(d.e_artif);
      for (int probe = 0; probe < 20; ++probe) {
        const double a = rng.uniform(-2.0, 2.0);
        const double b = rng.uniform(-2.0, 2.0);
        double cand = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
          const double diff = (y1[i] - s[i]) - (a * s[i] + b * n[i]);
          cand += diff * diff;
        }
        CHECK(best <= cand + 1e-12);
      }
    }
  }
}

TEST_CASE("thresholded snr loss") {
  SUBCASE("perfect estimate sits exactly on the floor") {
    Rng rng(13);
    const auto a = random_vector(rng, 64, 0.5);
    CHECK(metrics::thresholded_snr_loss(a, a, 1e-3) ==
          doctest::Approx(-30.0).epsilon(1e-12));
  }

  SUBCASE("zero estimate costs slightly above zero") {
    const std::vector<double> a{0.4, -0.2, 0.9};
    const std::vector<double> b{0.0, 0.0, 0.0};
    CHECK(metrics::thresholded_snr_loss(a, b, 1e-3) ==
          doctest::Approx(10.0 * std::log10(1.001)).epsilon(1e-12));
  }

  SUBCASE("silent reference rejected") {
    CHECK_THROWS_AS(metrics::thresholded_snr_loss({0.0}, {1.0}, 1e-3),
                    SilentReference);
  }

  SUBCASE("bounded below by the tau floor") {
    Rng rng(17);
    for (int i = 0; i < 500; ++i) {
      const auto a = random_vector(rng, 16, 1.0);
      const auto b = random_vector(rng, 16, rng.uniform(0.0, 2.0));
      CHECK(metrics::thresholded_snr_loss(a, b, 1e-3) >= -30.0 - 1e-12);
    }
  }
}

TEST_CASE("se loss") {
  metrics::ThresholdConfig cfg;  // alpha = 0.8
  Rng rng(19);
  const auto s = random_vector(rng, 64, 0.5);
  const auto n = random_vector(rng, 64, 0.7);

  SUBCASE("perfect separation hits the weighted floor") {
    CHECK(metrics::se_loss(s, n, pair(s, n), cfg) ==
          doctest::Approx(-30.0).epsilon(1e-12));
  }

  SUBCASE("alpha = 1 reduces to the speech term") {
    cfg.alpha = 1.0;
    const auto y = pair(random_vector(rng, 64, 0.4), random_vector(rng, 64, 0.4));
    CHECK(metrics::se_loss(s, n, y, cfg) ==
          doctest::Approx(metrics::thresholded_snr_loss(s, y.speech.samples, cfg.tau))
              .epsilon(1e-12));
  }

  SUBCASE("default weighting matches the hand formula") {
    const auto y = pair(random_vector(rng, 64, 0.4), random_vector(rng, 64, 0.4));
    const double expect =
        0.8 * metrics::thresholded_snr_loss(s, y.speech.samples, cfg.tau) +
        0.2 * metrics::thresholded_snr_loss(n, y.noise.samples, cfg.tau);
    CHECK(metrics::se_loss(s, n, y, cfg) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("mixture consistency") {
  SUBCASE("hand example splits the residual evenly") {
    const auto out = metrics::mixture_consistency(
        audio::AudioBuffer{{1.0}, 16000}, pair({0.3}, {0.3}), 0.5);
    CHECK(out.speech.samples[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.noise.samples[0] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("zeta = 1 sends the whole residual to the speech estimate") {
    const auto out = metrics::mixture_consistency(
        audio::AudioBuffer{{1.0}, 16000}, pair({0.3}, {0.3}), 1.0);
    CHECK(out.speech.samples[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(out.noise.samples[0] == doctest::Approx(0.3).epsilon(1e-12));
  }

  SUBCASE("sum preservation and idempotence on random pairs") {
    Rng rng(23);
    for (int trial = 0; trial < 300; ++trial) {
      const auto xs = random_vector(rng, 40, 0.8);
      const audio::AudioBuffer x{xs, 16000};
      const auto y = pair(random_vector(rng, 40, 0.5), random_vector(rng, 40, 0.5));
      const double zeta = rng.uniform(0.0, 1.0);
      const auto out = metrics::mixture_consistency(x, y, zeta);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double sum = out.speech.samples[i] + out.noise.samples[i];
        CHECK(std::abs(sum - xs[i]) <= 1e-12 * std::max(1.0, std::abs(xs[i])));
      }
      const auto again = metrics::mixture_consistency(x, out, zeta);
      CHECK(testutil::max_abs_diff(again.speech.samples, out.speech.samples) <= 1e-12);
      CHECK(testutil::max_abs_diff(again.noise.samples, out.noise.samples) <= 1e-12);
    }
  }

  SUBCASE("length mismatch rejected") {
    CHECK_THROWS_AS(metrics::mixture_consistency(audio::AudioBuffer{{1.0, 2.0}, 16000},
                                                 pair({0.3}, {0.3}), 0.5),
                    LengthMismatch);
  }
}

TEST_CASE("postmix control") {
  Rng rng(29);
  const auto s = random_vector(rng, 256, 0.5);
  const auto n = random_vector(rng, 256, 0.6);

  SUBCASE("lambda = 0 returns the plain sum") {
    const auto y = metrics::postmix_control(pair(s, n), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(y.samples[i] == doctest::Approx(s[i] + n[i]).epsilon(1e-12));
    }
  }

  SUBCASE("lambda = 6.0206 halves the noise") {
    const double w = std::pow(10.0, -6.0206 / 20.0);
    CHECK(w == doctest::Approx(0.5).epsilon(1e-5));
    const auto y = metrics::postmix_control(pair(s, n), 6.0206);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(y.samples[i] == doctest::Approx(s[i] + w * n[i]).epsilon(1e-12));
    }
  }

  SUBCASE("perfect separation achieves the target for any lambda") {
    for (int trial = 0; trial < 100; ++trial) {
      const double lambda = rng.uniform(0.0, 20.0);
      const auto y = metrics::postmix_control(pair(s, n), lambda);
      CHECK(metrics::snri(s, n, y.samples) ==
            doctest::Approx(lambda).epsilon(1e-6));
    }
  }
}

TEST_CASE("snri target loss") {
  metrics::ThresholdConfig cfg;  // tau 1e-3, beta 0.01
  Rng rng(37);
  const auto s = random_vector(rng, 96, 0.5);
  const auto n = random_vector(rng, 96, 0.7);

  SUBCASE("meeting the target leaves only the artifact term") {
    auto y1 = random_vector(rng, 96, 0.2);
    for (std::size_t i = 0; i < y1.size(); ++i) y1[i] += s[i];
    const double achieved = metrics::snri(s, n, y1);
    const auto r = metrics::snri_target_loss(s, n, y1, achieved, cfg);
    CHECK(r.snri_term == doctest::Approx(0.0));
    CHECK(r.total == doctest::Approx(cfg.beta * r.sar_term).epsilon(1e-12));
    CHECK(r.sar_term ==
          doctest::Approx(metrics::sar_decompose(s, n, y1, cfg).sar_loss)
              .epsilon(1e-12));
  }

  SUBCASE("hand example composes the two oracles") {
    const std::vector<double> hs{1.0, 0.0};
    const std::vector<double> hn{0.0, 1.0};
    const std::vector<double> hy{1.0, 0.5};
    const auto r = metrics::snri_target_loss(hs, hn, hy, 3.0, cfg);
    const double achieved = 10.0 * std::log10(4.0);
    const double sar = metrics::sar_decompose(hs, hn, hy, cfg).sar_loss;
    CHECK(r.snri_term ==
          doctest::Approx((3.0 - achieved) * (3.0 - achieved)).epsilon(1e-12));
    CHECK(r.sar_term == doctest::Approx(sar).epsilon(1e-12));
    CHECK(r.total == doctest::Approx(r.snri_term + 0.01 * sar).epsilon(1e-12));
  }

  SUBCASE("config validation") {
    metrics::ThresholdConfig bad;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidParams);
    bad = metrics::ThresholdConfig{};
    bad.alpha = 1.5;
    CHECK_THROWS_AS(bad.validate(), InvalidParams);
    bad = metrics::ThresholdConfig{};
    bad.beta = -0.1;
    CHECK_THROWS_AS(bad.validate(), InvalidParams);
  }

  SUBCASE("defaults follow the published settings") {
    CHECK(cfg.tau == 1e-3);
    CHECK(cfg.alpha == 0.8);
    CHECK(cfg.zeta == 0.5);
    CHECK(cfg.beta == 0.01);
  }
}
