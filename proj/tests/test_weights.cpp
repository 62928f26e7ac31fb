#include <cmath>

#include "doctest.h"
#include "error.hpp"
#include "matrix.hpp"
#include "oracles.hpp"
#include "sft.hpp"
#include "weights.hpp"

using namespace bisel;

TEST_CASE("softmax_weights: zero logits are uniform") {
  const auto w = softmax_weights(std::vector<double>(4, 0.0));
  for (double v : w) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("softmax_weights: [ln 3, 0] -> [0.75, 0.25]") {
  const auto w = softmax_weights(std::vector<double>{std::log(3.0), 0.0});
  CHECK(w[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("softmax_weights: random logits match extended-precision reference") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> omega(8);
    for (double& v : omega) v = 3.0 * rng.next_gaussian();
    const auto w = softmax_weights(omega);
    const auto ref = test::softmax_ref(omega);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(test::rel_err(w[i], static_cast<double>(ref[i])) < 1e-12);
      CHECK(w[i] > 0.0);
      sum += w[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax_weights: non-finite rejected") {
  CHECK_THROWS_AS(softmax_weights(std::vector<double>{0.0, std::nan("")}), Error);
}

TEST_CASE("softmax_weight_grad: uniform N=2 i=0 -> [0.25, -0.25]") {
  const auto g = softmax_weight_grad(std::vector<double>{0.0, 0.0}, 0);
  CHECK(g[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("softmax_weight_grad: sign pattern, zero sum, finite differences") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> omega(6);
    for (double& v : omega) v = 2.0 * rng.next_gaussian();
    const int i = static_cast<int>(rng.next_index(6));
    const auto g = softmax_weight_grad(omega, i);

    double sum = 0.0;
    for (int j = 0; j < 6; ++j) {
      sum += g[j];
      if (j == i) CHECK(g[j] > 0.0);
      else CHECK(g[j] < 0.0);
    }
    CHECK(std::abs(sum) < 1e-12);

    const auto fd = test::central_diff(
        [&](std::span<const double> o) { return softmax_weights(o)[i]; }, omega, 1e-6);
    CHECK(test::max_rel_err(g, fd, 1e-9) < 1e-6);
  }
}

TEST_CASE("softmax_weight_grad: index out of range") {
  CHECK_THROWS_AS(softmax_weight_grad(std::vector<double>{0.0, 0.0}, 2), Error);
}

TEST_CASE("pbgd_omega_update: hand-evaluated two-sample case") {
  WeightState w(2);
  const WeightState next = pbgd_omega_update(w, 0, 1.0, 1.0, 1.0);
  CHECK(next.logits[0] == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(next.logits[1] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("pbgd_omega_update: zero coefficient leaves state unchanged") {
  WeightState w(std::vector<double>{0.7, -0.3, 0.1});
  const WeightState next = pbgd_omega_update(w, 1, 0.0, 0.5, 2.0);
  CHECK(next.logits == w.logits);
}

TEST_CASE("pbgd_omega_update: selected decreases, others increase, sum conserved") {
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> omega(5);
    for (double& v : omega) v = rng.next_gaussian();
    WeightState w(omega);
    const int i = static_cast<int>(rng.next_index(5));
    const double coeff = 0.1 + rng.next_double();
    const WeightState next = pbgd_omega_update(w, i, coeff, 0.3, 1.5);

    double delta_sum = 0.0;
    for (int j = 0; j < 5; ++j) {
      const double delta = next.logits[j] - w.logits[j];
      delta_sum += delta;
      if (j == i) CHECK(delta < 0.0);
      else CHECK(delta > 0.0);
    }
    CHECK(std::abs(delta_sum) < 1e-12);

    double wsum = 0.0;
    for (double v : next.weights) wsum += v;
    CHECK(std::abs(wsum - 1.0) < 1e-12);
  }
}

TEST_CASE("pbgd_omega_update: negative coefficient rejected") {
  WeightState w(3);
  CHECK_THROWS_AS(pbgd_omega_update(w, 0, -0.5, 0.1, 1.0), Error);
}

TEST_CASE("lse_implicit_weights: equal losses give uniform weights") {
  const auto lam = lse_implicit_weights(std::vector<double>{1.3, 1.3, 1.3}, 2.0);
  for (double v : lam) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("lse_implicit_weights: losses [0, ln 3] at tau 1 -> [0.75, 0.25]") {
  const auto lam = lse_implicit_weights(std::vector<double>{0.0, std::log(3.0)}, 1.0);
  CHECK(lam[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(lam[1] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("lse_implicit_weights: tau must be positive") {
  CHECK_THROWS_AS(lse_implicit_weights(std::vector<double>{1.0}, 0.0), Error);
  CHECK_THROWS_AS(lse_implicit_weights(std::vector<double>{1.0}, -1.0), Error);
}

TEST_CASE("lse_implicit_weights: sequence-NLL weights match softmax of log-probs") {
  // With losses = per-sequence NLLs, lambda at tau 1 equals the softmax of the
  // sequence log-probs; pairwise ratios equal exp(logprob_a - logprob_b).
  Rng rng(35);
  for (int trial = 0; trial < 20; ++trial) {
    const int G = 4;
    std::vector<double> nll(G), logprob(G);
    for (int g = 0; g < G; ++g) {
      const Matrix z = test::random_logits(rng, 5, 3, 2.0);
      const auto y = test::random_tokens(rng, 3, 5);
      nll[g] = sft_loss(z, y);
      logprob[g] = seq_logprob(z, y);
    }
    const auto lam = lse_implicit_weights(nll, 1.0);
    const auto direct = softmax_weights(logprob);
    for (int g = 0; g < G; ++g) {
      CHECK(std::abs(std::log(lam[g]) - std::log(direct[g])) < 1e-12);
    }
    for (int a = 0; a < G; ++a) {
      for (int b = 0; b < G; ++b) {
        CHECK(std::abs(std::log(lam[a] / lam[b]) - (logprob[a] - logprob[b])) < 1e-10);
      }
    }
  }
}

TEST_CASE("lse_implicit_weights: strictly decreasing in each loss") {
  const std::vector<double> losses = {0.5, 1.0, 2.0};
  const auto lam = lse_implicit_weights(losses, 1.0);
  std::vector<double> bumped = losses;
  bumped[1] += 0.25;
  const auto lam2 = lse_implicit_weights(bumped, 1.0);
  CHECK(lam2[1] < lam[1]);
  CHECK(lam2[0] > lam[0]);
  CHECK(lam2[2] > lam[2]);
}

TEST_CASE("bmo_omega_track: fixed point and direct formula") {
  CHECK(bmo_omega_track(-2.0, 2.0, 0.7, 1.0) == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(bmo_omega_track(0.0, 2.0, 0.5, 1.0) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("bmo_omega_track: geometric contraction to -tau*loss") {
  const double tau = 1.7, loss = 0.9, alpha = 0.5;
  double omega = 3.0;
  for (int k = 0; k < 100; ++k) omega = bmo_omega_track(omega, loss, alpha, tau);
  CHECK(std::abs(omega - (-tau * loss)) < 1e-10);
}

TEST_CASE("WeightState: cache stays in sync") {
  WeightState w(std::vector<double>{0.2, -0.1, 0.4});
  const auto direct = softmax_weights(w.logits);
  for (int i = 0; i < 3; ++i) CHECK(w.weights[i] == direct[i]);
}
