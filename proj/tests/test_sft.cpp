#include <cmath>

#include "doctest.h"
#include "error.hpp"
#include "oracles.hpp"
#include "sft.hpp"

using namespace bisel;

TEST_CASE("softmax_columns: all-zero 2x2 is uniform") {
  Matrix z(2, 2);
  const Matrix p = softmax_columns(z);
  for (double v : p.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("softmax_columns: column [ln 2, 0] -> [2/3, 1/3]") {
  Matrix z(2, 1);
  z(0, 0) = std::log(2.0);
  const Matrix p = softmax_columns(z);
  CHECK(p(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax_columns: random 5x4 matches extended-precision reference") {
  Rng rng(11);
  const Matrix z = test::random_logits(rng, 5, 4, 3.0);
  const Matrix p = softmax_columns(z);
  for (int d = 0; d < 4; ++d) {
    const auto ref = test::softmax_ref(z.col(d));
    double col_sum = 0.0;
    for (int v = 0; v < 5; ++v) {
      CHECK(test::rel_err(p(v, d), static_cast<double>(ref[v])) < 1e-13);
      CHECK(p(v, d) > 0.0);
      CHECK(p(v, d) < 1.0);
      col_sum += p(v, d);
    }
    CHECK(std::abs(col_sum - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax_columns: non-finite input rejected") {
  Matrix z(2, 1);
  z(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softmax_columns(z), Error);
}

TEST_CASE("sft_loss: uniform logits V=4 D=3 gives 3 ln 4") {
  Matrix z(4, 3);
  const std::vector<int> y = {0, 2, 3};
  CHECK(sft_loss(z, y) == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("sft_loss: confident correct logit, V=2 D=1") {
  Matrix z(2, 1);
  z(1, 0) = 10.0;
  const std::vector<int> y = {1};
  CHECK(sft_loss(z, y) == doctest::Approx(std::log(1.0 + std::exp(-10.0))).epsilon(1e-12));
}

TEST_CASE("sft_loss: equals naive NLL oracle on random input") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = test::random_logits(rng, 6, 5, 4.0);
    const auto y = test::random_tokens(rng, 5, 6);
    const double got = sft_loss(z, y);
    const double want = static_cast<double>(test::nll_ref(z, y));
    CHECK(test::rel_err(got, want) < 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("sft_loss: error paths") {
  Matrix z(3, 2);
  CHECK_THROWS_AS(sft_loss(z, std::vector<int>{0}), Error);        // shape mismatch
  CHECK_THROWS_AS(sft_loss(z, std::vector<int>{0, 3}), Error);     // id >= V
  CHECK_THROWS_AS(sft_loss(z, std::vector<int>{0, -1}), Error);    // negative id
}

TEST_CASE("sft_loss_grad_z: uniform logits give 1/V minus one-hot") {
  Matrix z(4, 2);
  const std::vector<int> y = {1, 3};
  const Matrix g = sft_loss_grad_z(z, y);
  for (int d = 0; d < 2; ++d) {
    for (int v = 0; v < 4; ++v) {
      const double want = 0.25 - (v == y[d] ? 1.0 : 0.0);
      CHECK(g(v, d) == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("sft_loss_grad_z: matches finite differences, columns sum to zero") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = test::random_logits(rng, 5, 4, 2.0);
    const auto y = test::random_tokens(rng, 4, 5);
    const Matrix g = sft_loss_grad_z(z, y);

    const auto fd = test::central_diff(
        [&](std::span<const double> flat) {
          Matrix zz = z;
          zz.data.assign(flat.begin(), flat.end());
          return sft_loss(zz, y);
        },
        z.data, 1e-5);
    CHECK(test::max_rel_err(g.data, fd, 1e-7) < 1e-5);

    for (int d = 0; d < g.cols; ++d) {
      double s = 0.0;
      for (int v = 0; v < g.rows; ++v) s += g(v, d);
      CHECK(std::abs(s) < 1e-12);
    }
  }
}

TEST_CASE("sft_loss_grad_z: near-one-hot target logits give tiny gradient") {
  Matrix z(4, 3);
  const std::vector<int> y = {2, 0, 3};
  for (int d = 0; d < 3; ++d) z(y[d], d) = 20.0;
  const Matrix g = sft_loss_grad_z(z, y);
  double max_abs = 0.0;
  for (double v : g.data) max_abs = std::max(max_abs, std::abs(v));
  CHECK(max_abs < 1e-8);
}

TEST_CASE("seq_logprob: identities") {
  Matrix z(2, 1);
  const std::vector<int> y = {0};
  CHECK(seq_logprob(z, y) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));

  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix zz = test::random_logits(rng, 7, 3, 3.0);
    const auto yy = test::random_tokens(rng, 3, 7);
    CHECK(seq_logprob(zz, yy) + sft_loss(zz, yy) == 0.0);  // exact identity

    // Direct product oracle via softmax_columns.
    const Matrix p = softmax_columns(zz);
    double want = 0.0;
    for (int d = 0; d < 3; ++d) want += std::log(p(yy[d], d));
    CHECK(test::rel_err(seq_logprob(zz, yy), want) < 1e-12);
  }
}

TEST_CASE("hessian_quadratic_form: zero direction and shift invariance") {
  Rng rng(51);
  const Matrix z = test::random_logits(rng, 5, 3, 2.0);
  const std::vector<int> y = {1, 4, 0};
  Matrix u(5, 3);
  CHECK(hessian_quadratic_form(z, y, u) == 0.0);

  // Constant columns lie in the softmax null space.
  for (int d = 0; d < 3; ++d) {
    for (int v = 0; v < 5; ++v) u(v, d) = 1.0;
  }
  CHECK(std::abs(hessian_quadratic_form(z, y, u)) < 1e-12);
}

TEST_CASE("hessian_quadratic_form: matches finite-difference HVP and stays nonnegative") {
  Rng rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix z = test::random_logits(rng, 4, 3, 2.0);
    const auto y = test::random_tokens(rng, 3, 4);
    Matrix u(4, 3);
    for (double& v : u.data) v = rng.next_gaussian();

    const double got = hessian_quadratic_form(z, y, u);
    CHECK(got >= -1e-10);

    // u' H u ~ u . (grad(z + eps u) - grad(z - eps u)) / (2 eps)
    const double eps = 1e-5;
    Matrix zp = z, zm = z;
    for (std::size_t i = 0; i < z.data.size(); ++i) {
      zp.data[i] += eps * u.data[i];
      zm.data[i] -= eps * u.data[i];
    }
    const Matrix gp = sft_loss_grad_z(zp, y);
    const Matrix gm = sft_loss_grad_z(zm, y);
    double want = 0.0;
    for (std::size_t i = 0; i < z.data.size(); ++i)
      want += u.data[i] * (gp.data[i] - gm.data[i]) / (2.0 * eps);
    if (std::abs(want) > 1e-6) CHECK(test::rel_err(got, want) < 1e-4);
  }
}

TEST_CASE("hessian_quadratic_form: shape mismatch rejected") {
  Matrix z(4, 2), u(4, 3);
  CHECK_THROWS_AS(hessian_quadratic_form(z, std::vector<int>{0, 1}, u), Error);
}

TEST_CASE("sft_loss: shift invariance per column") {
  Rng rng(71);
  const Matrix z = test::random_logits(rng, 5, 4, 2.0);
  const auto y = test::random_tokens(rng, 4, 5);
  const double base = sft_loss(z, y);
  Matrix shifted = z;
  for (int v = 0; v < 5; ++v) shifted(v, 2) += 7.5;
  CHECK(std::abs(sft_loss(shifted, y) - base) < 1e-12);
}
