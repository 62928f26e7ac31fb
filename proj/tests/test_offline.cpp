#include <cmath>

#include "doctest.h"
#include "error.hpp"
#include "offline.hpp"
#include "oracles.hpp"
#include "sft.hpp"
#include "verify.hpp"

using namespace bisel;

namespace {

SyntheticInstance tiny_instance(double useless_fraction, std::uint64_t seed = 77) {
  InstanceParams p;
  p.vocab = 4;
  p.question_len = 2;
  p.response_len = 2;
  p.n_sft = 6;
  p.n_val = 2;
  p.useless_fraction = useless_fraction;
  Rng rng(seed);
  return gen_synthetic_instance(p, rng);
}

}  // namespace

TEST_CASE("penalty_gamma: schedule values and guard") {
  TrainConfig cfg;
  cfg.rho0 = 0.1;
  cfg.drho = 0.1;
  cfg.epochs = 3;
  CHECK(penalty_gamma(0, cfg) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(penalty_gamma(2, cfg) == doctest::Approx(0.3 / 0.7).epsilon(1e-12));
  CHECK(penalty_gamma(3, cfg) > penalty_gamma(2, cfg));
  CHECK_THROWS_AS(penalty_gamma(9, cfg), Error);  // rho reaches 1
}

TEST_CASE("TrainConfig: validation rejects a schedule reaching 1") {
  TrainConfig cfg;
  cfg.rho0 = 0.9;
  cfg.drho = 0.1;
  cfg.epochs = 3;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("pbgd_step: gamma 0 is a pure validation step and leaves weights fixed") {
  const SyntheticInstance inst = tiny_instance(0.0);
  TrainConfig cfg;
  cfg.beta = 0.5;
  TrainState state;
  state.params = init_params(inst.spec, 1);
  state.weights = WeightState(static_cast<int>(inst.data.sft.size()));

  const TokenSample& vs = inst.data.val[0];
  const TokenSample& ss = inst.data.sft[0];
  const TrainState next = pbgd_step(inst.spec, state, vs, ss, 0, 0.0, cfg);

  const LossGrad val = loss_and_grad(inst.spec, state.params, vs);
  for (std::size_t i = 0; i < next.params.values.size(); ++i) {
    CHECK(next.params.values[i] == state.params.values[i] - cfg.beta * val.grad[i]);
  }
  CHECK(next.weights.logits == state.weights.logits);
}

TEST_CASE("pbgd_step: matches a hand-rolled reference step from tested primitives") {
  const SyntheticInstance inst = tiny_instance(0.3);
  TrainConfig cfg;
  cfg.alpha = 0.3;
  cfg.beta = 0.7;
  TrainState state;
  state.params = init_params(inst.spec, 2);
  Rng noise(4);
  for (double& v : state.params.values) v = 0.2 * noise.next_gaussian();
  std::vector<double> omega(inst.data.sft.size());
  for (double& v : omega) v = 0.3 * noise.next_gaussian();
  state.weights = WeightState(omega);

  const double gamma = 0.6;
  const int ik = 2;
  const TokenSample& vs = inst.data.val[1];
  const TokenSample& ss = inst.data.sft[ik];
  const TrainState next = pbgd_step(inst.spec, state, vs, ss, ik, gamma, cfg);

  // Reference: assemble the same update from sft-core primitives.
  const LossGrad val = loss_and_grad(inst.spec, state.params, vs);
  const LossGrad sft = loss_and_grad(inst.spec, state.params, ss);
  const double w = state.weights.weights[ik];
  std::vector<double> theta = state.params.values;
  for (std::size_t i = 0; i < theta.size(); ++i)
    theta[i] -= cfg.beta * (val.grad[i] + gamma * w * sft.grad[i]);
  for (std::size_t i = 0; i < theta.size(); ++i)
    CHECK(std::abs(theta[i] - next.params.values[i]) < 1e-12);

  Params theta_new{theta};
  const double coeff = sft_loss(forward(inst.spec, theta_new, ss), ss.y);
  const auto g = softmax_weight_grad(state.weights.logits, ik);
  for (std::size_t j = 0; j < omega.size(); ++j) {
    const double want = state.weights.logits[j] - cfg.alpha * gamma * coeff * g[j];
    CHECK(std::abs(want - next.weights.logits[j]) < 1e-12);
  }
}

TEST_CASE("pbgd_step: near-zero weight makes the update validation-dominated") {
  const SyntheticInstance inst = tiny_instance(0.3);
  TrainConfig cfg;
  cfg.beta = 1.0;
  TrainState state;
  state.params = init_params(inst.spec, 3);
  std::vector<double> omega(inst.data.sft.size(), 0.0);
  omega[0] = -30.0;  // weight ~ e^-30
  state.weights = WeightState(omega);

  const double gamma = 2.0;
  const TokenSample& vs = inst.data.val[0];
  const TokenSample& ss = inst.data.sft[0];
  const TrainState next = pbgd_step(inst.spec, state, vs, ss, 0, gamma, cfg);

  const LossGrad val = loss_and_grad(inst.spec, state.params, vs);
  const LossGrad sft = loss_and_grad(inst.spec, state.params, ss);
  double sft_norm = 0.0, diff_norm = 0.0;
  for (std::size_t i = 0; i < val.grad.size(); ++i) {
    const double val_only = state.params.values[i] - cfg.beta * val.grad[i];
    diff_norm += (next.params.values[i] - val_only) * (next.params.values[i] - val_only);
    sft_norm += sft.grad[i] * sft.grad[i];
  }
  CHECK(std::sqrt(diff_norm) <=
        cfg.beta * gamma * state.weights.weights[0] * std::sqrt(sft_norm) + 1e-15);
}

TEST_CASE("direct_mixing_step: rho 1 is a pure SFT step, rho 0.5 matches hand computation") {
  const SyntheticInstance inst = tiny_instance(0.3);
  TrainConfig cfg;
  cfg.beta = 0.4;
  TrainState state;
  state.params = init_params(inst.spec, 5);
  Rng noise(6);
  for (double& v : state.params.values) v = 0.1 * noise.next_gaussian();
  state.weights = WeightState(static_cast<int>(inst.data.sft.size()));

  const TokenSample& vs = inst.data.val[0];
  const TokenSample& ss = inst.data.sft[1];
  const LossGrad val = loss_and_grad(inst.spec, state.params, vs);
  const LossGrad sft = loss_and_grad(inst.spec, state.params, ss);

  const TrainState pure = direct_mixing_step(inst.spec, state, vs, ss, 1.0, cfg);
  for (std::size_t i = 0; i < pure.params.values.size(); ++i) {
    CHECK(pure.params.values[i] == state.params.values[i] - cfg.beta * sft.grad[i]);
  }
  CHECK(pure.weights.logits == state.weights.logits);

  const TrainState half = direct_mixing_step(inst.spec, state, vs, ss, 0.5, cfg);
  for (std::size_t i = 0; i < half.params.values.size(); ++i) {
    const double want =
        state.params.values[i] - cfg.beta * 0.5 * (val.grad[i] + sft.grad[i]);
    CHECK(std::abs(half.params.values[i] - want) < 1e-12);
  }
}

TEST_CASE("direct_mixing_step: zero gradients are a fixed point") {
  // A fitted tabular model has vanishing gradients on its own data.
  const SyntheticInstance inst = tiny_instance(0.0);
  TrainConfig cfg;
  Params p = init_params(inst.spec, 0);
  const int dmax = inst.spec.max_response_len();
  auto fit = [&](const TokenSample& s) {
    int qid = 0, base = 1;
    for (int t : s.x) { qid += t * base; base *= inst.spec.vocab; }
    for (std::size_t d = 0; d < s.y.size(); ++d)
      p.values[(qid * dmax + static_cast<int>(d)) * inst.spec.vocab + s.y[d]] = 800.0;
  };
  for (const auto& s : inst.data.sft) fit(s);
  for (const auto& s : inst.data.val) fit(s);

  TrainState state;
  state.params = p;
  state.weights = WeightState(static_cast<int>(inst.data.sft.size()));
  const TrainState next =
      direct_mixing_step(inst.spec, state, inst.data.val[0], inst.data.sft[0], 0.5, cfg);
  for (std::size_t i = 0; i < p.values.size(); ++i)
    CHECK(next.params.values[i] == p.values[i]);
}

TEST_CASE("pbgd_step: rejects out-of-range index") {
  const SyntheticInstance inst = tiny_instance(0.0);
  TrainConfig cfg;
  TrainState state;
  state.params = init_params(inst.spec, 1);
  state.weights = WeightState(static_cast<int>(inst.data.sft.size()));
  CHECK_THROWS_AS(
      pbgd_step(inst.spec, state, inst.data.val[0], inst.data.sft[0], 99, 0.1, cfg), Error);
}

TEST_CASE("train_offline: zero epochs returns initial state with empty metrics") {
  const SyntheticInstance inst = tiny_instance(0.3);
  TrainConfig cfg;
  cfg.epochs = 0;
  Rng rng(1);
  const TrainResult r = train_offline(cfg, inst.data, inst.spec, OfflineMode::Bds, rng);
  CHECK(r.metrics.empty());
  for (double v : r.params.values) CHECK(v == 0.0);
  for (double w : r.weights.weights) CHECK(w == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("train_offline: useful-only instance fits validation below eps_sep") {
  InstanceParams ip = canonical_instance_params();
  ip.useless_fraction = 0.0;
  Rng inst_rng(3);
  const SyntheticInstance inst = gen_synthetic_instance(ip, inst_rng);
  TrainConfig cfg = canonical_train_config(11);
  Rng rng(11);
  const TrainResult r = train_offline(cfg, inst.data, inst.spec, OfflineMode::Bds, rng);
  CHECK(r.metrics.back().val_loss < cfg.eps_sep);

  // Oracle: direct SGD on validation alone reaches the same regime.
  Params p = init_params(inst.spec, 0);
  Rng orng(11);
  const std::int64_t steps = static_cast<std::int64_t>(cfg.epochs) * ip.n_sft;
  for (std::int64_t k = 0; k < steps; ++k) {
    const auto& vs = inst.data.val[orng.next_index(inst.data.val.size())];
    const LossGrad g = loss_and_grad(inst.spec, p, vs);
    for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] -= cfg.beta * g.grad[i];
  }
  CHECK(per_token_loss(inst.spec, p, inst.data.val) < cfg.eps_sep);
}

TEST_CASE("train_offline: canonical instance selects out useless samples and beats mixing") {
  Rng inst_rng(mix_seed(7));
  const SyntheticInstance inst = gen_synthetic_instance(canonical_instance_params(), inst_rng);
  TrainConfig cfg = canonical_train_config(21);
  Rng rng_bds(21);
  const TrainResult bds = train_offline(cfg, inst.data, inst.spec, OfflineMode::Bds, rng_bds);

  const double eps_w = cfg.eps_w_for(static_cast<int>(inst.data.sft.size()));
  double mean_useless = 0.0;
  int n_useless = 0;
  for (std::size_t i = 0; i < inst.data.sft.size(); ++i) {
    if (inst.data.sft_labels[i] == Label::Useless) {
      mean_useless += bds.weights.weights[i];
      ++n_useless;
    }
  }
  CHECK(n_useless == 12);
  CHECK(mean_useless / n_useless < eps_w);

  for (double rho : {0.5, 1.0}) {
    TrainConfig mix_cfg = cfg;
    mix_cfg.rho_mix = rho;
    Rng rng_mix(21);
    const TrainResult mix =
        train_offline(mix_cfg, inst.data, inst.spec, OfflineMode::Mixing, rng_mix);
    CHECK(bds.metrics.back().val_loss < mix.metrics.back().val_loss);
  }
}

TEST_CASE("train_offline: identical seeds give identical metric streams") {
  const SyntheticInstance inst = tiny_instance(0.3);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.beta = 0.5;
  Rng a(9), b(9);
  const TrainResult r1 = train_offline(cfg, inst.data, inst.spec, OfflineMode::Bds, a);
  const TrainResult r2 = train_offline(cfg, inst.data, inst.spec, OfflineMode::Bds, b);
  REQUIRE(r1.metrics.size() == r2.metrics.size());
  for (std::size_t i = 0; i < r1.metrics.size(); ++i) {
    CHECK(r1.metrics[i].step == r2.metrics[i].step);
    CHECK(r1.metrics[i].val_loss == r2.metrics[i].val_loss);
    CHECK(r1.metrics[i].sft_loss == r2.metrics[i].sft_loss);
    CHECK(r1.metrics[i].w_useless_mean == r2.metrics[i].w_useless_mean);
  }
  CHECK(r1.params.values == r2.params.values);
  CHECK(r1.weights.logits == r2.weights.logits);
}

TEST_CASE("train_offline: gamma schedule is monotone across the run") {
  const SyntheticInstance inst = tiny_instance(0.3);
  TrainConfig cfg;
  cfg.epochs = 4;
  Rng rng(13);
  const TrainResult r = train_offline(cfg, inst.data, inst.spec, OfflineMode::Bds, rng);
  for (std::size_t i = 1; i < r.metrics.size(); ++i)
    CHECK(r.metrics[i].gamma >= r.metrics[i - 1].gamma);
}

TEST_CASE("train_offline: divergence guard reports the step") {
  const SyntheticInstance inst = tiny_instance(0.0);
  TrainConfig cfg;
  cfg.beta = 1e9;  // blows past the limit immediately
  cfg.epochs = 1;
  Rng rng(2);
  try {
    train_offline(cfg, inst.data, inst.spec, OfflineMode::Bds, rng);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Diverged);
    CHECK(e.index() >= 0);
  }
}

TEST_CASE("train_offline: adam option stays finite and trains") {
  const SyntheticInstance inst = tiny_instance(0.0);
  TrainConfig cfg;
  cfg.optimizer = "adam";
  cfg.beta = 0.05;
  cfg.epochs = 30;
  cfg.drho = 0.02;
  Rng rng(3);
  const TrainResult r = train_offline(cfg, inst.data, inst.spec, OfflineMode::Bds, rng);
  CHECK(r.metrics.back().val_loss < r.metrics.front().val_loss);
}
