#include "offline.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "error.hpp"
#include "sft.hpp"

namespace bisel {

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw_config("train.alpha must be positive");
  if (!(beta > 0.0)) throw_config("train.beta must be positive");
  if (epochs < 0) throw_config("train.epochs must be nonnegative");
  if (rho0 < 0.0 || drho < 0.0) throw_config("train.rho0 and train.drho must be nonnegative");
  const double rho_last = rho0 + drho * std::max(0, epochs - 1);
  if (rho_last >= 1.0)
    throw_config("train: penalty schedule reaches rho = " + std::to_string(rho_last) +
                 " >= 1 at the last epoch");
  if (!(rho_mix > 0.0 && rho_mix <= 1.0)) throw_config("train.rho_mix must lie in (0, 1]");
  if (!(tau > 0.0)) throw_config("train.tau must be positive");
  if (eps_w < 0.0) throw_config("train.eps_w must be nonnegative");
  if (!(eps_sep > 0.0)) throw_config("train.eps_sep must be positive");
  if (log_interval < 0) throw_config("train.log_interval must be nonnegative");
  if (optimizer != "sgd" && optimizer != "adam")
    throw_config("train.optimizer must be 'sgd' or 'adam'");
  if (!(divergence_limit > 0.0)) throw_config("train.divergence_limit must be positive");
}

double penalty_gamma(int epoch, const TrainConfig& cfg) {
  const double rho = cfg.rho0 + cfg.drho * epoch;
  if (rho >= 1.0)
    throw_config("penalty_gamma: rho = " + std::to_string(rho) + " >= 1 at epoch " +
                 std::to_string(epoch));
  if (rho < 0.0) throw_config("penalty_gamma: negative rho");
  return rho / (1.0 - rho);
}

void check_divergence(const Params& params, std::int64_t step, double limit) {
  for (double v : params.values) {
    if (!std::isfinite(v) || std::abs(v) > limit)
      throw Error(ErrorCode::Diverged,
                  "training diverged at step " + std::to_string(step), step);
  }
}

namespace {

void check_finite_grad(std::span<const double> g, std::int64_t step) {
  for (double v : g) {
    if (!std::isfinite(v))
      throw Error(ErrorCode::Diverged,
                  "non-finite gradient at step " + std::to_string(step), step);
  }
}

}  // namespace

TrainState pbgd_step_with_val_grad(const BackboneSpec& spec, const TrainState& state,
                                   std::span<const double> val_grad,
                                   const TokenSample& sft_sample, int sft_index, double gamma,
                                   const TrainConfig& cfg) {
  if (sft_index < 0 || sft_index >= state.weights.size())
    throw_invalid("pbgd_step: sft index out of range");
  const LossGrad sft = loss_and_grad(spec, state.params, sft_sample);
  const double w = state.weights.weights[sft_index];

  TrainState next = state;
  for (std::size_t i = 0; i < next.params.values.size(); ++i) {
    next.params.values[i] -= cfg.beta * (val_grad[i] + gamma * w * sft.grad[i]);
  }
  check_finite_grad(val_grad, state.step);
  check_divergence(next.params, state.step, cfg.divergence_limit);

  // Coefficient uses the post-update parameters.
  const double coeff = sft_loss(forward(spec, next.params, sft_sample), sft_sample.y);
  next.weights = pbgd_omega_update(state.weights, sft_index, coeff, cfg.alpha, gamma);
  next.step = state.step + 1;
  return next;
}

TrainState pbgd_step(const BackboneSpec& spec, const TrainState& state,
                     const TokenSample& val_sample, const TokenSample& sft_sample, int sft_index,
                     double gamma, const TrainConfig& cfg) {
  const LossGrad val = loss_and_grad(spec, state.params, val_sample);
  return pbgd_step_with_val_grad(spec, state, val.grad, sft_sample, sft_index, gamma, cfg);
}

TrainState direct_mixing_step(const BackboneSpec& spec, const TrainState& state,
                              const TokenSample& val_sample, const TokenSample& sft_sample,
                              double rho_mix, const TrainConfig& cfg) {
  if (!(rho_mix > 0.0 && rho_mix <= 1.0))
    throw_invalid("direct_mixing_step: rho_mix must lie in (0, 1]");
  const LossGrad val = loss_and_grad(spec, state.params, val_sample);
  const LossGrad sft = loss_and_grad(spec, state.params, sft_sample);
  check_finite_grad(val.grad, state.step);
  check_finite_grad(sft.grad, state.step);
  TrainState next = state;
  for (std::size_t i = 0; i < next.params.values.size(); ++i) {
    next.params.values[i] -=
        cfg.beta * ((1.0 - rho_mix) * val.grad[i] + rho_mix * sft.grad[i]);
  }
  check_divergence(next.params, state.step, cfg.divergence_limit);
  next.step = state.step + 1;
  return next;
}

double per_token_loss(const BackboneSpec& spec, const Params& params,
                      std::span<const TokenSample> samples) {
  double total = 0.0;
  std::int64_t tokens = 0;
  for (const auto& s : samples) {
    total += sft_loss(forward(spec, params, s), s.y);
    tokens += static_cast<std::int64_t>(s.y.size());
  }
  return tokens > 0 ? total / static_cast<double>(tokens)
                    : std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> full_batch_val_grad(const BackboneSpec& spec, const Params& params,
                                        std::span<const TokenSample> val) {
  std::vector<double> g(params.values.size(), 0.0);
  for (const auto& s : val) {
    const LossGrad lg = loss_and_grad(spec, params, s);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += lg.grad[i];
  }
  const double inv = 1.0 / static_cast<double>(val.size());
  for (double& v : g) v *= inv;
  return g;
}

void AdamState::apply(Params& params, std::span<const double> grad, double lr,
                      const TrainConfig& cfg) {
  if (m.empty()) {
    m.assign(params.values.size(), 0.0);
    v.assign(params.values.size(), 0.0);
  }
  ++t;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
    v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
    params.values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
  }
}

namespace {

MetricsRow offline_metrics(const BackboneSpec& spec, const TrainState& state,
                           const Datasets& data, OfflineMode mode, double gamma) {
  MetricsRow row;
  row.step = state.step;
  row.epoch = state.epoch;
  row.gamma = gamma;
  row.gen_match_rate = std::numeric_limits<double>::quiet_NaN();
  row.val_loss = per_token_loss(spec, state.params, data.val);

  double sel = 0.0;
  for (std::size_t i = 0; i < data.sft.size(); ++i) {
    const auto& s = data.sft[i];
    const double li =
        sft_loss(forward(spec, state.params, s), s.y) / static_cast<double>(s.y.size());
    sel += (mode == OfflineMode::Bds ? state.weights.weights[i]
                                     : 1.0 / static_cast<double>(data.sft.size())) *
           li;
  }
  row.sft_loss = sel;

  if (data.labeled()) {
    double wu = 0.0, wl = 0.0;
    int cu = 0, cl = 0;
    for (std::size_t i = 0; i < data.sft.size(); ++i) {
      if (data.sft_labels[i] == Label::Useless) {
        wl += state.weights.weights[i];
        ++cl;
      } else {
        wu += state.weights.weights[i];
        ++cu;
      }
    }
    row.w_useless_mean = cl > 0 ? wl / cl : std::numeric_limits<double>::quiet_NaN();
    row.w_useful_mean = cu > 0 ? wu / cu : std::numeric_limits<double>::quiet_NaN();
  } else {
    row.w_useless_mean = std::numeric_limits<double>::quiet_NaN();
    row.w_useful_mean = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

}  // namespace

TrainResult train_offline(const TrainConfig& cfg, const Datasets& data, const BackboneSpec& spec,
                          OfflineMode mode, Rng& rng) {
  cfg.validate();
  if (data.sft.empty() || data.val.empty())
    throw_invalid("train_offline: SFT and validation splits must be nonempty");
  const int n = static_cast<int>(data.sft.size());
  const int n_val = static_cast<int>(data.val.size());
  const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * n;
  const std::int64_t interval = cfg.log_interval > 0 ? cfg.log_interval : n;

  TrainState state;
  state.params = init_params(spec, cfg.seed);
  state.weights = WeightState(n);

  TrainResult result;
  if (total == 0) {
    result.params = state.params;
    result.weights = state.weights;
    return result;
  }

  AdamState adam;
  const bool use_adam = cfg.optimizer == "adam";

  state.epoch = 0;
  result.metrics.push_back(offline_metrics(spec, state, data, mode, penalty_gamma(0, cfg)));

  for (std::int64_t k = 0; k < total; ++k) {
    state.epoch = static_cast<int>(k / n);
    const double gamma = penalty_gamma(state.epoch, cfg);
    const int j = static_cast<int>(rng.next_index(n_val));
    const int i = static_cast<int>(rng.next_index(n));

    if (mode == OfflineMode::Bds) {
      if (!use_adam) {
        state = pbgd_step(spec, state, data.val[j], data.sft[i], i, gamma, cfg);
      } else {
        const LossGrad val = loss_and_grad(spec, state.params, data.val[j]);
        const LossGrad sft = loss_and_grad(spec, state.params, data.sft[i]);
        const double w = state.weights.weights[i];
        std::vector<double> dir(val.grad.size());
        for (std::size_t p = 0; p < dir.size(); ++p)
          dir[p] = val.grad[p] + gamma * w * sft.grad[p];
        adam.apply(state.params, dir, cfg.beta, cfg);
        check_divergence(state.params, state.step, cfg.divergence_limit);
        const double coeff =
            sft_loss(forward(spec, state.params, data.sft[i]), data.sft[i].y);
        state.weights = pbgd_omega_update(state.weights, i, coeff, cfg.alpha, gamma);
        ++state.step;
      }
    } else {
      if (!use_adam) {
        state = direct_mixing_step(spec, state, data.val[j], data.sft[i], cfg.rho_mix, cfg);
      } else {
        const LossGrad val = loss_and_grad(spec, state.params, data.val[j]);
        const LossGrad sft = loss_and_grad(spec, state.params, data.sft[i]);
        std::vector<double> dir(val.grad.size());
        for (std::size_t p = 0; p < dir.size(); ++p)
          dir[p] = (1.0 - cfg.rho_mix) * val.grad[p] + cfg.rho_mix * sft.grad[p];
        adam.apply(state.params, dir, cfg.beta, cfg);
        check_divergence(state.params, state.step, cfg.divergence_limit);
        ++state.step;
      }
    }

    if (state.step % interval == 0 || state.step == total) {
      state.epoch = static_cast<int>((state.step - 1) / n);
      result.metrics.push_back(offline_metrics(spec, state, data, mode, gamma));
    }
  }

  result.params = std::move(state.params);
  result.weights = std::move(state.weights);
  return result;
}

}  // namespace bisel
