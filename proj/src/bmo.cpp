#include "bmo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"
#include "sft.hpp"

namespace bisel {

ObjectiveVector sft_objectives(const BackboneSpec& spec, std::span<const TokenSample> samples) {
  ObjectiveVector out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    TokenSample sample = s;
    out.push_back(Objective{
        [spec, sample](std::span<const double> theta) {
          Params p{std::vector<double>(theta.begin(), theta.end())};
          return sft_loss(forward(spec, p, sample), sample.y);
        },
        [spec, sample](std::span<const double> theta) {
          Params p{std::vector<double>(theta.begin(), theta.end())};
          return loss_and_grad(spec, p, sample).grad;
        }});
  }
  return out;
}

double lse(std::span<const double> q, double tau) {
  if (!(tau > 0.0)) throw_invalid("lse: tau must be positive");
  if (q.empty()) throw_invalid("lse: empty vector");
  const double m = *std::max_element(q.begin(), q.end());
  double s = 0.0;
  for (double v : q) s += std::exp(tau * (v - m));
  return m + std::log(s) / tau;
}

double merit_exact(std::span<const double> theta, std::span<const std::vector<double>> candidates,
                   const ObjectiveVector& objectives) {
  if (candidates.empty()) throw_invalid("merit_exact: empty candidate set");
  if (objectives.empty()) throw_invalid("merit_exact: empty objective vector");
  std::vector<double> at_theta(objectives.size());
  for (std::size_t m = 0; m < objectives.size(); ++m) at_theta[m] = objectives[m].value(theta);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& cand : candidates) {
    double inner = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < objectives.size(); ++m) {
      inner = std::min(inner, at_theta[m] - objectives[m].value(cand));
    }
    best = std::max(best, inner);
  }
  return best;
}

double merit_separable(std::span<const double> losses_at_theta) {
  if (losses_at_theta.empty()) throw_invalid("merit_separable: empty loss vector");
  return *std::min_element(losses_at_theta.begin(), losses_at_theta.end());
}

Params pmo_lse_step(const BackboneSpec& spec, const Params& params, const TokenSample& val_sample,
                    const ObjectiveVector& objectives, double gamma, double tau, double beta,
                    double divergence_limit) {
  if (objectives.empty()) throw_invalid("pmo_lse_step: empty objective vector");
  const LossGrad val = loss_and_grad(spec, params, val_sample);
  std::vector<double> losses(objectives.size());
  for (std::size_t m = 0; m < objectives.size(); ++m)
    losses[m] = objectives[m].value(params.values);
  const std::vector<double> lambda = lse_implicit_weights(losses, tau);

  std::vector<double> dir = val.grad;
  for (std::size_t m = 0; m < objectives.size(); ++m) {
    const std::vector<double> g = objectives[m].grad(params.values);
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += gamma * lambda[m] * g[i];
  }
  Params next = params;
  for (std::size_t i = 0; i < next.values.size(); ++i) next.values[i] -= beta * dir[i];
  check_divergence(next, 0, divergence_limit);
  return next;
}

TrainState stochastic_bmo_step(const BackboneSpec& spec, const TrainState& state,
                               const TokenSample& val_sample, const TokenSample& sft_sample,
                               int sft_index, double gamma, const TrainConfig& cfg) {
  if (sft_index < 0 || sft_index >= state.weights.size())
    throw_invalid("stochastic_bmo_step: sft index out of range");
  TrainState next = state;

  // Track the implicit logit with the pre-update loss, then read the weight.
  const double loss_now = sft_loss(forward(spec, state.params, sft_sample), sft_sample.y);
  next.weights.logits[sft_index] =
      bmo_omega_track(state.weights.logits[sft_index], loss_now, cfg.alpha, cfg.tau);
  next.weights.recache();

  const LossGrad val = loss_and_grad(spec, state.params, val_sample);
  const LossGrad sft = loss_and_grad(spec, state.params, sft_sample);
  const double w = next.weights.weights[sft_index];
  for (std::size_t i = 0; i < next.params.values.size(); ++i) {
    next.params.values[i] -= cfg.beta * (val.grad[i] + gamma * w * sft.grad[i]);
  }
  check_divergence(next.params, state.step, cfg.divergence_limit);
  next.step = state.step + 1;
  return next;
}

TrainResult train_bmo(const TrainConfig& cfg, const Datasets& data, const BackboneSpec& spec,
                      Rng& rng) {
  cfg.validate();
  if (data.sft.empty() || data.val.empty())
    throw_invalid("train_bmo: SFT and validation splits must be nonempty");
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

  auto metrics_row = [&](double gamma) {
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
      sel += state.weights.weights[i] * li;
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
  };

  result.metrics.push_back(metrics_row(penalty_gamma(0, cfg)));
  for (std::int64_t k = 0; k < total; ++k) {
    state.epoch = static_cast<int>(k / n);
    const double gamma = penalty_gamma(state.epoch, cfg);
    const int j = static_cast<int>(rng.next_index(n_val));
    const int i = static_cast<int>(rng.next_index(n));
    state = stochastic_bmo_step(spec, state, data.val[j], data.sft[i], i, gamma, cfg);
    if (state.step % interval == 0 || state.step == total) {
      state.epoch = static_cast<int>((state.step - 1) / n);
      result.metrics.push_back(metrics_row(gamma));
    }
  }
  result.params = std::move(state.params);
  result.weights = std::move(state.weights);
  return result;
}

}  // namespace bisel
