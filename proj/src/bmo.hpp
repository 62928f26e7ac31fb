#ifndef BISEL_BMO_HPP
#define BISEL_BMO_HPP

#include <functional>
#include <span>
#include <vector>

#include "backbone.hpp"
#include "instance.hpp"
#include "offline.hpp"

namespace bisel {

// One fine-tuning criterion over a flat parameter vector.
struct Objective {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> grad;
};

using ObjectiveVector = std::vector<Objective>;

// Per-sample SFT losses as competing criteria.
ObjectiveVector sft_objectives(const BackboneSpec& spec, std::span<const TokenSample> samples);

// (1/tau) * log sum_m exp(tau * q_m), stabilized.
// Satisfies max(q) <= lse(q) <= max(q) + log(M)/tau.
double lse(std::span<const double> q, double tau);

// Grid-restricted merit: max over candidate points of min_m (L_m(theta) - L_m(theta')).
// Zero level set on the grid approximates the weak Pareto front.
double merit_exact(std::span<const double> theta, std::span<const std::vector<double>> candidates,
                   const ObjectiveVector& objectives);

// Separable shortcut: the merit reduces to min_m L_m(theta) when every
// objective can be driven to (near) zero by some shared parameter.
double merit_separable(std::span<const double> losses_at_theta);

// Deterministic full-batch LSE-penalty step:
// theta <- theta - beta * (grad L0 + gamma * sum_m lambda_m grad L_m),
// lambda = softmax(-tau * losses).
Params pmo_lse_step(const BackboneSpec& spec, const Params& params, const TokenSample& val_sample,
                    const ObjectiveVector& objectives, double gamma, double tau, double beta,
                    double divergence_limit = 1e6);

// Stochastic variant: track omega_{i_k} toward -tau * loss_{i_k}, then descend
// with the tracked softmax weight on the sampled objective.
TrainState stochastic_bmo_step(const BackboneSpec& spec, const TrainState& state,
                               const TokenSample& val_sample, const TokenSample& sft_sample,
                               int sft_index, double gamma, const TrainConfig& cfg);

// Stochastic BMO training loop over the penalty schedule.
TrainResult train_bmo(const TrainConfig& cfg, const Datasets& data, const BackboneSpec& spec,
                      Rng& rng);

}  // namespace bisel

#endif
