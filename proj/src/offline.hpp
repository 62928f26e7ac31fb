#ifndef BISEL_OFFLINE_HPP
#define BISEL_OFFLINE_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "instance.hpp"
#include "weights.hpp"

namespace bisel {

struct TrainConfig {
  double alpha = 0.1;   // omega step size
  double beta = 1.0;    // theta step size
  double rho0 = 0.1;    // penalty schedule start
  double drho = 0.1;    // penalty schedule increment per epoch
  int epochs = 3;
  double rho_mix = 0.5;  // direct-mixing parameter
  double tau = 1.0;      // LSE temperature
  double eps_w = 0.0;    // removal threshold; 0 = auto 1/(10N)
  double eps_sep = 1e-3; // per-token separability threshold
  std::int64_t log_interval = 0;  // steps between metric rows; 0 = once per epoch
  std::uint64_t seed = 1;         // parameter init + batch order
  std::string optimizer = "sgd";  // "sgd" (theory path) or "adam" (demo path)
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double divergence_limit = 1e6;

  void validate() const;
  double eps_w_for(int n) const { return eps_w > 0.0 ? eps_w : 1.0 / (10.0 * n); }
};

// gamma_k = rho_k / (1 - rho_k) with rho_k = rho0 + drho * epoch.
double penalty_gamma(int epoch, const TrainConfig& cfg);

struct TrainState {
  Params params;
  WeightState weights;
  std::int64_t step = 0;
  int epoch = 0;
};

struct MetricsRow {
  std::int64_t step = 0;
  int epoch = 0;
  double val_loss = 0.0;        // per-token NLL over the validation split
  double sft_loss = 0.0;        // weighted per-token lower-level loss
  double w_useless_mean = 0.0;  // NaN when unlabeled
  double w_useful_mean = 0.0;
  double gamma = 0.0;
  double gen_match_rate = 0.0;  // NaN for offline runs
};

// One PBGD step: theta descends the penalized objective on the sampled pair,
// then the selected weight logit descends by the post-update SFT loss.
TrainState pbgd_step(const BackboneSpec& spec, const TrainState& state,
                     const TokenSample& val_sample, const TokenSample& sft_sample, int sft_index,
                     double gamma, const TrainConfig& cfg);

// Same step with the upper-level gradient supplied by the caller (used by the
// expected-update verifier, which fixes it to the full validation batch).
TrainState pbgd_step_with_val_grad(const BackboneSpec& spec, const TrainState& state,
                                   std::span<const double> val_grad,
                                   const TokenSample& sft_sample, int sft_index, double gamma,
                                   const TrainConfig& cfg);

// Baseline B1: theta descends (1-rho)*upper + rho*lower; weights untouched.
TrainState direct_mixing_step(const BackboneSpec& spec, const TrainState& state,
                              const TokenSample& val_sample, const TokenSample& sft_sample,
                              double rho_mix, const TrainConfig& cfg);

enum class OfflineMode { Bds, Mixing };

struct TrainResult {
  Params params;
  WeightState weights;
  std::vector<MetricsRow> metrics;
};

TrainResult train_offline(const TrainConfig& cfg, const Datasets& data, const BackboneSpec& spec,
                          OfflineMode mode, Rng& rng);

// Helpers shared with the online loop / verifiers.
double per_token_loss(const BackboneSpec& spec, const Params& params,
                      std::span<const TokenSample> samples);
std::vector<double> full_batch_val_grad(const BackboneSpec& spec, const Params& params,
                                        std::span<const TokenSample> val);
void check_divergence(const Params& params, std::int64_t step, double limit);

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
  void apply(Params& params, std::span<const double> grad, double lr, const TrainConfig& cfg);
};

}  // namespace bisel

#endif
