#ifndef BISEL_ONLINE_HPP
#define BISEL_ONLINE_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "backbone.hpp"
#include "instance.hpp"
#include "offline.hpp"

namespace bisel {

// Questions whose offline responses are replaced by on-policy generations.
struct MaskSet {
  std::vector<int> indices;  // sorted, unique, < N
  double ratio = 0.0;        // requested N_M / N

  bool contains(int i) const;
  int size() const { return static_cast<int>(indices.size()); }
};

// Bottom-weighted questions: the round(R*N) indices with smallest softmax
// weight, ties broken by smaller index.
MaskSet dynamic_mask_update(const WeightState& weights, double ratio);

struct GenEntry {
  std::vector<int> tokens;
  double old_logprob = 0.0;  // sequence log-prob under the snapshot policy
};

struct GenerationBuffer {
  std::map<int, std::vector<GenEntry>> per_question;  // exactly G entries each
  std::int64_t snapshot_step = -1;
  int refresh_index = -1;

  bool fresh() const { return snapshot_step >= 0; }
};

struct PolicySnapshot {
  Params params;
  std::int64_t step = -1;
};

// Samples G responses per masked question from the current policy and records
// their log-probs under the same parameters; the snapshot is taken afterwards.
// Each question draws from its own stream (base seed, question index, refresh
// counter), so generation order cannot change outputs.
std::pair<GenerationBuffer, PolicySnapshot> refresh_generations(
    const BackboneSpec& spec, const Params& params, const MaskSet& mask,
    std::span<const TokenSample> sft, int group_size, const GenerationConfig& gen_cfg,
    std::uint64_t base_seed, int refresh_index, std::int64_t step);

// exp(cur - old), the current-to-old policy probability ratio. Errors when the
// exponent exceeds 700.
double importance_ratio(double cur_logprob, double old_logprob);

// (1/G) sum_g r^g grad L_SFT(theta; x, y^g) with ratios under current params.
// clip > 1 bounds each ratio to [1/clip, clip].
std::vector<double> is_weighted_sft_grad(const BackboneSpec& spec, const Params& params,
                                         std::span<const int> question,
                                         std::span<const GenEntry> entries, double clip = 0.0,
                                         int question_index = -1);

enum class MaskStrategy { Static, Dynamic };

struct OnlineConfig {
  double ratio = 0.1;      // R = N_M / N
  int group_size = 1;      // G
  int refresh_every = 50;  // K_gen, desk-scale default
  double clip = 0.0;       // importance-ratio clip, 0 or <=1 disables
  // Per-term penalty scales; 1.0 keeps the offline/online paths coincident,
  // N/(N-N_M) and N/N_M reproduce the split-normalized objective.
  double scale_offline = 1.0;
  double scale_masked = 1.0;
  GenerationConfig gen;  // max_tokens 0 = offline response length

  void validate() const;
};

// One step of the online loop: masked indices use the ratio-weighted gradient
// over buffered generations and the buffered-loss mean as omega coefficient;
// unmasked indices take the plain offline PBGD step.
TrainState online_step(const BackboneSpec& spec, const TrainState& state,
                       const TokenSample& val_sample, std::span<const TokenSample> sft, int sft_index,
                       const GenerationBuffer& buffer, const MaskSet& mask, double gamma,
                       const TrainConfig& cfg, const OnlineConfig& ocfg);

using CleanRule = std::function<std::vector<int>(std::span<const int>)>;
using RefreshHook = std::function<void(const GenerationBuffer&)>;

// Full online loop with periodic regeneration. The dynamic strategy recomputes
// the mask at every refresh. gen_match_rate in the metrics is the fraction of
// masked questions whose greedy generation equals rule(x); NaN without a rule.
// A zero-size mask reduces exactly to train_offline under the same seed.
TrainResult train_online(const TrainConfig& cfg, const OnlineConfig& ocfg, const Datasets& data,
                         const BackboneSpec& spec, MaskStrategy strategy, Rng& rng,
                         const CleanRule& rule = nullptr, const RefreshHook& on_refresh = nullptr);

}  // namespace bisel

#endif
