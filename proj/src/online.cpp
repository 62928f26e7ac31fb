#include "online.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "error.hpp"
#include "sft.hpp"

namespace bisel {

bool MaskSet::contains(int i) const {
  return std::binary_search(indices.begin(), indices.end(), i);
}

MaskSet dynamic_mask_update(const WeightState& weights, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw_invalid("dynamic_mask_update: ratio must lie in (0, 1)");
  const int n = weights.size();
  const int count = static_cast<int>(std::lround(ratio * n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (weights.weights[a] != weights.weights[b]) return weights.weights[a] < weights.weights[b];
    return a < b;
  });
  MaskSet mask;
  mask.ratio = ratio;
  mask.indices.assign(order.begin(), order.begin() + count);
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

void OnlineConfig::validate() const {
  if (ratio < 0.0 || ratio >= 1.0) throw_config("online.ratio must lie in [0, 1)");
  if (group_size < 1) throw_config("online.group_size must be >= 1");
  if (refresh_every < 1) throw_config("online.refresh_every must be >= 1");
  if (clip < 0.0) throw_config("online.clip must be nonnegative");
  if (!(scale_offline > 0.0) || !(scale_masked > 0.0))
    throw_config("online scale factors must be positive");
  if (gen.temperature < 0.0) throw_config("online.gen.temperature must be nonnegative");
}

std::pair<GenerationBuffer, PolicySnapshot> refresh_generations(
    const BackboneSpec& spec, const Params& params, const MaskSet& mask,
    std::span<const TokenSample> sft, int group_size, const GenerationConfig& gen_cfg,
    std::uint64_t base_seed, int refresh_index, std::int64_t step) {
  if (group_size < 1) throw_invalid("refresh_generations: group size must be >= 1");
  GenerationBuffer buffer;
  buffer.snapshot_step = step;
  buffer.refresh_index = refresh_index;
  for (int qi : mask.indices) {
    if (qi < 0 || qi >= static_cast<int>(sft.size()))
      throw_invalid("refresh_generations: masked index out of range");
    const TokenSample& s = sft[qi];
    GenerationConfig gc = gen_cfg;
    if (gc.max_tokens <= 0) gc.max_tokens = static_cast<int>(s.y.size());
    Rng stream(mix_seed(mix_seed(base_seed ^ static_cast<std::uint64_t>(qi + 1)) ^
                        static_cast<std::uint64_t>(refresh_index + 1)));
    std::vector<GenEntry> group;
    group.reserve(group_size);
    for (int g = 0; g < group_size; ++g) {
      GenEntry e;
      e.tokens = generate(spec, params, s.x, gc, stream);
      const TokenSample gen_sample{s.x, e.tokens};
      e.old_logprob = seq_logprob(forward(spec, params, gen_sample), e.tokens);
      group.push_back(std::move(e));
    }
    buffer.per_question.emplace(qi, std::move(group));
  }
  return {std::move(buffer), PolicySnapshot{params, step}};
}

double importance_ratio(double cur_logprob, double old_logprob) {
  if (!std::isfinite(cur_logprob) || !std::isfinite(old_logprob))
    throw_invalid("importance_ratio: non-finite log-probability");
  const double diff = cur_logprob - old_logprob;
  if (diff > 700.0)
    throw Error(ErrorCode::RatioOverflow,
                "importance ratio overflow: log-prob difference " + std::to_string(diff));
  return std::exp(diff);
}

std::vector<double> is_weighted_sft_grad(const BackboneSpec& spec, const Params& params,
                                         std::span<const int> question,
                                         std::span<const GenEntry> entries, double clip,
                                         int question_index) {
  if (entries.empty()) throw_invalid("is_weighted_sft_grad: no buffered responses");
  std::vector<double> acc(params.values.size(), 0.0);
  for (const GenEntry& e : entries) {
    const TokenSample sample{{question.begin(), question.end()}, e.tokens};
    const Matrix z = forward(spec, params, sample);
    const double cur = seq_logprob(z, e.tokens);
    double ratio;
    if (clip > 1.0) {
      const double bound = std::log(clip);
      ratio = std::exp(std::clamp(cur - e.old_logprob, -bound, bound));
    } else {
      try {
        ratio = importance_ratio(cur, e.old_logprob);
      } catch (const Error& err) {
        if (err.code() == ErrorCode::RatioOverflow && question_index >= 0)
          throw Error(ErrorCode::RatioOverflow,
                      std::string(err.what()) + " (question " + std::to_string(question_index) +
                          ")",
                      question_index);
        throw;
      }
    }
    const std::vector<double> g =
        backprop_logit_grad(spec, params, sample, sft_loss_grad_z(z, e.tokens));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += ratio * g[i];
  }
  const double inv = 1.0 / static_cast<double>(entries.size());
  for (double& v : acc) v *= inv;
  return acc;
}

TrainState online_step(const BackboneSpec& spec, const TrainState& state,
                       const TokenSample& val_sample, std::span<const TokenSample> sft,
                       int sft_index, const GenerationBuffer& buffer, const MaskSet& mask,
                       double gamma, const TrainConfig& cfg, const OnlineConfig& ocfg) {
  if (sft_index < 0 || sft_index >= static_cast<int>(sft.size()))
    throw_invalid("online_step: sft index out of range");
  if (!mask.contains(sft_index)) {
    return pbgd_step(spec, state, val_sample, sft[sft_index], sft_index,
                     gamma * ocfg.scale_offline, cfg);
  }
  if (!buffer.fresh()) throw_invalid("online_step: no generation buffer for masked question");
  const auto it = buffer.per_question.find(sft_index);
  if (it == buffer.per_question.end())
    throw_invalid("online_step: masked question " + std::to_string(sft_index) +
                  " missing from buffer");
  const std::vector<GenEntry>& entries = it->second;
  const double gamma_eff = gamma * ocfg.scale_masked;

  const LossGrad val = loss_and_grad(spec, state.params, val_sample);
  const std::vector<double> gsft = is_weighted_sft_grad(spec, state.params, sft[sft_index].x,
                                                        entries, ocfg.clip, sft_index);
  const double w = state.weights.weights[sft_index];

  TrainState next = state;
  for (std::size_t i = 0; i < next.params.values.size(); ++i) {
    next.params.values[i] -= cfg.beta * (val.grad[i] + gamma_eff * w * gsft[i]);
  }
  check_divergence(next.params, state.step, cfg.divergence_limit);

  double coeff = 0.0;
  for (const GenEntry& e : entries) {
    const TokenSample sample{sft[sft_index].x, e.tokens};
    coeff += sft_loss(forward(spec, next.params, sample), e.tokens);
  }
  coeff /= static_cast<double>(entries.size());
  next.weights = pbgd_omega_update(state.weights, sft_index, coeff, cfg.alpha, gamma_eff);
  next.step = state.step + 1;
  return next;
}

namespace {

double greedy_match_rate(const BackboneSpec& spec, const Params& params,
                         std::span<const TokenSample> sft, const MaskSet& mask,
                         const CleanRule& rule) {
  if (!rule || mask.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  Rng unused(0);
  GenerationConfig gc;
  gc.temperature = 0.0;
  int matches = 0;
  for (int qi : mask.indices) {
    const std::vector<int> want = rule(sft[qi].x);
    gc.max_tokens = static_cast<int>(want.size());
    if (generate(spec, params, sft[qi].x, gc, unused) == want) ++matches;
  }
  return static_cast<double>(matches) / mask.size();
}

MetricsRow online_metrics(const BackboneSpec& spec, const TrainState& state, const Datasets& data,
                          const GenerationBuffer& buffer, const MaskSet& mask, double gamma,
                          const CleanRule& rule) {
  MetricsRow row;
  row.step = state.step;
  row.epoch = state.epoch;
  row.gamma = gamma;
  row.val_loss = per_token_loss(spec, state.params, data.val);

  // Weighted lower-level loss over the effective dataset: masked questions are
  // scored on their buffered generations, the rest on offline responses.
  double sel = 0.0;
  for (std::size_t i = 0; i < data.sft.size(); ++i) {
    const auto& s = data.sft[i];
    double li;
    const auto it = buffer.per_question.find(static_cast<int>(i));
    if (mask.contains(static_cast<int>(i)) && it != buffer.per_question.end()) {
      double acc = 0.0;
      for (const GenEntry& e : it->second) {
        const TokenSample sample{s.x, e.tokens};
        acc += sft_loss(forward(spec, state.params, sample), e.tokens) /
               static_cast<double>(e.tokens.size());
      }
      li = acc / static_cast<double>(it->second.size());
    } else {
      li = sft_loss(forward(spec, state.params, s), s.y) / static_cast<double>(s.y.size());
    }
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
  row.gen_match_rate = greedy_match_rate(spec, state.params, data.sft, mask, rule);
  return row;
}

}  // namespace

TrainResult train_online(const TrainConfig& cfg, const OnlineConfig& ocfg, const Datasets& data,
                         const BackboneSpec& spec, MaskStrategy strategy, Rng& rng,
                         const CleanRule& rule, const RefreshHook& on_refresh) {
  cfg.validate();
  ocfg.validate();
  if (data.sft.empty() || data.val.empty())
    throw_invalid("train_online: SFT and validation splits must be nonempty");
  const int n = static_cast<int>(data.sft.size());
  const int n_val = static_cast<int>(data.val.size());
  const int n_masked = static_cast<int>(std::lround(ocfg.ratio * n));
  if (n_masked == 0) {
    // Empty mask: the loop below would never touch generation machinery, so
    // the offline path is reused verbatim to keep the equivalence bit-exact.
    return train_offline(cfg, data, spec, OfflineMode::Bds, rng);
  }

  const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * n;
  const std::int64_t interval = cfg.log_interval > 0 ? cfg.log_interval : n;
  const std::uint64_t gen_seed = ocfg.gen.seed != 0 ? ocfg.gen.seed : cfg.seed;

  TrainState state;
  state.params = init_params(spec, cfg.seed);
  state.weights = WeightState(n);

  MaskSet mask;
  mask.ratio = ocfg.ratio;
  if (strategy == MaskStrategy::Static) {
    mask.indices = rng.sample_without_replacement(n, n_masked);
    std::sort(mask.indices.begin(), mask.indices.end());
  } else {
    mask = dynamic_mask_update(state.weights, ocfg.ratio);
  }

  TrainResult result;
  if (total == 0) {
    result.params = state.params;
    result.weights = state.weights;
    return result;
  }

  GenerationBuffer buffer;
  int refresh_index = 0;

  result.metrics.push_back(
      online_metrics(spec, state, data, buffer, mask, penalty_gamma(0, cfg), rule));

  for (std::int64_t k = 0; k < total; ++k) {
    state.epoch = static_cast<int>(k / n);
    const double gamma = penalty_gamma(state.epoch, cfg);

    if (k % ocfg.refresh_every == 0) {
      if (strategy == MaskStrategy::Dynamic) mask = dynamic_mask_update(state.weights, ocfg.ratio);
      auto [buf, snap] = refresh_generations(spec, state.params, mask, data.sft, ocfg.group_size,
                                             ocfg.gen, gen_seed, refresh_index, state.step);
      buffer = std::move(buf);
      ++refresh_index;
      if (on_refresh) on_refresh(buffer);
    }

    const int j = static_cast<int>(rng.next_index(n_val));
    const int i = static_cast<int>(rng.next_index(n));
    state = online_step(spec, state, data.val[j], data.sft, i, buffer, mask, gamma, cfg, ocfg);

    if (state.step % interval == 0 || state.step == total) {
      state.epoch = static_cast<int>((state.step - 1) / n);
      result.metrics.push_back(online_metrics(spec, state, data, buffer, mask, gamma, rule));
    }
  }

  result.params = std::move(state.params);
  result.weights = std::move(state.weights);
  return result;
}

}  // namespace bisel
