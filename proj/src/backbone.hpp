#ifndef BISEL_BACKBONE_HPP
#define BISEL_BACKBONE_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "matrix.hpp"
#include "rng.hpp"
#include "token.hpp"

namespace bisel {

enum class BackboneKind { Tabular, Linear, AttentionLite };

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& s);

// Describes a toy autoregressive backbone. Every kind maps (x, y) to a V x D
// logit matrix whose column d depends on (x, y_<d) only.
//
//   Tabular       one free logit column per (question id, position); question
//                 length is fixed so questions enumerate as base-V integers.
//   Linear        logits = W * features(x, y_<d), features are one-hots of the
//                 last `hidden` context tokens plus a bias slot.
//   AttentionLite one head, one layer, token+position embeddings, causal
//                 self-attention with residual, linear head. No layer norm.
struct BackboneSpec {
  BackboneKind kind = BackboneKind::Tabular;
  int vocab = 2;
  int max_context = 8;
  int question_len = 1;  // fixed question length; indexes the tabular table
  int hidden = 2;        // linear: suffix window; attention-lite: embed width

  void validate() const;
  std::int64_t param_count() const;
  int max_response_len() const { return max_context - question_len; }
  std::int64_t question_count() const;  // V^question_len
};

struct Params {
  std::vector<double> values;
};

Params init_params(const BackboneSpec& spec, std::uint64_t seed);

struct GenerationConfig {
  int max_tokens = 0;  // 0 = resolved by the caller (offline response length)
  double temperature = 0.8;
  std::uint64_t seed = 0;
};

// Full-sequence forward pass under the causal mask.
Matrix forward(const BackboneSpec& spec, const Params& params, const TokenSample& sample);

// Logits for the next response position given question x and the generated
// prefix; the incremental-decode counterpart of forward.
std::vector<double> next_token_logits(const BackboneSpec& spec, const Params& params,
                                      std::span<const int> x, std::span<const int> prefix);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // same length as params.values
};

// sft_loss of forward(params, sample) and its parameter gradient by chain rule.
LossGrad loss_and_grad(const BackboneSpec& spec, const Params& params, const TokenSample& sample);

// Parameter gradient for a precomputed dL/dz (shared by the online path,
// where per-response gradients are reweighted before summing).
std::vector<double> backprop_logit_grad(const BackboneSpec& spec, const Params& params,
                                        const TokenSample& sample, const Matrix& logit_grad);

// Autoregressive temperature sampling; temperature 0 is greedy argmax with
// lowest-index tie break. Fixed output length = cfg.max_tokens.
std::vector<int> generate(const BackboneSpec& spec, const Params& params, std::span<const int> x,
                          const GenerationConfig& cfg, Rng& rng);

}  // namespace bisel

#endif
