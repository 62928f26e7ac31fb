#ifndef BISEL_INSTANCE_HPP
#define BISEL_INSTANCE_HPP

#include <span>
#include <vector>

#include "backbone.hpp"
#include "rng.hpp"
#include "token.hpp"

namespace bisel {

struct Datasets {
  std::vector<TokenSample> sft;
  std::vector<TokenSample> val;
  std::vector<TokenSample> eval;
  std::vector<Label> sft_labels;  // empty when unlabeled

  bool labeled() const { return sft_labels.size() == sft.size() && !sft.empty(); }
};

// Constructed instance with certified per-sample labels. Responses follow the
// clean rule f(x)_d = (sum(x) + d) mod V; corrupt responses shift every token
// by a fixed nonzero offset. Useless SFT samples reuse validation questions
// with corrupt responses, so fitting them conflicts with the validation set.
struct SyntheticInstance {
  BackboneSpec spec;
  Datasets data;
  int response_len = 1;
  int corrupt_offset = 1;
  // Parameter box for grid oracles over low-dimensional tabular slices.
  double grid_lo = -6.0, grid_hi = 6.0, grid_res = 0.25;

  std::vector<int> clean_response(std::span<const int> x) const;
  std::vector<int> corrupt_response(std::span<const int> x) const;
};

struct InstanceParams {
  int vocab = 8;
  int question_len = 2;
  int response_len = 3;
  int n_sft = 40;
  int n_val = 10;
  int n_eval = 0;  // 0 = same as n_val
  double useless_fraction = 0.3;
  BackboneKind kind = BackboneKind::Tabular;
  int corrupt_offset = 0;       // 0 = max(1, vocab/2)
  int hidden = 0;               // 0 = kind default (linear window 2, attention width 8)
  std::uint64_t seed = 7;       // generation seed used by the harness
};

SyntheticInstance gen_synthetic_instance(const InstanceParams& params, Rng& rng);

// Spec-signature convenience wrapper.
SyntheticInstance gen_synthetic_instance(int vocab, int question_len, int response_len, int n_sft,
                                         int n_val, double useless_fraction, BackboneKind kind,
                                         Rng& rng);

// Reclassifies every SFT sample from the raw datasets: useless iff its
// question appears in the validation set with a different response.
std::vector<Label> recompute_labels(const Datasets& data);

std::vector<int> decode_question(std::int64_t id, int question_len, int vocab);

}  // namespace bisel

#endif
