#include "instance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "error.hpp"

namespace bisel {

namespace {

std::vector<int> rule_response(std::span<const int> x, int len, int vocab, int offset) {
  int sum = 0;
  for (int t : x) sum += t;
  std::vector<int> y(len);
  for (int d = 0; d < len; ++d) y[d] = (sum + d + 1 + offset) % vocab;
  return y;
}

std::vector<std::int64_t> distinct_question_ids(std::int64_t pool, int count, Rng& rng) {
  if (count > pool)
    throw_invalid("gen_synthetic_instance: " + std::to_string(count) +
                  " distinct questions requested but only " + std::to_string(pool) + " exist");
  if (pool <= 2 * static_cast<std::int64_t>(count) || pool <= 4096) {
    // Partial Fisher-Yates over the whole pool.
    std::vector<std::int64_t> ids(pool);
    std::iota(ids.begin(), ids.end(), 0);
    for (int i = 0; i < count; ++i) {
      const std::int64_t j = i + static_cast<std::int64_t>(rng.next_index(pool - i));
      std::swap(ids[i], ids[j]);
    }
    ids.resize(count);
    return ids;
  }
  std::vector<std::int64_t> ids;
  std::unordered_set<std::int64_t> seen;
  while (static_cast<int>(ids.size()) < count) {
    const std::int64_t id = static_cast<std::int64_t>(rng.next_index(pool));
    if (seen.insert(id).second) ids.push_back(id);
  }
  return ids;
}

}  // namespace

std::vector<int> decode_question(std::int64_t id, int question_len, int vocab) {
  std::vector<int> x(question_len);
  for (int j = 0; j < question_len; ++j) {
    x[j] = static_cast<int>(id % vocab);
    id /= vocab;
  }
  return x;
}

std::vector<int> SyntheticInstance::clean_response(std::span<const int> x) const {
  return rule_response(x, response_len, spec.vocab, 0);
}

std::vector<int> SyntheticInstance::corrupt_response(std::span<const int> x) const {
  return rule_response(x, response_len, spec.vocab, corrupt_offset);
}

SyntheticInstance gen_synthetic_instance(const InstanceParams& p, Rng& rng) {
  if (p.vocab < 2) throw_invalid("gen_synthetic_instance: vocab must be >= 2");
  if (p.useless_fraction < 0.0 || p.useless_fraction >= 1.0)
    throw_invalid("gen_synthetic_instance: useless_fraction must lie in [0, 1)");
  if (p.n_sft < 1 || p.n_val < 1)
    throw_invalid("gen_synthetic_instance: datasets must be nonempty");

  SyntheticInstance inst;
  inst.response_len = p.response_len;
  inst.corrupt_offset = p.corrupt_offset > 0 ? p.corrupt_offset % p.vocab
                                             : std::max(1, p.vocab / 2);
  if (inst.corrupt_offset == 0) throw_invalid("gen_synthetic_instance: corrupt offset is 0 mod V");

  inst.spec.kind = p.kind;
  inst.spec.vocab = p.vocab;
  inst.spec.question_len = p.question_len;
  inst.spec.max_context = p.question_len + p.response_len;
  inst.spec.hidden = p.hidden > 0 ? p.hidden : (p.kind == BackboneKind::Linear ? 2 : 8);
  inst.spec.validate();

  const int n_useless = static_cast<int>(std::lround(p.useless_fraction * p.n_sft));
  const int n_useful = p.n_sft - n_useless;
  const int n_eval = p.n_eval > 0 ? p.n_eval : p.n_val;

  const std::int64_t pool = inst.spec.question_count();
  const std::vector<std::int64_t> ids = distinct_question_ids(pool, p.n_val + n_useful, rng);

  std::vector<std::vector<int>> val_q(p.n_val);
  for (int i = 0; i < p.n_val; ++i) val_q[i] = decode_question(ids[i], p.question_len, p.vocab);

  Datasets& d = inst.data;
  for (int i = 0; i < p.n_val; ++i) d.val.push_back({val_q[i], inst.clean_response(val_q[i])});

  // Evaluation split: fresh i.i.d. draws from the validation question pool.
  for (int i = 0; i < n_eval; ++i) {
    const auto& q = val_q[rng.next_index(p.n_val)];
    d.eval.push_back({q, inst.clean_response(q)});
  }

  for (int j = 0; j < n_useless; ++j) {
    const auto& q = val_q[j % p.n_val];
    d.sft.push_back({q, inst.corrupt_response(q)});
    d.sft_labels.push_back(Label::Useless);
  }
  for (int j = 0; j < n_useful; ++j) {
    const auto q = decode_question(ids[p.n_val + j], p.question_len, p.vocab);
    d.sft.push_back({q, inst.clean_response(q)});
    d.sft_labels.push_back(Label::Useful);
  }

  // Shuffle the SFT order so labels are not positional.
  std::vector<int> order(p.n_sft);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<TokenSample> sft(p.n_sft);
  std::vector<Label> labels(p.n_sft);
  for (int i = 0; i < p.n_sft; ++i) {
    sft[i] = std::move(d.sft[order[i]]);
    labels[i] = d.sft_labels[order[i]];
  }
  d.sft = std::move(sft);
  d.sft_labels = std::move(labels);
  return inst;
}

SyntheticInstance gen_synthetic_instance(int vocab, int question_len, int response_len, int n_sft,
                                         int n_val, double useless_fraction, BackboneKind kind,
                                         Rng& rng) {
  InstanceParams p;
  p.vocab = vocab;
  p.question_len = question_len;
  p.response_len = response_len;
  p.n_sft = n_sft;
  p.n_val = n_val;
  p.useless_fraction = useless_fraction;
  p.kind = kind;
  return gen_synthetic_instance(p, rng);
}

std::vector<Label> recompute_labels(const Datasets& data) {
  // Key validation responses by question.
  std::unordered_map<std::string, const std::vector<int>*> val_by_q;
  auto key = [](const std::vector<int>& x) {
    std::string k;
    for (int t : x) {
      k += std::to_string(t);
      k += ',';
    }
    return k;
  };
  for (const auto& s : data.val) val_by_q[key(s.x)] = &s.y;
  std::vector<Label> labels;
  labels.reserve(data.sft.size());
  for (const auto& s : data.sft) {
    const auto it = val_by_q.find(key(s.x));
    const bool useless = it != val_by_q.end() && *it->second != s.y;
    labels.push_back(useless ? Label::Useless : Label::Useful);
  }
  return labels;
}

}  // namespace bisel
