#include "verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "error.hpp"
#include "sft.hpp"

namespace bisel {

GridOracle GridOracle::build(std::span<const double> lo, std::span<const double> hi,
                             std::span<const double> res) {
  if (lo.empty() || lo.size() != hi.size() || lo.size() != res.size())
    throw_invalid("grid: bounds and resolution must share a nonzero dimension");
  const int dims = static_cast<int>(lo.size());
  std::vector<int> steps(dims);
  std::int64_t total = 1;
  for (int d = 0; d < dims; ++d) {
    if (!(res[d] > 0.0) || hi[d] < lo[d]) throw_invalid("grid: malformed box");
    steps[d] = static_cast<int>(std::lround((hi[d] - lo[d]) / res[d])) + 1;
    total *= steps[d];
    if (total > 1'000'000)
      throw Error(ErrorCode::ResourceLimit, "grid: more than 1e6 points requested");
  }
  GridOracle g;
  g.lo.assign(lo.begin(), lo.end());
  g.hi.assign(hi.begin(), hi.end());
  g.res.assign(res.begin(), res.end());
  g.points.reserve(total);
  std::vector<int> idx(dims, 0);
  for (std::int64_t p = 0; p < total; ++p) {
    std::vector<double> pt(dims);
    for (int d = 0; d < dims; ++d) pt[d] = lo[d] + res[d] * idx[d];
    g.points.push_back(std::move(pt));
    for (int d = dims - 1; d >= 0; --d) {
      if (++idx[d] < steps[d]) break;
      idx[d] = 0;
    }
  }
  return g;
}

void GridOracle::cache(const ObjectiveVector& objectives) {
  losses.assign(points.size(), {});
  for (std::size_t p = 0; p < points.size(); ++p) {
    losses[p].resize(objectives.size());
    for (std::size_t m = 0; m < objectives.size(); ++m)
      losses[p][m] = objectives[m].value(points[p]);
  }
}

std::vector<std::int64_t> brute_pareto_front(const ObjectiveVector& objectives, GridOracle& grid) {
  if (objectives.empty()) throw_invalid("brute_pareto_front: empty objective vector");
  if (grid.losses.size() != grid.points.size()) grid.cache(objectives);
  const std::int64_t n = grid.point_count();
  const int m = static_cast<int>(objectives.size());
  std::vector<char> dominated(n, 0);

  if (m == 2) {
    // Sweep in increasing first coordinate; a point is dominated iff some
    // point with strictly smaller first loss also has strictly smaller second.
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
      if (grid.losses[a][0] != grid.losses[b][0]) return grid.losses[a][0] < grid.losses[b][0];
      return grid.losses[a][1] < grid.losses[b][1];
    });
    double best_prev = std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      double group_min = std::numeric_limits<double>::infinity();
      while (j < order.size() && grid.losses[order[j]][0] == grid.losses[order[i]][0]) {
        if (grid.losses[order[j]][1] < best_prev) {
          // not dominated
        } else {
          dominated[order[j]] = 1;
        }
        group_min = std::min(group_min, grid.losses[order[j]][1]);
        ++j;
      }
      best_prev = std::min(best_prev, group_min);
      i = j;
    }
  } else {
    for (std::int64_t p = 0; p < n; ++p) {
      for (std::int64_t q = 0; q < n && !dominated[p]; ++q) {
        if (q == p) continue;
        bool strict = true;
        for (int k = 0; k < m; ++k) {
          if (!(grid.losses[q][k] < grid.losses[p][k])) {
            strict = false;
            break;
          }
        }
        if (strict) dominated[p] = 1;
      }
    }
  }

  std::vector<std::int64_t> front;
  for (std::int64_t p = 0; p < n; ++p) {
    if (!dominated[p]) front.push_back(p);
  }
  return front;
}

std::vector<std::int64_t> scalarization_union(const ObjectiveVector& objectives, GridOracle& grid,
                                              std::span<const std::vector<double>> weight_samples) {
  if (weight_samples.empty()) throw_invalid("scalarization_union: no weight samples");
  if (grid.losses.size() != grid.points.size()) grid.cache(objectives);
  std::set<std::int64_t> hit;
  for (const auto& w : weight_samples) {
    if (w.size() != objectives.size())
      throw_invalid("scalarization_union: weight dimension mismatch");
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> vals(grid.points.size());
    for (std::size_t p = 0; p < grid.points.size(); ++p) {
      double v = 0.0;
      for (std::size_t m = 0; m < w.size(); ++m) v += w[m] * grid.losses[p][m];
      vals[p] = v;
      best = std::min(best, v);
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(best));
    for (std::size_t p = 0; p < grid.points.size(); ++p) {
      if (vals[p] <= best + tol) hit.insert(static_cast<std::int64_t>(p));
    }
  }
  return {hit.begin(), hit.end()};
}

namespace {

void compositions(int m, int left, std::vector<int>& cur, int subdivisions,
                  std::vector<std::vector<double>>& out) {
  if (static_cast<int>(cur.size()) == m - 1) {
    cur.push_back(left);
    std::vector<double> w(m);
    for (int i = 0; i < m; ++i) w[i] = static_cast<double>(cur[i]) / subdivisions;
    out.push_back(std::move(w));
    cur.pop_back();
    return;
  }
  for (int k = 0; k <= left; ++k) {
    cur.push_back(k);
    compositions(m, left - k, cur, subdivisions, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<std::vector<double>> simplex_weight_samples(int m, int subdivisions) {
  if (m < 1 || subdivisions < 1) throw_invalid("simplex_weight_samples: bad arguments");
  std::vector<std::vector<double>> out;
  std::vector<int> cur;
  compositions(m, subdivisions, cur, subdivisions, out);
  return out;
}

SelectionReport verify_selection(const WeightState& weights, const SyntheticInstance& instance,
                                 double eps_w) {
  const Datasets& d = instance.data;
  if (weights.size() != static_cast<int>(d.sft.size()))
    throw_invalid("verify_selection: weight vector does not match SFT dataset size");
  if (!d.labeled()) throw_invalid("verify_selection: instance carries no labels");

  SelectionReport rep;
  rep.eps_w = eps_w;
  double sum_useless = 0.0, sum_useful = 0.0;
  int n_useless = 0, n_useful = 0;
  for (std::size_t i = 0; i < d.sft.size(); ++i) {
    const double w = weights.weights[i];
    if (d.sft_labels[i] == Label::Useless) {
      rep.max_useless_weight = std::max(rep.max_useless_weight, w);
      sum_useless += w;
      ++n_useless;
    } else {
      sum_useful += w;
      ++n_useful;
    }
  }
  if (n_useless == 0 || n_useful == 0) {
    rep.applicable = false;
    rep.pass = true;
    return rep;
  }
  rep.mean_useless = sum_useless / n_useless;
  rep.mean_useful = sum_useful / n_useful;
  rep.useful_to_useless_ratio =
      rep.mean_useless > 0.0 ? rep.mean_useful / rep.mean_useless
                             : std::numeric_limits<double>::infinity();
  rep.pass = rep.max_useless_weight < eps_w && rep.useful_to_useless_ratio >= 5.0;
  return rep;
}

ImprovementReport verify_improvement(std::span<const RunArtifact> bds_runs,
                                     const std::map<double, std::vector<RunArtifact>>& mixing_runs,
                                     const SyntheticInstance& instance) {
  if (bds_runs.empty() || mixing_runs.empty())
    throw_invalid("verify_improvement: missing runs");
  for (const auto& [rho, runs] : mixing_runs) {
    if (runs.size() != bds_runs.size())
      throw_invalid("verify_improvement: run counts differ between BDS and mixing");
    for (std::size_t s = 0; s < runs.size(); ++s) {
      if (runs[s].seed != bds_runs[s].seed)
        throw_invalid("verify_improvement: seed sets differ between BDS and mixing runs");
    }
  }

  ImprovementReport rep;
  const Datasets& d = instance.data;
  bool has_useless = false;
  for (Label l : d.sft_labels) has_useless |= (l == Label::Useless);
  if (!d.labeled() || !has_useless) {
    rep.applicable = false;
    rep.pass = true;  // theorem precondition unmet: mixing may match
    return rep;
  }

  rep.pass = true;
  for (std::size_t s = 0; s < bds_runs.size(); ++s) {
    const double bds_val = per_token_loss(instance.spec, bds_runs[s].params, d.val);
    const double bds_eval = per_token_loss(instance.spec, bds_runs[s].params, d.eval);
    for (const auto& [rho, runs] : mixing_runs) {
      ImprovementReport::Entry e;
      e.seed = bds_runs[s].seed;
      e.rho_mix = rho;
      e.bds_val = bds_val;
      e.bds_eval = bds_eval;
      e.mix_val = per_token_loss(instance.spec, runs[s].params, d.val);
      e.mix_eval = per_token_loss(instance.spec, runs[s].params, d.eval);
      e.val_ok = e.bds_val < e.mix_val;
      e.eval_ok = e.bds_eval < e.mix_eval;
      rep.pass = rep.pass && e.val_ok && e.eval_ok;
      rep.entries.push_back(e);
    }
  }
  return rep;
}

ExpectedUpdateReport verify_expected_update(const BackboneSpec& spec, const TrainState& state,
                                            const Datasets& data, const TrainConfig& cfg,
                                            double gamma) {
  const int n = static_cast<int>(data.sft.size());
  if (n == 0 || data.val.empty()) throw_invalid("verify_expected_update: empty datasets");
  if (n > 200)
    throw Error(ErrorCode::ResourceLimit, "verify_expected_update: N too large to enumerate");

  const std::vector<double> val_grad = full_batch_val_grad(spec, state.params, data.val);

  std::vector<double> enumeration(n, 0.0);
  std::vector<double> coeffs(n, 0.0);
  for (int m = 0; m < n; ++m) {
    const TrainState next =
        pbgd_step_with_val_grad(spec, state, val_grad, data.sft[m], m, gamma, cfg);
    for (int i = 0; i < n; ++i) enumeration[i] += next.weights.logits[i];
    coeffs[m] = sft_loss(forward(spec, next.params, data.sft[m]), data.sft[m].y);
  }
  for (double& v : enumeration) v /= n;

  const std::vector<double>& sigma = state.weights.weights;
  ExpectedUpdateReport rep;
  for (int i = 0; i < n; ++i) {
    double gap = 0.0;
    for (int m = 0; m < n; ++m) gap += sigma[m] * (coeffs[m] - coeffs[i]);
    const double closed =
        state.weights.logits[i] + cfg.alpha * gamma * sigma[i] / n * gap;
    rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(closed - enumeration[i]));
  }
  rep.pass = rep.max_abs_diff < rep.tolerance;
  return rep;
}

InstanceParams canonical_instance_params() {
  InstanceParams p;
  p.vocab = 8;
  p.question_len = 2;
  p.response_len = 3;
  p.n_sft = 40;
  p.n_val = 10;
  p.useless_fraction = 0.3;
  p.kind = BackboneKind::Tabular;
  return p;
}

TrainConfig canonical_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.alpha = 0.3;
  cfg.beta = 3.0;
  cfg.rho0 = 0.1;
  cfg.drho = 0.004;
  cfg.epochs = 200;
  cfg.tau = 1.0;
  cfg.seed = seed;
  return cfg;
}

namespace {

ObjectiveVector bi_quadratic_toy() {
  ObjectiveVector objs;
  objs.push_back({[](std::span<const double> t) { return t[0] * t[0]; },
                  [](std::span<const double> t) { return std::vector<double>{2.0 * t[0]}; }});
  objs.push_back(
      {[](std::span<const double> t) { return (t[0] - 1.0) * (t[0] - 1.0); },
       [](std::span<const double> t) { return std::vector<double>{2.0 * (t[0] - 1.0)}; }});
  return objs;
}

}  // namespace

std::vector<CheckResult> run_theorem_suite(const InstanceParams& instance_params,
                                           const TrainConfig& base_cfg,
                                           std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw_invalid("run_theorem_suite: no seeds");
  std::vector<CheckResult> checks;

  // Theorem 1, Pareto side: scalarization union vs brute-force front on the
  // bi-quadratic toy, grid [0,1] at resolution 0.01.
  {
    ObjectiveVector objs = bi_quadratic_toy();
    const double lo[] = {0.0}, hi[] = {1.0}, res[] = {0.01};
    GridOracle grid = GridOracle::build(lo, hi, res);
    const auto front = brute_pareto_front(objs, grid);
    const auto united = scalarization_union(objs, grid, simplex_weight_samples(2, 100));
    std::set<std::int64_t> front_set(front.begin(), front.end());
    int outside = 0, covered = 0;
    for (auto p : united) {
      if (front_set.count(p)) ++covered;
      else ++outside;
    }
    const double coverage =
        front.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(front.size());
    checks.push_back({"theorem1_scalarization_subset", outside == 0,
                      static_cast<double>(outside), 0.0,
                      "scalarization argmin points outside the weak Pareto front"});
    checks.push_back({"theorem1_scalarization_coverage", coverage >= 0.95, coverage, 0.95,
                      "fraction of the grid front reached by sampled weights"});
  }

  Rng inst_rng(mix_seed(instance_params.seed));
  const SyntheticInstance instance = gen_synthetic_instance(instance_params, inst_rng);
  const Datasets& data = instance.data;
  const double eps_w = base_cfg.eps_w_for(static_cast<int>(data.sft.size()));

  std::vector<RunArtifact> bds_runs;
  std::map<double, std::vector<RunArtifact>> mixing_runs;
  bool selection_ok = true;
  double worst_useless_w = 0.0;
  bool agreement_ok = true;
  double worst_rel_diff = 0.0;

  for (std::uint64_t seed : seeds) {
    TrainConfig cfg = base_cfg;
    cfg.seed = seed;

    Rng rng_bds(mix_seed(seed));
    TrainResult bds = train_offline(cfg, data, instance.spec, OfflineMode::Bds, rng_bds);
    bds_runs.push_back({seed, bds.params});

    const SelectionReport sel = verify_selection(bds.weights, instance, eps_w);
    selection_ok = selection_ok && sel.pass;
    worst_useless_w = std::max(worst_useless_w, sel.max_useless_weight);

    for (double rho : {0.5, 1.0}) {
      TrainConfig mix_cfg = cfg;
      mix_cfg.rho_mix = rho;
      Rng rng_mix(mix_seed(seed));
      TrainResult mix = train_offline(mix_cfg, data, instance.spec, OfflineMode::Mixing, rng_mix);
      mixing_runs[rho].push_back({seed, mix.params});
    }

    // Theorem 1, BDS vs stochastic BMO agreement under the same seed. Both
    // must remove the useless set (the theory makes no claim about useful
    // samples keeping positive weight) and reach matching validation losses.
    Rng rng_bmo(mix_seed(seed));
    TrainResult bmo = train_bmo(cfg, data, instance.spec, rng_bmo);
    const double a = per_token_loss(instance.spec, bds.params, data.val);
    const double b = per_token_loss(instance.spec, bmo.params, data.val);
    const double rel = std::abs(a - b) / std::max({a, b, 1e-300});
    worst_rel_diff = std::max(worst_rel_diff, rel);
    const bool close = rel <= 0.05 || (a < cfg.eps_sep && b < cfg.eps_sep);
    const SelectionReport bmo_sel = verify_selection(bmo.weights, instance, eps_w);
    agreement_ok = agreement_ok && close && sel.pass && bmo_sel.pass;
  }

  checks.push_back({"theorem1_bds_bmo_agreement", agreement_ok, worst_rel_diff, 0.05,
                    "final validation loss gap between BDS and stochastic BMO"});
  checks.push_back({"theorem2_selection", selection_ok, worst_useless_w, eps_w,
                    "largest trained weight on a ground-truth-useless sample"});

  const ImprovementReport imp = verify_improvement(bds_runs, mixing_runs, instance);
  bool val_ok = imp.applicable, eval_ok = imp.applicable;
  double min_val_margin = std::numeric_limits<double>::infinity();
  double min_eval_margin = std::numeric_limits<double>::infinity();
  for (const auto& e : imp.entries) {
    val_ok = val_ok && e.val_ok;
    eval_ok = eval_ok && e.eval_ok;
    if (e.mix_val > 0.0) min_val_margin = std::min(min_val_margin, 1.0 - e.bds_val / e.mix_val);
    if (e.mix_eval > 0.0)
      min_eval_margin = std::min(min_eval_margin, 1.0 - e.bds_eval / e.mix_eval);
  }
  checks.push_back({"theorem3_improvement_validation", val_ok,
                    std::isfinite(min_val_margin) ? min_val_margin : 0.0, 0.0,
                    "smallest relative validation-loss margin of BDS over mixing"});
  checks.push_back({"theorem4_improvement_eval", eval_ok,
                    std::isfinite(min_eval_margin) ? min_eval_margin : 0.0, 0.0,
                    "smallest relative eval-loss margin of BDS over mixing"});

  // Lemma-level expected-update identity on a small enumerable instance.
  {
    InstanceParams small = instance_params;
    small.n_sft = 8;
    small.n_val = 4;
    small.useless_fraction = 0.25;
    Rng rng(mix_seed(instance_params.seed ^ 0x5EEDULL));
    const SyntheticInstance inst8 = gen_synthetic_instance(small, rng);
    TrainConfig cfg = base_cfg;
    const double gamma = penalty_gamma(0, cfg);
    double worst = 0.0;
    bool ok = true;
    Rng state_rng(mix_seed(1234567));
    for (int trial = 0; trial < 20; ++trial) {
      TrainState st;
      st.params = init_params(inst8.spec, 0);
      for (double& v : st.params.values) v = 0.5 * state_rng.next_gaussian();
      std::vector<double> omega(small.n_sft);
      for (double& v : omega) v = 0.5 * state_rng.next_gaussian();
      st.weights = WeightState(omega);
      const ExpectedUpdateReport rep =
          verify_expected_update(inst8.spec, st, inst8.data, cfg, gamma);
      worst = std::max(worst, rep.max_abs_diff);
      ok = ok && rep.pass;
    }
    checks.push_back({"lemma_expected_update", ok, worst, 1e-8,
                      "max |closed form - enumerated| expected weight update"});
  }

  return checks;
}

}  // namespace bisel
