#ifndef BISEL_VERIFY_HPP
#define BISEL_VERIFY_HPP

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bmo.hpp"
#include "instance.hpp"
#include "offline.hpp"

namespace bisel {

// Finite parameter grid over a low-dimensional box, with cached objective values.
struct GridOracle {
  std::vector<double> lo, hi, res;           // per dimension
  std::vector<std::vector<double>> points;   // enumerated grid points
  std::vector<std::vector<double>> losses;   // losses[p][m], filled by cache()

  static GridOracle build(std::span<const double> lo, std::span<const double> hi,
                          std::span<const double> res);
  void cache(const ObjectiveVector& objectives);
  std::int64_t point_count() const { return static_cast<std::int64_t>(points.size()); }
};

// Grid points not strictly dominated in every coordinate by another grid point.
std::vector<std::int64_t> brute_pareto_front(const ObjectiveVector& objectives, GridOracle& grid);

// Union over sampled simplex weights of the grid argmin sets of the weighted sum.
std::vector<std::int64_t> scalarization_union(const ObjectiveVector& objectives, GridOracle& grid,
                                              std::span<const std::vector<double>> weight_samples);

// Simplex vertices plus a uniform interior lattice with the given subdivision.
std::vector<std::vector<double>> simplex_weight_samples(int m, int subdivisions);

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

// Theorem 2: trained weights must remove every ground-truth-useless sample.
struct SelectionReport {
  bool applicable = true;  // false when the instance has no useless samples
  bool pass = false;
  double eps_w = 0.0;
  double max_useless_weight = 0.0;
  double mean_useless = 0.0;
  double mean_useful = 0.0;
  double useful_to_useless_ratio = 0.0;
};

SelectionReport verify_selection(const WeightState& weights, const SyntheticInstance& instance,
                                 double eps_w);

// Final parameters of one training run.
struct RunArtifact {
  std::uint64_t seed = 0;
  Params params;
};

// Theorems 3/4: per-seed strict ordering of BDS vs direct mixing on the
// validation split and on the held-out evaluation split.
struct ImprovementReport {
  struct Entry {
    std::uint64_t seed = 0;
    double rho_mix = 0.0;
    double bds_val = 0.0, mix_val = 0.0;
    double bds_eval = 0.0, mix_eval = 0.0;
    bool val_ok = false, eval_ok = false;
  };
  bool applicable = true;
  bool pass = false;
  std::vector<Entry> entries;
};

ImprovementReport verify_improvement(std::span<const RunArtifact> bds_runs,
                                     const std::map<double, std::vector<RunArtifact>>& mixing_runs,
                                     const SyntheticInstance& instance);

// Lemma-style expected weight update: exact enumeration over the sampled SFT
// index (with the validation gradient fixed to its full batch) against the
// closed form. Exact up to roundoff.
struct ExpectedUpdateReport {
  bool pass = false;
  double max_abs_diff = 0.0;
  double tolerance = 1e-8;
};

ExpectedUpdateReport verify_expected_update(const BackboneSpec& spec, const TrainState& state,
                                            const Datasets& data, const TrainConfig& cfg,
                                            double gamma);

// Canonical verification setup: the V=8, L_x=2, D=3, n_sft=40, 30%-useless
// tabular instance and desk-scale training constants tuned for it.
InstanceParams canonical_instance_params();
TrainConfig canonical_train_config(std::uint64_t seed);

// Full theorem suite on one instance family across seeds; one CheckResult per
// theorem-level claim.
std::vector<CheckResult> run_theorem_suite(const InstanceParams& instance_params,
                                           const TrainConfig& base_cfg,
                                           std::span<const std::uint64_t> seeds);

}  // namespace bisel

#endif
