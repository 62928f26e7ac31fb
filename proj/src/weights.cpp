#include "weights.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace bisel {

std::vector<double> softmax_weights(std::span<const double> omega) {
  if (omega.empty()) throw_invalid("softmax_weights: empty logit vector");
  for (double v : omega) {
    if (!std::isfinite(v)) throw_invalid("softmax_weights: non-finite logit");
  }
  const double m = *std::max_element(omega.begin(), omega.end());
  std::vector<double> out(omega.size());
  double s = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    out[i] = std::exp(omega[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

std::vector<double> softmax_weight_grad(std::span<const double> omega, int i) {
  if (i < 0 || i >= static_cast<int>(omega.size()))
    throw_invalid("softmax_weight_grad: index " + std::to_string(i) + " out of range");
  const std::vector<double> s = softmax_weights(omega);
  std::vector<double> g(omega.size());
  for (std::size_t j = 0; j < omega.size(); ++j) {
    g[j] = s[i] * ((static_cast<int>(j) == i ? 1.0 : 0.0) - s[j]);
  }
  return g;
}

WeightState pbgd_omega_update(const WeightState& w, int selected, double coeff, double alpha,
                              double gamma) {
  if (coeff < 0.0) throw_invalid("pbgd_omega_update: coefficient must be nonnegative");
  if (selected < 0 || selected >= w.size())
    throw_invalid("pbgd_omega_update: index out of range");
  const std::vector<double> g = softmax_weight_grad(w.logits, selected);
  WeightState out = w;
  const double scale = alpha * gamma * coeff;
  for (int j = 0; j < w.size(); ++j) out.logits[j] -= scale * g[j];
  out.recache();
  return out;
}

std::vector<double> lse_implicit_weights(std::span<const double> losses, double tau) {
  if (!(tau > 0.0)) throw_invalid("lse_implicit_weights: tau must be positive");
  std::vector<double> neg(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) neg[i] = -tau * losses[i];
  return softmax_weights(neg);
}

double bmo_omega_track(double omega_i, double loss_i, double alpha, double tau) {
  return omega_i - alpha * (omega_i + tau * loss_i);
}

}  // namespace bisel
