#ifndef BISEL_WEIGHTS_HPP
#define BISEL_WEIGHTS_HPP

#include <span>
#include <vector>

namespace bisel {

// Stabilized softmax over weight logits; sums to 1, all entries positive.
std::vector<double> softmax_weights(std::span<const double> omega);

// Gradient of the i-th softmax weight: component j is s_i (delta_ij - s_j).
// Component i is positive, all others negative, components sum to zero.
std::vector<double> softmax_weight_grad(std::span<const double> omega, int i);

// Data-weight logits with cached simplex weights.
struct WeightState {
  std::vector<double> logits;
  std::vector<double> weights;  // softmax(logits), kept in sync

  WeightState() = default;
  explicit WeightState(int n) : logits(n, 0.0) { recache(); }
  explicit WeightState(std::vector<double> w) : logits(std::move(w)) { recache(); }

  int size() const { return static_cast<int>(logits.size()); }
  void recache() {
    weights = logits.empty() ? std::vector<double>{} : softmax_weights(logits);
  }
};

// One descent step on the selected index: omega' = omega - alpha*gamma*C*grad(sigma_i).
// For C > 0 the selected logit decreases and every other logit increases.
WeightState pbgd_omega_update(const WeightState& w, int selected, double coeff, double alpha,
                              double gamma);

// Implicit per-response/per-sample weights: softmax(-tau * losses). Strictly
// decreasing in each loss; equal losses give uniform weights.
std::vector<double> lse_implicit_weights(std::span<const double> losses, double tau);

// Stochastic tracker step toward the implicit logit -tau*loss:
// omega' = omega - alpha*(omega + tau*loss).
double bmo_omega_track(double omega_i, double loss_i, double alpha, double tau);

}  // namespace bisel

#endif
