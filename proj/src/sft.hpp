#ifndef BISEL_SFT_HPP
#define BISEL_SFT_HPP

#include <span>

#include "matrix.hpp"

namespace bisel {

// Token-level cross-entropy substrate. A logit matrix z is V x D with column d
// holding the unnormalized next-token scores for response position d; all
// probability arithmetic runs in log space with per-column max subtraction.

// Column-wise stabilized softmax. Errors on non-finite input.
Matrix softmax_columns(const Matrix& z);

// Negative log-likelihood of response y under column-wise softmax of z,
// computed as sum_d [logsumexp(z_col_d) - z(y_d, d)]. Always >= 0.
double sft_loss(const Matrix& z, std::span<const int> y);

// Gradient of sft_loss in z: column d is softmax(z_col_d) - onehot(y_d).
Matrix sft_loss_grad_z(const Matrix& z, std::span<const int> y);

// Sequence log-probability; exactly -sft_loss(z, y).
double seq_logprob(const Matrix& z, std::span<const int> y);

// u' H u for the Hessian of sft_loss in z, using its block-diagonal structure:
// sum_d [ sum_v s_v u_v^2 - (sum_v s_v u_v)^2 ] with s = softmax(z_col_d).
// Nonnegative for every (z, u) up to roundoff.
double hessian_quadratic_form(const Matrix& z, std::span<const int> y, const Matrix& u);

namespace detail {
// log(sum_v exp(col_v)) with max subtraction.
double log_sum_exp_col(std::span<const double> col);
// Stabilized softmax of one column written into out.
void softmax_col(std::span<const double> col, std::span<double> out);
}  // namespace detail

}  // namespace bisel

#endif
