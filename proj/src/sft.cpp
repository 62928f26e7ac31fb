#include "sft.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace bisel {

namespace detail {

double log_sum_exp_col(std::span<const double> col) {
  const double m = *std::max_element(col.begin(), col.end());
  double s = 0.0;
  for (double v : col) s += std::exp(v - m);
  return m + std::log(s);
}

void softmax_col(std::span<const double> col, std::span<double> out) {
  const double m = *std::max_element(col.begin(), col.end());
  double s = 0.0;
  for (std::size_t v = 0; v < col.size(); ++v) {
    out[v] = std::exp(col[v] - m);
    s += out[v];
  }
  for (std::size_t v = 0; v < col.size(); ++v) out[v] /= s;
}

}  // namespace detail

namespace {

void check_pair(const Matrix& z, std::span<const int> y) {
  if (z.rows < 1 || z.cols < 1) throw_invalid("logit matrix must be nonempty");
  if (static_cast<int>(y.size()) != z.cols)
    throw_invalid("response length " + std::to_string(y.size()) + " does not match logit columns " +
                  std::to_string(z.cols));
  for (int t : y) {
    if (t < 0 || t >= z.rows)
      throw_invalid("token id " + std::to_string(t) + " outside vocabulary of size " +
                    std::to_string(z.rows));
  }
}

}  // namespace

Matrix softmax_columns(const Matrix& z) {
  if (z.rows < 1 || z.cols < 1) throw_invalid("softmax_columns: empty matrix");
  if (!z.all_finite()) throw_invalid("softmax_columns: non-finite logit entry");
  Matrix p(z.rows, z.cols);
  for (int d = 0; d < z.cols; ++d) detail::softmax_col(z.col(d), p.col(d));
  return p;
}

double sft_loss(const Matrix& z, std::span<const int> y) {
  check_pair(z, y);
  double loss = 0.0;
  for (int d = 0; d < z.cols; ++d) {
    loss += detail::log_sum_exp_col(z.col(d)) - z(y[d], d);
  }
  return loss;
}

Matrix sft_loss_grad_z(const Matrix& z, std::span<const int> y) {
  check_pair(z, y);
  Matrix g(z.rows, z.cols);
  for (int d = 0; d < z.cols; ++d) {
    detail::softmax_col(z.col(d), g.col(d));
    g(y[d], d) -= 1.0;
  }
  return g;
}

double seq_logprob(const Matrix& z, std::span<const int> y) { return -sft_loss(z, y); }

double hessian_quadratic_form(const Matrix& z, std::span<const int> y, const Matrix& u) {
  check_pair(z, y);
  if (!u.same_shape(z)) throw_invalid("hessian_quadratic_form: u shape does not match z");
  if (!u.all_finite()) throw_invalid("hessian_quadratic_form: non-finite direction entry");
  std::vector<double> s(z.rows);
  double total = 0.0;
  for (int d = 0; d < z.cols; ++d) {
    detail::softmax_col(z.col(d), s);
    const auto uc = u.col(d);
    double quad = 0.0, lin = 0.0;
    for (int v = 0; v < z.rows; ++v) {
      quad += s[v] * uc[v] * uc[v];
      lin += s[v] * uc[v];
    }
    total += quad - lin * lin;
  }
  return total;
}

}  // namespace bisel
