#ifndef BISEL_MATRIX_HPP
#define BISEL_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace bisel {

// Small dense matrix, column-major. Logit/policy matrices are V x D with one
// vocabulary column per response position, so per-position work is contiguous.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(c) * rows + r]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(c) * rows + r]; }

  std::span<double> col(int c) {
    return {data.data() + static_cast<std::size_t>(c) * rows, static_cast<std::size_t>(rows)};
  }
  std::span<const double> col(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * rows, static_cast<std::size_t>(rows)};
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

}  // namespace bisel

#endif
