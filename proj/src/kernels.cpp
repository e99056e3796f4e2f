// SPDX-License-Identifier: Apache-2.0
#include "smie/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <stdexcept>

namespace smie::kernels {
namespace {

void check_forward_shapes(const Matrix& x, const Matrix& weight,
                          std::span<const double> bias) {
  if (x.cols != weight.cols || bias.size() != weight.rows) {
    throw std::invalid_argument("linear_forward: shape mismatch");
  }
}

void check_param_shapes(const Matrix& x, const Matrix& upstream,
                        const Matrix& weight_grad,
                        std::span<double> bias_grad) {
  if (x.rows != upstream.rows || weight_grad.rows != upstream.cols ||
      weight_grad.cols != x.cols || bias_grad.size() != upstream.cols) {
    throw std::invalid_argument("linear_backward_params: shape mismatch");
  }
}

void check_input_shapes(const Matrix& upstream, const Matrix& weight) {
  if (upstream.cols != weight.rows) {
    throw std::invalid_argument("linear_backward_input: shape mismatch");
  }
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) t.data[c * m.rows + r] = m.data[r * m.cols + c];
  }
  return t;
}

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;

/// c (m x n) = a (m x k) * b (k x n), row-major. Each c element is summed
/// over k in ascending order by a single thread.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  const auto row_blocks = static_cast<std::ptrdiff_t>((m + kTileRows - 1) / kTileRows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < row_blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * kTileRows;
    const std::size_t mr = std::min(kTileRows, m - r0);
    for (std::size_t c0 = 0; c0 < n; c0 += kTileCols) {
      const std::size_t nr = std::min(kTileCols, n - c0);
      double acc[kTileRows][kTileCols] = {};
      if (mr == kTileRows && nr == kTileCols) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = b + p * n + c0;
          for (std::size_t r = 0; r < kTileRows; ++r) {
            const double av = a[(r0 + r) * k + p];
#pragma omp simd
            for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] += av * brow[j];
          }
        }
      } else {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = b + p * n + c0;
          for (std::size_t r = 0; r < mr; ++r) {
            const double av = a[(r0 + r) * k + p];
            for (std::size_t j = 0; j < nr; ++j) acc[r][j] += av * brow[j];
          }
        }
      }
      for (std::size_t r = 0; r < mr; ++r) {
        std::copy_n(acc[r], nr, c + (r0 + r) * n + c0);
      }
    }
  }
}

}  // namespace

void linear_forward(const Matrix& x, const Matrix& weight,
                    std::span<const double> bias, Matrix& y) {
  check_forward_shapes(x, weight, bias);
  const std::size_t n = x.rows, out = weight.rows;
  y = Matrix(n, out);
  const Matrix wt = transpose(weight);
  gemm(x.data.data(), wt.data.data(), y.data.data(), n, x.cols, out);
  for (std::size_t r = 0; r < n; ++r) {
    double* row = y.data.data() + r * out;
    for (std::size_t o = 0; o < out; ++o) row[o] += bias[o];
  }
}

void linear_backward_params(const Matrix& x, const Matrix& upstream,
                            Matrix& weight_grad, std::span<double> bias_grad) {
  check_param_shapes(x, upstream, weight_grad, bias_grad);
  const Matrix ut = transpose(upstream);
  gemm(ut.data.data(), x.data.data(), weight_grad.data.data(), ut.rows, x.rows, x.cols);
  for (std::size_t o = 0; o < ut.rows; ++o) {
    double bg = 0.0;
    for (std::size_t r = 0; r < ut.cols; ++r) bg += ut.data[o * ut.cols + r];
    bias_grad[o] = bg;
  }
}

void linear_backward_input(const Matrix& upstream, const Matrix& weight,
                           Matrix& input_grad) {
  check_input_shapes(upstream, weight);
  input_grad = Matrix(upstream.rows, weight.cols);
  gemm(upstream.data.data(), weight.data.data(), input_grad.data.data(), upstream.rows,
       upstream.cols, weight.cols);
}

void relu(const Matrix& z, Matrix& out) {
  out = Matrix(z.rows, z.cols);
  const std::size_t n = z.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out.data[i] = z.data[i] > 0.0 ? z.data[i] : 0.0;
}

void relu_backward(const Matrix& z, Matrix& grad) {
  assert(z.size() == grad.size());
  const std::size_t n = z.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    if (!(z.data[i] > 0.0)) grad.data[i] = 0.0;
  }
}

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }

int num_threads() { return omp_get_max_threads(); }

namespace reference {

void linear_forward(const Matrix& x, const Matrix& weight,
                    std::span<const double> bias, Matrix& y) {
  check_forward_shapes(x, weight, bias);
  y = Matrix(x.rows, weight.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t o = 0; o < weight.rows; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.cols; ++i) acc += x(r, i) * weight(o, i);
      y(r, o) = acc + bias[o];
    }
  }
}

void linear_backward_params(const Matrix& x, const Matrix& upstream,
                            Matrix& weight_grad, std::span<double> bias_grad) {
  check_param_shapes(x, upstream, weight_grad, bias_grad);
  for (std::size_t o = 0; o < upstream.cols; ++o) {
    double bg = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) bg += upstream(r, o);
    bias_grad[o] = bg;
    for (std::size_t i = 0; i < x.cols; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < x.rows; ++r) acc += upstream(r, o) * x(r, i);
      weight_grad(o, i) = acc;
    }
  }
}

void linear_backward_input(const Matrix& upstream, const Matrix& weight,
                           Matrix& input_grad) {
  check_input_shapes(upstream, weight);
  input_grad = Matrix(upstream.rows, weight.cols);
  for (std::size_t r = 0; r < upstream.rows; ++r) {
    for (std::size_t i = 0; i < weight.cols; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < weight.rows; ++o) acc += upstream(r, o) * weight(o, i);
      input_grad(r, i) = acc;
    }
  }
}

}  // namespace reference
}  // namespace smie::kernels
