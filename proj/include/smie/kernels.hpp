// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "smie/tensor.hpp"

/// Dense-layer kernels used by the estimator and the frame encoder.
///
/// The functions in smie::kernels are OpenMP-parallel. Work is split so that
/// every output element is accumulated by exactly one thread in a fixed
/// order, which makes results independent of the thread count. The
/// smie::kernels::reference namespace holds plain serial loops that the tests
/// and the benchmark compare against.
namespace smie::kernels {

/// y = x * weight^T + bias, with weight stored out x in. y is resized.
void linear_forward(const Matrix& x, const Matrix& weight,
                    std::span<const double> bias, Matrix& y);

/// weight_grad = upstream^T * x, bias_grad = column sums of upstream.
void linear_backward_params(const Matrix& x, const Matrix& upstream,
                            Matrix& weight_grad, std::span<double> bias_grad);

/// input_grad = upstream * weight. input_grad is resized.
void linear_backward_input(const Matrix& upstream, const Matrix& weight,
                           Matrix& input_grad);

/// out = max(z, 0).
void relu(const Matrix& z, Matrix& out);

/// grad *= [z > 0]; the derivative at exactly zero is zero.
void relu_backward(const Matrix& z, Matrix& grad);

/// Caps the OpenMP worker count. Values below 1 are treated as 1.
void set_num_threads(int n);
int num_threads();

namespace reference {

void linear_forward(const Matrix& x, const Matrix& weight,
                    std::span<const double> bias, Matrix& y);
void linear_backward_params(const Matrix& x, const Matrix& upstream,
                            Matrix& weight_grad, std::span<double> bias_grad);
void linear_backward_input(const Matrix& upstream, const Matrix& weight,
                           Matrix& input_grad);

}  // namespace reference
}  // namespace smie::kernels
