#pragma once

#include "tfnet/kernels.hpp"

// Straightforward serial implementations of the parallel kernels. They follow
// the definitions term by term and exist to check and benchmark the fast paths.
namespace tfnet::reference {

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor conv_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    const kernels::ConvGeometry& g);
Tensor conv_backward_input(const Tensor& grad_out, const Tensor& weights, const Shape& input_shape,
                           const kernels::ConvGeometry& g);
void conv_backward_params(const Tensor& grad_out, const Tensor& input,
                          const kernels::ConvGeometry& g, Tensor& grad_weights, Tensor& grad_bias);

kernels::PoolResult maxpool_forward(const Tensor& input, const kernels::PoolGeometry& g);

}  // namespace tfnet::reference
