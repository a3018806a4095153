#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "tfnet/tensor.hpp"

// Compute kernels shared by the layers. Every kernel here is OpenMP-parallel
// over an axis whose outputs are owned by exactly one thread, and each output
// accumulates in a fixed order, so results are bit-identical for any thread
// count. Naive serial versions live in tfnet/reference.hpp.
namespace tfnet::kernels {

using Triple = std::array<std::size_t, 3>;

struct ConvGeometry {
  Triple kernel{1, 1, 1};  // depth, height, width
  Triple stride{1, 1, 1};
  Triple pad{0, 0, 0};
  std::size_t groups = 1;
};

struct PoolGeometry {
  Triple window{1, 1, 1};
  Triple stride{1, 1, 1};
  Triple pad{0, 0, 0};
};

// floor((n + 2p - k) / s) + 1; throws ShapeError when k > n + 2p.
std::size_t output_extent(std::size_t n, std::size_t k, std::size_t s, std::size_t p);

// Output shape C_out x D' x H' x W' for an input C_in x D x H x W.
Shape conv_output_shape(const Shape& input, const Shape& weights, const ConvGeometry& g);
Shape pool_output_shape(const Shape& input, const PoolGeometry& g);

// input C_in x D x H x W, weights C_out x (C_in/groups) x kd x kh x kw,
// bias C_out or empty. Cross-correlation, no kernel flip.
Tensor conv_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    const ConvGeometry& g);
Tensor conv_backward_input(const Tensor& grad_out, const Tensor& weights, const Shape& input_shape,
                           const ConvGeometry& g);
// Accumulates into grad_weights (same shape as weights) and grad_bias (C_out,
// or empty to skip).
void conv_backward_params(const Tensor& grad_out, const Tensor& input, const ConvGeometry& g,
                          Tensor& grad_weights, Tensor& grad_bias);

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// Max pooling on C x D x H x W. Padding cells never win. Ties resolve to the
// first element in window scan order.
PoolResult maxpool_forward(const Tensor& input, const PoolGeometry& g);
Tensor maxpool_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                        const Shape& input_shape);

void set_num_threads(int n);
int max_threads();

}  // namespace tfnet::kernels
