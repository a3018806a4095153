#include "tfnet/reference.hpp"

#include <limits>

#include "tfnet/error.hpp"

namespace tfnet::reference {

using kernels::ConvGeometry;
using kernels::PoolGeometry;

namespace {

using Index = std::ptrdiff_t;

// Input coordinate touched by output o and kernel tap k, or -1 in padding.
Index source(std::size_t o, std::size_t k, std::size_t s, std::size_t p, std::size_t n) {
  const Index i = static_cast<Index>(o * s + k) - static_cast<Index>(p);
  return (i < 0 || i >= static_cast<Index>(n)) ? -1 : i;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul dimension mismatch: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
      out[i * m + j] = s;
    }
  return out;
}

Tensor conv_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    const ConvGeometry& g) {
  const Shape os = kernels::conv_output_shape(input.shape(), weights.shape(), g);
  Tensor out(os);
  const std::size_t cin_g = input.dim(0) / g.groups, cout_g = os[0] / g.groups;
  for (std::size_t oc = 0; oc < os[0]; ++oc)
    for (std::size_t od = 0; od < os[1]; ++od)
      for (std::size_t oh = 0; oh < os[2]; ++oh)
        for (std::size_t ow = 0; ow < os[3]; ++ow) {
          double s = 0.0;
          for (std::size_t icl = 0; icl < cin_g; ++icl) {
            const std::size_t ic = (oc / cout_g) * cin_g + icl;
            for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
              for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
                for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
                  const Index id = source(od, kd, g.stride[0], g.pad[0], input.dim(1));
                  const Index ih = source(oh, kh, g.stride[1], g.pad[1], input.dim(2));
                  const Index iw = source(ow, kw, g.stride[2], g.pad[2], input.dim(3));
                  if (id < 0 || ih < 0 || iw < 0) continue;
                  s += weights.at({oc, icl, kd, kh, kw}) *
                       input.at({ic, std::size_t(id), std::size_t(ih), std::size_t(iw)});
                }
          }
          out.at({oc, od, oh, ow}) = s + (bias.empty() ? 0.0 : bias[oc]);
        }
  return out;
}

Tensor conv_backward_input(const Tensor& grad_out, const Tensor& weights, const Shape& input_shape,
                           const ConvGeometry& g) {
  const Shape os = kernels::conv_output_shape(input_shape, weights.shape(), g);
  if (grad_out.shape() != os) throw ShapeError("conv backward: gradient shape mismatch");
  Tensor grad_in(input_shape);
  const std::size_t cin_g = input_shape[0] / g.groups, cout_g = os[0] / g.groups;
  for (std::size_t oc = 0; oc < os[0]; ++oc)
    for (std::size_t od = 0; od < os[1]; ++od)
      for (std::size_t oh = 0; oh < os[2]; ++oh)
        for (std::size_t ow = 0; ow < os[3]; ++ow) {
          const double go = grad_out.at({oc, od, oh, ow});
          for (std::size_t icl = 0; icl < cin_g; ++icl) {
            const std::size_t ic = (oc / cout_g) * cin_g + icl;
            for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
              for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
                for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
                  const Index id = source(od, kd, g.stride[0], g.pad[0], input_shape[1]);
                  const Index ih = source(oh, kh, g.stride[1], g.pad[1], input_shape[2]);
                  const Index iw = source(ow, kw, g.stride[2], g.pad[2], input_shape[3]);
                  if (id < 0 || ih < 0 || iw < 0) continue;
                  grad_in.at({ic, std::size_t(id), std::size_t(ih), std::size_t(iw)}) +=
                      weights.at({oc, icl, kd, kh, kw}) * go;
                }
          }
        }
  return grad_in;
}

void conv_backward_params(const Tensor& grad_out, const Tensor& input, const ConvGeometry& g,
                          Tensor& grad_weights, Tensor& grad_bias) {
  const Shape os = kernels::conv_output_shape(input.shape(), grad_weights.shape(), g);
  if (grad_out.shape() != os) throw ShapeError("conv backward: gradient shape mismatch");
  const std::size_t cin_g = input.dim(0) / g.groups, cout_g = os[0] / g.groups;
  for (std::size_t oc = 0; oc < os[0]; ++oc)
    for (std::size_t od = 0; od < os[1]; ++od)
      for (std::size_t oh = 0; oh < os[2]; ++oh)
        for (std::size_t ow = 0; ow < os[3]; ++ow) {
          const double go = grad_out.at({oc, od, oh, ow});
          if (!grad_bias.empty()) grad_bias[oc] += go;
          for (std::size_t icl = 0; icl < cin_g; ++icl) {
            const std::size_t ic = (oc / cout_g) * cin_g + icl;
            for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
              for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
                for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
                  const Index id = source(od, kd, g.stride[0], g.pad[0], input.dim(1));
                  const Index ih = source(oh, kh, g.stride[1], g.pad[1], input.dim(2));
                  const Index iw = source(ow, kw, g.stride[2], g.pad[2], input.dim(3));
                  if (id < 0 || ih < 0 || iw < 0) continue;
                  grad_weights.at({oc, icl, kd, kh, kw}) +=
                      go * input.at({ic, std::size_t(id), std::size_t(ih), std::size_t(iw)});
                }
          }
        }
}

kernels::PoolResult maxpool_forward(const Tensor& input, const PoolGeometry& g) {
  const Shape os = kernels::pool_output_shape(input.shape(), g);
  kernels::PoolResult r{Tensor(os), std::vector<std::size_t>(shape_volume(os))};
  std::size_t o = 0;
  for (std::size_t c = 0; c < os[0]; ++c)
    for (std::size_t od = 0; od < os[1]; ++od)
      for (std::size_t oh = 0; oh < os[2]; ++oh)
        for (std::size_t ow = 0; ow < os[3]; ++ow, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = 0;
          bool found = false;
          for (std::size_t kd = 0; kd < g.window[0]; ++kd)
            for (std::size_t kh = 0; kh < g.window[1]; ++kh)
              for (std::size_t kw = 0; kw < g.window[2]; ++kw) {
                const Index id = source(od, kd, g.stride[0], g.pad[0], input.dim(1));
                const Index ih = source(oh, kh, g.stride[1], g.pad[1], input.dim(2));
                const Index iw = source(ow, kw, g.stride[2], g.pad[2], input.dim(3));
                if (id < 0 || ih < 0 || iw < 0) continue;
                const std::size_t idx =
                    ((c * input.dim(1) + id) * input.dim(2) + ih) * input.dim(3) + iw;
                if (!found || input[idx] > best) {
                  best = input[idx];
                  arg = idx;
                  found = true;
                }
              }
          r.output[o] = best;
          r.argmax[o] = arg;
        }
  return r;
}

}  // namespace tfnet::reference
