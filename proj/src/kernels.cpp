#include "tfnet/kernels.hpp"

#include <limits>
#include <string>

#include <omp.h>

#include "tfnet/error.hpp"

namespace tfnet::kernels {

namespace {

using Index = std::ptrdiff_t;

// Half-open range of output positions o with 0 <= o*s + k - p < n.
struct Span {
  std::size_t lo, hi;
};

Span valid_outputs(std::size_t n, std::size_t out, std::size_t k, std::size_t s, std::size_t p) {
  std::size_t lo = 0;
  if (p > k) lo = (p - k + s - 1) / s;
  if (n + p < k + 1) return {0, 0};
  std::size_t hi = (n - 1 + p - k) / s + 1;
  if (hi > out) hi = out;
  if (lo > hi) lo = hi;
  return {lo, hi};
}

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(what) + " expects C x D x H x W, got " + shape_string(t.shape()));
  }
}

}  // namespace

std::size_t output_extent(std::size_t n, std::size_t k, std::size_t s, std::size_t p) {
  if (k == 0 || s == 0) throw ShapeError("kernel and stride must be positive");
  if (k > n + 2 * p) {
    throw ShapeError("kernel " + std::to_string(k) + " larger than padded input " +
                     std::to_string(n + 2 * p));
  }
  return (n + 2 * p - k) / s + 1;
}

Shape conv_output_shape(const Shape& input, const Shape& weights, const ConvGeometry& g) {
  if (input.size() != 4 || weights.size() != 5) {
    throw ShapeError("conv expects input C x D x H x W and weights of rank 5, got " +
                     shape_string(input) + " and " + shape_string(weights));
  }
  if (g.groups == 0 || input[0] % g.groups != 0 || weights[0] % g.groups != 0) {
    throw ShapeError("channels " + std::to_string(input[0]) + " -> " + std::to_string(weights[0]) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  if (weights[1] * g.groups != input[0]) {
    throw ShapeError("weights " + shape_string(weights) + " do not match input channels of " +
                     shape_string(input));
  }
  for (int a = 0; a < 3; ++a) {
    if (weights[2 + a] != g.kernel[a]) {
      throw ShapeError("weights " + shape_string(weights) + " disagree with kernel geometry");
    }
  }
  return {weights[0], output_extent(input[1], g.kernel[0], g.stride[0], g.pad[0]),
          output_extent(input[2], g.kernel[1], g.stride[1], g.pad[1]),
          output_extent(input[3], g.kernel[2], g.stride[2], g.pad[2])};
}

Shape pool_output_shape(const Shape& input, const PoolGeometry& g) {
  if (input.size() != 4) throw ShapeError("pool expects C x D x H x W, got " + shape_string(input));
  for (int a = 0; a < 3; ++a) {
    if (g.pad[a] >= g.window[a] && g.pad[a] > 0) throw ShapeError("pool padding must be below window");
  }
  return {input[0], output_extent(input[1], g.window[0], g.stride[0], g.pad[0]),
          output_extent(input[2], g.window[1], g.stride[1], g.pad[1]),
          output_extent(input[3], g.window[2], g.stride[2], g.pad[2])};
}

Tensor conv_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    const ConvGeometry& g) {
  require_rank4(input, "conv");
  const Shape os = conv_output_shape(input.shape(), weights.shape(), g);
  if (!bias.empty() && bias.size() != os[0]) throw ShapeError("bias length does not match C_out");
  Tensor out(os);

  const std::size_t D = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Co = os[0], Do = os[1], Ho = os[2], Wo = os[3];
  const std::size_t cin_g = input.dim(0) / g.groups, cout_g = Co / g.groups;
  const auto [KD, KH, KW] = g.kernel;
  const auto [SD, SH, SW] = g.stride;
  const auto [PD, PH, PW] = g.pad;
  const double* in = input.raw();
  const double* w = weights.raw();
  double* po = out.raw();
  const std::size_t plane_out = Do * Ho * Wo;

#pragma omp parallel for schedule(static)
  for (Index oc = 0; oc < static_cast<Index>(Co); ++oc) {
    const std::size_t grp = oc / cout_g;
    double* o = po + oc * plane_out;
    const double b = bias.empty() ? 0.0 : bias[oc];
    for (std::size_t i = 0; i < plane_out; ++i) o[i] = b;
    for (std::size_t icl = 0; icl < cin_g; ++icl) {
      const std::size_t ic = grp * cin_g + icl;
      const double* wk = w + (oc * cin_g + icl) * KD * KH * KW;
      for (std::size_t kd = 0; kd < KD; ++kd) {
        const Span rd = valid_outputs(D, Do, kd, SD, PD);
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const Span rh = valid_outputs(H, Ho, kh, SH, PH);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const Span rw = valid_outputs(W, Wo, kw, SW, PW);
            const double wv = wk[(kd * KH + kh) * KW + kw];
            for (std::size_t od = rd.lo; od < rd.hi; ++od) {
              const std::size_t id = od * SD + kd - PD;
              for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::size_t ih = oh * SH + kh - PH;
                const double* irow = in + ((ic * D + id) * H + ih) * W + (static_cast<Index>(kw) - static_cast<Index>(PW));
                double* orow = o + (od * Ho + oh) * Wo;
                if (SW == 1) {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) orow[ow] += wv * irow[ow];
                } else {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) orow[ow] += wv * irow[ow * SW];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv_backward_input(const Tensor& grad_out, const Tensor& weights, const Shape& input_shape,
                           const ConvGeometry& g) {
  const Shape os = conv_output_shape(input_shape, weights.shape(), g);
  if (grad_out.shape() != os) {
    throw ShapeError("conv backward: gradient " + shape_string(grad_out.shape()) +
                     " does not match forward output " + shape_string(os));
  }
  Tensor grad_in(input_shape);
  const std::size_t Ci = input_shape[0], D = input_shape[1], H = input_shape[2], W = input_shape[3];
  const std::size_t Co = os[0], Do = os[1], Ho = os[2], Wo = os[3];
  const std::size_t cin_g = Ci / g.groups, cout_g = Co / g.groups;
  const auto [KD, KH, KW] = g.kernel;
  const auto [SD, SH, SW] = g.stride;
  const auto [PD, PH, PW] = g.pad;
  const double* go = grad_out.raw();
  const double* w = weights.raw();
  double* gi = grad_in.raw();

#pragma omp parallel for schedule(static)
  for (Index ic = 0; ic < static_cast<Index>(Ci); ++ic) {
    const std::size_t grp = ic / cin_g, icl = ic % cin_g;
    double* gplane = gi + ic * D * H * W;
    for (std::size_t ocl = 0; ocl < cout_g; ++ocl) {
      const std::size_t oc = grp * cout_g + ocl;
      const double* wk = w + (oc * cin_g + icl) * KD * KH * KW;
      const double* gop = go + oc * Do * Ho * Wo;
      for (std::size_t kd = 0; kd < KD; ++kd) {
        const Span rd = valid_outputs(D, Do, kd, SD, PD);
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const Span rh = valid_outputs(H, Ho, kh, SH, PH);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const Span rw = valid_outputs(W, Wo, kw, SW, PW);
            const double wv = wk[(kd * KH + kh) * KW + kw];
            for (std::size_t od = rd.lo; od < rd.hi; ++od) {
              const std::size_t id = od * SD + kd - PD;
              for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::size_t ih = oh * SH + kh - PH;
                double* grow = gplane + (id * H + ih) * W + (static_cast<Index>(kw) - static_cast<Index>(PW));
                const double* orow = gop + (od * Ho + oh) * Wo;
                if (SW == 1) {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) grow[ow] += wv * orow[ow];
                } else {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) grow[ow * SW] += wv * orow[ow];
                }
              }
            }
          }
        }
      }
    }
  }
  return grad_in;
}

void conv_backward_params(const Tensor& grad_out, const Tensor& input, const ConvGeometry& g,
                          Tensor& grad_weights, Tensor& grad_bias) {
  require_rank4(input, "conv");
  const Shape os = conv_output_shape(input.shape(), grad_weights.shape(), g);
  if (grad_out.shape() != os) {
    throw ShapeError("conv backward: gradient " + shape_string(grad_out.shape()) +
                     " does not match forward output " + shape_string(os));
  }
  const std::size_t D = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Co = os[0], Do = os[1], Ho = os[2], Wo = os[3];
  const std::size_t cin_g = input.dim(0) / g.groups, cout_g = Co / g.groups;
  const auto [KD, KH, KW] = g.kernel;
  const auto [SD, SH, SW] = g.stride;
  const auto [PD, PH, PW] = g.pad;
  const double* go = grad_out.raw();
  const double* in = input.raw();
  double* gw = grad_weights.raw();
  const bool with_bias = !grad_bias.empty();

#pragma omp parallel for schedule(static)
  for (Index oc = 0; oc < static_cast<Index>(Co); ++oc) {
    const std::size_t grp = oc / cout_g;
    const double* gop = go + oc * Do * Ho * Wo;
    if (with_bias) {
      double s = 0.0;
      for (std::size_t i = 0; i < Do * Ho * Wo; ++i) s += gop[i];
      grad_bias[oc] += s;
    }
    for (std::size_t icl = 0; icl < cin_g; ++icl) {
      const std::size_t ic = grp * cin_g + icl;
      double* gwk = gw + (oc * cin_g + icl) * KD * KH * KW;
      for (std::size_t kd = 0; kd < KD; ++kd) {
        const Span rd = valid_outputs(D, Do, kd, SD, PD);
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const Span rh = valid_outputs(H, Ho, kh, SH, PH);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const Span rw = valid_outputs(W, Wo, kw, SW, PW);
            double s = 0.0;
            for (std::size_t od = rd.lo; od < rd.hi; ++od) {
              const std::size_t id = od * SD + kd - PD;
              for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::size_t ih = oh * SH + kh - PH;
                const double* irow = in + ((ic * D + id) * H + ih) * W + (static_cast<Index>(kw) - static_cast<Index>(PW));
                const double* orow = gop + (od * Ho + oh) * Wo;
                if (SW == 1) {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) s += orow[ow] * irow[ow];
                } else {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) s += orow[ow] * irow[ow * SW];
                }
              }
            }
            gwk[(kd * KH + kh) * KW + kw] += s;
          }
        }
      }
    }
  }
}

PoolResult maxpool_forward(const Tensor& input, const PoolGeometry& g) {
  require_rank4(input, "maxpool");
  const Shape os = pool_output_shape(input.shape(), g);
  PoolResult r{Tensor(os), std::vector<std::size_t>(shape_volume(os))};
  const std::size_t C = input.dim(0), D = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Do = os[1], Ho = os[2], Wo = os[3];
  const double* in = input.raw();

#pragma omp parallel for schedule(static)
  for (Index c = 0; c < static_cast<Index>(C); ++c) {
    for (std::size_t od = 0; od < Do; ++od)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = 0;
          bool found = false;
          for (std::size_t kd = 0; kd < g.window[0]; ++kd) {
            const Index id = static_cast<Index>(od * g.stride[0] + kd) - static_cast<Index>(g.pad[0]);
            if (id < 0 || id >= static_cast<Index>(D)) continue;
            for (std::size_t kh = 0; kh < g.window[1]; ++kh) {
              const Index ih = static_cast<Index>(oh * g.stride[1] + kh) - static_cast<Index>(g.pad[1]);
              if (ih < 0 || ih >= static_cast<Index>(H)) continue;
              for (std::size_t kw = 0; kw < g.window[2]; ++kw) {
                const Index iw = static_cast<Index>(ow * g.stride[2] + kw) - static_cast<Index>(g.pad[2]);
                if (iw < 0 || iw >= static_cast<Index>(W)) continue;
                const std::size_t idx = ((c * D + id) * H + ih) * W + iw;
                if (!found || in[idx] > best) {
                  best = in[idx];
                  arg = idx;
                  found = true;
                }
              }
            }
          }
          const std::size_t o = ((c * Do + od) * Ho + oh) * Wo + ow;
          r.output[o] = best;
          r.argmax[o] = arg;
        }
  }
  return r;
}

Tensor maxpool_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                        const Shape& input_shape) {
  if (grad_out.size() != argmax.size()) {
    throw ShapeError("maxpool backward: gradient " + shape_string(grad_out.shape()) +
                     " does not match recorded forward");
  }
  Tensor grad_in(input_shape);
  // Serial: several outputs may share an argmax when windows overlap.
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_in[argmax[o]] += grad_out[o];
  return grad_in;
}

void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace tfnet::kernels
