#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "filterts/tensor.hpp"

namespace filterts {

/// Linear map on complex data via separate weight matrices for the real and
/// imaginary components:
///   Re(out) = Re(x) W_real - Im(x) W_imag
///   Im(out) = Re(x) W_imag + Im(x) W_real
/// which is exactly multiplication by the complex matrix
/// weight = W_real + i W_imag, stored here as one complex tensor Din x Dout.
struct ComplexLinearLayer {
  Tensor weight;
  Tensor bias;  // optional complex {Dout}; leave default-constructed for none
};

inline Tensor clinear_apply(const ComplexLinearLayer& layer, const Tensor& x) {
  const Shape& ws = layer.weight.shape();
  if (ws.size() != 2) throw dimension_error("clinear: weight must be 2-D");
  const std::size_t din = ws[0];
  const std::size_t dout = ws[1];
  if (x.shape().back() != din)
    throw dimension_error("clinear: last input axis does not match Din");

  const Shape in_shape = x.shape();
  std::size_t lead = 1;
  for (std::size_t d = 0; d + 1 < in_shape.size(); ++d) lead *= in_shape[d];

  Tensor flat = in_shape.size() == 2 ? x : reshape(x, {lead, din});
  Tensor out = matmul(flat, layer.weight);
  if (layer.bias.defined()) out = add(out, layer.bias);
  if (in_shape.size() == 2) return out;
  Shape out_shape = in_shape;
  out_shape.back() = dout;
  return reshape(out, out_shape);
}

namespace detail {

// Row maxima along `axis`, detached from the graph. Softmax is invariant to
// subtracting any constant, so using a detached max keeps both the values
// and the gradients exact while preventing exp() overflow.
inline Tensor detached_max(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  const std::size_t mid = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[axis] = 1;
  std::vector<double> m(outer * inner, 0.0);
  const auto& v = x.re();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double best = v[(o * mid) * inner + i];
      for (std::size_t k = 1; k < mid; ++k)
        best = std::max(best, v[(o * mid + k) * inner + i]);
      m[o * inner + i] = best;
    }
  return Tensor::from_real(out_shape, std::move(m));
}

}  // namespace detail

/// Numerically stable softmax of a real-typed tensor along one axis.
inline Tensor softmax_real(const Tensor& x, std::size_t axis) {
  if (!x.real_typed())
    throw contract_error("softmax_real: input must be real-typed");
  if (axis >= x.rank())
    throw dimension_error("softmax_real: axis out of range");
  Tensor e = exp(sub(x, detail::detached_max(x, axis)));
  return div(e, reduce_sum(e, axis, /*keepdim=*/true));
}

/// ReLU applied to the real and imaginary components independently.
inline Tensor crelu(const Tensor& x) { return relu_parts(x); }

/// Softmax over complex magnitudes with per-element phase preservation:
///   out[k] = softmax(|x|)[k] * x[k] / |x[k]|
/// Zero-magnitude elements contribute exp(0) to the denominator but map to
/// zero output (their phase factor is taken as 0).
inline Tensor csoftmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw dimension_error("csoftmax: axis out of range");
  Tensor mag = magnitude(x);
  Tensor weights = softmax_real(mag, axis);
  Tensor phase = mul(x, safe_reciprocal(mag));
  return mul(phase, weights);
}

/// Learnable per-part gain and bias for clayernorm; gains initialize to 1
/// and biases to 0, which reproduces the bare normalization.
struct CLayerNormParams {
  Tensor gain_re, bias_re, gain_im, bias_im;  // real, shaped {axis length}
};

inline CLayerNormParams make_clayernorm_params(std::size_t width) {
  CLayerNormParams p;
  p.gain_re = Tensor::from_real({width}, std::vector<double>(width, 1.0));
  p.bias_re = Tensor::zeros({width});
  p.gain_im = Tensor::from_real({width}, std::vector<double>(width, 1.0));
  p.bias_im = Tensor::zeros({width});
  return p;
}

namespace detail {

inline Tensor standardize_real(const Tensor& p, std::size_t axis, double eps) {
  const double n = static_cast<double>(p.shape()[axis]);
  Tensor mean = scale(reduce_sum(p, axis, true), 1.0 / n);
  Tensor centered = sub(p, mean);
  Tensor var = scale(reduce_sum(mul(centered, centered), axis, true), 1.0 / n);
  return div(centered, sqrt(add(var, Tensor::scalar(eps))));
}

}  // namespace detail

/// Layer normalization applied to the real and imaginary components
/// independently: each part is standardized to mean 0 / variance 1 along
/// `axis` (eps inside the square root), then scaled and shifted per part.
inline Tensor clayernorm(const Tensor& x, std::size_t axis, double eps) {
  if (axis >= x.rank()) throw dimension_error("clayernorm: axis out of range");
  if (x.shape()[axis] < 2)
    throw contract_error("clayernorm: axis length must be >= 2");
  Tensor yre = detail::standardize_real(real_part(x), axis, eps);
  Tensor yim = detail::standardize_real(imag_part(x), axis, eps);
  return make_complex(yre, yim);
}

inline Tensor clayernorm(const Tensor& x, std::size_t axis, double eps,
                         const CLayerNormParams& params) {
  if (axis + 1 != x.rank())
    throw contract_error(
        "clayernorm with params: normalized axis must be the last axis");
  if (x.shape()[axis] < 2)
    throw contract_error("clayernorm: axis length must be >= 2");
  Tensor yre = detail::standardize_real(real_part(x), axis, eps);
  Tensor yim = detail::standardize_real(imag_part(x), axis, eps);
  yre = add(mul(yre, params.gain_re), params.bias_re);
  yim = add(mul(yim, params.gain_im), params.bias_im);
  return make_complex(yre, yim);
}

}  // namespace filterts
