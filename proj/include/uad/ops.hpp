#pragma once

#include <array>
#include <cstddef>

#include "uad/autodiff.hpp"

namespace uad {

// Elementwise ops require equal shapes; scalar broadcasting is only offered
// through the *_scalar variants.
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
template <class T> Var<T> mul_scalar(const Var<T>& a, T s);
template <class T> Var<T> exp(const Var<T>& a);
/// Throws DomainError on any non-positive element.
template <class T> Var<T> log(const Var<T>& a);
template <class T> Var<T> abs(const Var<T>& a);
template <class T> Var<T> square(const Var<T>& a);
template <class T> Var<T> sigmoid(const Var<T>& a);
/// max(x, slope*x) for slope in [0,1]; slope 0 is ReLU.
template <class T> Var<T> leaky_relu(const Var<T>& a, T slope);
template <class T> Var<T> relu(const Var<T>& a) { return leaky_relu(a, T{0}); }
/// Gradient passes where lo <= a <= hi, zero outside.
template <class T> Var<T> clamp(const Var<T>& a, T lo, T hi);
template <class T> Var<T> sum(const Var<T>& a);
template <class T> Var<T> mean(const Var<T>& a);
template <class T> Var<T> reshape(const Var<T>& a, Shape shape);

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Output extent of a strided cross-correlation along one axis.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvParams p);
/// Output extent of the matching transposed convolution.
std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel, ConvParams p);

/// Cross-correlation. input [B,C,H,W] or [B,C,D,H,W]; kernel [K,C,kh,kw] or
/// [K,C,kd,kh,kw]; bias [K]. No kernel flip.
template <class T>
Var<T> conv(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, ConvParams p);

/// Adjoint of conv with the same kernel tensor. input [B,K,...]; kernel
/// [K,C,k...] (same layout conv uses to map C -> K); bias [C].
template <class T>
Var<T> conv_transpose(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, ConvParams p);

/// Affine map: input [B,F], weight [G,F], bias [G] -> [B,G].
template <class T>
Var<T> dense(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

/// Inner product of two equally shaped tensors (no graph).
template <class T>
T dot(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace uad
