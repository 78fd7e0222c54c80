#include "uad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace uad {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

template <class T, class F>
Tensor<T> map_values(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  const T* src = a.raw();
  T* dst = out.raw();
  for (std::size_t i = 0; i < a.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op<T>(std::move(out), "add", {a, b}, [](Node<T>& n) {
    n.inputs[0]->accumulate(n.grad);
    n.inputs[1]->accumulate(n.grad);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op<T>(std::move(out), "sub", {a, b}, [](Node<T>& n) {
    n.inputs[0]->accumulate(n.grad);
    if (n.inputs[1]->requires_grad) n.inputs[1]->accumulate(map_values(n.grad, [](T g) { return -g; }));
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op<T>(std::move(out), "mul", {a, b}, [](Node<T>& n) {
    auto& x = *n.inputs[0];
    auto& y = *n.inputs[1];
    const std::size_t len = n.grad.size();
    if (x.requires_grad) {
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < len; ++i) gx[i] += n.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& gy = y.grad_buffer();
      for (std::size_t i = 0; i < len; ++i) gy[i] += n.grad[i] * x.value[i];
    }
  });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return make_op<T>(map_values(a.value(), [s](T x) { return x + s; }), "add_scalar", {a},
                    [](Node<T>& n) { n.inputs[0]->accumulate(n.grad); });
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  return make_op<T>(map_values(a.value(), [s](T x) { return x * s; }), "mul_scalar", {a},
                    [s](Node<T>& n) { n.inputs[0]->accumulate(map_values(n.grad, [s](T g) { return g * s; })); });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  return make_op<T>(map_values(a.value(), [](T x) { return std::exp(x); }), "exp", {a}, [](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i];
  });
}

template <class T>
Var<T> log(const Var<T>& a) {
  for (T x : a.value().data()) {
    if (!(x > T{0})) throw DomainError("log of non-positive value " + std::to_string(x));
  }
  return make_op<T>(map_values(a.value(), [](T x) { return std::log(x); }), "log", {a}, [](Node<T>& n) {
    auto& in = *n.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / in.value[i];
  });
}

template <class T>
Var<T> abs(const Var<T>& a) {
  return make_op<T>(map_values(a.value(), [](T x) { return std::abs(x); }), "abs", {a}, [](Node<T>& n) {
    auto& in = *n.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = in.value[i];
      g[i] += x > T{0} ? n.grad[i] : (x < T{0} ? -n.grad[i] : T{0});
    }
  });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return make_op<T>(map_values(a.value(), [](T x) { return x * x; }), "square", {a}, [](Node<T>& n) {
    auto& in = *n.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T{2} * in.value[i] * n.grad[i];
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  auto f = [](T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
  };
  return make_op<T>(map_values(a.value(), f), "sigmoid", {a}, [](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = n.value[i];
      g[i] += n.grad[i] * y * (T{1} - y);
    }
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  if (slope < T{0} || slope > T{1}) throw UsageError("leaky_relu slope must lie in [0,1]");
  return make_op<T>(map_values(a.value(), [slope](T x) { return x > T{0} ? x : slope * x; }),
                    slope == T{0} ? "relu" : "leaky_relu", {a}, [slope](Node<T>& n) {
                      auto& in = *n.inputs[0];
                      auto& g = in.grad_buffer();
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        g[i] += in.value[i] > T{0} ? n.grad[i] : slope * n.grad[i];
                      }
                    });
}

template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw UsageError("clamp needs lo <= hi");
  return make_op<T>(map_values(a.value(), [lo, hi](T x) { return std::clamp(x, lo, hi); }), "clamp", {a},
                    [lo, hi](Node<T>& n) {
                      auto& in = *n.inputs[0];
                      auto& g = in.grad_buffer();
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        if (in.value[i] >= lo && in.value[i] <= hi) g[i] += n.grad[i];
                      }
                    });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T total{0};
  for (T x : a.value().data()) total += x;
  return make_op<T>(Tensor<T>::scalar(total), "sum", {a}, [](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    const T seed = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed;
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  T total{0};
  for (T x : a.value().data()) total += x;
  const T count = static_cast<T>(a.size());
  return make_op<T>(Tensor<T>::scalar(total / count), "mean", {a}, [count](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    const T seed = n.grad[0] / count;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed;
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return make_op<T>(a.value().reshaped(std::move(shape)), "reshape", {a},
                    [](Node<T>& n) { n.inputs[0]->accumulate(n.grad.data()); });
}

// ---------------------------------------------------------------------------
// Convolution

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvParams p) {
  if (p.stride == 0) throw UsageError("convolution stride must be >= 1");
  if (in + 2 * p.padding < kernel) {
    throw DimensionError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                         std::to_string(in + 2 * p.padding));
  }
  return (in + 2 * p.padding - kernel) / p.stride + 1;
}

std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel, ConvParams p) {
  if (p.stride == 0) throw UsageError("convolution stride must be >= 1");
  const std::size_t grown = (in - 1) * p.stride + kernel;
  if (grown <= 2 * p.padding) throw DimensionError("transposed convolution output would be empty");
  return grown - 2 * p.padding;
}

namespace {

/// Geometry of a cross-correlation between a "large" grid (conv input,
/// transposed-conv output) and a "small" grid. 2D problems use depth 1.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t channels = 0;  // channels of the large grid
  std::size_t filters = 0;   // channels of the small grid
  std::array<std::size_t, 3> large{1, 1, 1};
  std::array<std::size_t, 3> small{1, 1, 1};
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
  bool volumetric = false;

  std::size_t large_sites() const { return large[0] * large[1] * large[2]; }
  std::size_t small_sites() const { return small[0] * small[1] * small[2]; }
  std::size_t patch() const { return channels * kernel[0] * kernel[1] * kernel[2]; }

  Shape large_shape() const {
    Shape s{batch, channels};
    for (std::size_t a = volumetric ? 0 : 1; a < 3; ++a) s.push_back(large[a]);
    return s;
  }
  Shape small_shape() const {
    Shape s{batch, filters};
    for (std::size_t a = volumetric ? 0 : 1; a < 3; ++a) s.push_back(small[a]);
    return s;
  }
};

/// Reads the spatial part of an input/kernel pair into the geometry.
/// `grid` is [B, ch, ...], `kernel` is [filters, channels, k...].
void read_spatial(const Shape& grid, const Shape& kernel, ConvParams p, ConvGeometry& g,
                  std::array<std::size_t, 3>& extents, const char* op) {
  const std::size_t rank = grid.size();
  if (rank != 4 && rank != 5) {
    throw DimensionError(std::string(op) + ": input must be rank 4 or 5, got " + to_string(grid));
  }
  if (kernel.size() != rank) {
    throw DimensionError(std::string(op) + ": kernel rank " + std::to_string(kernel.size()) +
                         " does not match input rank " + std::to_string(rank));
  }
  g.volumetric = rank == 5;
  g.batch = grid[0];
  const std::size_t first = g.volumetric ? 0 : 1;
  for (std::size_t a = first; a < 3; ++a) {
    extents[a] = grid[2 + a - first];
    g.kernel[a] = kernel[2 + a - first];
    g.stride[a] = p.stride;
    g.pad[a] = p.padding;
  }
}

template <class T>
void im2col(const T* large, const ConvGeometry& g, T* col) {
  const auto [D, H, W] = g.large;
  const auto [OD, OH, OW] = g.small;
  const auto [KD, KH, KW] = g.kernel;
  const std::size_t sites = g.small_sites();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = large + c * D * H * W;
    for (std::size_t kz = 0; kz < KD; ++kz)
      for (std::size_t ky = 0; ky < KH; ++ky)
        for (std::size_t kx = 0; kx < KW; ++kx, ++row) {
          T* dst = col + row * sites;
          for (std::size_t oz = 0; oz < OD; ++oz) {
            const auto iz = static_cast<std::ptrdiff_t>(oz * g.stride[0] + kz) - static_cast<std::ptrdiff_t>(g.pad[0]);
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride[1] + ky) - static_cast<std::ptrdiff_t>(g.pad[1]);
              T* out = dst + (oz * OH + oy) * OW;
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D) || iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
                std::fill(out, out + OW, T{0});
                continue;
              }
              const T* src = plane + (static_cast<std::size_t>(iz) * H + static_cast<std::size_t>(iy)) * W;
              for (std::size_t ox = 0; ox < OW; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride[2] + kx) - static_cast<std::ptrdiff_t>(g.pad[2]);
                out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) ? T{0} : src[ix];
              }
            }
          }
        }
  }
}

template <class T>
void col2im(const T* col, const ConvGeometry& g, T* large) {
  const auto [D, H, W] = g.large;
  const auto [OD, OH, OW] = g.small;
  const auto [KD, KH, KW] = g.kernel;
  const std::size_t sites = g.small_sites();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = large + c * D * H * W;
    for (std::size_t kz = 0; kz < KD; ++kz)
      for (std::size_t ky = 0; ky < KH; ++ky)
        for (std::size_t kx = 0; kx < KW; ++kx, ++row) {
          const T* src = col + row * sites;
          for (std::size_t oz = 0; oz < OD; ++oz) {
            const auto iz = static_cast<std::ptrdiff_t>(oz * g.stride[0] + kz) - static_cast<std::ptrdiff_t>(g.pad[0]);
            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D)) continue;
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride[1] + ky) - static_cast<std::ptrdiff_t>(g.pad[1]);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              T* dst = plane + (static_cast<std::size_t>(iz) * H + static_cast<std::size_t>(iy)) * W;
              const T* in = src + (oz * OH + oy) * OW;
              for (std::size_t ox = 0; ox < OW; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride[2] + kx) - static_cast<std::ptrdiff_t>(g.pad[2]);
                if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) dst[ix] += in[ox];
              }
            }
          }
        }
  }
}

void check_bias(const Shape& bias, std::size_t channels, const char* op) {
  if (bias.size() != 1 || bias[0] != channels) {
    throw DimensionError(std::string(op) + ": bias shape " + to_string(bias) + " does not match " +
                         std::to_string(channels) + " output channels");
  }
}

}  // namespace

template <class T>
Var<T> conv(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, ConvParams p) {
  ConvGeometry g;
  read_spatial(input.shape(), kernel.shape(), p, g, g.large, "conv");
  g.channels = input.shape()[1];
  g.filters = kernel.shape()[0];
  if (kernel.shape()[1] != g.channels) {
    throw DimensionError("conv: kernel expects " + std::to_string(kernel.shape()[1]) +
                         " input channels, input has " + std::to_string(g.channels));
  }
  check_bias(bias.shape(), g.filters, "conv");
  for (std::size_t a = 0; a < 3; ++a) {
    g.small[a] = conv_output_extent(g.large[a], g.kernel[a], {g.stride[a], g.pad[a]});
  }

  Tensor<T> out(g.small_shape());
  std::vector<T> col(g.patch() * g.small_sites());
  ConstMatMap<T> w(kernel.value().raw(), static_cast<Eigen::Index>(g.filters), static_cast<Eigen::Index>(g.patch()));
  ConstMatMap<T> cols(col.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.small_sites()));
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(input.value().raw() + b * g.channels * g.large_sites(), g, col.data());
    MatMap<T> o(out.raw() + b * g.filters * g.small_sites(), static_cast<Eigen::Index>(g.filters),
                static_cast<Eigen::Index>(g.small_sites()));
    o.noalias() = w * cols;
    for (std::size_t k = 0; k < g.filters; ++k) o.row(static_cast<Eigen::Index>(k)).array() += bias.value()[k];
  }

  return make_op<T>(std::move(out), "conv", {input, kernel, bias}, [g](Node<T>& n) {
    auto& x = *n.inputs[0];
    auto& k = *n.inputs[1];
    auto& bs = *n.inputs[2];
    const auto F = static_cast<Eigen::Index>(g.filters);
    const auto P = static_cast<Eigen::Index>(g.patch());
    const auto S = static_cast<Eigen::Index>(g.small_sites());
    std::vector<T> col(g.patch() * g.small_sites());
    ConstMatMap<T> w(k.value.raw(), F, P);
    MatMap<T> cols(col.data(), P, S);
    for (std::size_t b = 0; b < g.batch; ++b) {
      ConstMatMap<T> go(n.grad.raw() + b * g.filters * g.small_sites(), F, S);
      if (bs.requires_grad) {
        auto& gb = bs.grad_buffer();
        for (Eigen::Index f = 0; f < F; ++f) {
          // plain loop: Eigen's vectorized sum depends on pointer alignment
          T acc{0};
          for (Eigen::Index i = 0; i < S; ++i) acc += go(f, i);
          gb[static_cast<std::size_t>(f)] += acc;
        }
      }
      if (k.requires_grad) {
        im2col(x.value.raw() + b * g.channels * g.large_sites(), g, col.data());
        MatMap<T> gw(k.grad_buffer().raw(), F, P);
        gw.noalias() += go * cols.transpose();
      }
      if (x.requires_grad) {
        cols.noalias() = w.transpose() * go;
        col2im(col.data(), g, x.grad_buffer().raw() + b * g.channels * g.large_sites());
      }
    }
  });
}

template <class T>
Var<T> conv_transpose(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, ConvParams p) {
  ConvGeometry g;
  read_spatial(input.shape(), kernel.shape(), p, g, g.small, "conv_transpose");
  g.filters = input.shape()[1];
  g.channels = kernel.shape()[1];
  if (kernel.shape()[0] != g.filters) {
    throw DimensionError("conv_transpose: kernel expects " + std::to_string(kernel.shape()[0]) +
                         " input channels, input has " + std::to_string(g.filters));
  }
  check_bias(bias.shape(), g.channels, "conv_transpose");
  for (std::size_t a = 0; a < 3; ++a) {
    g.large[a] = conv_transpose_output_extent(g.small[a], g.kernel[a], {g.stride[a], g.pad[a]});
  }

  Tensor<T> out(g.large_shape());
  const auto F = static_cast<Eigen::Index>(g.filters);
  const auto P = static_cast<Eigen::Index>(g.patch());
  const auto S = static_cast<Eigen::Index>(g.small_sites());
  std::vector<T> col(g.patch() * g.small_sites());
  ConstMatMap<T> w(kernel.value().raw(), F, P);
  MatMap<T> cols(col.data(), P, S);
  for (std::size_t b = 0; b < g.batch; ++b) {
    ConstMatMap<T> x(input.value().raw() + b * g.filters * g.small_sites(), F, S);
    cols.noalias() = w.transpose() * x;
    T* dst = out.raw() + b * g.channels * g.large_sites();
    col2im(col.data(), g, dst);
    for (std::size_t c = 0; c < g.channels; ++c) {
      const T bc = bias.value()[c];
      T* plane = dst + c * g.large_sites();
      for (std::size_t i = 0; i < g.large_sites(); ++i) plane[i] += bc;
    }
  }

  return make_op<T>(std::move(out), "conv_transpose", {input, kernel, bias}, [g](Node<T>& n) {
    auto& x = *n.inputs[0];
    auto& k = *n.inputs[1];
    auto& bs = *n.inputs[2];
    const auto F = static_cast<Eigen::Index>(g.filters);
    const auto P = static_cast<Eigen::Index>(g.patch());
    const auto S = static_cast<Eigen::Index>(g.small_sites());
    std::vector<T> col(g.patch() * g.small_sites());
    ConstMatMap<T> w(k.value.raw(), F, P);
    ConstMatMap<T> cols(col.data(), P, S);
    for (std::size_t b = 0; b < g.batch; ++b) {
      const T* go = n.grad.raw() + b * g.channels * g.large_sites();
      if (bs.requires_grad) {
        auto& gb = bs.grad_buffer();
        for (std::size_t c = 0; c < g.channels; ++c) {
          T acc{0};
          for (std::size_t i = 0; i < g.large_sites(); ++i) acc += go[c * g.large_sites() + i];
          gb[c] += acc;
        }
      }
      if (!x.requires_grad && !k.requires_grad) continue;
      im2col(go, g, col.data());
      if (x.requires_grad) {
        MatMap<T> gx(x.grad_buffer().raw() + b * g.filters * g.small_sites(), F, S);
        gx.noalias() += w * cols;
      }
      if (k.requires_grad) {
        ConstMatMap<T> xin(x.value.raw() + b * g.filters * g.small_sites(), F, S);
        MatMap<T> gw(k.grad_buffer().raw(), F, P);
        gw.noalias() += xin * cols.transpose();
      }
    }
  });
}

template <class T>
Var<T> dense(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  if (input.shape().size() != 2 || weight.shape().size() != 2) {
    throw DimensionError("dense: expected input [B,F] and weight [G,F], got " + to_string(input.shape()) +
                         " and " + to_string(weight.shape()));
  }
  const auto B = static_cast<Eigen::Index>(input.shape()[0]);
  const auto F = static_cast<Eigen::Index>(input.shape()[1]);
  const auto G = static_cast<Eigen::Index>(weight.shape()[0]);
  if (static_cast<Eigen::Index>(weight.shape()[1]) != F) {
    throw DimensionError("dense: weight " + to_string(weight.shape()) + " incompatible with input " +
                         to_string(input.shape()));
  }
  check_bias(bias.shape(), static_cast<std::size_t>(G), "dense");

  Tensor<T> out(Shape{static_cast<std::size_t>(B), static_cast<std::size_t>(G)});
  MatMap<T> o(out.raw(), B, G);
  o.noalias() = ConstMatMap<T>(input.value().raw(), B, F) * ConstMatMap<T>(weight.value().raw(), G, F).transpose();
  for (Eigen::Index r = 0; r < B; ++r) {
    for (Eigen::Index c = 0; c < G; ++c) o(r, c) += bias.value()[static_cast<std::size_t>(c)];
  }

  return make_op<T>(std::move(out), "dense", {input, weight, bias}, [B, F, G](Node<T>& n) {
    auto& x = *n.inputs[0];
    auto& w = *n.inputs[1];
    auto& bs = *n.inputs[2];
    ConstMatMap<T> go(n.grad.raw(), B, G);
    if (x.requires_grad) {
      MatMap<T>(x.grad_buffer().raw(), B, F).noalias() += go * ConstMatMap<T>(w.value.raw(), G, F);
    }
    if (w.requires_grad) {
      MatMap<T>(w.grad_buffer().raw(), G, F).noalias() += go.transpose() * ConstMatMap<T>(x.value.raw(), B, F);
    }
    if (bs.requires_grad) {
      auto& gb = bs.grad_buffer();
      for (Eigen::Index c = 0; c < G; ++c) {
        for (Eigen::Index r = 0; r < B; ++r) gb[static_cast<std::size_t>(c)] += go(r, c);
      }
    }
  });
}

template <class T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

#define UAD_INSTANTIATE(T)                                                          \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                  \
  template Var<T> mul_scalar<T>(const Var<T>&, T);                                  \
  template Var<T> exp<T>(const Var<T>&);                                            \
  template Var<T> log<T>(const Var<T>&);                                            \
  template Var<T> abs<T>(const Var<T>&);                                            \
  template Var<T> square<T>(const Var<T>&);                                         \
  template Var<T> sigmoid<T>(const Var<T>&);                                        \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                  \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                    \
  template Var<T> sum<T>(const Var<T>&);                                            \
  template Var<T> mean<T>(const Var<T>&);                                           \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                 \
  template Var<T> conv<T>(const Var<T>&, const Var<T>&, const Var<T>&, ConvParams); \
  template Var<T> conv_transpose<T>(const Var<T>&, const Var<T>&, const Var<T>&, ConvParams); \
  template Var<T> dense<T>(const Var<T>&, const Var<T>&, const Var<T>&);            \
  template T dot<T>(const Tensor<T>&, const Tensor<T>&);

UAD_INSTANTIATE(float)
UAD_INSTANTIATE(double)
#undef UAD_INSTANTIATE

}  // namespace uad
