#include "uad/gradsuite.hpp"

#include <algorithm>

#include "uad/loss.hpp"
#include "uad/rng.hpp"

namespace uad {

namespace {

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

struct Primitive {
  std::string name;
  GradFunction f;
  std::vector<Tensor<double>> inputs;
};

std::vector<Primitive> primitives() {
  const auto a = random_tensor({3, 4}, 1);
  const auto b = random_tensor({3, 4}, 2);
  const auto pos = random_tensor({3, 4}, 3, 0.2, 2.0);
  std::vector<Primitive> p;
  p.push_back({"add", [](const auto& v) { return add(v[0], v[1]); }, {a, b}});
  p.push_back({"sub", [](const auto& v) { return sub(v[0], v[1]); }, {a, b}});
  p.push_back({"mul", [](const auto& v) { return mul(v[0], v[1]); }, {a, b}});
  p.push_back({"add_scalar", [](const auto& v) { return add_scalar(v[0], 0.3); }, {a}});
  p.push_back({"mul_scalar", [](const auto& v) { return mul_scalar(v[0], -1.7); }, {a}});
  p.push_back({"exp", [](const auto& v) { return exp(v[0]); }, {a}});
  p.push_back({"log", [](const auto& v) { return log(v[0]); }, {pos}});
  p.push_back({"abs", [](const auto& v) { return abs(v[0]); }, {a}});
  p.push_back({"square", [](const auto& v) { return square(v[0]); }, {a}});
  p.push_back({"sigmoid", [](const auto& v) { return sigmoid(v[0]); }, {a}});
  p.push_back({"leaky_relu", [](const auto& v) { return leaky_relu(v[0], 0.2); }, {a}});
  p.push_back({"relu", [](const auto& v) { return relu(v[0]); }, {a}});
  p.push_back({"clamp", [](const auto& v) { return clamp(v[0], -0.5, 0.5); }, {a}});
  p.push_back({"sum", [](const auto& v) { return sum(v[0]); }, {a}});
  p.push_back({"mean", [](const auto& v) { return mean(v[0]); }, {a}});
  p.push_back({"reshape", [](const auto& v) { return reshape(v[0], {4, 3}); }, {a}});
  p.push_back({"conv2d", [](const auto& v) { return conv(v[0], v[1], v[2], {2, 1}); },
               {random_tensor({2, 2, 6, 6}, 4), random_tensor({3, 2, 4, 4}, 5), random_tensor({3}, 6)}});
  p.push_back({"conv3d", [](const auto& v) { return conv(v[0], v[1], v[2], {2, 1}); },
               {random_tensor({1, 2, 4, 4, 4}, 7), random_tensor({2, 2, 4, 4, 4}, 8), random_tensor({2}, 9)}});
  p.push_back({"conv_transpose2d", [](const auto& v) { return conv_transpose(v[0], v[1], v[2], {2, 1}); },
               {random_tensor({2, 2, 3, 3}, 10), random_tensor({2, 3, 4, 4}, 11), random_tensor({3}, 12)}});
  p.push_back({"conv_transpose3d", [](const auto& v) { return conv_transpose(v[0], v[1], v[2], {2, 1}); },
               {random_tensor({1, 2, 2, 2, 2}, 13), random_tensor({2, 2, 4, 4, 4}, 14), random_tensor({2}, 15)}});
  p.push_back({"dense", [](const auto& v) { return dense(v[0], v[1], v[2]); },
               {random_tensor({3, 5}, 16), random_tensor({4, 5}, 17), random_tensor({4}, 18)}});
  return p;
}

}  // namespace

std::vector<std::string> registered_primitives() {
  std::vector<std::string> names;
  for (const auto& p : primitives()) names.push_back(p.name);
  return names;
}

std::vector<GradCheckReport> primitive_suite(const GradCheckOptions& opts) {
  std::vector<GradCheckReport> out;
  for (const auto& p : primitives()) out.push_back(grad_check(p.name, p.f, p.inputs, opts));
  return out;
}

GradCheckReport architecture_check(Dimensionality dims, Bottleneck bottleneck, const GradCheckOptions& opts) {
  VaeConfig cfg = VaeConfig::make(dims, bottleneck, {16, 16, 16});
  cfg.widths = {2, 2, 2, 2};
  cfg.latent_dim = bottleneck == Bottleneck::Dense ? 4 : 2;
  const VaeModel<double> seed_model(cfg, 11);

  // Intensities kept away from 0.5 so |x - x_hat| never crosses its kink
  // under a finite-difference step.
  Tensor<double> x(cfg.input_shape(2));
  Rng rng(12);
  for (auto& v : x.data()) v = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.3) : rng.uniform(0.7, 1.0);

  // Sigma and beta are frozen so every evaluation sees the same objective.
  LossState state(kDefaultCycle, kDefaultWindow);
  for (int i = 0; i < 10; ++i) state.advance(0.2 + 0.01 * i, 1.0);

  std::vector<std::string> names;
  std::vector<Tensor<double>> inputs;
  // Zero biases put ReLU inputs of dead units exactly on the kink, so the
  // check runs at a generic point instead.
  std::uint64_t bias_seed = 13;
  for (const auto& p : seed_model.parameters()) {
    names.push_back(p.name);
    const bool bias = p.name.ends_with(".bias");
    inputs.push_back(bias ? random_tensor(p.var.shape(), bias_seed++, -0.1, 0.1) : p.var.value());
  }
  GradFunction f = [&](const std::vector<Var<double>>& vars) {
    std::vector<NamedParameter<double>> params;
    for (std::size_t i = 0; i < vars.size(); ++i) params.push_back({names[i], vars[i]});
    const auto model = model_from_parameters(cfg, std::move(params));
    const Var<double> in(x);
    const auto fwd = model.forward(in, 99);
    LossState s = state;
    return robust_loss(s, in, fwd.unclamped, fwd.latent.mu, fwd.latent.logvar).total;
  };
  const std::string name = "vae_" + to_string(bottleneck) + "_" + to_string(dims);
  // Thousands of ReLU inputs sit within reach of a 1e-5 step; a smaller
  // step keeps the stencil on one side of every kink.
  GradCheckOptions o = opts;
  o.step = std::min(opts.step, 1e-6);
  return grad_check(name, f, inputs, o);
}

std::vector<GradCheckReport> gradient_suite(const GradCheckOptions& opts) {
  auto out = primitive_suite(opts);
  for (auto d : {Dimensionality::Two, Dimensionality::Three}) {
    for (auto b : {Bottleneck::Dense, Bottleneck::Spatial}) out.push_back(architecture_check(d, b, opts));
  }
  return out;
}

}  // namespace uad
