#include "uad/vae.hpp"

#include <cmath>

#include "uad/rng.hpp"

namespace uad {

namespace {

constexpr ConvParams kDown{2, 1};
constexpr ConvParams kHead{1, 1};
constexpr std::size_t kDownKernel = 4;
constexpr std::size_t kHeadKernel = 3;

Shape kernel_shape(std::size_t out, std::size_t in, std::size_t k, std::size_t spatial_rank) {
  Shape s{out, in};
  for (std::size_t i = 0; i < spatial_rank; ++i) s.push_back(k);
  return s;
}

std::size_t product(const std::array<std::size_t, 3>& e) { return e[0] * e[1] * e[2]; }

struct LayerSpec {
  std::string name;
  Shape weight;
  Shape bias;
  double bound;
};

std::vector<LayerSpec> layer_specs(const VaeConfig& c) {
  const std::size_t r = c.spatial_rank();
  const std::size_t kvol_down = r == 3 ? 64 : 16;
  const std::size_t kvol_head = r == 3 ? 27 : 9;
  const double leaky_gain = 2.0 / (1.0 + c.leaky_slope * c.leaky_slope);
  const auto& w = c.widths;
  const std::size_t n = c.latent_dim;
  const std::size_t trunk_sites = product(c.trunk_extent());

  // Kaiming-uniform bound sqrt(3 * gain / fan_in) for hidden layers; heads
  // and the output layer use the plain 1/sqrt(fan_in) bound.
  auto kaiming = [](double gain, double fan_in) { return std::sqrt(3.0 * gain / fan_in); };
  auto plain = [](double fan_in) { return 1.0 / std::sqrt(fan_in); };
  const double up_taps = static_cast<double>(kvol_down) / std::pow(2.0, static_cast<double>(r));

  std::vector<LayerSpec> specs;
  std::size_t in = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    specs.push_back({"enc.conv" + std::to_string(i + 1), kernel_shape(w[i], in, kDownKernel, r), {w[i]},
                     kaiming(leaky_gain, static_cast<double>(in * kvol_down))});
    in = w[i];
  }
  if (c.bottleneck == Bottleneck::Dense) {
    const std::size_t flat = w[3] * trunk_sites;
    specs.push_back({"enc.mu", {n, flat}, {n}, plain(static_cast<double>(flat))});
    specs.push_back({"enc.logvar", {n, flat}, {n}, plain(static_cast<double>(flat))});
    specs.push_back({"dec.head", {flat, n}, {flat}, kaiming(2.0, static_cast<double>(n))});
  } else {
    const double fan = static_cast<double>(w[3] * kvol_head);
    specs.push_back({"enc.mu", kernel_shape(n, w[3], kHeadKernel, r), {n}, plain(fan)});
    specs.push_back({"enc.logvar", kernel_shape(n, w[3], kHeadKernel, r), {n}, plain(fan)});
    specs.push_back({"dec.head", kernel_shape(w[3], n, kHeadKernel, r), {w[3]},
                     kaiming(2.0, static_cast<double>(n * kvol_head))});
  }
  // Transposed kernels are laid out [in, out, k...].
  const std::array<std::size_t, 4> up_out{w[2], w[1], w[0], 1};
  in = w[3];
  for (std::size_t i = 0; i < 4; ++i) {
    const double fan = static_cast<double>(in) * up_taps;
    specs.push_back({"dec.up" + std::to_string(i + 1), kernel_shape(in, up_out[i], kDownKernel, r), {up_out[i]},
                     i == 3 ? plain(fan) : kaiming(2.0, fan)});
    in = up_out[i];
  }
  return specs;
}

void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected shape " + to_string(want) + ", got " + to_string(got));
  }
}

}  // namespace

std::string to_string(Dimensionality d) { return d == Dimensionality::Three ? "3d" : "2d"; }
std::string to_string(Bottleneck b) { return b == Bottleneck::Dense ? "dense" : "spatial"; }

Dimensionality parse_dimensionality(const std::string& s) {
  if (s == "2d" || s == "2D" || s == "2") return Dimensionality::Two;
  if (s == "3d" || s == "3D" || s == "3") return Dimensionality::Three;
  throw UsageError("unknown dimensionality '" + s + "' (expected 2d or 3d)");
}

Bottleneck parse_bottleneck(const std::string& s) {
  if (s == "dense") return Bottleneck::Dense;
  if (s == "spatial") return Bottleneck::Spatial;
  throw UsageError("unknown bottleneck '" + s + "' (expected dense or spatial)");
}

VaeConfig VaeConfig::make(Dimensionality dims, Bottleneck bottleneck, std::array<std::size_t, 3> extent) {
  VaeConfig c;
  c.dims = dims;
  c.bottleneck = bottleneck;
  c.latent_dim = bottleneck == Bottleneck::Dense ? 128 : 16;
  c.extent = extent;
  if (dims == Dimensionality::Two) c.extent[0] = 1;
  return c;
}

void VaeConfig::validate() const {
  if (latent_dim == 0) throw UsageError("latent_dim must be positive");
  for (auto w : widths) {
    if (w == 0) throw UsageError("channel widths must be positive");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope <= 1.0)) throw UsageError("leaky_slope must lie in [0,1]");
  const std::size_t first = dims == Dimensionality::Three ? 0 : 1;
  if (dims == Dimensionality::Two && extent[0] != 1) throw UsageError("2d models need depth extent 1");
  for (std::size_t a = first; a < 3; ++a) {
    if (extent[a] == 0 || extent[a] % 16 != 0) {
      throw UsageError("input extent " + std::to_string(extent[a]) + " is not a positive multiple of 16");
    }
  }
}

std::array<std::size_t, 3> VaeConfig::trunk_extent() const {
  auto e = extent;
  for (std::size_t a = (dims == Dimensionality::Three ? 0 : 1); a < 3; ++a) e[a] /= 16;
  return e;
}

Shape VaeConfig::input_shape(std::size_t batch) const {
  Shape s{batch, 1};
  for (std::size_t a = (dims == Dimensionality::Three ? 0 : 1); a < 3; ++a) s.push_back(extent[a]);
  return s;
}

Shape VaeConfig::latent_shape(std::size_t batch) const {
  if (bottleneck == Bottleneck::Dense) return {batch, latent_dim};
  Shape s{batch, latent_dim};
  const auto t = trunk_extent();
  for (std::size_t a = (dims == Dimensionality::Three ? 0 : 1); a < 3; ++a) s.push_back(t[a]);
  return s;
}

template <class T>
VaeModel<T>::VaeModel(const VaeConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  for (const auto& spec : layer_specs(config_)) {
    Tensor<T> weight(spec.weight);
    for (auto& v : weight.data()) v = static_cast<T>(rng.uniform(-spec.bound, spec.bound));
    params_.push_back({spec.name + ".weight", Var<T>(std::move(weight), true)});
    params_.push_back({spec.name + ".bias", Var<T>(Tensor<T>(spec.bias), true)});
  }
}

template <class T>
VaeModel<T> VaeModel<T>::clone() const {
  std::vector<NamedParameter<T>> copy;
  for (const auto& p : params_) copy.push_back({p.name, Var<T>(p.var.value(), true)});
  return VaeModel(config_, std::move(copy));
}

template <class T>
std::vector<std::string> VaeModel<T>::layer_names() {
  return {"enc.conv1", "enc.conv2", "enc.conv3", "enc.conv4", "enc.mu", "enc.logvar",
          "dec.head",  "dec.up1",   "dec.up2",   "dec.up3",   "dec.up4"};
}

template <class T>
Var<T>& VaeModel<T>::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.var;
  }
  throw UsageError("no parameter named '" + name + "'");
}

template <class T>
const Var<T>& VaeModel<T>::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.var;
  }
  throw UsageError("no parameter named '" + name + "'");
}

template <class T>
std::size_t VaeModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

template <class T>
void VaeModel<T>::zero_layer(const std::string& layer) {
  parameter(layer + ".weight").mutable_value().fill(T{0});
  parameter(layer + ".bias").mutable_value().fill(T{0});
}

template <class T>
void VaeModel<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <class T>
Posterior<T> VaeModel<T>::encode(const Var<T>& x) const {
  if (x.shape().empty()) throw DimensionError("encode: empty input");
  require_shape(x.shape(), config_.input_shape(x.shape()[0]), "encode");
  const T slope = static_cast<T>(config_.leaky_slope);
  Var<T> h = x;
  for (int i = 1; i <= 4; ++i) {
    const std::string layer = "enc.conv" + std::to_string(i);
    h = leaky_relu(conv(h, w(layer), b(layer), kDown), slope);
  }
  if (config_.bottleneck == Bottleneck::Dense) {
    const std::size_t batch = h.shape()[0];
    h = reshape(h, {batch, h.size() / batch});
    return {dense(h, w("enc.mu"), b("enc.mu")), dense(h, w("enc.logvar"), b("enc.logvar"))};
  }
  return {conv(h, w("enc.mu"), b("enc.mu"), kHead), conv(h, w("enc.logvar"), b("enc.logvar"), kHead)};
}

template <class T>
Var<T> VaeModel<T>::decode(const Var<T>& z) const {
  return clamp(decode_unclamped(z), T(0), T(1));
}

template <class T>
Var<T> VaeModel<T>::decode_unclamped(const Var<T>& z) const {
  if (z.shape().empty()) throw DimensionError("decode: empty latent");
  const std::size_t batch = z.shape()[0];
  require_shape(z.shape(), config_.latent_shape(batch), "decode");
  Var<T> h;
  if (config_.bottleneck == Bottleneck::Dense) {
    h = relu(dense(z, w("dec.head"), b("dec.head")));
    Shape trunk{batch, config_.widths[3]};
    const auto t = config_.trunk_extent();
    for (std::size_t a = (config_.dims == Dimensionality::Three ? 0 : 1); a < 3; ++a) trunk.push_back(t[a]);
    h = reshape(h, std::move(trunk));
  } else {
    h = relu(conv(z, w("dec.head"), b("dec.head"), kHead));
  }
  for (int i = 1; i <= 3; ++i) {
    const std::string layer = "dec.up" + std::to_string(i);
    h = relu(conv_transpose(h, w(layer), b(layer), kDown));
  }
  const auto out = sigmoid(conv_transpose(h, w("dec.up4"), b("dec.up4"), kDown));
  return add_scalar(mul_scalar(out, T(1 + 2 * kOutputMargin)), T(-kOutputMargin));
}

template <class T>
ForwardResult<T> VaeModel<T>::forward(const Var<T>& x, std::uint64_t seed) const {
  auto post = encode(x);
  auto latent = reparameterize(post.mu, post.logvar, seed);
  auto raw = decode_unclamped(latent.z);
  auto recon = clamp(raw, T(0), T(1));
  return {std::move(recon), std::move(raw), std::move(latent)};
}

template <class T>
ForwardResult<T> VaeModel<T>::forward_mean(const Var<T>& x) const {
  auto post = encode(x);
  auto latent = reparameterize(post.mu, post.logvar, Tensor<T>(post.mu.shape()));
  auto raw = decode_unclamped(latent.mu);
  auto recon = clamp(raw, T(0), T(1));
  return {std::move(recon), std::move(raw), std::move(latent)};
}

template <class T>
VaeModel<T> model_from_parameters(const VaeConfig& config, std::vector<NamedParameter<T>> params) {
  config.validate();
  const auto specs = layer_specs(config);
  if (params.size() != specs.size() * 2) {
    throw DimensionError("expected " + std::to_string(specs.size() * 2) + " parameter tensors, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& wp = params[2 * i];
    const auto& bp = params[2 * i + 1];
    if (wp.name != specs[i].name + ".weight" || bp.name != specs[i].name + ".bias") {
      throw DimensionError("unexpected parameter '" + wp.name + "' / '" + bp.name + "' for layer " + specs[i].name);
    }
    require_shape(wp.var.shape(), specs[i].weight, wp.name.c_str());
    require_shape(bp.var.shape(), specs[i].bias, bp.name.c_str());
  }
  return VaeModel<T>(config, std::move(params));
}

template <class T>
LatentSample<T> reparameterize(const Var<T>& mu, const Var<T>& logvar, Tensor<T> epsilon) {
  if (mu.shape() != logvar.shape() || epsilon.shape() != mu.shape()) {
    throw DimensionError("reparameterize: mu " + to_string(mu.shape()) + ", logvar " + to_string(logvar.shape()) +
                         ", epsilon " + to_string(epsilon.shape()));
  }
  auto sigma = exp(mul_scalar(logvar, T{0.5}));
  auto z = add(mu, mul(sigma, Var<T>(epsilon)));
  return {mu, logvar, std::move(z), std::move(epsilon)};
}

template <class T>
LatentSample<T> reparameterize(const Var<T>& mu, const Var<T>& logvar, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> eps(mu.shape());
  for (auto& e : eps.data()) e = static_cast<T>(rng.normal());
  return reparameterize(mu, logvar, std::move(eps));
}

#define UAD_INSTANTIATE(T)                                                                              \
  template class VaeModel<T>;                                                                           \
  template VaeModel<T> model_from_parameters<T>(const VaeConfig&, std::vector<NamedParameter<T>>);      \
  template LatentSample<T> reparameterize<T>(const Var<T>&, const Var<T>&, Tensor<T>);                  \
  template LatentSample<T> reparameterize<T>(const Var<T>&, const Var<T>&, std::uint64_t);

UAD_INSTANTIATE(float)
UAD_INSTANTIATE(double)
#undef UAD_INSTANTIATE

}  // namespace uad
