#include "uad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "uad/errors.hpp"
#include "uad/rng.hpp"

namespace uad {

namespace {

// Stream labels for Rng::derive; each stochastic choice draws from its own stream.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1'000'000;
constexpr std::uint64_t kEpsilonStream = 1ULL << 32;

constexpr std::size_t kDiagnosticSamples = 16;

}  // namespace

std::string to_string(Precision p) { return p == Precision::F64 ? "f64" : "f32"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ConfigError("precision must be f32 or f64, got '" + s + "'");
}

std::size_t TrainConfig::effective_batch() const {
  if (batch_size != 0) return batch_size;
  return arch.dims == Dimensionality::Three ? 8 : 32;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw UsageError("epochs must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning_rate must be >= 0");
  if (cycle < 2) throw UsageError("T must be at least 2");
  if (window == 0) throw UsageError("L must be positive");
  if (arch.latent_dim == 0) throw UsageError("latent_dim must be positive");
  for (auto w : arch.widths) {
    if (w == 0) throw UsageError("channel widths must be positive");
  }
}

TrainConfig TrainConfig::from_kv(const KeyValueFile& kv) {
  kv.require_known({"epochs", "batch_size", "learning_rate", "seed", "precision", "T", "L", "beta_mode", "beta",
                    "dimensionality", "bottleneck", "latent_dim", "channel_widths", "leaky_slope", "slices",
                    "dataset", "checkpoint", "log", "checkpoint_every"});
  TrainConfig c;
  c.epochs = kv.get_uint("epochs", c.epochs);
  c.batch_size = kv.get_uint("batch_size", c.batch_size);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.seed = kv.get_uint("seed", c.seed);
  c.precision = parse_precision(kv.get("precision", "f32"));
  c.cycle = kv.get_uint("T", c.cycle);
  c.window = kv.get_uint("L", c.window);
  const std::string mode = kv.get("beta_mode", "cyclical");
  if (mode == "cyclical") {
    c.beta_mode = BetaMode::Cyclical;
  } else if (mode == "constant") {
    c.beta_mode = BetaMode::Constant;
  } else {
    throw ConfigError("beta_mode must be cyclical or constant, got '" + mode + "'");
  }
  c.constant_beta = kv.get_double("beta", c.constant_beta);

  try {
    const auto dims = parse_dimensionality(kv.get("dimensionality", "3d"));
    const auto bottleneck = parse_bottleneck(kv.get("bottleneck", "dense"));
    c.arch = VaeConfig::make(dims, bottleneck, c.arch.extent);
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  if (c.arch.dims == Dimensionality::Two) c.arch.extent[0] = 1;
  c.arch.latent_dim = kv.get_uint("latent_dim", c.arch.latent_dim);
  const auto widths = kv.get_sizes("channel_widths", {c.arch.widths.begin(), c.arch.widths.end()});
  if (widths.size() != 4) throw ConfigError("channel_widths needs exactly 4 entries");
  std::copy(widths.begin(), widths.end(), c.arch.widths.begin());
  c.arch.leaky_slope = kv.get_double("leaky_slope", c.arch.leaky_slope);
  c.slices = kv.get_uint("slices", c.slices);
  c.dataset = kv.get("dataset", "");
  c.checkpoint = kv.get("checkpoint", "");
  c.log = kv.get("log", "");
  c.checkpoint_every = kv.get_uint("checkpoint_every", c.checkpoint_every);
  try {
    c.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

KeyValueFile TrainConfig::to_kv() const {
  KeyValueFile kv;
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch_size", std::to_string(effective_batch()));
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("seed", std::to_string(seed));
  kv.set("precision", to_string(precision));
  kv.set("T", std::to_string(cycle));
  kv.set("L", std::to_string(window));
  kv.set("beta_mode", beta_mode == BetaMode::Cyclical ? "cyclical" : "constant");
  kv.set("beta", format_double(constant_beta));
  kv.set("dimensionality", to_string(arch.dims));
  kv.set("bottleneck", to_string(arch.bottleneck));
  kv.set("latent_dim", std::to_string(arch.latent_dim));
  kv.set("channel_widths", join(arch.widths));
  kv.set("leaky_slope", format_double(arch.leaky_slope));
  kv.set("slices", std::to_string(slices));
  kv.set("dataset", dataset);
  kv.set("checkpoint", checkpoint);
  kv.set("log", log);
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  return kv;
}

template <class T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamMoments<T>& state, std::uint64_t t, double lr,
                 const AdamOptions& opts) {
  if (param.size() != grad.size()) throw DimensionError("adam: parameter and gradient sizes differ");
  if (t == 0) throw UsageError("adam: step counter is 1-based");
  if (state.m.empty()) {
    state.m.assign(param.size(), T{0});
    state.v.assign(param.size(), T{0});
  }
  const double c1 = 1.0 - std::pow(opts.beta1, double(t));
  const double c2 = 1.0 - std::pow(opts.beta2, double(t));
  const T b1 = T(opts.beta1), b2 = T(opts.beta2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
    state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
    const double m_hat = double(state.m[i]) / c1;
    const double v_hat = double(state.v[i]) / c2;
    param[i] = T(double(param[i]) - lr * m_hat / (std::sqrt(v_hat) + opts.eps));
  }
}

template <class T>
Adam<T>::Adam(std::vector<Var<T>> params, double lr, AdamOptions opts)
    : params_(std::move(params)), state_(params_.size()), lr_(lr), opts_(opts) {}

template <class T>
void Adam<T>::step() {
  ++t_;
  std::vector<T> zeros;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    std::span<T> values = p.mutable_value().data();
    std::span<const T> g;
    if (p.has_grad()) {
      g = p.grad().data();
    } else {
      zeros.assign(values.size(), T{0});
      g = zeros;
    }
    adam_update(values, g, state_[k], t_, lr_, opts_);
  }
}

template <class T>
CollapseDiagnostics diagnose_collapse(const VaeModel<T>& model, const std::vector<Tensor<T>>& samples) {
  CollapseDiagnostics d;
  d.per_unit_kl.assign(model.config().latent_units(), 0.0);
  if (samples.empty()) return d;
  NoGradGuard no_grad;
  for (const auto& s : samples) {
    const auto post = model.encode(Var<T>(s));
    const auto kl = kl_per_unit(post.mu.value(), post.logvar.value());
    const double n = double(s.dim(0));
    for (std::size_t u = 0; u < kl.size(); ++u) d.per_unit_kl[u] += kl[u] * n;
  }
  double count = 0.0;
  for (const auto& s : samples) count += double(s.dim(0));
  for (auto& k : d.per_unit_kl) {
    k /= count;
    if (k >= d.threshold) ++d.active_units;
  }
  return d;
}

template <class T>
std::vector<Tensor<T>> training_samples(const std::vector<Volume>& volumes, Dimensionality dims, std::size_t slices) {
  std::vector<Tensor<T>> out;
  for (const auto& v : volumes) {
    if (v.shape.size() != 3) throw DimensionError("training volume '" + v.id + "' is not 3D");
    if (v.shape != volumes.front().shape) {
      throw DimensionError("training volume '" + v.id + "' has shape " + to_string(v.shape) + ", expected " +
                           to_string(volumes.front().shape));
    }
    if (dims == Dimensionality::Three) {
      std::vector<T> data(v.voxels.begin(), v.voxels.end());
      out.emplace_back(Shape{1, 1, v.shape[0], v.shape[1], v.shape[2]}, std::move(data));
    } else {
      for (const auto& s : extract_slices(v, slices == 0 ? default_slab(v.shape[0]) : slices)) {
        std::vector<T> data(s.slice.voxels.begin(), s.slice.voxels.end());
        out.emplace_back(Shape{1, 1, v.shape[1], v.shape[2]}, std::move(data));
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> make_batch(const std::vector<Tensor<T>>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("empty batch");
  Shape shape = samples.at(indices[0]).shape();
  const std::size_t per = samples[indices[0]].size() / shape[0];
  std::size_t rows = 0;
  for (auto i : indices) rows += samples.at(i).dim(0);
  shape[0] = rows;
  std::vector<T> data;
  data.reserve(rows * per);
  for (auto i : indices) {
    const auto src = samples[i].data();
    if (src.size() / samples[i].dim(0) != per) throw DimensionError("batch samples differ in shape");
    data.insert(data.end(), src.begin(), src.end());
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template <class T>
TrainResult<T> train(const TrainConfig& config, const std::vector<Volume>& volumes, const EpochCallback& on_epoch) {
  config.validate();
  if (volumes.empty()) throw UsageError("training set is empty");

  VaeConfig arch = config.arch;
  const Shape& shape = volumes.front().shape;
  if (shape.size() != 3) throw DimensionError("training volumes must be 3D");
  arch.extent = {arch.dims == Dimensionality::Three ? shape[0] : 1, shape[1], shape[2]};
  arch.validate();

  const auto samples = training_samples<T>(volumes, arch.dims, config.slices);
  const std::size_t n = samples.size();
  const std::size_t batch = config.effective_batch();

  std::vector<Tensor<T>> probe;
  {
    std::vector<std::size_t> idx(std::min(n, kDiagnosticSamples));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    probe.push_back(make_batch(samples, idx));
  }

  TrainResult<T> result{VaeModel<T>(arch, Rng::derive(config.seed, kInitStream)), {}, {}};
  auto& model = result.model;
  std::vector<Var<T>> params;
  for (auto& p : model.parameters()) params.push_back(p.var);
  Adam<T> adam(params, config.learning_rate);
  LossState state(config.cycle, config.window, config.beta_mode, config.constant_beta);

  std::ofstream log;
  if (!config.log.empty()) {
    log.open(config.log, std::ios::trunc);
    if (!log) throw IoError("cannot write training log '" + config.log + "'");
    log << csv_header() << '\n';
  }

  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle(Rng::derive(config.seed, kShuffleStream + epoch));
    const auto order = shuffle.permutation(n);
    EpochSummary summary;
    summary.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Var<T> x(make_batch(samples, idx));

      const auto fwd = model.forward(x, Rng::derive(config.seed, kEpsilonStream + step));
      auto loss = robust_loss(state, x, fwd.unclamped, fwd.latent.mu, fwd.latent.logvar);
      const auto& c = loss.components;
      if (!std::isfinite(c.total) || !std::isfinite(c.raw_recon) || !std::isfinite(c.kl)) {
        if (log) log.flush();
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step) +
                           ": " + state.describe());
      }
      backward(loss.total);
      adam.step();
      model.zero_grad();

      if (log) log << to_csv(c) << '\n';
      result.log.push_back(c);
      summary.raw_recon += c.raw_recon;
      summary.normalized_recon += c.normalized_recon;
      summary.kl += c.kl;
      summary.total += c.total;
      ++batches;
      ++step;
    }
    summary.raw_recon /= double(batches);
    summary.normalized_recon /= double(batches);
    summary.kl /= double(batches);
    summary.total /= double(batches);
    summary.collapse = diagnose_collapse(model, probe);
    if (log) log.flush();

    if (!config.checkpoint.empty() && config.checkpoint_every != 0 && (epoch + 1) % config.checkpoint_every == 0) {
      save_checkpoint(model, config.checkpoint);
    }
    if (on_epoch) on_epoch(summary);
    result.epochs.push_back(std::move(summary));
  }
  if (!config.checkpoint.empty()) save_checkpoint(model, config.checkpoint);
  return result;
}

#define UAD_INSTANTIATE(T)                                                                                        \
  template void adam_update<T>(std::span<T>, std::span<const T>, AdamMoments<T>&, std::uint64_t, double,          \
                               const AdamOptions&);                                                              \
  template class Adam<T>;                                                                                         \
  template CollapseDiagnostics diagnose_collapse<T>(const VaeModel<T>&, const std::vector<Tensor<T>>&);           \
  template std::vector<Tensor<T>> training_samples<T>(const std::vector<Volume>&, Dimensionality, std::size_t);   \
  template Tensor<T> make_batch<T>(const std::vector<Tensor<T>>&, std::span<const std::size_t>);                  \
  template TrainResult<T> train<T>(const TrainConfig&, const std::vector<Volume>&, const EpochCallback&);

UAD_INSTANTIATE(float)
UAD_INSTANTIATE(double)

#undef UAD_INSTANTIATE

}  // namespace uad
