#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uad/ops.hpp"

namespace uad {

enum class Dimensionality : std::uint8_t { Two = 2, Three = 3 };
enum class Bottleneck : std::uint8_t { Spatial = 0, Dense = 1 };

std::string to_string(Dimensionality d);
std::string to_string(Bottleneck b);
Dimensionality parse_dimensionality(const std::string& s);
Bottleneck parse_bottleneck(const std::string& s);

struct VaeConfig {
  Dimensionality dims = Dimensionality::Three;
  Bottleneck bottleneck = Bottleneck::Dense;
  /// N: dense latent size, or latent channels for the spatial bottleneck.
  std::size_t latent_dim = 128;
  /// (D,H,W). D is 1 for 2D models.
  std::array<std::size_t, 3> extent{64, 64, 64};
  std::array<std::size_t, 4> widths{32, 64, 128, 256};
  double leaky_slope = 0.2;

  /// Defaults for one of the four architectures: N=128 dense, N=16 spatial.
  static VaeConfig make(Dimensionality dims, Bottleneck bottleneck, std::array<std::size_t, 3> extent);

  /// Throws UsageError if extents are not divisible by 16 or any size is 0.
  void validate() const;

  Shape input_shape(std::size_t batch) const;
  Shape latent_shape(std::size_t batch) const;
  /// Extents after the four stride-2 blocks.
  std::array<std::size_t, 3> trunk_extent() const;
  std::size_t spatial_rank() const { return dims == Dimensionality::Three ? 3 : 2; }
  /// Number of latent units diagnosed for collapse (N for both bottlenecks).
  std::size_t latent_units() const { return latent_dim; }

  bool operator==(const VaeConfig&) const = default;
};

template <class T>
struct NamedParameter {
  std::string name;
  Var<T> var;
};

template <class T>
struct Posterior {
  Var<T> mu;
  Var<T> logvar;
};

/// z = mu + exp(0.5 logvar) * epsilon. Gradients reach mu and logvar only.
template <class T>
struct LatentSample {
  Var<T> mu;
  Var<T> logvar;
  Var<T> z;
  Tensor<T> epsilon;
};

template <class T>
struct ForwardResult {
  /// Decoder output clamped to [0,1].
  Var<T> reconstruction;
  /// Stretched sigmoid before the clamp; the training loss reads this one.
  Var<T> unclamped;
  LatentSample<T> latent;
};

/// The output sigmoid is stretched to (-m, 1+m). A plain sigmoid only
/// approaches the zero background asymptotically; under an L1 loss that
/// pull never fades, and training drifts into saturation before the decoder
/// learns any shape. Training reads the stretched output, reconstructions
/// are clamped to [0,1].
inline constexpr double kOutputMargin = 0.05;

/// Encoder: four k4/s2/p1 conv blocks with leaky ReLU, then mu and logvar
/// heads reading the same trunk output. Decoder: one head layer and four
/// transposed-conv blocks, ReLU between, clamped stretched sigmoid on the output.
/// Heads are 3x3(x3) convolutions for the spatial bottleneck and
/// fully-connected for the dense one.
template <class T>
class VaeModel {
 public:
  VaeModel(const VaeConfig& config, std::uint64_t seed);

  VaeModel(VaeModel&&) noexcept = default;
  VaeModel& operator=(VaeModel&&) noexcept = default;
  VaeModel(const VaeModel&) = delete;
  VaeModel& operator=(const VaeModel&) = delete;

  /// Deep copy with independent parameter storage.
  VaeModel clone() const;

  const VaeConfig& config() const { return config_; }

  Posterior<T> encode(const Var<T>& x) const;
  Var<T> decode(const Var<T>& z) const;
  /// Decoder output before the final clamp, in (-kOutputMargin, 1 + kOutputMargin).
  Var<T> decode_unclamped(const Var<T>& z) const;
  ForwardResult<T> forward(const Var<T>& x, std::uint64_t seed) const;
  /// Deterministic pass with z = mu.
  ForwardResult<T> forward_mean(const Var<T>& x) const;

  std::vector<NamedParameter<T>>& parameters() { return params_; }
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  Var<T>& parameter(const std::string& name);
  const Var<T>& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  /// Zeroes weight and bias of a layer ("enc.mu", "dec.up4", ...).
  void zero_layer(const std::string& layer);
  void zero_grad();

  /// Layer names in evaluation order.
  static std::vector<std::string> layer_names();

 private:
  VaeModel(const VaeConfig& config, std::vector<NamedParameter<T>> params)
      : config_(config), params_(std::move(params)) {}

  const Var<T>& w(const std::string& layer) const { return parameter(layer + ".weight"); }
  const Var<T>& b(const std::string& layer) const { return parameter(layer + ".bias"); }

  VaeConfig config_;
  std::vector<NamedParameter<T>> params_;

  template <class U>
  friend VaeModel<U> model_from_parameters(const VaeConfig&, std::vector<NamedParameter<U>>);
};

/// Builds a model from an explicit parameter set; validates names and shapes
/// against a freshly initialized model of the same config.
template <class T>
VaeModel<T> model_from_parameters(const VaeConfig& config, std::vector<NamedParameter<T>> params);

template <class T>
LatentSample<T> reparameterize(const Var<T>& mu, const Var<T>& logvar, std::uint64_t seed);
template <class T>
LatentSample<T> reparameterize(const Var<T>& mu, const Var<T>& logvar, Tensor<T> epsilon);

/// Checkpoint file: "UADM", u32 version, config, then named f32 tensors.
/// Parameters are stored as f32 whatever the model precision.
template <class T>
void save_checkpoint(const VaeModel<T>& model, const std::string& path);
template <class T>
VaeModel<T> load_checkpoint(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace uad
