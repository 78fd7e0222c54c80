#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uad/config.hpp"
#include "uad/loss.hpp"
#include "uad/vae.hpp"
#include "uad/volume.hpp"

namespace uad {

enum class Precision : std::uint8_t { F32, F64 };
std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 30;
  /// 0 picks the default: 8 volumes (3D) or 32 slices (2D).
  std::size_t batch_size = 0;
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
  Precision precision = Precision::F32;
  std::size_t cycle = kDefaultCycle;
  std::size_t window = kDefaultWindow;
  BetaMode beta_mode = BetaMode::Cyclical;
  double constant_beta = 1.0;
  /// Extent is overwritten from the data at train time.
  VaeConfig arch;
  /// Central axial slices per volume used by 2D models (0: default_slab).
  std::size_t slices = 0;
  std::string dataset;
  std::string checkpoint;
  std::string log;
  /// Checkpoint every k epochs (0: only at the end).
  std::size_t checkpoint_every = 0;

  std::size_t effective_batch() const;
  /// Throws UsageError on zero sizes, negative rates or T < 2.
  void validate() const;

  static TrainConfig from_kv(const KeyValueFile& kv);
  KeyValueFile to_kv() const;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
};

/// One bias-corrected Adam update of `param` at step t (1-based).
template <class T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamMoments<T>& state, std::uint64_t t, double lr,
                 const AdamOptions& opts = {});

/// Adam over every parameter of a model; parameters without a gradient
/// are treated as having a zero gradient.
template <class T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, double lr, AdamOptions opts = {});
  void step();
  std::uint64_t steps() const { return t_; }

 private:
  std::vector<Var<T>> params_;
  std::vector<AdamMoments<T>> state_;
  double lr_;
  AdamOptions opts_;
  std::uint64_t t_ = 0;
};

inline constexpr double kActivityThreshold = 0.01;

struct CollapseDiagnostics {
  std::vector<double> per_unit_kl;
  std::size_t active_units = 0;
  double threshold = kActivityThreshold;
};

/// Per-unit KL (batch mean, nats) of the encoder posterior over `samples`.
template <class T>
CollapseDiagnostics diagnose_collapse(const VaeModel<T>& model, const std::vector<Tensor<T>>& samples);

struct EpochSummary {
  std::size_t epoch = 0;
  double raw_recon = 0.0;
  double normalized_recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
  CollapseDiagnostics collapse;
};

template <class T>
struct TrainResult {
  VaeModel<T> model;
  std::vector<LossComponents> log;
  std::vector<EpochSummary> epochs;
};

/// Training inputs, one [1,1,D,H,W] (3D) or [1,1,H,W] (2D) tensor per sample.
template <class T>
std::vector<Tensor<T>> training_samples(const std::vector<Volume>& volumes, Dimensionality dims, std::size_t slices);

/// Stacks samples along the batch axis.
template <class T>
Tensor<T> make_batch(const std::vector<Tensor<T>>& samples, std::span<const std::size_t> indices);

using EpochCallback = std::function<void(const EpochSummary&)>;

/// Seeded training loop. Writes the per-step CSV log and checkpoints when
/// the corresponding paths are set. Throws NumericError on a non-finite loss.
template <class T>
TrainResult<T> train(const TrainConfig& config, const std::vector<Volume>& volumes,
                     const EpochCallback& on_epoch = {});

}  // namespace uad
