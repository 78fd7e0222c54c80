#pragma once

#include <cstdint>
#include <deque>
#include <string>

#include "uad/ops.hpp"

namespace uad {

inline constexpr std::size_t kDefaultCycle = 50;   // T
inline constexpr std::size_t kDefaultWindow = 10;  // L

/// Cyclical KL weight: with tau = t mod T, 2*tau/T on the ramp [0, T/2),
/// 1 on the plateau. Requires T >= 2.
double beta(std::uint64_t t, std::uint64_t cycle);

/// Mean absolute difference (reduction: mean over all elements).
template <class T>
Var<T> l1_reconstruction(const Var<T>& x, const Var<T>& x_hat);

/// Mean squared difference; the d=2 option of the plain ELBO.
template <class T>
Var<T> l2_reconstruction(const Var<T>& x, const Var<T>& x_hat);

/// Closed-form KL(N(mu, exp(logvar)) || N(0, I)): summed over latent
/// dimensions, averaged over the batch (leading axis).
template <class T>
Var<T> kl_divergence(const Var<T>& mu, const Var<T>& logvar);

/// Per-unit KL, batch-averaged. Unit = axis 1 (dense dimension or latent
/// channel); spatial sites of a channel are summed. Sums to kl_divergence.
template <class T>
std::vector<double> kl_per_unit(const Tensor<T>& mu, const Tensor<T>& logvar);

/// Plain ELBO: reconstruction (d=1 mean abs, d=2 mean squared) + KL.
template <class T>
Var<T> elbo_loss(const Var<T>& x, const Var<T>& x_hat, const Var<T>& mu, const Var<T>& logvar, int d);

/// Moving mean over the last L raw reconstruction values. Values live in
/// double regardless of model precision.
class MovingMean {
 public:
  explicit MovingMean(std::size_t window = kDefaultWindow, double floor = 1e-8);

  /// Mean of the window, or `fallback` when the window is empty; never below the floor.
  double value_or(double fallback) const;
  void push(double v);

  std::size_t window() const { return window_; }
  std::size_t filled() const { return values_.size(); }
  double floor() const { return floor_; }
  const std::deque<double>& values() const { return values_; }

 private:
  std::size_t window_;
  double floor_;
  std::deque<double> values_;
};

enum class BetaMode : std::uint8_t { Cyclical, Constant };

struct LossComponents {
  std::uint64_t t = 0;
  double beta = 0.0;
  double raw_recon = 0.0;
  double sigma = 0.0;
  double normalized_recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

std::string csv_header();
std::string to_csv(const LossComponents& c);

/// State of the collapse-robust objective: schedule position, Sigma window
/// and the components of the last evaluated step.
class LossState {
 public:
  explicit LossState(std::size_t cycle = kDefaultCycle, std::size_t window = kDefaultWindow,
                     BetaMode mode = BetaMode::Cyclical, double constant_beta = 1.0);

  std::uint64_t iteration() const { return t_; }
  std::size_t cycle() const { return cycle_; }
  BetaMode mode() const { return mode_; }
  double current_beta() const;
  const MovingMean& sigma() const { return sigma_; }
  const LossComponents& last() const { return last_; }

  /// Records a step: Sigma is taken from the window before `raw` is pushed,
  /// then t advances. Returns the components of this step.
  LossComponents advance(double raw_recon, double kl);

  std::string describe() const;

 private:
  std::size_t cycle_;
  BetaMode mode_;
  double constant_beta_;
  MovingMean sigma_;
  std::uint64_t t_ = 0;
  LossComponents last_;
};

template <class T>
struct RobustLoss {
  Var<T> total;
  LossComponents components;
};

/// total = l1(x, x_hat) / Sigma + beta(t) * KL. Sigma is a constant for the
/// gradient. Advances `state`.
template <class T>
RobustLoss<T> robust_loss(LossState& state, const Var<T>& x, const Var<T>& x_hat, const Var<T>& mu,
                          const Var<T>& logvar);

}  // namespace uad
