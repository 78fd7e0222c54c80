#include "uad/loss.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace uad {

double beta(std::uint64_t t, std::uint64_t cycle) {
  if (cycle < 2) throw UsageError("beta schedule needs a cycle length >= 2");
  const std::uint64_t tau = t % cycle;
  // tau < T/2  <=>  2*tau < T, kept in integers so the plateau edge is exact.
  if (2 * tau < cycle) return static_cast<double>(2 * tau) / static_cast<double>(cycle);
  return 1.0;
}

template <class T>
Var<T> l1_reconstruction(const Var<T>& x, const Var<T>& x_hat) {
  return mean(abs(sub(x, x_hat)));
}

template <class T>
Var<T> l2_reconstruction(const Var<T>& x, const Var<T>& x_hat) {
  return mean(square(sub(x, x_hat)));
}

template <class T>
Var<T> kl_divergence(const Var<T>& mu, const Var<T>& logvar) {
  if (mu.shape() != logvar.shape()) {
    throw DimensionError("kl_divergence: mu " + to_string(mu.shape()) + " vs logvar " + to_string(logvar.shape()));
  }
  const T batch = static_cast<T>(mu.shape()[0]);
  // 0.5 * sum(mu^2 + e^logvar - logvar - 1) / batch
  auto terms = sub(add(square(mu), exp(logvar)), logvar);
  return mul_scalar(add_scalar(sum(terms), -static_cast<T>(mu.size())), T{0.5} / batch);
}

template <class T>
std::vector<double> kl_per_unit(const Tensor<T>& mu, const Tensor<T>& logvar) {
  if (mu.shape() != logvar.shape() || mu.rank() < 2) {
    throw DimensionError("kl_per_unit: mu " + to_string(mu.shape()) + " vs logvar " + to_string(logvar.shape()));
  }
  const std::size_t batch = mu.dim(0);
  const std::size_t units = mu.dim(1);
  const std::size_t sites = mu.size() / (batch * units);
  std::vector<double> out(units, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t u = 0; u < units; ++u) {
      const std::size_t base = (b * units + u) * sites;
      for (std::size_t s = 0; s < sites; ++s) {
        const double m = mu[base + s];
        const double lv = logvar[base + s];
        out[u] += 0.5 * (m * m + std::exp(lv) - lv - 1.0);
      }
    }
  }
  for (auto& v : out) v /= static_cast<double>(batch);
  return out;
}

template <class T>
Var<T> elbo_loss(const Var<T>& x, const Var<T>& x_hat, const Var<T>& mu, const Var<T>& logvar, int d) {
  if (d != 1 && d != 2) throw UsageError("elbo_loss: reconstruction norm must be 1 or 2, got " + std::to_string(d));
  auto recon = d == 1 ? l1_reconstruction(x, x_hat) : l2_reconstruction(x, x_hat);
  return add(recon, kl_divergence(mu, logvar));
}

MovingMean::MovingMean(std::size_t window, double floor) : window_(window), floor_(floor) {
  if (window == 0) throw UsageError("moving-mean window must be positive");
  if (!(floor > 0.0)) throw UsageError("moving-mean floor must be positive");
}

double MovingMean::value_or(double fallback) const {
  double m = fallback;
  if (!values_.empty()) {
    // Shifted accumulation: a constant window yields its value exactly.
    const double ref = values_.front();
    double dev = 0.0;
    for (double v : values_) dev += v - ref;
    m = ref + dev / static_cast<double>(values_.size());
  }
  return std::max(m, floor_);
}

void MovingMean::push(double v) {
  values_.push_back(v);
  if (values_.size() > window_) values_.pop_front();
}

std::string csv_header() { return "t,beta,raw_recon,sigma,normalized_recon,kl,total"; }

std::string to_csv(const LossComponents& c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<unsigned long long>(c.t),
                c.beta, c.raw_recon, c.sigma, c.normalized_recon, c.kl, c.total);
  return buf;
}

LossState::LossState(std::size_t cycle, std::size_t window, BetaMode mode, double constant_beta)
    : cycle_(cycle), mode_(mode), constant_beta_(constant_beta), sigma_(window) {
  if (cycle < 2) throw UsageError("beta cycle length must be >= 2");
  if (!(constant_beta >= 0.0 && constant_beta <= 1.0)) throw UsageError("constant beta must lie in [0,1]");
}

double LossState::current_beta() const {
  return mode_ == BetaMode::Cyclical ? beta(t_, cycle_) : constant_beta_;
}

LossComponents LossState::advance(double raw_recon, double kl) {
  LossComponents c;
  c.t = t_;
  c.beta = current_beta();
  c.raw_recon = raw_recon;
  c.sigma = sigma_.value_or(raw_recon);
  c.normalized_recon = raw_recon / c.sigma;
  c.kl = kl;
  c.total = c.normalized_recon + c.beta * kl;
  sigma_.push(raw_recon);
  ++t_;
  last_ = c;
  return c;
}

std::string LossState::describe() const {
  std::ostringstream os;
  os << "t=" << t_ << " cycle=" << cycle_ << " mode=" << (mode_ == BetaMode::Cyclical ? "cyclical" : "constant")
     << " window=[";
  for (std::size_t i = 0; i < sigma_.values().size(); ++i) os << (i ? "," : "") << sigma_.values()[i];
  os << "] last: " << csv_header() << " = " << to_csv(last_);
  return os.str();
}

template <class T>
RobustLoss<T> robust_loss(LossState& state, const Var<T>& x, const Var<T>& x_hat, const Var<T>& mu,
                          const Var<T>& logvar) {
  auto recon = l1_reconstruction(x, x_hat);
  auto kl = kl_divergence(mu, logvar);
  const LossComponents c = state.advance(static_cast<double>(recon.item()), static_cast<double>(kl.item()));
  // Sigma and beta enter as plain scalars, so no gradient flows through them.
  auto total = add(mul_scalar(recon, static_cast<T>(1.0 / c.sigma)), mul_scalar(kl, static_cast<T>(c.beta)));
  return {std::move(total), c};
}

#define UAD_INSTANTIATE(T)                                                                           \
  template Var<T> l1_reconstruction<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> l2_reconstruction<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> kl_divergence<T>(const Var<T>&, const Var<T>&);                                    \
  template std::vector<double> kl_per_unit<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Var<T> elbo_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int);     \
  template RobustLoss<T> robust_loss<T>(LossState&, const Var<T>&, const Var<T>&, const Var<T>&,      \
                                        const Var<T>&);

UAD_INSTANTIATE(float)
UAD_INSTANTIATE(double)
#undef UAD_INSTANTIATE

}  // namespace uad
