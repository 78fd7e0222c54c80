#include "uad/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "uad/rng.hpp"

namespace uad {

double GradCheckReport::worst() const {
  return max_rel_error.empty() ? 0.0 : *std::max_element(max_rel_error.begin(), max_rel_error.end());
}

GradCheckReport grad_check(const std::string& name, const GradFunction& f,
                           const std::vector<Tensor<double>>& inputs, const GradCheckOptions& opts) {
  Rng rng(opts.seed);
  Tensor<double> projection;

  auto objective = [&](const std::vector<Var<double>>& vars) {
    Var<double> out = f(vars);
    if (out.size() == 1) return out;
    if (projection.empty()) {
      projection = Tensor<double>(out.shape());
      for (auto& v : projection.data()) v = rng.uniform(-1.0, 1.0);
    }
    return sum(mul(out, Var<double>(projection)));
  };

  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.emplace_back(t, true);
  Var<double> root = objective(vars);
  backward(root);

  GradCheckReport report;
  report.name = name;
  report.tolerance = opts.tolerance;

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> analytic = vars[i].has_grad() ? vars[i].grad() : Tensor<double>(inputs[i].shape());

    std::vector<std::size_t> coords;
    if (opts.max_coords == 0 || opts.max_coords >= inputs[i].size()) {
      coords.resize(inputs[i].size());
      for (std::size_t c = 0; c < coords.size(); ++c) coords[c] = c;
    } else {
      coords = rng.permutation(inputs[i].size());
      coords.resize(opts.max_coords);
    }

    double max_dev = 0.0;
    double scale = 0.0;
    std::vector<Tensor<double>> probe = inputs;
    for (std::size_t c : coords) {
      const double orig = probe[i][c];
      auto eval = [&](double v) {
        probe[i][c] = v;
        std::vector<Var<double>> pv;
        for (const auto& t : probe) pv.emplace_back(t, false);
        NoGradGuard guard;
        return objective(pv).item();
      };
      const double numeric = (eval(orig + opts.step) - eval(orig - opts.step)) / (2.0 * opts.step);
      probe[i][c] = orig;
      max_dev = std::max(max_dev, std::abs(numeric - analytic[c]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[c])});
    }
    report.max_rel_error.push_back(scale > 0.0 ? max_dev / scale : max_dev);
  }
  report.pass = std::all_of(report.max_rel_error.begin(), report.max_rel_error.end(),
                            [&](double e) { return std::isfinite(e) && e < opts.tolerance; });
  return report;
}

}  // namespace uad
