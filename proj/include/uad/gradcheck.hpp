#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uad/ops.hpp"

namespace uad {

struct GradCheckReport {
  std::string name;
  /// One entry per input: max |analytic - numeric| over the checked
  /// coordinates, divided by the largest gradient magnitude of that input.
  std::vector<double> max_rel_error;
  double tolerance = 0.0;
  bool pass = false;

  double worst() const;
};

using GradFunction = std::function<Var<double>(const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Upper bound on coordinates perturbed per input; 0 checks all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 7;
};

/// Compares reverse-mode gradients of `f` against central differences.
/// A non-scalar output is contracted with a fixed random tensor first so
/// every output element contributes.
GradCheckReport grad_check(const std::string& name, const GradFunction& f,
                           const std::vector<Tensor<double>>& inputs, const GradCheckOptions& opts = {});

}  // namespace uad
