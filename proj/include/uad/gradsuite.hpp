#pragma once

#include <string>
#include <vector>

#include "uad/gradcheck.hpp"
#include "uad/vae.hpp"

namespace uad {

/// Names of every differentiable primitive covered by the suite.
std::vector<std::string> registered_primitives();

/// Checks every primitive on fixed random inputs.
std::vector<GradCheckReport> primitive_suite(const GradCheckOptions& opts = {});

/// Forward pass plus collapse-robust loss of a small model, checked with
/// respect to every parameter tensor.
GradCheckReport architecture_check(Dimensionality dims, Bottleneck bottleneck, const GradCheckOptions& opts = {});

/// Primitives followed by the four architectures.
std::vector<GradCheckReport> gradient_suite(const GradCheckOptions& opts = {});

}  // namespace uad
