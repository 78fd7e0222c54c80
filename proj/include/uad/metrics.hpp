#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uad/tensor.hpp"

namespace uad {

/// Binary voxel mask with grid shape (rank 2 or 3). Bytes are 0 or 1.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  explicit Mask(Shape s) : shape(std::move(s)), bits(numel(shape), 0) {}
  Mask(Shape s, std::vector<std::uint8_t> b);

  std::size_t size() const { return bits.size(); }
  std::size_t count() const;
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  bool operator==(const Mask&) const = default;
};

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
};

/// Counts over the whole grid, or over voxels where `domain` is set.
ConfusionCounts confusion(const Mask& pred, const Mask& truth, const Mask* domain = nullptr);

/// 2tp / (2tp + fp + fn); 1 when both masks are empty.
double dice(const ConfusionCounts& c);
double dice(const Mask& pred, const Mask& truth, const Mask* domain = nullptr);

/// tp / (tp + fn); nullopt when the truth is empty.
std::optional<double> sensitivity(const ConfusionCounts& c);
/// tn / (tn + fp); nullopt when the truth covers the whole domain.
std::optional<double> specificity(const ConfusionCounts& c);

/// Mean |x - x_hat| over the domain (all voxels when domain is null).
double mae(std::span<const float> x, std::span<const float> x_hat, const Mask* domain = nullptr);

enum class Connectivity : std::uint8_t {
  Face,  // 4 in 2D, 6 in 3D
  Full,  // 8 in 2D, 26 in 3D
};

struct Components {
  /// 0 = background, otherwise 1..count.
  std::vector<std::uint32_t> labels;
  /// sizes[k] is the voxel count of label k+1.
  std::vector<std::size_t> sizes;

  std::size_t count() const { return sizes.size(); }
};

/// Labels in raster order of each component's first voxel.
Components connected_components(const Mask& mask, Connectivity connectivity);

/// Mean and population standard deviation.
struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};
MeanStd mean_std(std::span<const double> values);

}  // namespace uad
