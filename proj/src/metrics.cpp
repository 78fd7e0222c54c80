#include "uad/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace uad {

namespace {

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace

Mask::Mask(Shape s, std::vector<std::uint8_t> b) : shape(std::move(s)), bits(std::move(b)) {
  if (bits.size() != numel(shape)) throw DimensionError("mask data does not match shape " + to_string(shape));
  for (auto& v : bits) v = v ? 1 : 0;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

ConfusionCounts confusion(const Mask& pred, const Mask& truth, const Mask* domain) {
  require_same(pred.shape, truth.shape, "confusion");
  if (domain) require_same(pred.shape, domain->shape, "confusion domain");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (domain && !(*domain)[i]) continue;
    const bool p = pred[i];
    const bool t = truth[i];
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dice(const ConfusionCounts& c) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double dice(const Mask& pred, const Mask& truth, const Mask* domain) { return dice(confusion(pred, truth, domain)); }

std::optional<double> sensitivity(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

std::optional<double> specificity(const ConfusionCounts& c) {
  if (c.tn + c.fp == 0) return std::nullopt;
  return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

double mae(std::span<const float> x, std::span<const float> x_hat, const Mask* domain) {
  if (x.size() != x_hat.size()) throw DimensionError("mae: length mismatch");
  if (domain && domain->size() != x.size()) throw DimensionError("mae: domain length mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (domain && !(*domain)[i]) continue;
    acc += std::abs(static_cast<double>(x[i]) - static_cast<double>(x_hat[i]));
    ++n;
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

Components connected_components(const Mask& mask, Connectivity connectivity) {
  const std::size_t rank = mask.shape.size();
  if (rank != 2 && rank != 3) throw DimensionError("connected_components: mask must be rank 2 or 3");
  const std::size_t D = rank == 3 ? mask.shape[0] : 1;
  const std::size_t H = mask.shape[rank - 2];
  const std::size_t W = mask.shape[rank - 1];

  std::vector<std::array<int, 3>> offsets;
  const int dz_range = rank == 3 ? 1 : 0;
  for (int dz = -dz_range; dz <= dz_range; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (manhattan == 0) continue;
        if (connectivity == Connectivity::Face && manhattan != 1) continue;
        offsets.push_back({dz, dy, dx});
      }

  Components out;
  out.labels.assign(mask.size(), 0);
  std::vector<std::size_t> queue;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask[seed] || out.labels[seed] != 0) continue;
    const auto label = static_cast<std::uint32_t>(out.sizes.size() + 1);
    out.labels[seed] = label;
    queue.assign(1, seed);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t idx = queue[head];
      const auto z = static_cast<long>(idx / (H * W));
      const auto y = static_cast<long>((idx / W) % H);
      const auto x = static_cast<long>(idx % W);
      for (const auto& o : offsets) {
        const long nz = z + o[0], ny = y + o[1], nx = x + o[2];
        if (nz < 0 || ny < 0 || nx < 0 || nz >= long(D) || ny >= long(H) || nx >= long(W)) continue;
        const auto n = static_cast<std::size_t>((nz * long(H) + ny) * long(W) + nx);
        if (mask[n] && out.labels[n] == 0) {
          out.labels[n] = label;
          queue.push_back(n);
        }
      }
    }
    out.sizes.push_back(queue.size());
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  double acc = 0.0;
  for (double v : values) acc += v;
  r.mean = acc / static_cast<double>(r.n);
  double var = 0.0;
  for (double v : values) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / static_cast<double>(r.n));
  return r;
}

}  // namespace uad
