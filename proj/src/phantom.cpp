#include <algorithm>
#include <cmath>
#include <cstdio>

#include "uad/config.hpp"
#include "uad/errors.hpp"
#include "uad/rng.hpp"
#include "uad/volume.hpp"

namespace uad {

namespace {

void require_range(const std::array<double, 2>& r, const char* name) {
  if (!(r[0] <= r[1])) throw UsageError(std::string("phantom spec: inverted range for ") + name);
}

/// In-place separable Gaussian blur of a (D,H,W) grid, zero boundary.
void gaussian_blur(std::vector<double>& grid, const std::array<std::size_t, 3>& shape, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += taps[static_cast<std::size_t>(i + radius)];
  }
  for (auto& t : taps) t /= norm;

  const std::array<std::size_t, 3> stride{shape[1] * shape[2], shape[2], 1};
  std::vector<double> line;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const std::size_t len = shape[axis];
    line.resize(len);
    const std::size_t a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (std::size_t i = 0; i < shape[a1]; ++i) {
      for (std::size_t j = 0; j < shape[a2]; ++j) {
        const std::size_t base = i * stride[a1] + j * stride[a2];
        for (std::size_t k = 0; k < len; ++k) line[k] = grid[base + k * stride[axis]];
        for (std::size_t k = 0; k < len; ++k) {
          double acc = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            const long src = long(k) + t;
            if (src >= 0 && src < long(len)) acc += taps[std::size_t(t + radius)] * line[std::size_t(src)];
          }
          grid[base + k * stride[axis]] = acc;
        }
      }
    }
  }
}

double smoothstep_edge(double r, double softness) {
  // 1 well inside (r < 1), 0 outside, logistic ramp of width `softness`.
  return 1.0 / (1.0 + std::exp((r - 1.0) / softness));
}

}  // namespace

void PhantomSpec::validate() const {
  for (auto e : shape) {
    if (e == 0) throw UsageError("phantom spec: zero extent");
  }
  require_range(axis_fraction, "axis_fraction");
  require_range(background, "background");
  require_range(tissue, "tissue");
  require_range(lesion_radius, "lesion_radius");
  require_range(lesion_contrast, "lesion_contrast");
  if (lesion_count[0] > lesion_count[1] || lesion_count[0] == 0) throw UsageError("phantom spec: bad lesion_count range");
  if (axis_fraction[1] >= 0.5 || axis_fraction[0] <= 0.0) throw UsageError("phantom spec: axis_fraction must lie in (0, 0.5)");
  if (!(lesion_contrast[0] > noise_amplitude)) {
    throw UsageError("phantom spec: lesion contrast must exceed the noise amplitude");
  }
}

namespace {

template <class V, std::size_t N>
std::array<V, N> fixed(const std::vector<V>& v, const char* key) {
  if (v.size() != N) throw ConfigError(std::string("phantom spec key '") + key + "' needs " + std::to_string(N) + " values");
  std::array<V, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

template <class A>
std::string pair_string(const A& a) {
  if constexpr (std::is_floating_point_v<typename A::value_type>) {
    std::string s;
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + format_double(a[i]);
    return s;
  } else {
    return join(a);
  }
}

}  // namespace

PhantomSpec phantom_spec_from_kv(const KeyValueFile& kv) {
  kv.require_known({"shape", "axis_fraction", "center_jitter", "background", "tissue", "core_fraction",
                    "core_darkening", "noise_amplitude", "correlation_length", "lesion_count", "lesion_radius",
                    "lesion_contrast", "seed"});
  PhantomSpec s;
  s.shape = fixed<std::size_t, 3>(kv.get_sizes("shape", {s.shape.begin(), s.shape.end()}), "shape");
  s.axis_fraction = fixed<double, 2>(kv.get_doubles("axis_fraction", {s.axis_fraction.begin(), s.axis_fraction.end()}), "axis_fraction");
  s.center_jitter = kv.get_double("center_jitter", s.center_jitter);
  s.background = fixed<double, 2>(kv.get_doubles("background", {s.background.begin(), s.background.end()}), "background");
  s.tissue = fixed<double, 2>(kv.get_doubles("tissue", {s.tissue.begin(), s.tissue.end()}), "tissue");
  s.core_fraction = kv.get_double("core_fraction", s.core_fraction);
  s.core_darkening = kv.get_double("core_darkening", s.core_darkening);
  s.noise_amplitude = kv.get_double("noise_amplitude", s.noise_amplitude);
  s.correlation_length = kv.get_double("correlation_length", s.correlation_length);
  s.lesion_count = fixed<std::size_t, 2>(kv.get_sizes("lesion_count", {s.lesion_count.begin(), s.lesion_count.end()}), "lesion_count");
  s.lesion_radius = fixed<double, 2>(kv.get_doubles("lesion_radius", {s.lesion_radius.begin(), s.lesion_radius.end()}), "lesion_radius");
  s.lesion_contrast = fixed<double, 2>(kv.get_doubles("lesion_contrast", {s.lesion_contrast.begin(), s.lesion_contrast.end()}), "lesion_contrast");
  s.seed = kv.get_uint("seed", s.seed);
  try {
    s.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

KeyValueFile phantom_spec_to_kv(const PhantomSpec& s) {
  KeyValueFile kv;
  kv.set("shape", join(s.shape));
  kv.set("axis_fraction", pair_string(s.axis_fraction));
  kv.set("center_jitter", format_double(s.center_jitter));
  kv.set("background", pair_string(s.background));
  kv.set("tissue", pair_string(s.tissue));
  kv.set("core_fraction", format_double(s.core_fraction));
  kv.set("core_darkening", format_double(s.core_darkening));
  kv.set("noise_amplitude", format_double(s.noise_amplitude));
  kv.set("correlation_length", format_double(s.correlation_length));
  kv.set("lesion_count", join(s.lesion_count));
  kv.set("lesion_radius", pair_string(s.lesion_radius));
  kv.set("lesion_contrast", pair_string(s.lesion_contrast));
  kv.set("seed", std::to_string(s.seed));
  return kv;
}

Volume generate_phantom(const PhantomSpec& spec, bool lesioned) {
  spec.validate();
  Rng rng(spec.seed);
  const auto [D, H, W] = spec.shape;
  const std::array<double, 3> extent{double(D), double(H), double(W)};

  std::array<double, 3> centre{}, axes{};
  for (std::size_t a = 0; a < 3; ++a) {
    centre[a] = (extent[a] - 1.0) / 2.0 + rng.uniform(-spec.center_jitter, spec.center_jitter);
    axes[a] = extent[a] * rng.uniform(spec.axis_fraction[0], spec.axis_fraction[1]);
  }
  const double tissue = rng.uniform(spec.tissue[0], spec.tissue[1]);
  const double background = rng.uniform(spec.background[0], spec.background[1]);
  const double core_scale = spec.core_fraction * rng.uniform(0.85, 1.15);

  std::vector<double> noise(D * H * W);
  for (auto& n : noise) n = rng.normal();
  gaussian_blur(noise, spec.shape, spec.correlation_length / 2.0);
  double sq = 0.0;
  for (double n : noise) sq += n * n;
  const double rms = std::sqrt(sq / static_cast<double>(noise.size()));
  if (rms > 0.0) {
    for (auto& n : noise) n /= rms;
  }

  Volume v("", Shape{D, H, W});
  std::vector<double> intensity(D * H * W);
  std::vector<double> radius(D * H * W);
  for (std::size_t z = 0; z < D; ++z)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t i = (z * H + y) * W + x;
        const double dz = (double(z) - centre[0]) / axes[0];
        const double dy = (double(y) - centre[1]) / axes[1];
        const double dx = (double(x) - centre[2]) / axes[2];
        const double r = std::sqrt(dz * dz + dy * dy + dx * dx);
        radius[i] = r;
        const double inside = smoothstep_edge(r, 0.03);
        const double core = smoothstep_edge(r / core_scale, 0.08);
        const double brain = tissue - spec.core_darkening * core + spec.noise_amplitude * noise[i];
        intensity[i] = background + inside * (brain - background);
        v.brain.bits[i] = r <= 1.0 ? 1 : 0;
      }

  v.lesion = Mask(v.shape);
  std::size_t placed = 0;
  if (lesioned) {
    const auto n_lesions = spec.lesion_count[0] + rng.below(spec.lesion_count[1] - spec.lesion_count[0] + 1);
    for (std::size_t l = 0; l < n_lesions; ++l) {
      // Centre inside the white-matter shell: away from the rim and the dark core.
      std::array<double, 3> c{};
      for (int attempt = 0; attempt < 1000; ++attempt) {
        for (std::size_t a = 0; a < 3; ++a) c[a] = centre[a] + rng.uniform(-0.7, 0.7) * axes[a];
        double rr = 0.0;
        for (std::size_t a = 0; a < 3; ++a) rr += ((c[a] - centre[a]) / axes[a]) * ((c[a] - centre[a]) / axes[a]);
        rr = std::sqrt(rr);
        if (rr < 0.7 && rr > core_scale + 0.1) break;
      }
      const double rad = rng.uniform(spec.lesion_radius[0], spec.lesion_radius[1]);
      const double contrast = rng.uniform(spec.lesion_contrast[0], spec.lesion_contrast[1]);
      const long lo_z = std::max(0L, long(std::floor(c[0] - rad - 2))), hi_z = std::min(long(D) - 1, long(std::ceil(c[0] + rad + 2)));
      const long lo_y = std::max(0L, long(std::floor(c[1] - rad - 2))), hi_y = std::min(long(H) - 1, long(std::ceil(c[1] + rad + 2)));
      const long lo_x = std::max(0L, long(std::floor(c[2] - rad - 2))), hi_x = std::min(long(W) - 1, long(std::ceil(c[2] + rad + 2)));
      for (long z = lo_z; z <= hi_z; ++z)
        for (long y = lo_y; y <= hi_y; ++y)
          for (long x = lo_x; x <= hi_x; ++x) {
            const std::size_t i = (std::size_t(z) * H + std::size_t(y)) * W + std::size_t(x);
            const double d = std::sqrt((z - c[0]) * (z - c[0]) + (y - c[1]) * (y - c[1]) + (x - c[2]) * (x - c[2])) / rad;
            const double profile = smoothstep_edge(d, 0.08);
            if (profile < 1e-3) continue;
            intensity[i] += contrast * profile;
            if (profile >= 0.5 && v.brain[i]) v.lesion->bits[i] = 1;
          }
      ++placed;
    }
  }

  for (std::size_t i = 0; i < intensity.size(); ++i) {
    v.voxels[i] = static_cast<float>(std::clamp(intensity[i], 0.0, 1.0));
  }
  v.metadata["generator"] = "phantom-v1";
  v.metadata["seed"] = std::to_string(spec.seed);
  v.metadata["lesions"] = std::to_string(placed);
  return v;
}

std::vector<Volume> generate_dataset(const PhantomSpec& spec, std::size_t n, bool lesioned) {
  std::vector<Volume> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PhantomSpec item = spec;
    item.seed = Rng::derive(spec.seed, (lesioned ? 1'000'000u : 0u) + i);
    Volume v = generate_phantom(item, lesioned);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04zu", lesioned ? "lesion" : "healthy", i);
    v.id = id;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace uad
