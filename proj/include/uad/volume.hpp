#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uad/metrics.hpp"

namespace uad {

/// Scalar image on a (D,H,W) grid (or (H,W) for single slices); axis 0 is
/// the axial slice index. Intensities are f32 in [0,1].
struct Volume {
  std::string id;
  Shape shape;
  std::vector<float> spacing;
  std::vector<float> voxels;
  Mask brain;
  std::optional<Mask> lesion;
  std::map<std::string, std::string> metadata;

  Volume() = default;
  Volume(std::string id, Shape shape);

  std::size_t size() const { return voxels.size(); }
  bool has_lesions() const { return lesion && lesion->count() > 0; }
  /// Throws DimensionError / UsageError on inconsistent grids or out-of-range voxels.
  void validate() const;

  bool operator==(const Volume&) const = default;
};

inline constexpr std::uint32_t kVolumeVersion = 1;

/// UADV: "UADV", u32 version, u32 rank, u32 extents, f32 payload, then
/// tagged sections (u8 tag): 1 brain mask, 2 lesion mask (u8 per voxel),
/// 3 id, 4 spacing (f32 per axis), 5 metadata (u32 count, key/value
/// strings), 0 end. All integers and floats little-endian.
void write_volume(const Volume& v, const std::string& path);
Volume read_volume(const std::string& path);
std::vector<unsigned char> encode_volume(const Volume& v);
Volume decode_volume(std::vector<unsigned char> bytes);

/// Parameters of the synthetic brain phantom.
struct PhantomSpec {
  std::array<std::size_t, 3> shape{64, 64, 64};
  /// Brain semi-axes as fractions of each extent.
  std::array<double, 2> axis_fraction{0.36, 0.42};
  /// Random shift of the brain centre, in voxels.
  double center_jitter = 2.0;
  std::array<double, 2> background{0.0, 0.02};
  std::array<double, 2> tissue{0.45, 0.55};
  /// Darker central structure (ventricle stand-in), relative axes and depth.
  double core_fraction = 0.35;
  double core_darkening = 0.2;
  double noise_amplitude = 0.04;
  double correlation_length = 4.0;
  std::array<std::size_t, 2> lesion_count{2, 4};
  std::array<double, 2> lesion_radius{2.5, 4.5};
  std::array<double, 2> lesion_contrast{0.35, 0.5};
  std::uint64_t seed = 20240501;

  /// Throws UsageError when ranges are inverted or contrast <= noise.
  void validate() const;
};

class KeyValueFile;
/// Keys mirror the PhantomSpec fields; ranges are "lo,hi". Unknown keys raise ConfigError.
PhantomSpec phantom_spec_from_kv(const KeyValueFile& kv);
KeyValueFile phantom_spec_to_kv(const PhantomSpec& spec);

/// Deterministic given spec.seed. Healthy phantoms carry an empty lesion mask.
Volume generate_phantom(const PhantomSpec& spec, bool lesioned);

/// n phantoms with per-item seeds derived from spec.seed; ids
/// "healthy_0000".. or "lesion_0000"..
std::vector<Volume> generate_dataset(const PhantomSpec& spec, std::size_t n, bool lesioned);

enum class Rescale : std::uint8_t {
  /// Min-max only when brain intensities leave [0,1].
  IfOutOfRange,
  Always,
};

/// Centre-crop or zero-pad to `target` (D,H,W), then min-max rescale to
/// [0,1] inside the brain mask; outside-mask voxels become 0. A constant
/// brain region maps to 0.5 with a warning on stderr.
Volume preprocess(const Volume& v, const std::array<std::size_t, 3>& target, Rescale mode = Rescale::IfOutOfRange);

struct SliceSample {
  std::string source_id;
  std::size_t index = 0;
  Volume slice;  // rank 2 (H,W)
};

/// First index of the `count` central axial slices (centre = extent/2,
/// left-biased for even counts).
std::size_t central_slice_start(std::size_t extent, std::size_t count);
/// Slab depth used when none is configured: three quarters of the axis.
inline std::size_t default_slab(std::size_t extent) { return extent * 3 / 4 == 0 ? extent : extent * 3 / 4; }
std::vector<SliceSample> extract_slices(const Volume& v, std::size_t count);

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples); values in
/// [0,1] are scaled and clamped.
void write_pgm(const std::string& path, std::size_t width, std::size_t height, const std::vector<float>& values);

/// Loads every *.uadv file of a directory, sorted by file name.
std::vector<Volume> load_dataset(const std::string& dir);
void save_dataset(const std::vector<Volume>& volumes, const std::string& dir);

}  // namespace uad
