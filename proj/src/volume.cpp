#include "uad/volume.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>

#include "uad/binary_io.hpp"

namespace uad {

namespace {

constexpr char kMagic[4] = {'U', 'A', 'D', 'V'};

enum SectionTag : std::uint8_t {
  kEnd = 0,
  kBrainMask = 1,
  kLesionMask = 2,
  kId = 3,
  kSpacing = 4,
  kMetadata = 5,
};

Mask read_mask(io::ByteReader& r, const Shape& shape, const char* what) {
  const std::size_t n = numel(shape);
  const auto* p = r.take(n, what);
  std::vector<std::uint8_t> bits(p, p + n);
  for (auto b : bits) {
    if (b > 1) throw ParseError(ParseError::Kind::Malformed, std::string("non-binary byte in ") + what);
  }
  return Mask(shape, std::move(bits));
}

}  // namespace

Volume::Volume(std::string id_, Shape shape_)
    : id(std::move(id_)),
      shape(std::move(shape_)),
      spacing(shape.size(), 1.0f),
      voxels(numel(shape), 0.0f),
      brain(shape) {}

void Volume::validate() const {
  if (shape.size() != 2 && shape.size() != 3) throw DimensionError("volume rank must be 2 or 3, got " + to_string(shape));
  if (voxels.size() != numel(shape)) throw DimensionError("voxel buffer does not match shape " + to_string(shape));
  if (spacing.size() != shape.size()) throw DimensionError("spacing must have one entry per axis");
  if (brain.shape != shape) throw DimensionError("brain mask shape " + to_string(brain.shape) + " differs from volume");
  if (lesion) {
    if (lesion->shape != shape) throw DimensionError("lesion mask shape differs from volume");
    for (std::size_t i = 0; i < lesion->size(); ++i) {
      if ((*lesion)[i] && !brain[i]) throw UsageError("lesion mask of '" + id + "' leaves the brain mask");
    }
  }
  for (float v : voxels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw UsageError("voxel of '" + id + "' outside [0,1]");
  }
}

std::vector<unsigned char> encode_volume(const Volume& v) {
  io::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVolumeVersion);
  w.u32(static_cast<std::uint32_t>(v.shape.size()));
  for (auto e : v.shape) w.u32(static_cast<std::uint32_t>(e));
  for (float x : v.voxels) w.f32(x);
  w.u8(kBrainMask);
  w.bytes(v.brain.bits.data(), v.brain.bits.size());
  if (v.lesion) {
    w.u8(kLesionMask);
    w.bytes(v.lesion->bits.data(), v.lesion->bits.size());
  }
  w.u8(kId);
  w.str(v.id);
  w.u8(kSpacing);
  for (float s : v.spacing) w.f32(s);
  w.u8(kMetadata);
  w.u32(static_cast<std::uint32_t>(v.metadata.size()));
  for (const auto& [k, val] : v.metadata) {
    w.str(k);
    w.str(val);
  }
  w.u8(kEnd);
  return w.buffer();
}

Volume decode_volume(std::vector<unsigned char> bytes) {
  io::ByteReader r(std::move(bytes));
  if (r.remaining() < 4 || std::memcmp(r.take(4, "magic"), kMagic, 4) != 0) {
    throw ParseError(ParseError::Kind::BadMagic, "not a UADV volume (bad magic)");
  }
  const auto version = r.u32("version");
  if (version != kVolumeVersion) {
    throw ParseError(ParseError::Kind::VersionMismatch, "UADV version " + std::to_string(version) +
                                                            " unsupported (expected " +
                                                            std::to_string(kVolumeVersion) + ")");
  }
  const auto rank = r.u32("rank");
  if (rank != 2 && rank != 3) throw ParseError(ParseError::Kind::Malformed, "UADV rank must be 2 or 3");
  Shape shape(rank);
  for (auto& e : shape) {
    e = r.u32("extent");
    if (e == 0) throw ParseError(ParseError::Kind::Malformed, "zero extent in UADV header");
  }
  const std::size_t n = numel(shape);
  if (r.remaining() < n * 4) {
    throw ParseError(ParseError::Kind::Truncated, "UADV payload holds " + std::to_string(r.remaining() / 4) +
                                                      " voxels, header declares " + std::to_string(n));
  }
  Volume v("", shape);
  for (auto& x : v.voxels) x = r.f32("payload");

  bool brain_seen = false;
  for (;;) {
    const auto tag = r.u8("section tag");
    if (tag == kEnd) break;
    switch (tag) {
      case kBrainMask:
        v.brain = read_mask(r, shape, "brain mask");
        brain_seen = true;
        break;
      case kLesionMask:
        v.lesion = read_mask(r, shape, "lesion mask");
        break;
      case kId:
        v.id = r.str("id");
        break;
      case kSpacing:
        for (auto& s : v.spacing) s = r.f32("spacing");
        break;
      case kMetadata: {
        const auto count = r.u32("metadata count");
        for (std::uint32_t i = 0; i < count; ++i) {
          std::string key = r.str("metadata key");
          v.metadata[key] = r.str("metadata value");
        }
        break;
      }
      default:
        throw ParseError(ParseError::Kind::Malformed, "unknown UADV section tag " + std::to_string(tag));
    }
  }
  if (!r.at_end()) throw ParseError(ParseError::Kind::Malformed, "trailing bytes after UADV end marker");
  if (!brain_seen) throw ParseError(ParseError::Kind::Malformed, "UADV file lacks a brain mask section");
  return v;
}

void write_volume(const Volume& v, const std::string& path) { io::write_file_atomic(path, encode_volume(v)); }

Volume read_volume(const std::string& path) {
  try {
    return decode_volume(io::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.kind, path + ": " + e.what());
  }
}

Volume preprocess(const Volume& v, const std::array<std::size_t, 3>& target, Rescale mode) {
  if (v.shape.size() != 3) throw DimensionError("preprocess expects a 3D volume");
  for (auto e : target) {
    if (e == 0 || e % 16 != 0) throw UsageError("target extent " + std::to_string(e) + " is not a multiple of 16");
  }
  Volume out(v.id, Shape{target[0], target[1], target[2]});
  out.spacing = v.spacing;
  out.metadata = v.metadata;
  if (v.lesion) out.lesion = Mask(out.shape);

  // Per axis: source index = target index + offset (negative offset pads).
  std::array<long, 3> offset{};
  for (std::size_t a = 0; a < 3; ++a) {
    offset[a] = (static_cast<long>(v.shape[a]) - static_cast<long>(target[a])) / 2;
  }
  const std::size_t SH = v.shape[1], SW = v.shape[2];
  for (std::size_t z = 0; z < target[0]; ++z) {
    const long sz = long(z) + offset[0];
    if (sz < 0 || sz >= long(v.shape[0])) continue;
    for (std::size_t y = 0; y < target[1]; ++y) {
      const long sy = long(y) + offset[1];
      if (sy < 0 || sy >= long(SH)) continue;
      for (std::size_t x = 0; x < target[2]; ++x) {
        const long sx = long(x) + offset[2];
        if (sx < 0 || sx >= long(SW)) continue;
        const std::size_t src = (std::size_t(sz) * SH + std::size_t(sy)) * SW + std::size_t(sx);
        const std::size_t dst = (z * target[1] + y) * target[2] + x;
        out.voxels[dst] = v.voxels[src];
        out.brain.bits[dst] = v.brain.bits[src];
        if (v.lesion) out.lesion->bits[dst] = v.lesion->bits[src];
      }
    }
  }

  float lo = 0.0f, hi = 0.0f;
  bool any = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out.brain[i]) continue;
    const float x = out.voxels[i];
    if (!any) {
      lo = hi = x;
      any = true;
    }
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const bool degenerate = !any || hi == lo;
  const bool rescale = mode == Rescale::Always || lo < 0.0f || hi > 1.0f;
  if (degenerate && any) std::cerr << "warning: '" << v.id << "' has a constant brain region; filling with 0.5\n";
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out.brain[i]) {
      out.voxels[i] = 0.0f;
    } else if (degenerate) {
      out.voxels[i] = 0.5f;
    } else if (rescale) {
      out.voxels[i] = std::clamp((out.voxels[i] - lo) / (hi - lo), 0.0f, 1.0f);
    }
  }
  return out;
}

std::size_t central_slice_start(std::size_t extent, std::size_t count) {
  if (count == 0 || count > extent) {
    throw UsageError("cannot take " + std::to_string(count) + " slices from an axis of extent " + std::to_string(extent));
  }
  const std::size_t centre = extent / 2;
  const std::size_t start = centre - count / 2;
  return std::min(start, extent - count);
}

std::vector<SliceSample> extract_slices(const Volume& v, std::size_t count) {
  if (v.shape.size() != 3) throw DimensionError("extract_slices expects a 3D volume");
  const std::size_t start = central_slice_start(v.shape[0], count);
  const std::size_t H = v.shape[1], W = v.shape[2];
  std::vector<SliceSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t z = start + k;
    SliceSample s;
    s.source_id = v.id;
    s.index = z;
    s.slice = Volume(v.id + "#" + std::to_string(z), Shape{H, W});
    s.slice.spacing = {v.spacing[1], v.spacing[2]};
    const std::size_t base = z * H * W;
    std::copy_n(v.voxels.begin() + long(base), H * W, s.slice.voxels.begin());
    std::copy_n(v.brain.bits.begin() + long(base), H * W, s.slice.brain.bits.begin());
    if (v.lesion) {
      s.slice.lesion = Mask(Shape{H, W});
      std::copy_n(v.lesion->bits.begin() + long(base), H * W, s.slice.lesion->bits.begin());
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_pgm(const std::string& path, std::size_t width, std::size_t height, const std::vector<float>& values) {
  if (values.size() != width * height) throw DimensionError("pgm: value count does not match width*height");
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + values.size() * 2);
  for (float v : values) {
    const auto s = static_cast<std::uint16_t>(std::clamp(v, 0.0f, 1.0f) * 65535.0f + 0.5f);
    bytes.push_back(static_cast<unsigned char>(s >> 8));
    bytes.push_back(static_cast<unsigned char>(s & 0xFF));
  }
  io::write_file_atomic(path, bytes);
}

}  // namespace uad
