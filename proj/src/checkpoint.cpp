#include <cstring>

#include "uad/binary_io.hpp"
#include "uad/vae.hpp"

namespace uad {

namespace {

constexpr char kMagic[4] = {'U', 'A', 'D', 'M'};

void write_config(io::ByteWriter& w, const VaeConfig& c) {
  w.u8(static_cast<std::uint8_t>(c.dims));
  w.u8(static_cast<std::uint8_t>(c.bottleneck));
  w.u32(static_cast<std::uint32_t>(c.latent_dim));
  for (auto e : c.extent) w.u32(static_cast<std::uint32_t>(e));
  for (auto e : c.widths) w.u32(static_cast<std::uint32_t>(e));
  w.f64(c.leaky_slope);
}

VaeConfig read_config(io::ByteReader& r) {
  VaeConfig c;
  const auto dims = r.u8("dimensionality");
  const auto bottleneck = r.u8("bottleneck");
  if (dims != 2 && dims != 3) throw ParseError(ParseError::Kind::Malformed, "invalid dimensionality byte");
  if (bottleneck > 1) throw ParseError(ParseError::Kind::Malformed, "invalid bottleneck byte");
  c.dims = static_cast<Dimensionality>(dims);
  c.bottleneck = static_cast<Bottleneck>(bottleneck);
  c.latent_dim = r.u32("latent_dim");
  for (auto& e : c.extent) e = r.u32("extent");
  for (auto& e : c.widths) e = r.u32("widths");
  c.leaky_slope = r.f64("leaky_slope");
  return c;
}

}  // namespace

template <class T>
void save_checkpoint(const VaeModel<T>& model, const std::string& path) {
  io::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  write_config(w, model.config());
  w.u32(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.str(p.name);
    const auto& shape = p.var.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) w.u32(static_cast<std::uint32_t>(e));
    for (T v : p.var.value().data()) w.f32(static_cast<float>(v));
  }
  io::write_file_atomic(path, w.buffer());
}

template <class T>
VaeModel<T> load_checkpoint(const std::string& path) {
  io::ByteReader r(io::read_file(path));
  const auto* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError(ParseError::Kind::BadMagic, "'" + path + "' is not a UADM checkpoint");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw ParseError(ParseError::Kind::VersionMismatch,
                     "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
  }
  const VaeConfig config = read_config(r);
  const auto count = r.u32("parameter count");
  std::vector<NamedParameter<T>> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("parameter name");
    const auto rank = r.u32("rank");
    Shape shape(rank);
    for (auto& e : shape) e = r.u32("extent");
    Tensor<T> t(shape);
    if (t.size() * 4 > r.remaining()) throw ParseError(ParseError::Kind::Truncated, "truncated tensor " + name);
    for (auto& v : t.data()) v = static_cast<T>(r.f32("tensor data"));
    params.push_back({std::move(name), Var<T>(std::move(t), true)});
  }
  if (!r.at_end()) throw ParseError(ParseError::Kind::Malformed, "trailing bytes after checkpoint payload");
  return model_from_parameters(config, std::move(params));
}

template void save_checkpoint<float>(const VaeModel<float>&, const std::string&);
template void save_checkpoint<double>(const VaeModel<double>&, const std::string&);
template VaeModel<float> load_checkpoint<float>(const std::string&);
template VaeModel<double> load_checkpoint<double>(const std::string&);

}  // namespace uad
