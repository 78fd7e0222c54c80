#include <algorithm>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "uad/errors.hpp"
#include "uad/loss.hpp"
#include "uad/rng.hpp"
#include "uad/trainer.hpp"
#include "uad/vae.hpp"

using namespace uad;

namespace {

VaeConfig small(Dimensionality d, Bottleneck b, std::size_t extent = 32) {
  auto c = VaeConfig::make(d, b, {extent, extent, extent});
  c.widths = {4, 4, 8, 8};
  c.latent_dim = b == Bottleneck::Dense ? 8 : 2;
  return c;
}

template <class T>
Tensor<T> random_input(const Shape& s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

const std::vector<std::pair<Dimensionality, Bottleneck>> kArchitectures{
    {Dimensionality::Two, Bottleneck::Dense},
    {Dimensionality::Two, Bottleneck::Spatial},
    {Dimensionality::Three, Bottleneck::Dense},
    {Dimensionality::Three, Bottleneck::Spatial},
};

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "uad_test_vae";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("config validation") {
  auto c = VaeConfig::make(Dimensionality::Three, Bottleneck::Dense, {64, 64, 64});
  CHECK(c.latent_dim == 128);
  CHECK_NOTHROW(c.validate());
  c.extent = {64, 40, 64};
  CHECK_THROWS_AS(c.validate(), UsageError);
  auto s = VaeConfig::make(Dimensionality::Two, Bottleneck::Spatial, {7, 160, 192});
  CHECK(s.latent_dim == 16);
  CHECK(s.extent[0] == 1);
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("encoder and decoder layer counts") {
  VaeModel<float> m(small(Dimensionality::Three, Bottleneck::Dense), 1);
  const auto names = VaeModel<float>::layer_names();
  CHECK(std::count_if(names.begin(), names.end(), [](auto& n) { return n.starts_with("enc."); }) == 6);
  CHECK(std::count_if(names.begin(), names.end(), [](auto& n) { return n.starts_with("dec."); }) == 5);
  CHECK(m.parameters().size() == 22);
}

TEST_CASE("zero-initialized heads give a standard normal posterior") {
  for (auto [d, b] : kArchitectures) {
    VaeModel<double> m(small(d, b), 3);
    m.zero_layer("enc.mu");
    m.zero_layer("enc.logvar");
    const auto x = random_input<double>(m.config().input_shape(2), 4);
    const auto post = m.encode(Var<double>(x));
    for (double v : post.mu.value().data()) CHECK(v == 0.0);
    for (double v : post.logvar.value().data()) CHECK(v == 0.0);
  }
}

TEST_CASE("latent shapes at full width") {
  NoGradGuard guard;
  SUBCASE("dense 3d, 64 cubed") {
    VaeModel<float> m(VaeConfig::make(Dimensionality::Three, Bottleneck::Dense, {64, 64, 64}), 1);
    const auto post = m.encode(Var<float>(Tensor<float>(Shape{1, 1, 64, 64, 64}, 0.5f)));
    CHECK(post.mu.shape() == Shape{1, 128});
    CHECK(post.logvar.shape() == Shape{1, 128});
  }
  SUBCASE("spatial 2d, 160x192") {
    VaeModel<float> m(VaeConfig::make(Dimensionality::Two, Bottleneck::Spatial, {1, 160, 192}), 1);
    const auto post = m.encode(Var<float>(Tensor<float>(Shape{1, 1, 160, 192}, 0.5f)));
    CHECK(post.mu.shape() == Shape{1, 16, 10, 12});
  }
}

TEST_CASE("latent rank contract") {
  for (auto [d, b] : kArchitectures) {
    const auto c = small(d, b);
    const auto latent = c.latent_shape(3);
    if (b == Bottleneck::Dense) {
      CHECK(latent.size() == 2);
      CHECK(latent == Shape{3, c.latent_dim});
    } else {
      CHECK(latent.size() == c.input_shape(3).size());
    }
  }
}

TEST_CASE("encode rejects a mismatched input") {
  VaeModel<float> m(small(Dimensionality::Two, Bottleneck::Dense), 1);
  CHECK_THROWS_AS(m.encode(Var<float>(Tensor<float>(Shape{1, 1, 16, 32}))), DimensionError);
  CHECK_THROWS_AS(m.decode(Var<float>(Tensor<float>(Shape{1, 5}))), DimensionError);
}

TEST_CASE("reparameterize") {
  const Var<double> mu(Tensor<double>(Shape{1, 2}, {0.0, 0.0}), true);
  const Var<double> logvar(Tensor<double>(Shape{1, 2}, {0.0, 0.0}), true);

  SUBCASE("zero epsilon returns mu") {
    const Var<double> m(Tensor<double>(Shape{1, 3}, {0.3, -1.2, 4.0}));
    const Var<double> lv(Tensor<double>(Shape{1, 3}, {0.1, -2.0, 1.5}));
    const auto s = reparameterize(m, lv, Tensor<double>(Shape{1, 3}));
    CHECK(s.z.value().storage() == m.value().storage());
  }
  SUBCASE("unit sigma passes epsilon through") {
    const auto s = reparameterize(mu, logvar, Tensor<double>(Shape{1, 2}, {1.0, -1.0}));
    CHECK(s.z.value().storage() == std::vector<double>{1.0, -1.0});
  }
  SUBCASE("z = mu + exp(logvar/2) * eps elementwise") {
    const Var<double> m(random_input<double>({4, 6}, 1, -2, 2));
    const Var<double> lv(random_input<double>({4, 6}, 2, -3, 3));
    const auto s = reparameterize(m, lv, std::uint64_t{77});
    for (std::size_t i = 0; i < 24; ++i) {
      CHECK(s.z.value()[i] == doctest::Approx(m.value()[i] + std::exp(0.5 * lv.value()[i]) * s.epsilon[i]).epsilon(1e-14));
    }
  }
  SUBCASE("fixed seed is bitwise reproducible") {
    const auto a = reparameterize(mu, logvar, std::uint64_t{5});
    const auto b = reparameterize(mu, logvar, std::uint64_t{5});
    const auto c = reparameterize(mu, logvar, std::uint64_t{6});
    CHECK(a.z.value().storage() == b.z.value().storage());
    CHECK(a.z.value().storage() != c.z.value().storage());
  }
  SUBCASE("gradient reaches mu and logvar only") {
    const auto s = reparameterize(mu, logvar, Tensor<double>(Shape{1, 2}, {2.0, 0.5}));
    backward(sum(s.z));
    CHECK(mu.grad().storage() == std::vector<double>{1.0, 1.0});
    // d z / d logvar = 0.5 * exp(logvar/2) * eps
    CHECK(logvar.grad()[0] == doctest::Approx(1.0));
    CHECK(logvar.grad()[1] == doctest::Approx(0.25));
  }
}

TEST_CASE("zero final layer decodes to 0.5") {
  for (auto [d, b] : kArchitectures) {
    VaeModel<double> m(small(d, b), 9);
    m.zero_layer("dec.up4");
    const auto z = random_input<double>(m.config().latent_shape(2), 3, -3, 3);
    const auto out = m.decode(Var<double>(z));
    for (double v : out.value().data()) CHECK(v == 0.5);
  }
}

TEST_CASE("round trip shapes at benchmark sizes") {
  NoGradGuard guard;
  for (auto [d, b] : kArchitectures) {
    auto c = VaeConfig::make(d, b, d == Dimensionality::Three ? std::array<std::size_t, 3>{64, 64, 64}
                                                              : std::array<std::size_t, 3>{1, 160, 192});
    c.widths = {2, 2, 2, 2};
    VaeModel<float> m(c, 1);
    const auto shape = c.input_shape(1);
    const auto fwd = m.forward(Var<float>(Tensor<float>(shape, 0.25f)), 3);
    CHECK(fwd.reconstruction.shape() == shape);
    CHECK(fwd.latent.z.shape() == c.latent_shape(1));
    CHECK(m.decode(fwd.latent.z).shape() == shape);
  }
}

TEST_CASE("decoder output stays in [0,1]") {
  for (auto [d, b] : kArchitectures) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      VaeModel<double> m(small(d, b), seed);
      // Scale up every parameter so the output sigmoid saturates in both directions.
      for (auto& p : m.parameters()) {
        Rng rng(seed + 100);
        for (auto& v : p.var.mutable_value().data()) v = v * 8.0 + rng.uniform(-0.5, 0.5);
      }
      const auto z = random_input<double>(m.config().latent_shape(2), seed, -5, 5);
      const auto out = m.decode(Var<double>(z));
      const auto values = out.value().data();
      const auto [lo_out, hi_out] = std::minmax_element(values.begin(), values.end());
      CHECK(*lo_out >= 0.0);
      CHECK(*hi_out <= 1.0);
      CHECK((*lo_out == 0.0 || *hi_out == 1.0));
      const auto raw = m.decode_unclamped(Var<double>(z)).value().data();
      const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
      CHECK(*lo >= -kOutputMargin);
      CHECK(*hi <= 1.0 + kOutputMargin);
    }
  }
}

TEST_CASE("every parameter receives a gradient") {
  for (auto [d, b] : kArchitectures) {
    VaeModel<double> m(small(d, b), 2);
    for (auto& p : m.parameters()) {
      if (p.name.ends_with(".bias")) {
        Rng rng(p.var.size());
        for (auto& v : p.var.mutable_value().data()) v = rng.uniform(-0.1, 0.1);
      }
    }
    const Var<double> x(random_input<double>(m.config().input_shape(2), 5));
    LossState state;
    const auto fwd = m.forward(x, 11);
    backward(robust_loss(state, x, fwd.unclamped, fwd.latent.mu, fwd.latent.logvar).total);
    for (const auto& p : m.parameters()) {
      INFO(p.name);
      REQUIRE(p.var.has_grad());
      CHECK(p.var.grad().shape() == p.var.shape());
      double norm = 0.0;
      for (double g : p.var.grad().data()) norm += g * g;
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("forward_mean decodes mu") {
  VaeModel<double> m(small(Dimensionality::Two, Bottleneck::Dense), 4);
  const Var<double> x(random_input<double>(m.config().input_shape(1), 6));
  const auto a = m.forward_mean(x);
  const auto b = m.decode(m.encode(x).mu);
  CHECK(a.reconstruction.value().storage() == b.value().storage());
  CHECK(a.latent.z.value().storage() == a.latent.mu.value().storage());
}

TEST_CASE("clone is independent") {
  VaeModel<float> m(small(Dimensionality::Two, Bottleneck::Spatial), 4);
  auto c = m.clone();
  c.parameter("dec.up4.bias").mutable_value()[0] = 3.0f;
  CHECK(m.parameter("dec.up4.bias").value()[0] == 0.0f);
  CHECK(c.parameter("enc.conv1.weight").value().storage() == m.parameter("enc.conv1.weight").value().storage());
}

TEST_CASE("checkpoint round trip") {
  for (auto [d, b] : kArchitectures) {
    VaeModel<float> m(small(d, b), 12);
    const auto path = temp_file("model_" + to_string(d) + to_string(b) + ".uadm").string();
    save_checkpoint(m, path);
    const auto r = load_checkpoint<float>(path);
    CHECK(r.config() == m.config());
    REQUIRE(r.parameters().size() == m.parameters().size());
    for (std::size_t i = 0; i < r.parameters().size(); ++i) {
      CHECK(r.parameters()[i].name == m.parameters()[i].name);
      CHECK(r.parameters()[i].var.value().storage() == m.parameters()[i].var.value().storage());
    }

    // One evaluation step of the robust loss is bitwise identical.
    const Var<float> x(random_input<float>(m.config().input_shape(2), 8));
    LossState s1, s2;
    const auto f1 = m.forward(x, 21);
    const auto f2 = r.forward(x, 21);
    const auto l1 = robust_loss(s1, x, f1.unclamped, f1.latent.mu, f1.latent.logvar).total.item();
    const auto l2 = robust_loss(s2, x, f2.unclamped, f2.latent.mu, f2.latent.logvar).total.item();
    CHECK(l1 == l2);
  }
}

TEST_CASE("checkpoint corruption is reported") {
  VaeModel<float> m(small(Dimensionality::Two, Bottleneck::Dense), 1);
  const auto path = temp_file("corrupt.uadm").string();
  save_checkpoint(m, path);
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    std::ofstream(path, std::ios::binary).write(b.data(), long(b.size()));
    try {
      (void)load_checkpoint<float>(path);
      FAIL("no error");
    } catch (const ParseError& e) {
      CHECK(e.kind == ParseError::Kind::BadMagic);
    }
  }
  SUBCASE("truncated") {
    std::ofstream(path, std::ios::binary).write(bytes.data(), long(bytes.size() / 2));
    try {
      (void)load_checkpoint<float>(path);
      FAIL("no error");
    } catch (const ParseError& e) {
      CHECK(e.kind == ParseError::Kind::Truncated);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS((void)load_checkpoint<float>(path + ".missing"), IoError); }
}

TEST_CASE("trained toy model beats the constant-intensity predictor") {
  PhantomSpec spec;
  spec.shape = {32, 32, 32};
  std::vector<Volume> data;
  for (auto& v : generate_dataset(spec, 4, false)) data.push_back(preprocess(v, spec.shape));

  TrainConfig c;
  c.arch = small(Dimensionality::Three, Bottleneck::Dense);
  c.epochs = 60;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  const auto result = train<float>(c, data);

  NoGradGuard guard;
  const auto& v = data[0];
  const Var<float> x(Tensor<float>(Shape{1, 1, 32, 32, 32}, v.voxels));
  const auto x_hat = result.model.forward_mean(x).reconstruction.value();
  double mean = 0.0;
  for (float a : v.voxels) mean += a;
  mean /= double(v.size());
  double model_mae = 0.0, baseline_mae = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    model_mae += std::fabs(v.voxels[i] - x_hat[i]);
    baseline_mae += std::fabs(v.voxels[i] - mean);
  }
  CHECK(model_mae < baseline_mae);
}
