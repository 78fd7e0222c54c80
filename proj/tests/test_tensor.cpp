#include <cmath>

#include "doctest.h"
#include "uad/gradcheck.hpp"
#include "uad/ops.hpp"
#include "uad/rng.hpp"

using namespace uad;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

using VarD = Var<double>;

// Direct sliding-window cross-correlation over [B,C,D,H,W] with kernel
// [K,C,kd,kh,kw]; independent of the im2col path.
Tensor<double> conv3d_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                             std::size_t stride, std::size_t pad, std::size_t depth_pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t B = xs[0], C = xs[1], D = xs[2], H = xs[3], W = xs[4];
  const std::size_t K = ws[0], KD = ws[2], KH = ws[3], KW = ws[4];
  const std::size_t OD = (D + 2 * depth_pad - KD) / stride + 1;
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
  const std::size_t OW = (W + 2 * pad - KW) / stride + 1;
  Tensor<double> out(Shape{B, K, OD, OH, OW});
  auto at = [&](std::size_t bb, std::size_t c, long z, long y, long xx) -> double {
    if (z < 0 || y < 0 || xx < 0 || z >= long(D) || y >= long(H) || xx >= long(W)) return 0.0;
    return x[(((bb * C + c) * D + z) * H + y) * W + xx];
  };
  for (std::size_t bb = 0; bb < B; ++bb)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t oz = 0; oz < OD; ++oz)
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox) {
            double acc = b[k];
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t a = 0; a < KD; ++a)
                for (std::size_t r = 0; r < KH; ++r)
                  for (std::size_t s = 0; s < KW; ++s)
                    acc += w[(((k * C + c) * KD + a) * KH + r) * KW + s] *
                           at(bb, c, long(oz * stride + a) - long(depth_pad), long(oy * stride + r) - long(pad),
                              long(ox * stride + s) - long(pad));
            out[(((bb * K + k) * OD + oz) * OH + oy) * OW + ox] = acc;
          }
  return out;
}

VarD conv_of(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, ConvParams p) {
  return conv(VarD(x), VarD(w), VarD(b), p);
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("tensor invariants") {
    Tensor<double> t(Shape{2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(Tensor<double>(Shape{2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(t.reshaped(Shape{4}), DimensionError);
  }
}

TEST_SUITE("conv") {
  TEST_CASE("1x1 kernel scales") {
    auto out = conv_of(Tensor<double>(Shape{1, 1, 3, 3}, 1.0), Tensor<double>(Shape{1, 1, 1, 1}, 2.0),
                       Tensor<double>(Shape{1}, 0.0), {1, 0});
    CHECK(out.shape() == Shape{1, 1, 3, 3});
    for (double v : out.value().data()) CHECK(v == 2.0);
  }

  TEST_CASE("2x2 box sum matches sliding window") {
    Tensor<double> x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor<double> w(Shape{1, 1, 2, 2}, 1.0);
    Tensor<double> b(Shape{1}, 0.0);
    // Oracle on the same data lifted to depth 1.
    auto expected = conv3d_oracle(x.reshaped({1, 1, 1, 3, 3}), w.reshaped({1, 1, 1, 2, 2}), b, 1, 0, 0);
    CHECK(expected.storage() == std::vector<double>{12, 16, 24, 28});
    auto out = conv_of(x, w, b, {1, 0});
    CHECK(out.shape() == Shape{1, 1, 2, 2});
    CHECK(out.value().storage() == expected.storage());
  }

  TEST_CASE("output extent formula") {
    CHECK(conv_output_extent(160, 4, {2, 1}) == 80);
    CHECK(conv_transpose_output_extent(80, 4, {2, 1}) == 160);
    CHECK_THROWS_AS(conv_output_extent(2, 5, {1, 1}), DimensionError);
    CHECK_THROWS_AS(conv_output_extent(8, 3, {0, 1}), UsageError);
  }

  TEST_CASE("random 2D and 3D conv match the direct oracle") {
    for (std::size_t stride : {1u, 2u}) {
      for (std::size_t pad : {0u, 1u}) {
        auto x = random_tensor({2, 3, 5, 6, 7}, 11 + stride * 3 + pad);
        auto w = random_tensor({4, 3, 3, 2, 4}, 21 + stride + pad);
        auto b = random_tensor({4}, 31);
        auto expected = conv3d_oracle(x, w, b, stride, pad, pad);
        auto got = conv_of(x, w, b, {stride, pad});
        REQUIRE(got.shape() == expected.shape());
        for (std::size_t i = 0; i < expected.size(); ++i) CHECK(got.value()[i] == doctest::Approx(expected[i]).epsilon(1e-12));

        auto x2 = random_tensor({2, 3, 6, 7}, 41 + stride + pad);
        auto w2 = random_tensor({2, 3, 3, 3}, 51);
        auto b2 = Tensor<double>(Shape{2}, {b[0], b[1]});
        auto e2 = conv3d_oracle(x2.reshaped({2, 3, 1, 6, 7}), w2.reshaped({2, 3, 1, 3, 3}), b2, stride, pad, 0);
        auto g2 = conv_of(x2, w2, b2, {stride, pad});
        REQUIRE(g2.size() == e2.size());
        for (std::size_t i = 0; i < e2.size(); ++i) CHECK(g2.value()[i] == doctest::Approx(e2[i]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("channel mismatch is a dimension error") {
    CHECK_THROWS_AS(conv_of(Tensor<double>(Shape{1, 2, 4, 4}), Tensor<double>(Shape{1, 3, 2, 2}),
                            Tensor<double>(Shape{1}), {1, 0}),
                    DimensionError);
    CHECK_THROWS_AS(conv_of(Tensor<double>(Shape{1, 2, 4, 4}), Tensor<double>(Shape{1, 2, 2, 2, 2}),
                            Tensor<double>(Shape{1}), {1, 0}),
                    DimensionError);
    CHECK_THROWS_AS(conv_of(Tensor<double>(Shape{1, 2, 4, 4}), Tensor<double>(Shape{3, 2, 2, 2}),
                            Tensor<double>(Shape{2}), {1, 0}),
                    DimensionError);
  }

  TEST_CASE("single-site transposed conv broadcasts") {
    auto out = conv_transpose(VarD(Tensor<double>(Shape{1, 1, 1, 1}, 3.0)), VarD(Tensor<double>(Shape{1, 1, 2, 2}, 1.0)),
                              VarD(Tensor<double>(Shape{1}, 0.0)), {1, 0});
    CHECK(out.shape() == Shape{1, 1, 2, 2});
    for (double v : out.value().data()) CHECK(v == 3.0);
  }

  TEST_CASE("adjointness of conv and conv_transpose") {
    struct Case {
      Shape a, w, b;
      ConvParams p;
    };
    const std::vector<Case> cases = {
        {{1, 1, 4, 4}, {1, 1, 2, 2}, {1, 1, 3, 3}, {1, 0}},
        {{2, 3, 8, 6}, {5, 3, 4, 4}, {2, 5, 4, 3}, {2, 1}},
        {{1, 2, 8, 8, 8}, {3, 2, 4, 4, 4}, {1, 3, 4, 4, 4}, {2, 1}},
        {{1, 2, 5, 4, 6}, {2, 2, 3, 3, 3}, {1, 2, 5, 4, 6}, {1, 1}},
    };
    std::uint64_t seed = 100;
    for (const auto& c : cases) {
      auto A = random_tensor(c.a, ++seed);
      auto W = random_tensor(c.w, ++seed);
      auto B = random_tensor(c.b, ++seed);
      auto convA = conv_of(A, W, Tensor<double>(Shape{c.w[0]}), c.p);
      REQUIRE(convA.shape() == B.shape());
      auto tB = conv_transpose(VarD(B), VarD(W), VarD(Tensor<double>(Shape{c.w[1]})), c.p);
      REQUIRE(tB.shape() == A.shape());
      const double lhs = dot(convA.value(), B);
      const double rhs = dot(A, tB.value());
      CHECK(std::abs(lhs - rhs) < 1e-10);
    }
  }

  TEST_CASE("linearity") {
    auto A = random_tensor({1, 2, 6, 6, 6}, 5);
    auto B = random_tensor({1, 2, 6, 6, 6}, 6);
    auto W = random_tensor({3, 2, 4, 4, 4}, 7);
    Tensor<double> zero(Shape{3});
    const double alpha = 0.37;
    Tensor<double> mix(A.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * A[i] + B[i];
    auto lhs = conv_of(mix, W, zero, {2, 1}).value();
    auto ca = conv_of(A, W, zero, {2, 1}).value();
    auto cb = conv_of(B, W, zero, {2, 1}).value();
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (alpha * ca[i] + cb[i])) < 1e-10);
  }

  TEST_CASE("k4 s2 p1 round trip restores extents used by the models") {
    for (std::size_t extent : {16u, 32u, 64u, 80u, 160u, 192u}) {
      std::size_t e = extent;
      for (int i = 0; i < 4; ++i) e = conv_output_extent(e, 4, {2, 1});
      for (int i = 0; i < 4; ++i) e = conv_transpose_output_extent(e, 4, {2, 1});
      CHECK(e == extent);
    }
  }
}

TEST_SUITE("dense") {
  TEST_CASE("identity") {
    auto out = dense(VarD(Tensor<double>(Shape{1, 2}, {1, 2})), VarD(Tensor<double>(Shape{2, 2}, {1, 0, 0, 1})),
                     VarD(Tensor<double>(Shape{2})));
    CHECK(out.value().storage() == std::vector<double>{1, 2});
  }
  TEST_CASE("hand product") {
    auto out = dense(VarD(Tensor<double>(Shape{1, 2}, {2, 3})), VarD(Tensor<double>(Shape{2, 2}, {1, 1, 1, -1})),
                     VarD(Tensor<double>(Shape{2}, {0, 1})));
    CHECK(out.value().storage() == std::vector<double>{5, 0});
  }
  TEST_CASE("batch rows are independent") {
    auto w = random_tensor({3, 4}, 1);
    auto b = random_tensor({3}, 2);
    auto x = random_tensor({2, 4}, 3);
    auto both = dense(VarD(x), VarD(w), VarD(b)).value();
    for (std::size_t r = 0; r < 2; ++r) {
      Tensor<double> row(Shape{1, 4}, std::vector<double>(x.raw() + r * 4, x.raw() + r * 4 + 4));
      auto single = dense(VarD(row), VarD(w), VarD(b)).value();
      for (std::size_t c = 0; c < 3; ++c) CHECK(single[c] == both[r * 3 + c]);
    }
  }
  TEST_CASE("inner dimension mismatch") {
    CHECK_THROWS_AS(dense(VarD(Tensor<double>(Shape{1, 3})), VarD(Tensor<double>(Shape{2, 2})), VarD(Tensor<double>(Shape{2}))),
                    DimensionError);
  }
}

TEST_SUITE("elementwise") {
  TEST_CASE("definitions") {
    CHECK(abs(VarD(Tensor<double>(Shape{3}, {-1, 2, 0}))).value().storage() == std::vector<double>{1, 2, 0});
    CHECK(sigmoid(VarD(Tensor<double>::scalar(0.0))).item() == 0.5);
    CHECK(leaky_relu(VarD(Tensor<double>(Shape{2}, {-5, 5})), 0.2).value().storage() == std::vector<double>{-1, 5});
    CHECK(mean(VarD(Tensor<double>(Shape{4}, {1, 2, 3, 6}))).item() == 3.0);
    CHECK(sum(VarD(Tensor<double>(Shape{2, 2}, {1, 2, 3, 4}))).item() == 10.0);
  }
  TEST_CASE("clamp") {
    VarD a(Tensor<double>(Shape{4}, {-2.0, 0.25, 0.5, 3.0}), true);
    const auto c = clamp(a, 0.0, 1.0);
    CHECK(c.value().storage() == std::vector<double>{0.0, 0.25, 0.5, 1.0});
    backward(sum(c));
    CHECK(a.grad().storage() == std::vector<double>{0.0, 1.0, 1.0, 0.0});
    CHECK_THROWS_AS(clamp(a, 1.0, 0.0), UsageError);
  }
  TEST_CASE("log domain") {
    CHECK_THROWS_AS(log(VarD(Tensor<double>(Shape{2}, {1.0, 0.0}))), DomainError);
    CHECK_THROWS_AS(log(VarD(Tensor<double>(Shape{1}, {-2.0}))), DomainError);
  }
  TEST_CASE("only scalar broadcasting") {
    CHECK_THROWS_AS(add(VarD(Tensor<double>(Shape{2})), VarD(Tensor<double>(Shape{1}))), DimensionError);
    CHECK(add_scalar(VarD(Tensor<double>(Shape{2}, {1, 2})), 1.5).value().storage() == std::vector<double>{2.5, 3.5});
  }
}

TEST_SUITE("backward") {
  TEST_CASE("sum gives ones") {
    VarD x(Tensor<double>(Shape{3}, {4, 5, 6}), true);
    backward(sum(x));
    CHECK(x.grad().storage() == std::vector<double>{1, 1, 1});
  }
  TEST_CASE("sum of squares") {
    VarD x(Tensor<double>(Shape{3}, {1, 2, 3}), true);
    backward(sum(mul(x, x)));
    CHECK(x.grad().storage() == std::vector<double>{2, 4, 6});
  }
  TEST_CASE("fan-out accumulates") {
    VarD x(Tensor<double>(Shape{2}, {1, 2}), true);
    auto y = add(x, mul_scalar(x, 3.0));
    backward(sum(add(y, x)));
    CHECK(x.grad().storage() == std::vector<double>{5, 5});
  }
  TEST_CASE("non-scalar root") {
    VarD x(Tensor<double>(Shape{2}, {1, 2}), true);
    CHECK_THROWS_AS(backward(mul(x, x)), UsageError);
  }
  TEST_CASE("graph is released after backward") {
    VarD x(Tensor<double>(Shape{2}, {1, 2}), true);
    auto y = exp(x);
    auto root = sum(y);
    CHECK(topological_order(root).size() == 3);
    backward(root);
    CHECK(y.node()->inputs.empty());
    CHECK(root.node()->inputs.empty());
    CHECK_FALSE(y.node()->backward_rule);
  }
  TEST_CASE("no-grad mode builds no graph") {
    VarD x(Tensor<double>(Shape{2}, {1, 2}), true);
    NoGradGuard guard;
    auto y = sum(exp(x));
    CHECK_FALSE(y.requires_grad());
  }
  TEST_CASE("repeated forward/backward is bit-identical") {
    auto xs = random_tensor({2, 2, 8, 8, 8}, 3);
    auto ws = random_tensor({3, 2, 4, 4, 4}, 4);
    auto run = [&] {
      VarD x(xs, true), w(ws, true), b(Tensor<double>(Shape{3}), true);
      auto y = conv_transpose(conv(x, w, b, {2, 1}), w, VarD(Tensor<double>(Shape{2})), {2, 1});
      backward(mean(sigmoid(y)));
      return std::make_pair(x.grad(), w.grad());
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
}

TEST_SUITE("grad_check") {
  TEST_CASE("every primitive against central differences") {
    const GradCheckOptions opts{.step = 1e-5, .tolerance = 1e-4};
    auto pos = random_tensor({3, 4}, 9, 0.5, 2.0);
    auto a = random_tensor({3, 4}, 10);
    auto b = random_tensor({3, 4}, 11);
    std::vector<GradCheckReport> reports = {
        grad_check("add", [](auto& v) { return add(v[0], v[1]); }, {a, b}, opts),
        grad_check("sub", [](auto& v) { return sub(v[0], v[1]); }, {a, b}, opts),
        grad_check("mul", [](auto& v) { return mul(v[0], v[1]); }, {a, b}, opts),
        grad_check("add_scalar", [](auto& v) { return add_scalar(v[0], 0.3); }, {a}, opts),
        grad_check("mul_scalar", [](auto& v) { return mul_scalar(v[0], -1.7); }, {a}, opts),
        grad_check("exp", [](auto& v) { return exp(v[0]); }, {a}, opts),
        grad_check("log", [](auto& v) { return log(v[0]); }, {pos}, opts),
        grad_check("abs", [](auto& v) { return abs(v[0]); }, {a}, opts),
        grad_check("square", [](auto& v) { return square(v[0]); }, {a}, opts),
        grad_check("sigmoid", [](auto& v) { return sigmoid(v[0]); }, {a}, opts),
        grad_check("leaky_relu", [](auto& v) { return leaky_relu(v[0], 0.2); }, {a}, opts),
        grad_check("relu", [](auto& v) { return relu(v[0]); }, {a}, opts),
        grad_check("sum", [](auto& v) { return sum(v[0]); }, {a}, opts),
        grad_check("mean", [](auto& v) { return mean(v[0]); }, {a}, opts),
        grad_check("reshape", [](auto& v) { return reshape(v[0], {4, 3}); }, {a}, opts),
    };
    for (const auto& r : reports) {
      INFO(r.name << " worst " << r.worst());
      CHECK(r.pass);
    }
  }

  TEST_CASE("conv2d on 1x2x5x5") {
    auto r = grad_check("conv2d", [](auto& v) { return conv(v[0], v[1], v[2], {2, 1}); },
                        {random_tensor({1, 2, 5, 5}, 1), random_tensor({3, 2, 3, 3}, 2), random_tensor({3}, 3)});
    INFO(r.worst());
    CHECK(r.pass);
  }

  TEST_CASE("conv3d on 1x1x4x4x4") {
    auto r = grad_check("conv3d", [](auto& v) { return conv(v[0], v[1], v[2], {2, 1}); },
                        {random_tensor({1, 1, 4, 4, 4}, 4), random_tensor({2, 1, 4, 4, 4}, 5), random_tensor({2}, 6)});
    INFO(r.worst());
    CHECK(r.pass);
  }

  TEST_CASE("conv_transpose 2D and 3D") {
    auto r2 = grad_check("conv_transpose2d", [](auto& v) { return conv_transpose(v[0], v[1], v[2], {2, 1}); },
                         {random_tensor({2, 2, 3, 3}, 7), random_tensor({2, 3, 4, 4}, 8), random_tensor({3}, 9)});
    auto r3 = grad_check("conv_transpose3d", [](auto& v) { return conv_transpose(v[0], v[1], v[2], {2, 1}); },
                         {random_tensor({1, 2, 2, 2, 2}, 10), random_tensor({2, 1, 4, 4, 4}, 11), random_tensor({1}, 12)});
    CHECK(r2.pass);
    CHECK(r3.pass);
  }

  TEST_CASE("dense at 1e-6") {
    auto r = grad_check("dense", [](auto& v) { return dense(v[0], v[1], v[2]); },
                        {random_tensor({3, 5}, 13), random_tensor({4, 5}, 14), random_tensor({4}, 15)},
                        {.tolerance = 1e-6});
    INFO(r.worst());
    CHECK(r.pass);
  }

  TEST_CASE("a wrong backward rule is detected") {
    auto broken = [](const std::vector<VarD>& v) {
      Tensor<double> out(v[0].shape());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(v[0].value()[i]);
      return make_op<double>(std::move(out), "broken_sin", {v[0]}, [](Node<double>& n) {
        auto& in = *n.inputs[0];
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * std::cos(in.value[i]) * 1.01;
      });
    };
    auto r = grad_check("broken_sin", broken, {random_tensor({5}, 16)});
    CHECK_FALSE(r.pass);
  }
}
