#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "uad/errors.hpp"
#include "uad/pipeline.hpp"
#include "uad/trainer.hpp"

using namespace uad;

namespace {

Mask full_mask(const Shape& s) {
  Mask m(s);
  std::fill(m.bits.begin(), m.bits.end(), 1);
  return m;
}

// Solid box [z0,z0+dz) x [y0,y0+dy) x [x0,x0+dx) set to `v`.
void box(std::vector<float>& values, const Shape& s, std::array<std::size_t, 3> at, std::array<std::size_t, 3> size,
         float v) {
  for (std::size_t z = at[0]; z < at[0] + size[0]; ++z)
    for (std::size_t y = at[1]; y < at[1] + size[1]; ++y)
      for (std::size_t x = at[2]; x < at[2] + size[2]; ++x) values[(z * s[1] + y) * s[2] + x] = v;
}

CalibrationCase random_case(Rng& rng, std::size_t id) {
  const Shape s{10, 10, 10};
  CalibrationCase c;
  c.id = "case_" + std::to_string(id);
  c.map = AnomalyMap{c.id, s, std::vector<float>(numel(s))};
  for (auto& v : c.map.values) v = float(rng.uniform(0.0, 0.06));
  c.truth = Mask(s);
  // One or two bright boxes, partly recorded as truth.
  const std::size_t blobs = 1 + rng.below(2);
  for (std::size_t b = 0; b < blobs; ++b) {
    const std::array<std::size_t, 3> at{1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5)};
    const std::array<std::size_t, 3> size{2 + rng.below(3), 2 + rng.below(3), 2 + rng.below(3)};
    box(c.map.values, s, at, size, float(rng.uniform(0.02, 0.16)));
    for (std::size_t z = at[0]; z < at[0] + size[0]; ++z)
      for (std::size_t y = at[1]; y < at[1] + size[1]; ++y)
        for (std::size_t x = at[2]; x < at[2] + size[2]; ++x) c.truth.bits[(z * 10 + y) * 10 + x] = 1;
  }
  c.brain = full_mask(s);
  if (rng.uniform() < 0.5) c.domain = slab_mask(s, 8);
  return c;
}

}  // namespace

TEST_SUITE("thresholds") {
  TEST_CASE("grid") {
    const auto g = threshold_grid();
    REQUIRE(g.size() == 15);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == doctest::Approx(0.15).epsilon(1e-15));
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] - g[i - 1] == doctest::Approx(0.15 / 14).epsilon(1e-12));
  }
  TEST_CASE("binarize is strict") {
    const AnomalyMap m{"m", Shape{1, 3}, {0.1f, 0.2f, 0.3f}};
    CHECK(binarize(m, double(0.2f)).bits == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(binarize(m, 0.0).count() == 3);
    CHECK_THROWS_AS(binarize(m, -1.0), UsageError);
  }
  TEST_CASE("anomaly map is the absolute residual") {
    Volume v("v", Shape{1, 2, 2});
    v.voxels = {0.0f, 0.5f, 1.0f, 0.25f};
    const auto m = anomaly_map(v, {0.5f, 0.5f, 0.0f, 0.75f});
    CHECK(m.values == std::vector<float>{0.5f, 0.0f, 1.0f, 0.5f});
    CHECK(m.id == "v");
    CHECK_THROWS_AS(anomaly_map(v, {0.0f}), DimensionError);
  }
}

TEST_SUITE("postprocess") {
  TEST_CASE("erosion removes the mask boundary") {
    Mask m(Shape{5, 5, 5});
    for (std::size_t z = 1; z < 4; ++z)
      for (std::size_t y = 1; y < 4; ++y)
        for (std::size_t x = 1; x < 4; ++x) m.bits[(z * 5 + y) * 5 + x] = 1;
    const auto e = erode(m);
    CHECK(e.count() == 1);
    CHECK(e[(2 * 5 + 2) * 5 + 2]);
    // The grid edge counts as background.
    CHECK(erode(full_mask(Shape{3, 3, 3})).count() == 1);
    CHECK(erode(full_mask(Shape{4, 4})).count() == 4);
    CHECK(erode(Mask(Shape{3, 3, 3})).count() == 0);
  }
  TEST_CASE("erosion matches the reference on random masks") {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const auto m = oracle::random_mask(i % 2 ? Shape{6, 7, 8} : Shape{9, 11}, 0.8, rng);
      REQUIRE(erode(m) == oracle::erode(m));
    }
  }
  TEST_CASE("nine voxel blob removed, ten kept") {
    const Shape s{12, 12, 12};
    const auto brain = full_mask(s);
    Mask raw(s);
    // 9 voxels: 3x3 plate; 10 voxels: the same plate plus one voxel touching diagonally.
    for (std::size_t y = 2; y < 5; ++y)
      for (std::size_t x = 2; x < 5; ++x) raw.bits[(3 * 12 + y) * 12 + x] = 1;
    auto nine = postprocess(raw, brain);
    CHECK(nine.mask.count() == 0);
    raw.bits[(4 * 12 + 5) * 12 + 5] = 1;
    auto ten = postprocess(raw, brain);
    CHECK(ten.mask.count() == 10);
    CHECK(ten.mask == raw);
  }
  TEST_CASE("segmentation stays inside the eroded brain") {
    const Shape s{8, 8, 8};
    Mask brain(s);
    for (std::size_t z = 0; z < 8; ++z)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 6; ++x) brain.bits[(z * 8 + y) * 8 + x] = 1;
    const auto seg = postprocess(full_mask(s), brain);
    const auto eroded = erode(brain);
    REQUIRE(seg.mask.count() > 0);
    for (std::size_t i = 0; i < seg.mask.size(); ++i)
      if (seg.mask[i]) REQUIRE(eroded[i]);
    // Brain boundary voxel (x = 5) is gone.
    CHECK_FALSE(seg.mask[(4 * 8 + 4) * 8 + 5]);
  }
  TEST_CASE("no surviving component under ten voxels") {
    Rng rng(5);
    for (int i = 0; i < 30; ++i) {
      const auto raw = oracle::random_mask({12, 12, 12}, rng.uniform(0.05, 0.3), rng);
      const auto seg = postprocess(raw, full_mask(raw.shape));
      const auto c = connected_components(seg.mask, Connectivity::Full);
      for (auto n : c.sizes) REQUIRE(n >= kMinComponentSize);
    }
  }
  TEST_CASE("2D uses 8-connectivity") {
    Mask raw(Shape{12, 12});
    // 10 voxels along a diagonal: one component only under 8-connectivity.
    for (std::size_t i = 1; i < 11; ++i) raw.bits[i * 12 + i] = 1;
    CHECK(postprocess(raw, full_mask(raw.shape)).mask.count() == 10);
  }
}

TEST_SUITE("calibration") {
  TEST_CASE("single case with one perfect threshold") {
    const Shape s{8, 8, 8};
    CalibrationCase c{"a", AnomalyMap{"a", s, std::vector<float>(512, 0.0f)}, full_mask(s), Mask(s), Mask()};
    // Lesion value just above candidate 5 only; background just above candidate 2.
    const auto g = threshold_grid();
    std::fill(c.map.values.begin(), c.map.values.end(), float((g[2] + g[3]) / 2));
    box(c.map.values, s, {2, 2, 2}, {3, 3, 3}, float((g[5] + g[6]) / 2));
    for (std::size_t z = 2; z < 5; ++z)
      for (std::size_t y = 2; y < 5; ++y)
        for (std::size_t x = 2; x < 5; ++x) c.truth.bits[(z * 8 + y) * 8 + x] = 1;
    const auto cal = calibrate_threshold({c});
    CHECK(cal.chosen_index == 3);
    CHECK(cal.chosen == g[3]);
    CHECK(cal.mean_dice[3] == 1.0);
    CHECK(std::count(cal.mean_dice.begin(), cal.mean_dice.end(), 1.0) == 3);
  }
  TEST_CASE("ties go to the smaller threshold") {
    const Shape s{8, 8, 8};
    CalibrationCase c{"a", AnomalyMap{"a", s, std::vector<float>(512, 0.0f)}, full_mask(s), Mask(s), Mask()};
    box(c.map.values, s, {2, 2, 2}, {3, 3, 3}, 1.0f);
    for (std::size_t z = 2; z < 5; ++z)
      for (std::size_t y = 2; y < 5; ++y)
        for (std::size_t x = 2; x < 5; ++x) c.truth.bits[(z * 8 + y) * 8 + x] = 1;
    const auto cal = calibrate_threshold({c});
    CHECK(cal.chosen_index == 0);
    for (double d : cal.mean_dice) CHECK(d == 1.0);
  }
  TEST_CASE("matches exhaustive search") {
    Rng rng(77);
    for (int trial = 0; trial < 15; ++trial) {
      std::vector<CalibrationCase> cases;
      const std::size_t n = 1 + rng.below(4);
      for (std::size_t i = 0; i < n; ++i) cases.push_back(random_case(rng, i));
      std::vector<double> means;
      const auto best = oracle::best_threshold_index(cases, &means);
      const auto cal = calibrate_threshold(cases);
      REQUIRE(cal.chosen_index == best);
      REQUIRE(cal.mean_dice == means);
      for (double m : cal.mean_dice) REQUIRE(cal.mean_dice[cal.chosen_index] >= m);
    }
  }
  TEST_CASE("empty-truth cases are ignored, none usable is an error") {
    Rng rng(8);
    auto a = random_case(rng, 0);
    auto empty = random_case(rng, 1);
    empty.truth = Mask(empty.truth.shape);
    const auto with = calibrate_threshold({a, empty});
    CHECK(with.case_ids == std::vector<std::string>{a.id});
    CHECK(with.mean_dice == calibrate_threshold({a}).mean_dice);
    CHECK_THROWS_AS(calibrate_threshold({empty}), UsageError);
    CHECK_THROWS_AS(calibrate_threshold({}), UsageError);
  }
  TEST_CASE("key=value round trip") {
    Rng rng(2);
    const auto cal = calibrate_threshold({random_case(rng, 0), random_case(rng, 1)});
    const auto back = calibration_from_kv(KeyValueFile::parse(calibration_to_kv(cal).dump()));
    CHECK(back.candidates == cal.candidates);
    CHECK(back.mean_dice == cal.mean_dice);
    CHECK(back.chosen == cal.chosen);
    CHECK(back.chosen_index == cal.chosen_index);
    CHECK(back.case_ids == cal.case_ids);
  }
}

TEST_SUITE("protocol") {
  TEST_CASE("split halves") {
    std::vector<std::string> ids;
    for (int i = 0; i < 11; ++i) ids.push_back("c" + std::to_string(i));
    const auto a = split_cases(ids, 4);
    CHECK(a.calibration.size() == 6);
    CHECK(a.test.size() == 5);
    std::set<std::string> all(a.calibration.begin(), a.calibration.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == 11);
    const auto b = split_cases(ids, 4);
    CHECK(a.calibration == b.calibration);
    CHECK(a.test == b.test);
    CHECK(split_cases(ids, 5).calibration != a.calibration);
  }
  TEST_CASE("slab") {
    CHECK(resolve_slab(64, 0) == 48);
    CHECK(resolve_slab(64, 10) == 10);
    CHECK_THROWS_AS(resolve_slab(64, 65), UsageError);
    const auto m = slab_mask(Shape{64, 2, 2}, 48);
    CHECK(m.count() == 48 * 4);
    CHECK_FALSE(m[7 * 4]);
    CHECK(m[8 * 4]);
    CHECK(m[55 * 4]);
    CHECK_FALSE(m[56 * 4]);
  }
  TEST_CASE("identity reconstruction scores") {
    PhantomSpec spec;
    spec.shape = {32, 32, 32};
    const auto v = preprocess(generate_phantom(spec, true), spec.shape);
    const auto domain = evaluation_domain(v, 0);
    const auto map = anomaly_map(v, v.voxels);
    const auto seg = segment(map, v.brain, domain, 0.0);
    CHECK(seg.mask.count() == 0);
    const auto r = score_case(v.id, 0.0, seg.mask, *v.lesion, domain, v.voxels, v.voxels);
    CHECK(r.mae == 0.0);
    CHECK(r.dice == 0.0);
    REQUIRE(r.sen.has_value());
    CHECK(*r.sen == 0.0);
    CHECK(*r.spe == 1.0);
  }
  TEST_CASE("aggregate recomputed from the csv rows") {
    Rng rng(12);
    std::vector<CaseReport> cases;
    for (int i = 0; i < 9; ++i) {
      CaseReport r;
      r.id = "c" + std::to_string(i);
      r.threshold = 0.15 * 3 / 14;
      r.dice = rng.uniform();
      r.spe = rng.uniform(0.9, 1.0);
      if (i != 4) r.sen = rng.uniform();
      r.mae = rng.uniform(0, 0.1);
      cases.push_back(r);
    }
    const auto parsed = parse_cases_csv(cases_csv(cases));
    REQUIRE(parsed.size() == cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
      CHECK(parsed[i].dice == cases[i].dice);
      CHECK(parsed[i].sen.has_value() == cases[i].sen.has_value());
    }
    const auto a = aggregate(cases);
    const auto b = aggregate(parsed);
    double mean = 0.0, var = 0.0;
    for (const auto& c : parsed) mean += c.dice;
    mean /= double(parsed.size());
    for (const auto& c : parsed) var += (c.dice - mean) * (c.dice - mean);
    const double sd = std::sqrt(var / double(parsed.size()));
    CHECK(std::fabs(b.dice.mean - mean) <= 1e-12);
    CHECK(std::fabs(b.dice.stddev - sd) <= 1e-12);
    CHECK(std::fabs(a.dice.mean - b.dice.mean) <= 1e-12);
    CHECK(b.sen.n == 8);
    CHECK(b.cases == 9);
    CHECK(aggregate_csv("x", a).find("x,") == 0);
  }
  TEST_CASE("malformed csv") {
    CHECK_THROWS_AS(parse_cases_csv("nope\n"), ParseError);
    CHECK_THROWS_AS(parse_cases_csv("id,threshold,dice,spe,sen,mae\na,0,x,1,1,0\n"), ParseError);
  }
}

TEST_CASE("trained healthy model highlights lesions") {
  PhantomSpec spec;
  spec.shape = {32, 32, 32};
  std::vector<Volume> healthy;
  for (auto& v : generate_dataset(spec, 4, false)) healthy.push_back(preprocess(v, spec.shape));

  TrainConfig c;
  c.arch = VaeConfig::make(Dimensionality::Three, Bottleneck::Dense, {32, 32, 32});
  c.arch.widths = {4, 4, 8, 8};
  c.arch.latent_dim = 8;
  c.epochs = 60;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  const auto result = train<float>(c, healthy);

  auto lspec = spec;
  lspec.seed = 4242;
  const auto v = preprocess(generate_phantom(lspec, true), spec.shape);
  const auto map = anomaly_map(v, result.model);
  double in = 0, out = 0;
  std::size_t nin = 0, nout = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v.brain[i]) continue;
    if ((*v.lesion)[i]) {
      in += map.values[i];
      ++nin;
    } else {
      out += map.values[i];
      ++nout;
    }
  }
  REQUIRE(nin > 0);
  CHECK(in / double(nin) > out / double(nout));
}
