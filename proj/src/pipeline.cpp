#include "uad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "uad/errors.hpp"
#include "uad/rng.hpp"

namespace uad {

namespace {

constexpr std::uint64_t kSplitStream = 0x5eed5;

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": shape " + to_string(a) + " vs " + to_string(b));
}

std::string format_measure(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_measure(*v) : "nan"; }

}  // namespace

std::size_t resolve_slab(std::size_t depth, std::size_t requested) {
  const std::size_t slab = requested == 0 ? default_slab(depth) : requested;
  if (slab > depth) {
    throw UsageError("slab of " + std::to_string(slab) + " slices exceeds volume depth " + std::to_string(depth));
  }
  return slab;
}

Mask slab_mask(const Shape& shape, std::size_t count) {
  if (shape.size() != 3) throw DimensionError("slab mask needs a 3D grid");
  Mask m(shape);
  const std::size_t start = central_slice_start(shape[0], count);
  const std::size_t plane = shape[1] * shape[2];
  std::fill_n(m.bits.begin() + long(start * plane), count * plane, std::uint8_t{1});
  return m;
}


template <class T>
std::vector<float> reconstruct(const VaeModel<T>& model, const Volume& v, const InferenceOptions& opts) {
  if (v.shape.size() != 3) throw DimensionError("reconstruct expects a 3D volume");
  const auto& cfg = model.config();
  const std::size_t D = v.shape[0], H = v.shape[1], W = v.shape[2];
  NoGradGuard no_grad;
  auto run = [&](Tensor<T> x, std::uint64_t seed) {
    const Var<T> in(std::move(x));
    return opts.sample ? model.forward(in, seed).reconstruction : model.forward_mean(in).reconstruction;
  };

  if (cfg.dims == Dimensionality::Three) {
    if (cfg.extent != std::array<std::size_t, 3>{D, H, W}) {
      throw DimensionError("volume " + to_string(v.shape) + " does not match the model input extent");
    }
    const auto out = run(Tensor<T>(Shape{1, 1, D, H, W}, std::vector<T>(v.voxels.begin(), v.voxels.end())), opts.seed);
    const auto data = out.value().data();
    return std::vector<float>(data.begin(), data.end());
  }

  if (cfg.extent[1] != H || cfg.extent[2] != W) {
    throw DimensionError("slices of " + to_string(v.shape) + " do not match the model input extent");
  }
  std::vector<float> x_hat = v.voxels;
  const std::size_t slab = resolve_slab(D, opts.slab);
  const std::size_t start = central_slice_start(D, slab);
  const std::size_t plane = H * W;
  const std::size_t batch = std::max<std::size_t>(1, opts.batch);
  for (std::size_t z0 = start; z0 < start + slab; z0 += batch) {
    const std::size_t n = std::min(batch, start + slab - z0);
    std::vector<T> data(v.voxels.begin() + long(z0 * plane), v.voxels.begin() + long((z0 + n) * plane));
    const auto out = run(Tensor<T>(Shape{n, 1, H, W}, std::move(data)), Rng::derive(opts.seed, z0));
    const auto values = out.value().data();
    std::copy(values.begin(), values.end(), x_hat.begin() + long(z0 * plane));
  }
  return x_hat;
}

AnomalyMap anomaly_map(const Volume& x, const std::vector<float>& x_hat) {
  if (x_hat.size() != x.voxels.size()) throw DimensionError("reconstruction size differs from the input volume");
  AnomalyMap m{x.id, x.shape, std::vector<float>(x.size())};
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = std::fabs(x.voxels[i] - x_hat[i]);
  return m;
}

Mask binarize(const AnomalyMap& map, double threshold) {
  if (!(threshold >= 0.0)) throw UsageError("threshold must be non-negative");
  Mask m(map.shape);
  for (std::size_t i = 0; i < m.size(); ++i) m.bits[i] = double(map.values[i]) > threshold ? 1 : 0;
  return m;
}

Mask erode(const Mask& mask) {
  const auto& s = mask.shape;
  if (s.size() != 2 && s.size() != 3) throw DimensionError("erode expects rank 2 or 3");
  const std::size_t D = s.size() == 3 ? s[0] : 1;
  const std::size_t H = s[s.size() - 2], W = s[s.size() - 1];
  Mask out(s);
  auto at = [&](long z, long y, long x) {
    if (z < 0 || y < 0 || x < 0 || z >= long(D) || y >= long(H) || x >= long(W)) return false;
    return mask[(std::size_t(z) * H + std::size_t(y)) * W + std::size_t(x)];
  };
  const bool volumetric = s.size() == 3;
  for (long z = 0; z < long(D); ++z)
    for (long y = 0; y < long(H); ++y)
      for (long x = 0; x < long(W); ++x) {
        bool keep = at(z, y, x) && at(z, y - 1, x) && at(z, y + 1, x) && at(z, y, x - 1) && at(z, y, x + 1);
        if (volumetric) keep = keep && at(z - 1, y, x) && at(z + 1, y, x);
        out.bits[(std::size_t(z) * H + std::size_t(y)) * W + std::size_t(x)] = keep ? 1 : 0;
      }
  return out;
}

Segmentation postprocess(const Mask& raw, const Mask& brain, double threshold) {
  require_same_shape(raw.shape, brain.shape, "postprocess");
  Segmentation seg;
  seg.threshold = threshold;
  const Mask eroded = erode(brain);
  seg.mask = Mask(raw.shape);
  for (std::size_t i = 0; i < raw.size(); ++i) seg.mask.bits[i] = raw[i] && eroded[i] ? 1 : 0;
  const auto comps = connected_components(seg.mask, seg.connectivity);
  for (std::size_t i = 0; i < seg.mask.size(); ++i) {
    const auto label = comps.labels[i];
    if (label != 0 && comps.sizes[label - 1] < seg.min_component) seg.mask.bits[i] = 0;
  }
  return seg;
}

Segmentation segment(const AnomalyMap& map, const Mask& brain, const Mask& domain, double threshold) {
  Mask raw = binarize(map, threshold);
  if (!domain.bits.empty()) {
    require_same_shape(domain.shape, raw.shape, "segment");
    for (std::size_t i = 0; i < raw.size(); ++i) raw.bits[i] &= domain.bits[i];
  }
  return postprocess(raw, brain, threshold);
}

std::vector<double> threshold_grid() {
  std::vector<double> g(kThresholdCount);
  for (std::size_t i = 0; i < kThresholdCount; ++i) g[i] = double(i) * kThresholdMax / double(kThresholdCount - 1);
  return g;
}

double mean_dice_at(const std::vector<CalibrationCase>& cases, double threshold) {
  if (cases.empty()) throw UsageError("no calibration cases");
  double acc = 0.0;
  for (const auto& c : cases) {
    const auto seg = segment(c.map, c.brain, c.domain, threshold);
    acc += dice(seg.mask, c.truth, c.domain.bits.empty() ? nullptr : &c.domain);
  }
  return acc / double(cases.size());
}

ThresholdCalibration calibrate_threshold(const std::vector<CalibrationCase>& cases) {
  std::vector<CalibrationCase> usable;
  for (const auto& c : cases) {
    require_same_shape(c.map.shape, c.truth.shape, "calibration truth");
    require_same_shape(c.map.shape, c.brain.shape, "calibration brain mask");
    if (c.truth.count() > 0) usable.push_back(c);
  }
  if (usable.empty()) throw UsageError("calibration split has no case with a non-empty ground truth");

  ThresholdCalibration cal;
  cal.candidates = threshold_grid();
  for (const auto& c : usable) cal.case_ids.push_back(c.id);
  for (std::size_t k = 0; k < cal.candidates.size(); ++k) {
    cal.mean_dice.push_back(mean_dice_at(usable, cal.candidates[k]));
    if (cal.mean_dice[k] > cal.mean_dice[cal.chosen_index]) cal.chosen_index = k;
  }
  cal.chosen = cal.candidates[cal.chosen_index];
  return cal;
}

KeyValueFile calibration_to_kv(const ThresholdCalibration& c) {
  KeyValueFile kv;
  std::vector<std::string> cand, md;
  for (double v : c.candidates) cand.push_back(format_double(v));
  for (double v : c.mean_dice) md.push_back(format_double(v));
  kv.set("candidates", join(cand));
  kv.set("mean_dice", join(md));
  kv.set("chosen_index", std::to_string(c.chosen_index));
  kv.set("threshold", format_double(c.chosen));
  kv.set("cases", join(c.case_ids));
  return kv;
}

ThresholdCalibration calibration_from_kv(const KeyValueFile& kv) {
  kv.require_known({"candidates", "mean_dice", "chosen_index", "threshold", "cases"});
  ThresholdCalibration c;
  c.candidates = kv.get_doubles("candidates", {});
  c.mean_dice = kv.get_doubles("mean_dice", {});
  c.chosen_index = kv.get_uint("chosen_index", 0);
  c.chosen = kv.get_double("threshold", -1.0);
  if (!(c.chosen >= 0.0)) throw ConfigError("calibration file lacks a valid 'threshold'");
  std::stringstream ids(kv.get("cases", ""));
  for (std::string id; std::getline(ids, id, ',');) {
    if (!id.empty()) c.case_ids.push_back(id);
  }
  return c;
}

CaseReport score_case(const std::string& id, double threshold, const Mask& segmentation, const Mask& truth,
                      const Mask& domain, const std::vector<float>& x, const std::vector<float>& x_hat) {
  require_same_shape(segmentation.shape, truth.shape, "score_case");
  const Mask* dom = domain.bits.empty() ? nullptr : &domain;
  const auto counts = confusion(segmentation, truth, dom);
  CaseReport r;
  r.id = id;
  r.threshold = threshold;
  r.dice = dice(counts);
  r.spe = specificity(counts);
  r.sen = sensitivity(counts);
  r.mae = mae(x, x_hat, dom);
  return r;
}

AggregateReport aggregate(const std::vector<CaseReport>& cases) {
  std::vector<double> d, sp, se, m;
  for (const auto& c : cases) {
    d.push_back(c.dice);
    if (c.spe) sp.push_back(*c.spe);
    if (c.sen) se.push_back(*c.sen);
    m.push_back(c.mae);
  }
  AggregateReport a;
  a.cases = cases.size();
  a.dice = mean_std(d);
  a.spe = mean_std(sp);
  a.sen = mean_std(se);
  a.mae = mean_std(m);
  return a;
}

std::string cases_csv(const std::vector<CaseReport>& cases) {
  std::string out = "id,threshold,dice,spe,sen,mae\n";
  for (const auto& c : cases) {
    out += c.id + "," + format_measure(c.threshold) + "," + format_measure(c.dice) + "," + format_optional(c.spe) +
           "," + format_optional(c.sen) + "," + format_measure(c.mae) + "\n";
  }
  return out;
}

std::vector<CaseReport> parse_cases_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "id,threshold,dice,spe,sen,mae") {
    throw ParseError(ParseError::Kind::Malformed, "per-case CSV lacks the expected header");
  }
  auto number = [](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ParseError(ParseError::Kind::Malformed, "bad number '" + s + "' in per-case CSV");
    }
  };
  std::vector<CaseReport> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw ParseError(ParseError::Kind::Malformed, "per-case CSV row needs 6 fields: " + line);
    CaseReport r;
    r.id = f[0];
    r.threshold = number(f[1]);
    r.dice = number(f[2]);
    if (f[3] != "nan") r.spe = number(f[3]);
    if (f[4] != "nan") r.sen = number(f[4]);
    r.mae = number(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string aggregate_csv_header() {
  return "model,cases,dice_mean,dice_std,spe_mean,spe_std,sen_mean,sen_std,mae_mean,mae_std";
}

std::string aggregate_csv(const std::string& label, const AggregateReport& a) {
  return label + "," + std::to_string(a.cases) + "," + format_measure(a.dice.mean) + "," +
         format_measure(a.dice.stddev) + "," + format_measure(a.spe.mean) + "," + format_measure(a.spe.stddev) + "," +
         format_measure(a.sen.mean) + "," + format_measure(a.sen.stddev) + "," + format_measure(a.mae.mean) + "," +
         format_measure(a.mae.stddev);
}

Mask evaluation_domain(const Volume& v, std::size_t slab) {
  Mask d = slab_mask(v.shape, resolve_slab(v.shape[0], slab));
  for (std::size_t i = 0; i < d.size(); ++i) d.bits[i] &= v.brain.bits[i];
  return d;
}

template <class T>
CaseOutput process_case(const VaeModel<T>& model, const Volume& v, double threshold, const InferenceOptions& opts) {
  CaseOutput out;
  out.id = v.id;
  out.reconstruction = reconstruct(model, v, opts);
  out.map = anomaly_map(v, out.reconstruction);
  out.domain = evaluation_domain(v, opts.slab);
  out.segmentation = segment(out.map, v.brain, out.domain, threshold);
  const Mask truth = v.lesion ? *v.lesion : Mask(v.shape);
  out.report = score_case(v.id, threshold, out.segmentation.mask, truth, out.domain, v.voxels, out.reconstruction);
  return out;
}

template <class T>
std::vector<CalibrationCase> calibration_cases(const VaeModel<T>& model, const std::vector<Volume>& volumes,
                                               const InferenceOptions& opts) {
  std::vector<CalibrationCase> cases;
  for (const auto& v : volumes) {
    if (!v.lesion) {
      std::cerr << "warning: '" << v.id << "' has no ground truth; skipped for calibration\n";
      continue;
    }
    cases.push_back({v.id, anomaly_map(v, model, opts), v.brain, *v.lesion, evaluation_domain(v, opts.slab)});
  }
  return cases;
}

template <class T>
EvaluationResult evaluate_split(const VaeModel<T>& model, const std::vector<Volume>& test,
                                const ThresholdCalibration& calibration, const InferenceOptions& opts) {
  EvaluationResult r;
  for (const auto& v : test) {
    if (!v.lesion) {
      std::cerr << "warning: '" << v.id << "' has no ground truth; skipped\n";
      continue;
    }
    r.outputs.push_back(process_case(model, v, calibration.chosen, opts));
    r.cases.push_back(r.outputs.back().report);
  }
  r.aggregate = aggregate(r.cases);
  return r;
}

Split split_cases(std::vector<std::string> ids, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  Rng rng(Rng::derive(seed, kSplitStream));
  const auto perm = rng.permutation(ids.size());
  Split s;
  const std::size_t half = (ids.size() + 1) / 2;
  for (std::size_t i = 0; i < perm.size(); ++i) (i < half ? s.calibration : s.test).push_back(ids[perm[i]]);
  std::sort(s.calibration.begin(), s.calibration.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Volume segmentation_volume(const CaseOutput& out, const Volume& source) {
  Volume v(out.id, source.shape);
  v.spacing = source.spacing;
  v.voxels = out.reconstruction;
  v.brain = out.domain;
  v.lesion = out.segmentation.mask;
  v.metadata["threshold"] = format_double(out.segmentation.threshold);
  v.metadata["min_component"] = std::to_string(out.segmentation.min_component);
  v.metadata["eroded_brain"] = out.segmentation.eroded_brain ? "1" : "0";
  v.metadata["connectivity"] = out.segmentation.connectivity == Connectivity::Full ? "full" : "face";
  return v;
}

void write_panel(const std::string& path, const Volume& v, const CaseOutput& out, std::size_t z) {
  if (v.shape.size() != 3 || z >= v.shape[0]) throw UsageError("panel slice index out of range");
  const std::size_t H = v.shape[1], W = v.shape[2];
  std::vector<float> img(H * W * 4);
  const std::size_t base = z * H * W;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t i = base + y * W + x;
      float* row = img.data() + y * W * 4;
      row[x] = v.voxels[i];
      row[W + x] = out.reconstruction[i];
      // Maps are stretched so the top of the threshold grid is white.
      row[2 * W + x] = std::min(1.0f, out.map.values[i] / float(kThresholdMax));
      row[3 * W + x] = out.segmentation.mask[i] ? 1.0f : 0.0f;
    }
  write_pgm(path, W * 4, H, img);
}

#define UAD_INSTANTIATE(T)                                                                                         \
  template std::vector<float> reconstruct<T>(const VaeModel<T>&, const Volume&, const InferenceOptions&);          \
  template CaseOutput process_case<T>(const VaeModel<T>&, const Volume&, double, const InferenceOptions&);         \
  template std::vector<CalibrationCase> calibration_cases<T>(const VaeModel<T>&, const std::vector<Volume>&,       \
                                                             const InferenceOptions&);                             \
  template EvaluationResult evaluate_split<T>(const VaeModel<T>&, const std::vector<Volume>&,                      \
                                              const ThresholdCalibration&, const InferenceOptions&);

UAD_INSTANTIATE(float)
UAD_INSTANTIATE(double)

#undef UAD_INSTANTIATE

}  // namespace uad
