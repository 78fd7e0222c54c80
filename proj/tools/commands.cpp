#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include "uad/binary_io.hpp"
#include "uad/errors.hpp"
#include "uad/gradsuite.hpp"
#include "uad/pipeline.hpp"
#include "uad/trainer.hpp"

namespace fs = std::filesystem;

namespace uad::cli {

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// Keys the calibrate command adds next to the calibration itself.
constexpr const char* kSplitKeys[] = {"split_seed", "slab", "sample", "model", "test_cases"};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto part = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!part.empty()) out.push_back(part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

void RunManifest::config(const KeyValueFile& kv, const std::string& prefix) {
  for (const auto& [k, v] : kv.entries()) config_.set(prefix + k, v);
}

void RunManifest::write(const std::string& dir) const {
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  KeyValueFile kv;
  kv.set("command", command_);
  std::string line;
  for (const auto& a : argv_) line += (line.empty() ? "" : " ") + a;
  kv.set("argv", line);
  kv.set("tool_version", kToolVersion);
  kv.set("seed", std::to_string(seed_));
  for (const auto& [k, v] : config_.entries()) kv.set(k, v);
  kv.set("inputs", join(inputs_));
  kv.set("outputs", join(outputs_));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", seconds);
  kv.set("duration_s", buf);
  io::write_text_atomic(in_dir(dir, "manifest.txt"), kv.dump());
}

int cmd_synth(const SynthArgs& a, RunManifest& m) {
  PhantomSpec spec;
  if (!a.spec.empty()) {
    spec = phantom_spec_from_kv(KeyValueFile::load(a.spec));
    m.input(a.spec);
  }
  if (a.has_seed) spec.seed = a.seed;
  ensure_dir(a.out);
  m.seed(spec.seed);
  auto kv = phantom_spec_to_kv(spec);
  kv.set("n", std::to_string(a.n));
  kv.set("lesioned", a.lesioned ? "true" : "false");
  m.config(kv);

  const auto volumes = generate_dataset(spec, a.n, a.lesioned);
  for (const auto& raw : volumes) {
    const Volume v = preprocess(raw, spec.shape);
    const std::string path = in_dir(a.out, v.id + ".uadv");
    write_volume(v, path);
    m.output(path);
    if (a.pgm) {
      const std::size_t z = v.shape[0] / 2, plane = v.shape[1] * v.shape[2];
      std::vector<float> slice(v.voxels.begin() + long(z * plane), v.voxels.begin() + long((z + 1) * plane));
      const std::string pgm = in_dir(a.out, v.id + ".pgm");
      write_pgm(pgm, v.shape[2], v.shape[1], slice);
      m.output(pgm);
    }
  }
  m.write(a.out);
  std::cout << "wrote " << volumes.size() << " volumes to " << a.out << "\n";
  return 0;
}

namespace {

template <class T>
void run_training(const TrainConfig& cfg, const std::vector<Volume>& data) {
  std::printf("epoch,raw_recon,normalized_recon,kl,total,active_units\n");
  train<T>(cfg, data, [](const EpochSummary& s) {
    std::printf("%zu,%.6g,%.6g,%.6g,%.6g,%zu\n", s.epoch, s.raw_recon, s.normalized_recon, s.kl, s.total,
                s.collapse.active_units);
    std::fflush(stdout);
  });
}

}  // namespace

int cmd_train(const TrainArgs& a, RunManifest& m) {
  TrainConfig cfg = TrainConfig::from_kv(KeyValueFile::load(a.config));
  m.input(a.config);
  if (cfg.dataset.empty()) throw ConfigError(a.config + ": missing required key 'dataset'");
  if (cfg.checkpoint.empty()) throw ConfigError(a.config + ": missing required key 'checkpoint'");
  const std::string out = !a.out.empty() ? a.out : fs::path(cfg.checkpoint).parent_path().string();
  const std::string out_dir = out.empty() ? "." : out;
  ensure_dir(out_dir);
  if (cfg.log.empty()) cfg.log = in_dir(out_dir, "train_log.csv");
  ensure_dir(fs::path(cfg.checkpoint).parent_path().empty() ? "." : fs::path(cfg.checkpoint).parent_path().string());

  const auto data = load_dataset(cfg.dataset);
  if (data.empty()) throw IoError("dataset '" + cfg.dataset + "' holds no .uadv volumes");
  m.input(cfg.dataset);
  m.seed(cfg.seed);
  m.config(cfg.to_kv());

  if (cfg.precision == Precision::F64) {
    run_training<double>(cfg, data);
  } else {
    run_training<float>(cfg, data);
  }
  m.output(cfg.checkpoint);
  m.output(cfg.log);
  m.write(out_dir);
  return 0;
}

int cmd_calibrate(const CalibrateArgs& a, RunManifest& m) {
  const auto model = load_checkpoint<float>(a.model);
  const auto data = load_dataset(a.data);
  m.input(a.model);
  m.input(a.data);
  m.seed(a.seed);

  std::vector<std::string> ids;
  std::map<std::string, const Volume*> by_id;
  for (const auto& v : data) {
    if (!v.lesion) {
      std::cerr << "warning: '" << v.id << "' has no ground truth; excluded from the split\n";
      continue;
    }
    ids.push_back(v.id);
    by_id[v.id] = &v;
  }
  const Split split = split_cases(ids, a.seed);
  std::vector<Volume> cal_set;
  for (const auto& id : split.calibration) cal_set.push_back(*by_id.at(id));

  InferenceOptions opts;
  opts.slab = a.slab;
  opts.sample = a.sample;
  opts.seed = a.seed;
  const auto cal = calibrate_threshold(calibration_cases(model, cal_set, opts));

  ensure_dir(a.out);
  KeyValueFile kv = calibration_to_kv(cal);
  kv.set("split_seed", std::to_string(a.seed));
  kv.set("slab", std::to_string(a.slab));
  kv.set("sample", a.sample ? "true" : "false");
  kv.set("model", a.model);
  kv.set("test_cases", join(split.test));
  const std::string path = in_dir(a.out, "calibration.txt");
  io::write_text_atomic(path, kv.dump());
  m.config(kv, "calibration.");
  m.output(path);
  m.write(a.out);

  for (std::size_t k = 0; k < cal.candidates.size(); ++k) {
    std::printf("threshold %.6f mean_dice %.6f%s\n", cal.candidates[k], cal.mean_dice[k],
                k == cal.chosen_index ? "  <- chosen" : "");
  }
  return 0;
}

int cmd_segment(const SegmentArgs& a, RunManifest& m) {
  const auto model = load_checkpoint<float>(a.model);
  const auto data = load_dataset(a.data);
  const auto file = KeyValueFile::load(a.calibration);
  KeyValueFile cal_kv, extra;
  for (const auto& [k, v] : file.entries()) {
    const bool is_extra = std::find(std::begin(kSplitKeys), std::end(kSplitKeys), k) != std::end(kSplitKeys);
    (is_extra ? extra : cal_kv).set(k, v);
  }
  const auto cal = calibration_from_kv(cal_kv);
  m.input(a.model);
  m.input(a.data);
  m.input(a.calibration);
  m.seed(extra.get_uint("split_seed", 0));

  InferenceOptions opts;
  opts.slab = extra.get_uint("slab", 0);
  opts.sample = extra.get_bool("sample", false);
  opts.seed = extra.get_uint("split_seed", 0);

  std::vector<Volume> test;
  if (extra.has("test_cases")) {
    const auto wanted = split_list(extra.get("test_cases", ""));
    for (const auto& id : wanted) {
      const auto it = std::find_if(data.begin(), data.end(), [&](const Volume& v) { return v.id == id; });
      if (it == data.end()) throw IoError("test case '" + id + "' not found in '" + a.data + "'");
      test.push_back(*it);
    }
  } else {
    for (const auto& v : data) {
      if (std::find(cal.case_ids.begin(), cal.case_ids.end(), v.id) == cal.case_ids.end()) test.push_back(v);
    }
  }

  const auto result = evaluate_split(model, test, cal, opts);
  const std::string label = to_string(model.config().bottleneck) + "-" + to_string(model.config().dims);
  ensure_dir(a.out);
  for (std::size_t i = 0; i < result.outputs.size(); ++i) {
    const auto& out = result.outputs[i];
    const auto& src = *std::find_if(test.begin(), test.end(), [&](const Volume& v) { return v.id == out.id; });
    const std::string path = in_dir(a.out, out.id + "_seg.uadv");
    Volume seg = segmentation_volume(out, src);
    seg.metadata["model"] = label;
    write_volume(seg, path);
    m.output(path);
    if (a.panels > 0) {
      const std::size_t slab = resolve_slab(src.shape[0], opts.slab);
      const std::size_t start = central_slice_start(src.shape[0], slab);
      for (std::size_t p = 0; p < a.panels; ++p) {
        const std::size_t z = start + (2 * p + 1) * slab / (2 * a.panels);
        const std::string pgm = in_dir(a.out, out.id + "_z" + std::to_string(z) + ".pgm");
        write_panel(pgm, src, out, z);
        m.output(pgm);
      }
    }
  }
  const std::string cases = in_dir(a.out, "cases.csv");
  const std::string agg = in_dir(a.out, "aggregate.csv");
  io::write_text_atomic(cases, cases_csv(result.cases));
  io::write_text_atomic(agg, aggregate_csv_header() + "\n" +
                                 aggregate_csv(label, result.aggregate) +
                                 "\n");
  m.output(cases);
  m.output(agg);
  m.write(a.out);

  const auto& g = result.aggregate;
  std::printf("cases %zu  dice %.4f +- %.4f  spe %.4f  sen %.4f  mae %.4f\n", g.cases, g.dice.mean, g.dice.stddev,
              g.spe.mean, g.sen.mean, g.mae.mean);
  return 0;
}

int cmd_eval(const EvalArgs& a, RunManifest& m) {
  const auto truth = load_dataset(a.data);
  const auto segs = load_dataset(a.segmentations);
  m.input(a.data);
  m.input(a.segmentations);
  std::vector<CaseReport> rows;
  std::string label;
  for (const auto& s : segs) {
    const auto it = std::find_if(truth.begin(), truth.end(), [&](const Volume& v) { return v.id == s.id; });
    if (it == truth.end() || !it->lesion) {
      std::cerr << "warning: no ground truth for '" << s.id << "'; skipped\n";
      continue;
    }
    if (!s.lesion) throw ParseError(ParseError::Kind::Malformed, "segmentation '" + s.id + "' lacks a mask");
    const auto thr = s.metadata.find("threshold");
    if (thr == s.metadata.end()) throw ParseError(ParseError::Kind::Malformed, "segmentation '" + s.id + "' lacks a threshold");
    if (const auto lm = s.metadata.find("model"); lm != s.metadata.end()) label = lm->second;
    rows.push_back(score_case(s.id, std::stod(thr->second), *s.lesion, *it->lesion, s.brain, it->voxels, s.voxels));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  ensure_dir(a.out);
  const std::string cases = in_dir(a.out, "cases.csv");
  const std::string agg = in_dir(a.out, "aggregate.csv");
  const auto g = aggregate(rows);
  io::write_text_atomic(cases, cases_csv(rows));
  io::write_text_atomic(agg, aggregate_csv_header() + "\n" + aggregate_csv(label.empty() ? "eval" : label, g) + "\n");
  m.output(cases);
  m.output(agg);
  m.write(a.out);
  std::printf("cases %zu  dice %.4f +- %.4f  spe %.4f  sen %.4f  mae %.4f\n", g.cases, g.dice.mean, g.dice.stddev,
              g.spe.mean, g.sen.mean, g.mae.mean);
  return 0;
}

int cmd_gradcheck(const GradcheckArgs& a) {
  GradCheckOptions opts;
  opts.tolerance = a.tolerance;
  opts.max_coords = a.max_coords;
  bool ok = true;
  std::printf("%-22s %-14s %s\n", "op", "max_rel_error", "status");
  for (const auto& r : gradient_suite(opts)) {
    std::printf("%-22s %-14.3e %s\n", r.name.c_str(), r.worst(), r.pass ? "pass" : "FAIL");
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace uad::cli
