#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <json.hpp>

#include "commands.hpp"
#include "uad/errors.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kNumeric = 4 };

int fail(int code, const char* kind, const std::string& message) {
  const nlohmann::json line = {{"error", kind}, {"message", message}};
  std::cerr << line.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace uad::cli;
  CLI::App app{"Unsupervised anomaly detection with variational autoencoders"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate preprocessed synthetic brain phantoms");
  s->add_option("--spec", synth.spec, "Phantom spec (key=value file)")->check(CLI::ExistingFile);
  s->add_option("--n", synth.n, "Number of volumes")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_flag("--lesioned", synth.lesioned, "Insert hyperintense lesions");
  s->add_option("--seed", synth.seed, "Override the spec seed")->each([&](const std::string&) { synth.has_seed = true; });
  s->add_flag("--pgm", synth.pgm, "Also write the central axial slice as 16-bit PGM");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a VAE from a key=value config");
  t->add_option("--config", train.config, "Training config")->required()->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Directory for the manifest and log (default: checkpoint directory)");

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Split labelled cases and pick the threshold on the first half");
  c->add_option("--model", cal.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  c->add_option("--data", cal.data, "Directory of labelled volumes")->required();
  c->add_option("--out", cal.out, "Output directory")->required();
  c->add_option("--seed", cal.seed, "Split seed")->capture_default_str();
  c->add_option("--slab", cal.slab, "Central axial slices scored (0: three quarters of the depth)");
  c->add_flag("--sample", cal.sample, "Sample z instead of using the posterior mean");

  SegmentArgs seg;
  auto* g = app.add_subcommand("segment", "Segment the held-out half at the calibrated threshold");
  g->add_option("--model", seg.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  g->add_option("--data", seg.data, "Directory of labelled volumes")->required();
  g->add_option("--calibration", seg.calibration, "calibration.txt from the calibrate command")
      ->required()
      ->check(CLI::ExistingFile);
  g->add_option("--out", seg.out, "Output directory")->required();
  g->add_option("--panels", seg.panels, "PGM panels per case (input | reconstruction | map | segmentation)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Recompute per-case and aggregate metrics from segmentation files");
  e->add_option("--data", ev.data, "Directory of labelled volumes")->required();
  e->add_option("--segmentations", ev.segmentations, "Output directory of the segment command")->required();
  e->add_option("--out", ev.out, "Output directory")->required();

  GradcheckArgs gc;
  auto* k = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and architecture");
  k->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  k->add_option("--max-coords", gc.max_coords, "Coordinates checked per input (0: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return fail(kConfig, "usage", ex.what());
  }

  std::vector<std::string> args(argv, argv + argc);
  try {
    if (*s) {
      RunManifest m("synth", args);
      return cmd_synth(synth, m);
    }
    if (*t) {
      RunManifest m("train", args);
      return cmd_train(train, m);
    }
    if (*c) {
      RunManifest m("calibrate", args);
      return cmd_calibrate(cal, m);
    }
    if (*g) {
      RunManifest m("segment", args);
      return cmd_segment(seg, m);
    }
    if (*e) {
      RunManifest m("eval", args);
      return cmd_eval(ev, m);
    }
    if (*k) return cmd_gradcheck(gc);
  } catch (const uad::ConfigError& ex) {
    return fail(kConfig, "config", ex.what());
  } catch (const uad::UsageError& ex) {
    return fail(kConfig, "usage", ex.what());
  } catch (const uad::IoError& ex) {
    return fail(kIo, "io", ex.what());
  } catch (const uad::ParseError& ex) {
    return fail(kIo, "parse", ex.what());
  } catch (const uad::NumericError& ex) {
    return fail(kNumeric, "numeric", ex.what());
  } catch (const std::exception& ex) {
    return fail(kFailure, "internal", ex.what());
  }
  return kFailure;
}
