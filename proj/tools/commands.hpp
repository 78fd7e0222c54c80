#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "uad/config.hpp"

namespace uad::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Record written next to every output artifact.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void seed(std::uint64_t s) { seed_ = s; }
  void config(const KeyValueFile& kv, const std::string& prefix = "config.");
  void input(const std::string& path) { inputs_.push_back(path); }
  void output(const std::string& path) { outputs_.push_back(path); }

  /// Writes <dir>/manifest.txt atomically.
  void write(const std::string& dir) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::uint64_t seed_ = 0;
  KeyValueFile config_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
};

struct SynthArgs {
  std::string spec;
  std::size_t n = 0;
  std::string out;
  bool lesioned = false;
  bool has_seed = false;
  std::uint64_t seed = 0;
  bool pgm = false;
};

struct TrainArgs {
  std::string config;
  std::string out;
};

struct CalibrateArgs {
  std::string model;
  std::string data;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t slab = 0;
  bool sample = false;
};

struct SegmentArgs {
  std::string model;
  std::string data;
  std::string calibration;
  std::string out;
  std::size_t panels = 0;
};

struct EvalArgs {
  std::string data;
  std::string segmentations;
  std::string out;
};

struct GradcheckArgs {
  double tolerance = 1e-4;
  std::size_t max_coords = 0;
};

int cmd_synth(const SynthArgs& a, RunManifest& m);
int cmd_train(const TrainArgs& a, RunManifest& m);
int cmd_calibrate(const CalibrateArgs& a, RunManifest& m);
int cmd_segment(const SegmentArgs& a, RunManifest& m);
int cmd_eval(const EvalArgs& a, RunManifest& m);
int cmd_gradcheck(const GradcheckArgs& a);

}  // namespace uad::cli
