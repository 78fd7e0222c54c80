#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uad/config.hpp"
#include "uad/metrics.hpp"
#include "uad/vae.hpp"
#include "uad/volume.hpp"

namespace uad {

/// |x - x_hat| on the grid of the source volume.
struct AnomalyMap {
  std::string id;
  Shape shape;
  std::vector<float> values;
};

struct InferenceOptions {
  /// Sample z = mu + sigma * eps instead of using mu.
  bool sample = false;
  std::uint64_t seed = 0;
  /// Central axial slices that are reconstructed and scored (0: default_slab).
  std::size_t slab = 0;
  /// Slices per forward pass for 2D models.
  std::size_t batch = 16;
};

/// Slab depth actually used for a volume of the given depth.
std::size_t resolve_slab(std::size_t depth, std::size_t requested);

/// Mask of the central `count` axial slices.
Mask slab_mask(const Shape& shape, std::size_t count);

/// Model reconstruction of a preprocessed 3D volume. 2D models reconstruct
/// the slab slice by slice; voxels outside the slab are copied from the input.
template <class T>
std::vector<float> reconstruct(const VaeModel<T>& model, const Volume& v, const InferenceOptions& opts = {});

AnomalyMap anomaly_map(const Volume& x, const std::vector<float>& x_hat);

template <class T>
AnomalyMap anomaly_map(const Volume& x, const VaeModel<T>& model, const InferenceOptions& opts = {}) {
  return anomaly_map(x, reconstruct(model, x, opts));
}

/// Voxel set iff value > threshold.
Mask binarize(const AnomalyMap& map, double threshold);

/// Erosion by the face-connected neighbourhood; voxels outside the grid
/// count as background.
Mask erode(const Mask& mask);

inline constexpr std::size_t kMinComponentSize = 10;

struct Segmentation {
  Mask mask;
  double threshold = 0.0;
  bool eroded_brain = true;
  std::size_t min_component = kMinComponentSize;
  Connectivity connectivity = Connectivity::Full;
};

/// Intersects with the eroded brain mask, then drops connected components
/// (26-connectivity in 3D, 8 in 2D) smaller than kMinComponentSize.
Segmentation postprocess(const Mask& raw, const Mask& brain, double threshold = 0.0);

/// Binarize, keep voxels inside `domain` (whole grid when empty), postprocess.
Segmentation segment(const AnomalyMap& map, const Mask& brain, const Mask& domain, double threshold);

inline constexpr std::size_t kThresholdCount = 15;
inline constexpr double kThresholdMax = 0.15;

/// 15 equally spaced candidates from 0 to 0.15 inclusive.
std::vector<double> threshold_grid();

struct CalibrationCase {
  std::string id;
  AnomalyMap map;
  Mask brain;
  Mask truth;
  /// Voxels scored by Dice; empty means the whole grid.
  Mask domain;
};

struct ThresholdCalibration {
  std::vector<double> candidates;
  std::vector<double> mean_dice;
  double chosen = 0.0;
  std::size_t chosen_index = 0;
  std::vector<std::string> case_ids;
};

/// Mean post-processed Dice of one threshold over the cases.
double mean_dice_at(const std::vector<CalibrationCase>& cases, double threshold);

/// Picks the candidate with the best mean Dice, ties to the smaller value.
/// Cases with an empty truth mask are ignored; throws UsageError if none remain.
ThresholdCalibration calibrate_threshold(const std::vector<CalibrationCase>& cases);

KeyValueFile calibration_to_kv(const ThresholdCalibration& c);
ThresholdCalibration calibration_from_kv(const KeyValueFile& kv);

struct CaseReport {
  std::string id;
  double threshold = 0.0;
  double dice = 0.0;
  std::optional<double> spe;
  std::optional<double> sen;
  double mae = 0.0;
};

struct AggregateReport {
  std::size_t cases = 0;
  MeanStd dice;
  /// Means over the cases where the measure is defined.
  MeanStd spe;
  MeanStd sen;
  MeanStd mae;
};

CaseReport score_case(const std::string& id, double threshold, const Mask& segmentation, const Mask& truth,
                      const Mask& domain, const std::vector<float>& x, const std::vector<float>& x_hat);

AggregateReport aggregate(const std::vector<CaseReport>& cases);

/// "id,threshold,dice,spe,sen,mae"; undefined measures are written as "nan".
std::string cases_csv(const std::vector<CaseReport>& cases);
std::vector<CaseReport> parse_cases_csv(const std::string& text);
std::string aggregate_csv(const std::string& label, const AggregateReport& a);
std::string aggregate_csv_header();

/// Everything produced for one test case.
struct CaseOutput {
  std::string id;
  std::vector<float> reconstruction;
  AnomalyMap map;
  Segmentation segmentation;
  Mask domain;
  CaseReport report;
};

/// Brain mask restricted to the scoring slab.
Mask evaluation_domain(const Volume& v, std::size_t slab);

/// Map, segmentation and scores of one volume at a fixed threshold.
template <class T>
CaseOutput process_case(const VaeModel<T>& model, const Volume& v, double threshold, const InferenceOptions& opts = {});

/// Calibration cases (map, brain, truth, domain) for a set of volumes.
template <class T>
std::vector<CalibrationCase> calibration_cases(const VaeModel<T>& model, const std::vector<Volume>& volumes,
                                               const InferenceOptions& opts = {});

struct EvaluationResult {
  std::vector<CaseOutput> outputs;
  std::vector<CaseReport> cases;
  AggregateReport aggregate;
};

/// Scores every test volume at the calibrated threshold. Volumes without a
/// lesion mask are skipped with a warning on stderr.
template <class T>
EvaluationResult evaluate_split(const VaeModel<T>& model, const std::vector<Volume>& test,
                                const ThresholdCalibration& calibration, const InferenceOptions& opts = {});

struct Split {
  std::vector<std::string> calibration;
  std::vector<std::string> test;
};

/// Seeded random halves; the calibration half gets the extra case when n is odd.
Split split_cases(std::vector<std::string> ids, std::uint64_t seed);

/// Segmentation file: voxels hold the reconstruction, the brain section the
/// scoring domain, the lesion section the segmentation mask.
Volume segmentation_volume(const CaseOutput& out, const Volume& source);

/// Axial slice z as a PGM strip: input | reconstruction | map | segmentation.
void write_panel(const std::string& path, const Volume& v, const CaseOutput& out, std::size_t z);

}  // namespace uad
