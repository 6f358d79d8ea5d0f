#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oaslam/dataset.hpp"
#include "oaslam/slam.hpp"

namespace oaslam {

struct ApeResult {
  double ape;
  int pairs;
  bool aligned;
};

/// Mean translation error over estimate samples paired with the nearest
/// reference sample within max_skew (ties: earlier reference). With `align`
/// the estimate is first moved by the least-squares planar rigid transform.
/// Throws InputError when nothing pairs.
ApeResult ape(std::vector<TimedPose> estimate, std::vector<TimedPose> reference, double max_skew = 0.05,
              bool align = false);

struct MapMatch {
  int landmark_id;
  int object_id;
  double distance;
};

struct MapMatchReport {
  std::vector<MapMatch> matches;
  std::vector<int> false_positives;  // landmark ids
  std::vector<int> false_negatives;  // object ids
  double precision = 0.0;
  double recall = 0.0;
  bool precision_defined = true;  // false for an empty map
  double radius = 1.0;
};

/// True object behind most of the landmark's supporting detections; ties go
/// to the lower object id. Empty when no support maps to the truth.
std::optional<int> majority_object(const Landmark& lm, const GroundTruth& truth);

/// Greedy matching by ascending distance (ties: lower landmark id, then
/// lower object id). A landmark counts only for the object it mostly observed
/// and only within `radius`.
MapMatchReport map_precision_recall(const std::vector<Landmark>& map, const GroundTruth& truth, double radius = 1.0);

struct EvalSettings {
  double match_radius = 1.0;
  double max_skew = 0.05;
  bool align = false;
};

struct AblationConfig {
  std::string name;
  SlamConfig slam;
};

/// odometry-only, geometric (nearest neighbour, no semantics),
/// geometric+uncertainty (chi-square gate, no semantics), full.
std::vector<AblationConfig> default_ablation_suite(const SlamConfig& base);

struct AblationRow {
  std::string name;
  double ape;
  double precision;
  double recall;
  int landmarks;
};

std::vector<AblationRow> run_ablation(const std::vector<DatasetRecord>& records, const GroundTruth& truth,
                                      const std::vector<AblationConfig>& configs, const EvalSettings& settings);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace oaslam
