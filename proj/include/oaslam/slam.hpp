#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oaslam/association.hpp"
#include "oaslam/dataset.hpp"
#include "oaslam/fusion.hpp"
#include "oaslam/graph.hpp"

namespace oaslam {

struct SlamConfig {
  CameraIntrinsics camera;
  SonarConfig sonar;
  Extrinsics extrinsics = Extrinsics::colocated();
  bool slant_correction = false;
  double max_skew = 0.15;  // camera/sonar pairing window, seconds
  /// Off: the trajectory is plain dead reckoning and no graph is built.
  bool landmarks_enabled = true;
  AssociationConfig association;
  SolverSettings solver;
  std::optional<Pose3> initial_pose;
  Vec6 prior_sigma = (Vec6() << 0.01, 0.01, 0.01, 0.05, 0.05, 0.05).finished();
  /// Per odometry step; composed steps scale by sqrt(count).
  Vec6 odometry_sigma = (Vec6() << 0.005, 0.005, 0.005, 0.02, 0.02, 0.02).finished();
  Vec3 partial_pose_sigma = Vec3(0.05, 0.01, 0.01);
  Vec3 absolute_sigma = Vec3(0.1, 0.1, 0.05);
  Vec3 landmark_sigma = Vec3(0.01, 0.01, 0.1);
  /// Re-solve in batch at the end and report the largest difference.
  bool batch_check = true;

  void validate() const;
};

/// Index of the ping nearest to frame_t within max_skew; ties go to the
/// earlier ping. `pings` must be sorted by timestamp.
std::optional<std::size_t> pair_camera_sonar(double frame_t, const std::vector<SonarPing>& pings, double max_skew);

struct DecisionRecord {
  int frame;  // ordinal of the camera_frame record
  double t;
  int detection;
  std::string outcome;  // matched | new_landmark | dropped
  int landmark_id = -1;
  std::string reason;   // why a detection was dropped
  std::vector<CandidateScore> scores;
  std::string note;
};

struct ConvergenceReport {
  int keyframes = 0;
  int poses = 0;
  int landmarks = 0;
  int factors = 0;
  int detections = 0;
  int dropped_detections = 0;
  int updates = 0;
  int total_iterations = 0;
  int last_iterations = 0;
  double final_cost = 0.0;
  bool converged = true;
  std::string termination;
  std::optional<double> incremental_batch_max_diff;
  std::optional<double> batch_final_cost;
};

struct SlamResult {
  std::vector<Landmark> landmarks;
  std::vector<TimedPose> trajectory;
  std::vector<DecisionRecord> decisions;
  ConvergenceReport report;
  FactorGraph graph;
};

/// Throws EmptyMapError on an empty dataset, InputError when there is no
/// odometry or absolute source, ConfigError when landmarks would be added
/// to an unanchored graph, and SolverError from the optimizer.
SlamResult run_slam(const std::vector<DatasetRecord>& records, const SlamConfig& config);

std::string format_landmark(const Landmark& lm);
std::string format_decision(const DecisionRecord& d);
std::string format_report(const ConvergenceReport& r);

/// Landmark lines of a map file (position, count, support; embedding when present).
std::vector<Landmark> read_map_file(const std::string& path);

}  // namespace oaslam
