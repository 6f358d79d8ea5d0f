#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "oaslam/beacons.hpp"
#include "oaslam/dataset.hpp"
#include "oaslam/geometry.hpp"

namespace oaslam {

/// Closed loop through the waypoints with circular fillets of corner_radius.
/// Two waypoints give a stadium whose end turns are centered on them.
struct TrajectorySpec {
  std::vector<Vec2> waypoints;
  double corner_radius = 2.0;
  double depth = 1.0;
  int laps = 2;
  double speed = 0.25;  // m/s
  double rate = 0.5;    // samples per second
  double start_time = 0.0;

  void validate() const;
};

double loop_length(const TrajectorySpec& spec);
/// Steps per lap; the trajectory has laps * steps + 1 samples.
int steps_per_lap(const TrajectorySpec& spec);
/// Arc-length sampled, tangent-aligned poses. Each lap ends exactly where it started.
std::vector<TimedPose> generate_trajectory(const TrajectorySpec& spec);

struct WorldObject {
  Vec3 position;
  int class_id;
};

struct PrototypeSpec {
  int dim = 384;
  double max_cosine = 0.5;
  std::vector<std::pair<int, int>> confusable_pairs;
  double confusable_cosine = 0.9;
};

struct WorldSpec {
  std::vector<WorldObject> objects;
  std::map<int, Eigen::VectorXd> prototypes;  // unit vectors
  double object_radius = 0.2;                 // angular extent of sonar returns
  std::uint64_t seed = 0;
};

/// Random unit prototypes for the given classes with pairwise cosine at most
/// max_cosine, except confusable pairs which sit at confusable_cosine.
std::map<int, Eigen::VectorXd> make_prototypes(const std::vector<int>& class_ids, const PrototypeSpec& spec,
                                               std::uint64_t seed);

/// Throws InputError when a non-confusable prototype pair exceeds max_cosine.
void check_prototypes(const std::map<int, Eigen::VectorXd>& prototypes, const PrototypeSpec& spec);

/// Twelve objects around the default tank loop.
std::vector<WorldObject> default_world_objects();
std::vector<Vec2> default_waypoints();

struct NoiseSpec {
  double odometry_translation_sigma = 0.0;  // m per step, each body axis
  double odometry_rotation_sigma = 0.0;     // rad per step, each body axis
  Vec3 odometry_translation_bias = Vec3::Zero();
  Vec3 odometry_rotation_bias = Vec3::Zero();
  double pixel_sigma = 0.0;
  double embedding_sigma = 0.0;  // noise norm relative to the unit prototype
  double range_sigma = 0.0;
  double multipath_probability = 0.0;
  double multipath_min_factor = 1.2;
  double multipath_max_factor = 2.0;
  double dropout_probability = 0.0;
  double depth_sigma = 0.0;
  double attitude_sigma = 0.0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct SensorSuite {
  CameraIntrinsics camera;
  SonarConfig sonar;
  Extrinsics extrinsics = Extrinsics::colocated();
  /// Render sonar peaks at the slant range instead of the optical-axis depth.
  bool slant_range = false;
};

/// 640x480 camera with an 80 x 64 degree field of view.
CameraIntrinsics default_camera();
/// 60 degree fan of 64 beams, 5 cm bins out to 8 m.
SonarConfig default_sonar();

struct VisibilityTest {
  bool in_camera;
  bool in_sonar_fan;
  bool in_range;
  bool visible() const { return in_camera && in_sonar_fan && in_range; }
};

VisibilityTest object_visibility(const Pose3& body, const Vec3& object, const SensorSuite& sensors);

struct SimulationOutput {
  std::vector<DatasetRecord> records;
  GroundTruth truth;
};

SimulationOutput render_sensors(const std::vector<TimedPose>& trajectory, const WorldSpec& world,
                                const NoiseSpec& noise, const SensorSuite& sensors);

/// One observation per trajectory sample: planar ranges with Gaussian noise
/// and array bearings that invert the heading formula at the true yaw.
std::vector<RangeObservation> render_beacon_ranges(const std::vector<TimedPose>& trajectory,
                                                   const BeaconSet& beacons, double range_sigma,
                                                   double bearing_sigma, std::uint64_t seed);

}  // namespace oaslam
