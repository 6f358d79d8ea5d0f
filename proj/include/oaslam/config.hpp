#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oaslam/beacons.hpp"
#include "oaslam/eval.hpp"
#include "oaslam/sim.hpp"
#include "oaslam/slam.hpp"

namespace oaslam {

struct BeaconSimConfig {
  bool enabled = false;  // append beacon_ranges records to simulated datasets
  BeaconSet beacons{{Vec2(-2.0, -3.0), Vec2(14.0, -3.0)}};
  double range_sigma = 0.0;
  double bearing_sigma = 0.0;
  Vec2 initial_guess = Vec2(6.0, 4.0);
};

/// Everything a command needs. Camera, sonar and extrinsics are shared by
/// the simulator and the SLAM front end.
struct RunConfig {
  std::uint64_t seed = 1;
  CameraIntrinsics camera = default_camera();
  SonarConfig sonar = default_sonar();
  Extrinsics extrinsics = Extrinsics::colocated();
  bool slant_range = false;
  TrajectorySpec trajectory{default_waypoints()};
  std::vector<WorldObject> objects = default_world_objects();
  PrototypeSpec prototypes{384, 0.5, {{2, 3}}, 0.9};
  double object_radius = 0.2;
  NoiseSpec noise;
  BeaconSimConfig beacons;
  SlamConfig slam;  // camera/sonar/extrinsics fields are taken from above
  EvalSettings eval;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Defaults merged with the JSON text. Unknown keys and wrongly typed values
/// are ConfigErrors that name the key path.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
/// Full effective configuration; parsing it back reproduces `config`.
std::string dump_run_config(const RunConfig& config);

SlamConfig slam_config(const RunConfig& config);
WorldSpec world_spec(const RunConfig& config);
SensorSuite sensor_suite(const RunConfig& config);

/// Trajectory, sensors and (when enabled) beacon ranges for the configured world.
SimulationOutput simulate(const RunConfig& config);

}  // namespace oaslam
