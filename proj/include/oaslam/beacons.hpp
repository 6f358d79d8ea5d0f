#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace oaslam {

using Vec2 = Eigen::Vector2d;

/// Beacon positions in the world frame. At least two, pairwise distinct.
struct BeaconSet {
  std::vector<Vec2> beacons;

  void validate() const;
};

/// One acoustic epoch. Entries may be absent per beacon.
struct RangeObservation {
  double timestamp = 0.0;
  std::vector<std::optional<double>> ranges;    // meters
  std::vector<std::optional<double>> bearings;  // array bearing per beacon, radians
};

struct TrilaterationResult {
  Vec2 position;
  double residual_norm;
  int iterations;
};

/// Gauss-Newton on sum_k (|p - b_k| - r_k)^2 until |J^T r| < 1e-10. Throws
/// InputError with fewer than two ranges and OptimizationFailure after 100
/// iterations.
TrilaterationResult trilaterate(const RangeObservation& obs, const BeaconSet& beacons,
                                const Vec2& initial_guess);

/// [phi - atan2(y - y_k, x - x_k) - pi/2] mod 2pi. Throws UndefinedHeadingError
/// when the position coincides with the beacon.
double heading_from_array(double array_bearing, const Vec2& position, const Vec2& beacon);

/// Array bearing that heading_from_array maps back to `heading`, in (-pi, pi].
double array_bearing_for(double heading, const Vec2& position, const Vec2& beacon);

struct TrackPoint {
  double timestamp;
  std::optional<Vec2> position;  // empty: fewer than two ranges (gap)
  std::optional<double> heading;  // circular mean over beacons with a bearing, [0, 2pi)
  double residual_norm = 0.0;
};

/// Sequential trilateration, each epoch seeded by the last solved position.
std::vector<TrackPoint> solve_track(const std::vector<RangeObservation>& observations,
                                    const BeaconSet& beacons, const Vec2& initial_guess);

}  // namespace oaslam
