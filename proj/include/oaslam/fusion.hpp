#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oaslam/geometry.hpp"

namespace oaslam {

struct SonarBeam {
  double bearing;                  // radians, positive to the right
  std::vector<double> intensities;  // one per range bin, in [0, 1]
};

struct SonarPing {
  double timestamp = 0.0;
  std::vector<SonarBeam> beams;

  /// Bearings strictly increasing inside the fan, one intensity per bin.
  void validate(const SonarConfig& cfg) const;
};

/// Added to half the angular resolution when matching a bearing to beams.
constexpr double kBeamWindowSlack = 1e-12;

struct RangeReturn {
  double range;  // meters, bin center
  int beam;
  int bin;
};

/// Range along the first beam whose angular window contains `bearing`, taken
/// at the peak-intensity bin. Empty when that beam never reaches the
/// threshold or no beam covers the bearing. Throws OutOfFovError when
/// |bearing| exceeds half the fan.
std::optional<RangeReturn> bearing_to_range(double bearing, const SonarPing& ping,
                                            const SonarConfig& cfg);

struct ObjectFix {
  Vec3 point_camera;  // X right, Y down, Z forward
  double bearing;
  double elevation;
  int range_source_beam;
  int range_bin;
};

enum class NoFixReason { kNone, kNoReturn, kOutOfFov, kOutOfImage };

std::string to_string(NoFixReason reason);

struct FixOutcome {
  std::optional<ObjectFix> fix;
  NoFixReason reason = NoFixReason::kNone;
};

/// Camera angles plus sonar range -> camera-frame 3D point. With
/// slant_correction the along-beam range r becomes Z = r cos(bearing) cos(elevation);
/// otherwise r is used as Z directly.
FixOutcome localize_object(const Pixel& centroid, const SonarPing& ping,
                           const CameraIntrinsics& cam, const SonarConfig& cfg,
                           bool slant_correction = false);

}  // namespace oaslam
