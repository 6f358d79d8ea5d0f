#include "oaslam/fusion.hpp"

#include <cmath>
#include <sstream>

#include "oaslam/errors.hpp"

namespace oaslam {

void SonarPing::validate(const SonarConfig& cfg) const {
  const double half = 0.5 * cfg.horizontal_fov;
  for (std::size_t i = 0; i < beams.size(); ++i) {
    const auto& b = beams[i];
    std::ostringstream msg;
    if (!std::isfinite(b.bearing) || std::abs(b.bearing) > half + 1e-12) {
      msg << "ping beam " << i << " bearing outside the sonar fan";
    } else if (i > 0 && !(b.bearing > beams[i - 1].bearing)) {
      msg << "ping beam bearings must be strictly increasing (beam " << i << ")";
    } else if (b.intensities.size() != static_cast<std::size_t>(cfg.num_bins)) {
      msg << "ping beam " << i << " has " << b.intensities.size() << " bins, expected " << cfg.num_bins;
    }
    if (!msg.str().empty()) throw InputError(msg.str());
  }
}

std::optional<RangeReturn> bearing_to_range(double bearing, const SonarPing& ping,
                                            const SonarConfig& cfg) {
  if (!(std::abs(bearing) <= 0.5 * cfg.horizontal_fov)) {
    std::ostringstream msg;
    msg << "bearing " << bearing << " rad outside sonar fov";
    throw OutOfFovError(msg.str());
  }
  // Windows are closed and padded by a rounding allowance so a bearing on
  // the boundary between two beams is never left uncovered.
  const double half_res = 0.5 * cfg.angular_resolution() + kBeamWindowSlack;
  for (std::size_t b = 0; b < ping.beams.size(); ++b) {
    const auto& beam = ping.beams[b];
    if (beam.bearing < bearing - half_res || beam.bearing > bearing + half_res) continue;
    if (beam.intensities.empty()) return std::nullopt;
    std::size_t peak = 0;
    for (std::size_t k = 1; k < beam.intensities.size(); ++k) {
      if (beam.intensities[k] > beam.intensities[peak]) peak = k;
    }
    if (beam.intensities[peak] >= cfg.intensity_threshold) {
      return RangeReturn{(static_cast<double>(peak) + 0.5) * cfg.range_resolution,
                         static_cast<int>(b), static_cast<int>(peak)};
    }
    return std::nullopt;
  }
  return std::nullopt;
}

std::string to_string(NoFixReason reason) {
  switch (reason) {
    case NoFixReason::kNone: return "none";
    case NoFixReason::kNoReturn: return "no_return";
    case NoFixReason::kOutOfFov: return "out_of_fov";
    case NoFixReason::kOutOfImage: return "out_of_image";
  }
  return "unknown";
}

FixOutcome localize_object(const Pixel& centroid, const SonarPing& ping,
                           const CameraIntrinsics& cam, const SonarConfig& cfg,
                           bool slant_correction) {
  if (!cam.contains(centroid)) return {std::nullopt, NoFixReason::kOutOfImage};
  const double bearing = pixel_to_bearing(centroid, cam);
  const double elevation = pixel_to_elevation(centroid, cam);
  std::optional<RangeReturn> ret;
  try {
    ret = bearing_to_range(bearing, ping, cfg);
  } catch (const OutOfFovError&) {
    return {std::nullopt, NoFixReason::kOutOfFov};
  }
  if (!ret) return {std::nullopt, NoFixReason::kNoReturn};

  double z = ret->range;
  if (slant_correction) z *= std::cos(bearing) * std::cos(elevation);
  ObjectFix fix{Vec3(z * std::tan(bearing), z * std::tan(elevation), z), bearing, elevation,
                ret->beam, ret->bin};
  return {fix, NoFixReason::kNone};
}

}  // namespace oaslam
