#include "oaslam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oaslam/errors.hpp"
#include "oaslam/fusion.hpp"
#include "oaslam/rng.hpp"

namespace oaslam {

namespace {

// Address space of the counter-based generator.
enum Stream : std::uint32_t {
  kOdometry = 1,
  kPixel,
  kEmbeddingNoise,
  kRange,
  kMultipath,
  kDropout,
  kBackground,
  kPrototype,
  kBeaconRange,
  kBeaconBearing,
  kPartialPose,
};

constexpr double kPeakIntensity = 1.0;
constexpr double kBackgroundFraction = 0.6;  // of the detection threshold

struct Segment {
  bool arc;
  Vec2 start;
  Vec2 end;        // lines
  Vec2 center;     // arcs
  double radius;   // arcs
  double angle0;   // arcs: polar angle of start around center
  double sweep;    // arcs: signed
  double length;
};

Vec2 left_normal(const Vec2& d) { return {-d.y(), d.x()}; }

Segment line(const Vec2& a, const Vec2& b) { return {false, a, b, Vec2::Zero(), 0, 0, 0, (b - a).norm()}; }

Segment arc(const Vec2& center, double radius, const Vec2& from, double sweep) {
  const Vec2 r = from - center;
  return {true, from, Vec2::Zero(), center, radius, std::atan2(r.y(), r.x()), sweep, radius * std::abs(sweep)};
}

std::vector<Segment> build_loop(const TrajectorySpec& spec) {
  const auto& w = spec.waypoints;
  const double r = spec.corner_radius;
  std::vector<Segment> segs;
  if (w.size() == 2) {
    const Vec2 d = (w[1] - w[0]).normalized();
    const Vec2 n = left_normal(d);
    segs.push_back(line(w[0] - r * n, w[1] - r * n));
    segs.push_back(arc(w[1], r, w[1] - r * n, kPi));
    segs.push_back(line(w[1] + r * n, w[0] + r * n));
    segs.push_back(arc(w[0], r, w[0] + r * n, kPi));
    return segs;
  }
  const std::size_t n = w.size();
  std::vector<Vec2> t_in(n), t_out(n);
  std::vector<double> turn(n), tangent(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = w[(i + n - 1) % n];
    const Vec2& c = w[i];
    const Vec2& q = w[(i + 1) % n];
    const Vec2 d1 = (c - p).normalized();
    const Vec2 d2 = (q - c).normalized();
    turn[i] = std::atan2(d1.x() * d2.y() - d1.y() * d2.x(), d1.dot(d2));
    if (std::abs(turn[i]) > kPi - 1e-6) throw InputError("degenerate waypoints: the loop reverses on itself");
    tangent[i] = r * std::tan(std::abs(turn[i]) / 2);
    t_in[i] = c - d1 * tangent[i];
    t_out[i] = c + d2 * tangent[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    if (tangent[i] + tangent[j] > (w[j] - w[i]).norm() + 1e-12) {
      throw InputError("corner_radius too large for the waypoint spacing");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    segs.push_back(line(t_out[i], t_in[j]));
    if (std::abs(turn[j]) > 1e-12) {
      const Vec2 d1 = (w[j] - w[i]).normalized();
      const Vec2 normal = turn[j] > 0 ? left_normal(d1) : Vec2(-left_normal(d1));
      segs.push_back(arc(t_in[j] + r * normal, r, t_in[j], turn[j]));
    }
  }
  return segs;
}

// Position and heading at arc length s along the loop.
std::pair<Vec2, double> point_at(const std::vector<Segment>& segs, double s) {
  for (const auto& seg : segs) {
    if (s <= seg.length || &seg == &segs.back()) {
      const double u = std::min(s, seg.length);
      if (!seg.arc) {
        const Vec2 d = (seg.end - seg.start) / seg.length;
        return {seg.start + d * u, std::atan2(d.y(), d.x())};
      }
      const double sign = seg.sweep > 0 ? 1.0 : -1.0;
      const double a = seg.angle0 + sign * u / seg.radius;
      const Vec2 p = seg.center + seg.radius * Vec2(std::cos(a), std::sin(a));
      return {p, wrap_angle(a + sign * kPi / 2)};
    }
    s -= seg.length;
  }
  return {segs.front().start, 0.0};
}

}  // namespace

void TrajectorySpec::validate() const {
  if (waypoints.size() < 2) throw InputError("trajectory needs at least 2 waypoints");
  for (const auto& w : waypoints) {
    if (!w.allFinite()) throw InputError("trajectory waypoint is not finite");
  }
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    if ((waypoints[i] - waypoints[(i + 1) % waypoints.size()]).norm() < 1e-9) {
      throw InputError("degenerate waypoints: consecutive waypoints coincide");
    }
  }
  if (!(corner_radius > 0.0)) throw InputError("trajectory.corner_radius must be > 0");
  if (laps < 1) throw InputError("trajectory.laps must be >= 1");
  if (!(speed > 0.0)) throw InputError("trajectory.speed must be > 0");
  if (!(rate > 0.0)) throw InputError("trajectory.rate must be > 0");
  if (!std::isfinite(depth) || !std::isfinite(start_time)) throw InputError("trajectory depth and start_time must be finite");
}

double loop_length(const TrajectorySpec& spec) {
  spec.validate();
  double total = 0.0;
  for (const auto& s : build_loop(spec)) total += s.length;
  return total;
}

int steps_per_lap(const TrajectorySpec& spec) {
  const double length = loop_length(spec);
  return std::max(1, static_cast<int>(std::lround(length / (spec.speed / spec.rate))));
}

std::vector<TimedPose> generate_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  const auto segs = build_loop(spec);
  double length = 0.0;
  for (const auto& s : segs) length += s.length;
  const int n = std::max(1, static_cast<int>(std::lround(length / (spec.speed / spec.rate))));
  const double ds = length / n;
  std::vector<TimedPose> out;
  out.reserve(static_cast<std::size_t>(spec.laps) * n + 1);
  for (int k = 0; k <= spec.laps * n; ++k) {
    const auto [p, yaw] = point_at(segs, (k % n) * ds);
    out.push_back({spec.start_time + k / spec.rate, Pose3::from_euler(yaw, 0.0, 0.0, Vec3(p.x(), p.y(), spec.depth))});
  }
  return out;
}

std::map<int, Eigen::VectorXd> make_prototypes(const std::vector<int>& class_ids, const PrototypeSpec& spec,
                                               std::uint64_t seed) {
  if (spec.dim < 2) throw ConfigError("world.embedding_dim must be >= 2");
  std::vector<int> ids = class_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  auto partner_of = [&](int c) -> std::optional<int> {
    for (const auto& [a, b] : spec.confusable_pairs) {
      if (b == c) return a;
      if (a == c) return b;
    }
    return std::nullopt;
  };
  auto gaussian = [&](std::uint32_t cls, std::uint32_t attempt) {
    CounterRng rng(seed, kPrototype, cls, attempt);
    Eigen::VectorXd v(spec.dim);
    for (int i = 0; i < spec.dim; ++i) v(i) = rng.normal();
    return v;
  };

  std::map<int, Eigen::VectorXd> protos;
  for (int c : ids) {
    const auto partner = partner_of(c);
    const bool derived = partner && protos.count(*partner);
    bool placed = false;
    for (std::uint32_t attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Eigen::VectorXd v = gaussian(static_cast<std::uint32_t>(c), attempt);
      if (derived) {
        const Eigen::VectorXd& p = protos.at(*partner);
        v -= v.dot(p) * p;
        v = spec.confusable_cosine * p + std::sqrt(1.0 - spec.confusable_cosine * spec.confusable_cosine) * v.normalized();
      }
      v.normalize();
      placed = true;
      for (const auto& [other, q] : protos) {
        if (partner && other == *partner) continue;
        if (v.dot(q) > spec.max_cosine) {
          placed = false;
          break;
        }
      }
      if (placed) protos[c] = v;
    }
    if (!placed) throw ConfigError("could not place class prototypes under world.max_prototype_cosine");
  }
  return protos;
}

void check_prototypes(const std::map<int, Eigen::VectorXd>& prototypes, const PrototypeSpec& spec) {
  for (auto a = prototypes.begin(); a != prototypes.end(); ++a) {
    for (auto b = std::next(a); b != prototypes.end(); ++b) {
      const bool confusable = std::any_of(spec.confusable_pairs.begin(), spec.confusable_pairs.end(), [&](const auto& p) {
        return (p.first == a->first && p.second == b->first) || (p.first == b->first && p.second == a->first);
      });
      if (!confusable && a->second.dot(b->second) > spec.max_cosine + 1e-12) {
        throw InputError("prototypes " + std::to_string(a->first) + " and " + std::to_string(b->first) +
                         " exceed the maximum cosine");
      }
    }
  }
}

std::vector<Vec2> default_waypoints() { return {{0, 0}, {12, 0}, {12, 8}, {0, 8}}; }

std::vector<WorldObject> default_world_objects() {
  // Classes 2 and 3 are the confusable pair, kept far apart. Objects 7 and 8
  // are a close pair of unrelated classes.
  return {
      {{6.0, 1.6, 1.3}, 0},   {{7.0, -1.2, 0.8}, 1},  {{10.0, 1.3, 1.4}, 2}, {{15.0, 0.5, 1.0}, 3},
      {{13.3, 4.0, 1.2}, 4},  {{10.7, 6.0, 1.5}, 5},  {{12.5, 11.0, 0.9}, 6}, {{6.0, 9.4, 1.2}, 7},
      {{6.0, 8.6, 0.7}, 8},   {{2.0, 6.7, 1.4}, 0},   {{-1.3, 4.5, 1.0}, 1}, {{-3.0, 0.6, 1.3}, 9},
  };
}

void NoiseSpec::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("noise.") + name + " must be >= 0");
  };
  auto prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("noise.") + name + " must lie in [0, 1]");
  };
  nonneg(odometry_translation_sigma, "odometry_translation_sigma");
  nonneg(odometry_rotation_sigma, "odometry_rotation_sigma");
  nonneg(pixel_sigma, "pixel_sigma");
  nonneg(embedding_sigma, "embedding_sigma");
  nonneg(range_sigma, "range_sigma");
  nonneg(depth_sigma, "depth_sigma");
  nonneg(attitude_sigma, "attitude_sigma");
  prob(multipath_probability, "multipath_probability");
  prob(dropout_probability, "dropout_probability");
  if (!odometry_translation_bias.allFinite()) throw ConfigError("noise.odometry_translation_bias must be finite");
  if (!odometry_rotation_bias.allFinite()) throw ConfigError("noise.odometry_rotation_bias must be finite");
  if (!(multipath_min_factor > 1.0 && multipath_max_factor >= multipath_min_factor && std::isfinite(multipath_max_factor))) {
    throw ConfigError("noise.multipath_factor must satisfy 1 < min <= max");
  }
}

CameraIntrinsics default_camera() {
  return {320.0 / std::tan(40.0 * kPi / 180), 240.0 / std::tan(32.0 * kPi / 180), 320.0, 240.0, 640.0, 480.0};
}

SonarConfig default_sonar() { return {kPi / 3, 64, 0.05, 160, 12.0 * kPi / 180, 0.5}; }

VisibilityTest object_visibility(const Pose3& body, const Vec3& object, const SensorSuite& sensors) {
  const Vec3 pb = body.inverse().transform_point(object);
  const Vec3 pc = sensors.extrinsics.camera_from_body.transform_point(pb);
  const Vec3 ps = sensors.extrinsics.sonar_from_body.transform_point(pb);
  VisibilityTest v{false, false, false};
  v.in_camera = pc.z() > 1e-6 && sensors.camera.contains(sensors.camera.project(pc));
  v.in_sonar_fan = ps.z() > 1e-6 && std::abs(std::atan2(ps.x(), ps.z())) <= sensors.sonar.horizontal_fov / 2;
  v.in_range = ps.norm() < sensors.sonar.max_range();
  return v;
}

SimulationOutput render_sensors(const std::vector<TimedPose>& trajectory, const WorldSpec& world,
                                const NoiseSpec& noise, const SensorSuite& sensors) {
  noise.validate();
  sensors.camera.validate();
  sensors.sonar.validate();
  for (const auto& o : world.objects) {
    if (!world.prototypes.count(o.class_id)) throw InputError("object class without a prototype");
  }
  const std::uint64_t seed = world.seed;
  const auto& cam = sensors.camera;
  const auto& sonar = sensors.sonar;
  const double half_res = 0.5 * sonar.angular_resolution();

  SimulationOutput out;
  out.truth.poses = trajectory;
  for (std::size_t i = 0; i < world.objects.size(); ++i) {
    out.truth.objects.push_back({static_cast<int>(i), world.objects[i].class_id, world.objects[i].position});
  }

  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    const auto event = static_cast<std::uint32_t>(k);
    const double t = trajectory[k].t;
    const Pose3& pose = trajectory[k].pose;

    if (k > 0) {
      const Pose3 truth_delta = compose(inverse(trajectory[k - 1].pose), pose);
      CounterRng rng(seed, kOdometry, event);
      Vec6 d;
      for (int i = 0; i < 3; ++i) d(i) = noise.odometry_rotation_bias(i) + noise.odometry_rotation_sigma * rng.normal();
      for (int i = 0; i < 3; ++i) d(3 + i) = noise.odometry_translation_bias(i) + noise.odometry_translation_sigma * rng.normal();
      out.records.emplace_back(OdometryRecord{t, truth_delta.retract(d)});
    }
    {
      CounterRng rng(seed, kPartialPose, event);
      const double depth = pose.translation().z() + noise.depth_sigma * rng.normal();
      const double pitch = pose.pitch() + noise.attitude_sigma * rng.normal();
      const double roll = pose.roll() + noise.attitude_sigma * rng.normal();
      out.records.emplace_back(PartialPoseRecord{t, depth, pitch, roll});
    }
    if (k == 0) {
      out.records.emplace_back(AbsoluteFixRecord{t, pose.translation().x(), pose.translation().y(), pose.yaw()});
    }

    SonarPing ping;
    ping.timestamp = t;
    for (int b = 0; b < sonar.num_beams; ++b) {
      CounterRng rng(seed, kBackground, event, static_cast<std::uint32_t>(b));
      SonarBeam beam{sonar.beam_bearing(b), std::vector<double>(static_cast<std::size_t>(sonar.num_bins))};
      for (auto& x : beam.intensities) {
        x = std::floor(rng.uniform(0.0, kBackgroundFraction * sonar.intensity_threshold) * 100.0) / 100.0;
      }
      ping.beams.push_back(std::move(beam));
    }

    CameraFrameRecord frame{t, {}};
    FrameTruth frame_truth{t, {}};
    const Pose3 world_to_body = inverse(pose);
    for (std::size_t i = 0; i < world.objects.size(); ++i) {
      const auto item = static_cast<std::uint32_t>(i);
      const auto vis = object_visibility(pose, world.objects[i].position, sensors);
      const Vec3 pb = world_to_body.transform_point(world.objects[i].position);

      if (vis.in_sonar_fan && vis.in_range) {
        const Vec3 ps = sensors.extrinsics.sonar_from_body.transform_point(pb);
        double range = sensors.slant_range ? ps.norm() : ps.z();
        CounterRng range_rng(seed, kRange, event, item);
        range += noise.range_sigma * range_rng.normal();
        CounterRng mp_rng(seed, kMultipath, event, item);
        if (mp_rng.bernoulli(noise.multipath_probability)) {
          range = mp_rng.uniform(noise.multipath_min_factor, noise.multipath_max_factor) *
                  (sensors.slant_range ? ps.norm() : ps.z());
        }
        const double bin_f = std::floor(range / sonar.range_resolution);
        if (bin_f >= 0.0 && bin_f < sonar.num_bins) {
          const auto bin = static_cast<std::size_t>(bin_f);
          const double bearing = std::atan2(ps.x(), ps.z());
          const double extent = std::atan2(world.object_radius, ps.norm());
          for (auto& beam : ping.beams) {
            if (std::abs(beam.bearing - bearing) <= half_res + kBeamWindowSlack + extent) {
              beam.intensities[bin] = kPeakIntensity;
            }
          }
        }
      }

      if (!vis.visible()) continue;
      CounterRng drop_rng(seed, kDropout, event, item);
      if (drop_rng.bernoulli(noise.dropout_probability)) continue;
      const Vec3 pc = sensors.extrinsics.camera_from_body.transform_point(pb);
      Pixel px = cam.project(pc);
      CounterRng px_rng(seed, kPixel, event, item);
      px.u += noise.pixel_sigma * px_rng.normal();
      px.v += noise.pixel_sigma * px_rng.normal();
      if (!cam.contains(px)) continue;

      const Eigen::VectorXd& proto = world.prototypes.at(world.objects[i].class_id);
      Eigen::VectorXd e = proto;
      if (noise.embedding_sigma > 0.0) {
        CounterRng emb_rng(seed, kEmbeddingNoise, event, item);
        const double scale = noise.embedding_sigma / std::sqrt(static_cast<double>(proto.size()));
        for (Eigen::Index j = 0; j < e.size(); ++j) e(j) += scale * emb_rng.normal();
        e.normalize();
      }
      const double apparent = cam.fx * world.object_radius / pc.z();
      frame.detections.push_back(Detection{px, Embedding(e), kPi * apparent * apparent});
      frame_truth.object_ids.push_back(static_cast<int>(i));
    }
    out.records.emplace_back(std::move(ping));
    out.records.emplace_back(std::move(frame));
    out.truth.frames.push_back(std::move(frame_truth));
  }
  return out;
}

std::vector<RangeObservation> render_beacon_ranges(const std::vector<TimedPose>& trajectory,
                                                   const BeaconSet& beacons, double range_sigma,
                                                   double bearing_sigma, std::uint64_t seed) {
  beacons.validate();
  if (!(range_sigma >= 0.0) || !(bearing_sigma >= 0.0)) throw ConfigError("beacon noise sigma must be >= 0");
  std::vector<RangeObservation> out;
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    const Pose3& pose = trajectory[k].pose;
    const Vec2 p = pose.translation().head<2>();
    RangeObservation obs;
    obs.timestamp = trajectory[k].t;
    for (std::size_t b = 0; b < beacons.beacons.size(); ++b) {
      CounterRng r(seed, kBeaconRange, static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(b));
      CounterRng a(seed, kBeaconBearing, static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(b));
      obs.ranges.emplace_back((p - beacons.beacons[b]).norm() + range_sigma * r.normal());
      obs.bearings.emplace_back(
          wrap_angle(array_bearing_for(pose.yaw(), p, beacons.beacons[b]) + bearing_sigma * a.normal()));
    }
    out.push_back(std::move(obs));
  }
  return out;
}

}  // namespace oaslam
