#pragma once

// Shared random generators and oracles for the unit and acceptance suites.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "oaslam/geometry.hpp"
#include "oaslam/graph.hpp"

namespace oaslam::testing {

inline Vec3 random_vec3(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Pose3 random_pose(std::mt19937_64& rng, double angle_scale = 3.0, double trans_scale = 5.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis(u(rng), u(rng), u(rng));
  axis.normalize();
  std::uniform_real_distribution<double> a(-angle_scale, angle_scale);
  return Pose3(Eigen::Quaterniond(Eigen::AngleAxisd(a(rng), axis)), random_vec3(rng, trans_scale));
}

inline Vec6 random_delta(std::mt19937_64& rng, double rot, double trans) {
  Vec6 d;
  d.head<3>() = random_vec3(rng, rot);
  d.tail<3>() = random_vec3(rng, trans);
  return d;
}

// Central differences on the whitened residual, perturbing each connected
// variable through the same local coordinates the solver uses.
inline std::vector<Eigen::MatrixXd> numeric_jacobians(const Factor& f, const Values& values,
                                                      double step = 1e-6) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& id : f.variables) {
    const int dim = variable_dimension(id);
    Eigen::MatrixXd J(f.dimension(), dim);
    for (int k = 0; k < dim; ++k) {
      Values plus = values, minus = values;
      if (id.kind == VariableKind::kPose) {
        Vec6 d = Vec6::Zero();
        d(k) = step;
        plus.poses[id.index] = values.poses[id.index].retract(d);
        minus.poses[id.index] = values.poses[id.index].retract(-d);
      } else {
        plus.landmarks[id.index](k) += step;
        minus.landmarks[id.index](k) -= step;
      }
      const Eigen::VectorXd rp = *residual(f, plus);
      const Eigen::VectorXd rm = *residual(f, minus);
      Eigen::VectorXd diff = rp - rm;
      for (Eigen::Index r = 0; r < diff.size(); ++r) {
        // Angular rows may straddle the wrap point.
        if (std::abs(diff(r)) > 1.0) diff(r) = 0.0;
      }
      J.col(k) = diff / (2.0 * step);
    }
    out.push_back(J);
  }
  return out;
}

inline double jacobian_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max(1.0, numeric.cwiseAbs().maxCoeff());
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

// A random factor of the given kind whose variables sit in a small graph
// with one or two poses and one landmark; measurements are near (not at)
// the prediction so residuals are non-zero but away from the wrap point.
struct RandomFactorCase {
  Factor factor;
  Values values;
};

inline RandomFactorCase random_factor_case(std::mt19937_64& rng, FactorKind kind) {
  std::uniform_real_distribution<double> sig(0.02, 0.5);
  Values v;
  v.poses = {random_pose(rng), random_pose(rng)};
  const Pose3 cam = random_pose(rng, 0.3, 0.2);
  // Landmark in front of the camera of pose 0.
  std::uniform_real_distribution<double> depth(1.0, 8.0);
  std::uniform_real_distribution<double> lateral(-0.8, 0.8);
  const double z = depth(rng);
  const Vec3 pc(lateral(rng) * z, lateral(rng) * z, z);
  v.landmarks = {v.poses[0].transform_point(cam.inverse().transform_point(pc))};

  switch (kind) {
    case FactorKind::kPrior: {
      const Pose3 m = v.poses[0].retract(random_delta(rng, 0.5, 1.0));
      Vec6 s;
      s << sig(rng), sig(rng), sig(rng), sig(rng), sig(rng), sig(rng);
      return {Factor::prior(0, m, s), v};
    }
    case FactorKind::kOdometry: {
      const Pose3 m = v.poses[0].inverse().compose(v.poses[1]).retract(random_delta(rng, 0.5, 1.0));
      Vec6 s;
      s << sig(rng), sig(rng), sig(rng), sig(rng), sig(rng), sig(rng);
      return {Factor::odometry(0, 1, m, s), v};
    }
    case FactorKind::kPartialPose: {
      // Keep pitch away from +-pi/2 where the roll/yaw split is singular.
      std::uniform_real_distribution<double> yaw(-3.0, 3.0), tilt(-1.2, 1.2), roll(-3.0, 3.0);
      v.poses[0] = Pose3::from_euler(yaw(rng), tilt(rng), roll(rng), random_vec3(rng, 5.0));
      const PartialPoseMeasurement m{v.poses[0].translation().z() + lateral(rng),
                                     v.poses[0].pitch() + 0.2 * lateral(rng),
                                     v.poses[0].roll() + 0.2 * lateral(rng)};
      return {Factor::partial_pose(0, m, Vec3(sig(rng), sig(rng), sig(rng))), v};
    }
    case FactorKind::kAbsolutePose: {
      std::uniform_real_distribution<double> yaw(-3.0, 3.0), tilt(-1.2, 1.2), roll(-3.0, 3.0);
      v.poses[0] = Pose3::from_euler(yaw(rng), tilt(rng), roll(rng), random_vec3(rng, 5.0));
      const AbsolutePoseMeasurement m{v.poses[0].translation().x() + lateral(rng),
                                      v.poses[0].translation().y() + lateral(rng),
                                      v.poses[0].yaw() + 0.2 * lateral(rng)};
      return {Factor::absolute_pose(0, m, Vec3(sig(rng), sig(rng), sig(rng))), v};
    }
    case FactorKind::kLandmarkObs: {
      const LandmarkMeasurement m{std::atan2(pc.x(), pc.z()) + 0.1 * lateral(rng),
                                  std::atan2(pc.y(), pc.z()) + 0.1 * lateral(rng),
                                  pc.z() + lateral(rng), cam};
      return {Factor::landmark_obs(0, 0, m, Vec3(sig(rng), sig(rng), sig(rng))), v};
    }
  }
  return {Factor::prior(0, Pose3(), Vec6::Ones()), v};
}

// Random connected graph with `num_poses` poses and `num_landmarks`
// landmarks, anchored by one prior, containing every factor kind.
inline FactorGraph random_graph(std::mt19937_64& rng, int num_poses, int num_landmarks) {
  std::uniform_real_distribution<double> sig(0.05, 0.3);
  std::uniform_real_distribution<double> lateral(-0.5, 0.5);
  FactorGraph g;
  std::vector<Pose3> truth;
  Pose3 p = Pose3::from_euler(0.3, 0.0, 0.0, Vec3(1.0, 2.0, 1.5));
  for (int i = 0; i < num_poses; ++i) {
    truth.push_back(p);
    g.add_pose(p.retract(random_delta(rng, 0.05, 0.2)));
    p = p.compose(Pose3::from_euler(0.2 * lateral(rng), 0.05 * lateral(rng), 0.05 * lateral(rng),
                                    Vec3(1.0 + lateral(rng), lateral(rng), 0.2 * lateral(rng))));
  }
  const Vec6 s6 = (Vec6() << 0.02, 0.02, 0.02, 0.05, 0.05, 0.05).finished();
  g.add_factor(Factor::prior(0, truth[0].retract(random_delta(rng, 0.01, 0.05)), s6));
  for (int i = 0; i + 1 < num_poses; ++i) {
    const Pose3 d = truth[i].inverse().compose(truth[i + 1]).retract(random_delta(rng, 0.02, 0.05));
    g.add_factor(Factor::odometry(i, i + 1, d, s6 * (1.0 + lateral(rng) * 0.5 + 0.5)));
  }
  for (int i = 0; i < num_poses; i += 2) {
    g.add_factor(Factor::partial_pose(
        i, {truth[i].translation().z(), truth[i].pitch(), truth[i].roll()}, Vec3(sig(rng), sig(rng), sig(rng))));
  }
  if (num_poses > 1) {
    const int k = num_poses - 1;
    g.add_factor(Factor::absolute_pose(
        k, {truth[k].translation().x(), truth[k].translation().y(), truth[k].yaw()},
        Vec3(sig(rng), sig(rng), sig(rng))));
  }
  const Pose3 cam(optical_from_body_rotation(), Vec3::Zero());
  for (int j = 0; j < num_landmarks; ++j) {
    const int i0 = static_cast<int>(rng() % static_cast<unsigned>(num_poses));
    const Vec3 pc(lateral(rng) * 2.0, lateral(rng) * 2.0, 3.0 + lateral(rng));
    const Vec3 lw = truth[i0].transform_point(cam.inverse().transform_point(pc));
    g.add_landmark(lw + random_vec3(rng, 0.1));
    for (int i = 0; i < num_poses; ++i) {
      const Vec3 c = cam.transform_point(truth[i].inverse().transform_point(lw));
      if (c.z() < 0.5 && i != i0) continue;
      if (i != i0 && (rng() % 2) == 0) continue;
      const LandmarkMeasurement m{std::atan2(c.x(), c.z()), std::atan2(c.y(), c.z()), c.z(), cam};
      g.add_factor(Factor::landmark_obs(i, j, m, Vec3(0.02, 0.02, 0.1)));
    }
  }
  return g;
}

// Closed-form chi-square CDF for even degrees of freedom.
inline double chi_square_cdf_even(double x, int dof) {
  const double h = 0.5 * x;
  double term = 1.0, sum = 1.0;
  for (int i = 1; i < dof / 2; ++i) {
    term *= h / i;
    sum += term;
  }
  return 1.0 - std::exp(-h) * sum;
}

inline double chi_square_quantile_even(double p, int dof) {
  double lo = 0.0, hi = 1000.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (chi_square_cdf_even(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace oaslam::testing

#include <optional>
#include <tuple>

#include "oaslam/fusion.hpp"

namespace oaslam::testing {

// Exhaustive scan over every (beam, bin) pair restricted to the bearing
// window; the lowest matching beam owns the decision.
inline std::optional<std::pair<int, int>> brute_force_range(double bearing, const SonarPing& ping,
                                                            const SonarConfig& cfg) {
  const double half = 0.5 * cfg.angular_resolution() + kBeamWindowSlack;
  std::vector<std::tuple<int, int, double>> cells;
  for (int b = 0; b < static_cast<int>(ping.beams.size()); ++b) {
    const double br = ping.beams[static_cast<std::size_t>(b)].bearing;
    if (!(br >= bearing - half && br <= bearing + half)) continue;
    const auto& in = ping.beams[static_cast<std::size_t>(b)].intensities;
    for (int k = 0; k < static_cast<int>(in.size()); ++k) cells.emplace_back(b, k, in[static_cast<std::size_t>(k)]);
  }
  if (cells.empty()) return std::nullopt;
  const int first_beam = std::get<0>(*std::min_element(
      cells.begin(), cells.end(), [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); }));
  std::optional<std::tuple<int, int, double>> best;
  for (const auto& c : cells) {
    if (std::get<0>(c) != first_beam) continue;
    if (!best || std::get<2>(c) > std::get<2>(*best)) best = c;
  }
  if (std::get<2>(*best) < cfg.intensity_threshold) return std::nullopt;
  return std::make_pair(std::get<0>(*best), std::get<1>(*best));
}

inline SonarPing random_ping(std::mt19937_64& rng, const SonarConfig& cfg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SonarPing ping;
  ping.timestamp = u(rng);
  const bool quiet = u(rng) < 0.3;
  for (int b = 0; b < cfg.num_beams; ++b) {
    SonarBeam beam{cfg.beam_bearing(b), std::vector<double>(static_cast<std::size_t>(cfg.num_bins))};
    for (auto& x : beam.intensities) {
      x = quiet ? 0.99 * cfg.intensity_threshold * u(rng) : std::round(u(rng) * 20.0) / 20.0;
    }
    ping.beams.push_back(std::move(beam));
  }
  return ping;
}

}  // namespace oaslam::testing
