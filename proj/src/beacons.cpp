#include "oaslam/beacons.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "oaslam/errors.hpp"
#include "oaslam/geometry.hpp"

namespace oaslam {

void BeaconSet::validate() const {
  if (beacons.size() < 2) throw InputError("beacon set needs at least 2 beacons");
  for (std::size_t i = 0; i < beacons.size(); ++i) {
    if (!beacons[i].allFinite()) throw InputError("beacon position is not finite");
    for (std::size_t j = 0; j < i; ++j) {
      if (beacons[i] == beacons[j]) throw InputError("beacon positions must be distinct");
    }
  }
}

TrilaterationResult trilaterate(const RangeObservation& obs, const BeaconSet& set,
                                const Vec2& initial_guess) {
  if (!initial_guess.allFinite()) throw InputError("trilateration initial guess is not finite");
  std::vector<Vec2> b;
  std::vector<double> r;
  for (std::size_t k = 0; k < set.beacons.size() && k < obs.ranges.size(); ++k) {
    if (!obs.ranges[k]) continue;
    if (!(*obs.ranges[k] > 0.0) || !std::isfinite(*obs.ranges[k])) throw InputError("beacon range must be positive");
    b.push_back(set.beacons[k]);
    r.push_back(*obs.ranges[k]);
  }
  if (b.size() < 2) throw InputError("trilateration needs at least 2 ranges");

  constexpr int kMaxIterations = 100;
  constexpr double kGradientTolerance = 1e-10;
  constexpr double kNudge = 1e-6;
  const int m = static_cast<int>(b.size());
  Vec2 p = initial_guess;
  Eigen::VectorXd res(m);
  Eigen::MatrixXd J(m, 2);

  auto evaluate = [&](const Vec2& x) {
    bool singular = false;
    for (int k = 0; k < m; ++k) {
      const Vec2 d = x - b[k];
      const double n = d.norm();
      if (n < kNudge * 1e-3) {
        singular = true;
        break;
      }
      res(k) = n - r[k];
      J.row(k) = d.transpose() / n;
    }
    return !singular;
  };
  auto cost = [&](const Vec2& x) {
    double c = 0.0;
    for (int k = 0; k < m; ++k) c += std::pow((x - b[k]).norm() - r[k], 2);
    return c;
  };

  for (int it = 0; it <= kMaxIterations; ++it) {
    if (!evaluate(p)) {
      p += Vec2(kNudge, kNudge);
      continue;
    }
    const Vec2 g = J.transpose() * res;
    if (g.norm() < kGradientTolerance) return {p, res.norm(), it};
    if (it == kMaxIterations) break;
    const Eigen::Matrix2d H = J.transpose() * J;
    Vec2 step = H.ldlt().solve(-g);
    if (!step.allFinite()) step = -g;
    // Halve until the cost does not increase.
    const double c0 = res.squaredNorm();
    double alpha = 1.0;
    while (alpha > 1e-10 && cost(p + alpha * step) > c0) alpha *= 0.5;
    p += alpha * step;
  }
  throw OptimizationFailure("trilateration did not converge in 100 iterations");
}

double heading_from_array(double array_bearing, const Vec2& position, const Vec2& beacon) {
  const Vec2 d = position - beacon;
  if (d.x() == 0.0 && d.y() == 0.0) throw UndefinedHeadingError("vehicle position coincides with the beacon");
  return wrap_two_pi(array_bearing - std::atan2(d.y(), d.x()) - kPi / 2);
}

double array_bearing_for(double heading, const Vec2& position, const Vec2& beacon) {
  const Vec2 d = position - beacon;
  return wrap_angle(heading + std::atan2(d.y(), d.x()) + kPi / 2);
}

std::vector<TrackPoint> solve_track(const std::vector<RangeObservation>& observations,
                                    const BeaconSet& beacons, const Vec2& initial_guess) {
  beacons.validate();
  std::vector<TrackPoint> out;
  Vec2 seed = initial_guess;
  for (const auto& obs : observations) {
    TrackPoint tp{obs.timestamp, std::nullopt, std::nullopt, 0.0};
    int present = 0;
    for (std::size_t k = 0; k < obs.ranges.size() && k < beacons.beacons.size(); ++k) present += obs.ranges[k].has_value();
    if (present >= 2) {
      const auto sol = trilaterate(obs, beacons, seed);
      tp.position = sol.position;
      tp.residual_norm = sol.residual_norm;
      seed = sol.position;
      double s = 0.0, c = 0.0;
      int n = 0;
      for (std::size_t k = 0; k < obs.bearings.size() && k < beacons.beacons.size(); ++k) {
        if (!obs.bearings[k]) continue;
        const double h = heading_from_array(*obs.bearings[k], sol.position, beacons.beacons[k]);
        s += std::sin(h);
        c += std::cos(h);
        ++n;
      }
      if (n > 0) tp.heading = wrap_two_pi(std::atan2(s, c));
    }
    out.push_back(tp);
  }
  return out;
}

}  // namespace oaslam
