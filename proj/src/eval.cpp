#include "oaslam/eval.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "oaslam/errors.hpp"

namespace oaslam {

ApeResult ape(std::vector<TimedPose> estimate, std::vector<TimedPose> reference, double max_skew, bool align) {
  auto by_time = [](const TimedPose& a, const TimedPose& b) { return a.t < b.t; };
  std::stable_sort(estimate.begin(), estimate.end(), by_time);
  std::stable_sort(reference.begin(), reference.end(), by_time);

  std::vector<std::pair<Vec3, Vec3>> pairs;
  for (const auto& e : estimate) {
    auto it = std::lower_bound(reference.begin(), reference.end(), e.t,
                               [](const TimedPose& r, double t) { return r.t < t; });
    const TimedPose* best = nullptr;
    if (it != reference.begin()) {
      const auto& prev = *std::prev(it);
      if (std::abs(prev.t - e.t) <= max_skew) best = &prev;
    }
    if (it != reference.end() && std::abs(it->t - e.t) <= max_skew) {
      if (!best || std::abs(it->t - e.t) < std::abs(best->t - e.t)) best = &*it;
    }
    if (best) pairs.emplace_back(e.pose.translation(), best->pose.translation());
  }
  if (pairs.empty()) throw InputError("no estimate/reference pairs within the time skew");

  if (align) {
    Eigen::Matrix2Xd src(2, pairs.size()), dst(2, pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      src.col(static_cast<Eigen::Index>(i)) = pairs[i].first.head<2>();
      dst.col(static_cast<Eigen::Index>(i)) = pairs[i].second.head<2>();
    }
    const Eigen::Matrix3d T = Eigen::umeyama(src, dst, false);
    for (auto& p : pairs) {
      p.first.head<2>() = T.topLeftCorner<2, 2>() * p.first.head<2>() + T.topRightCorner<2, 1>();
    }
  }
  double sum = 0.0;
  for (const auto& [e, r] : pairs) sum += (e - r).norm();
  return {sum / static_cast<double>(pairs.size()), static_cast<int>(pairs.size()), align};
}

std::optional<int> majority_object(const Landmark& lm, const GroundTruth& truth) {
  std::map<int, int> votes;
  for (const auto& key : lm.support) {
    if (key.frame < 0 || static_cast<std::size_t>(key.frame) >= truth.frames.size()) continue;
    const auto& ids = truth.frames[static_cast<std::size_t>(key.frame)].object_ids;
    if (key.detection < 0 || static_cast<std::size_t>(key.detection) >= ids.size()) continue;
    ++votes[ids[static_cast<std::size_t>(key.detection)]];
  }
  std::optional<int> best;
  int best_votes = 0;
  for (const auto& [id, n] : votes) {  // ascending id, so ties keep the lower
    if (n > best_votes) {
      best = id;
      best_votes = n;
    }
  }
  return best;
}

MapMatchReport map_precision_recall(const std::vector<Landmark>& map, const GroundTruth& truth, double radius) {
  if (!(radius > 0.0)) throw InputError("match radius must be > 0");
  MapMatchReport report;
  report.radius = radius;

  struct Candidate {
    double distance;
    int landmark;
    int object;
  };
  std::vector<Candidate> candidates;
  for (const auto& lm : map) {
    const auto owner = majority_object(lm, truth);
    if (!owner) continue;
    for (const auto& obj : truth.objects) {
      if (obj.id != *owner) continue;
      const double d = (lm.position - obj.position).norm();
      if (d <= radius) candidates.push_back({d, lm.id, obj.id});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.landmark != b.landmark) return a.landmark < b.landmark;
    return a.object < b.object;
  });
  std::vector<int> used_landmarks, used_objects;
  auto contains = [](const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); };
  for (const auto& c : candidates) {
    if (contains(used_landmarks, c.landmark) || contains(used_objects, c.object)) continue;
    used_landmarks.push_back(c.landmark);
    used_objects.push_back(c.object);
    report.matches.push_back({c.landmark, c.object, c.distance});
  }
  for (const auto& lm : map) {
    if (!contains(used_landmarks, lm.id)) report.false_positives.push_back(lm.id);
  }
  for (const auto& obj : truth.objects) {
    if (!contains(used_objects, obj.id)) report.false_negatives.push_back(obj.id);
  }
  const double tp = static_cast<double>(report.matches.size());
  if (map.empty()) {
    report.precision = 0.0;
    report.precision_defined = false;
  } else {
    report.precision = tp / static_cast<double>(map.size());
  }
  report.recall = truth.objects.empty() ? 0.0 : tp / static_cast<double>(truth.objects.size());
  return report;
}

std::vector<AblationConfig> default_ablation_suite(const SlamConfig& base) {
  AblationConfig odom{"odometry-only", base};
  odom.slam.landmarks_enabled = false;

  AblationConfig geo{"odom+geometric", base};
  geo.slam.association.cosine_threshold = -1.0;
  geo.slam.association.use_mahalanobis = false;

  AblationConfig unc{"odom+geo+uncertainty", base};
  unc.slam.association.cosine_threshold = -1.0;
  unc.slam.association.use_mahalanobis = true;

  AblationConfig full{"odom+geo+uncertainty+semantics", base};
  full.slam.association.use_mahalanobis = true;
  return {odom, geo, unc, full};
}

std::vector<AblationRow> run_ablation(const std::vector<DatasetRecord>& records, const GroundTruth& truth,
                                      const std::vector<AblationConfig>& configs, const EvalSettings& settings) {
  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    const auto result = run_slam(records, c.slam);
    const auto err = ape(result.trajectory, truth.poses, settings.max_skew, settings.align);
    const auto pr = map_precision_recall(result.landmarks, truth, settings.match_radius);
    rows.push_back({c.name, err.ape, pr.precision, pr.recall, static_cast<int>(result.landmarks.size())});
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-32s %10s %10s %10s %10s\n", "config", "APE (m)", "precision", "recall", "landmarks");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-32s %10.4f %10.4f %10.4f %10d\n", r.name.c_str(), r.ape, r.precision, r.recall,
                  r.landmarks);
    out << buf;
  }
  return out.str();
}

}  // namespace oaslam
