#include "doctest.h"

#include <set>

#include "json.hpp"
#include "oaslam/config.hpp"
#include "oaslam/errors.hpp"
#include "oaslam/eval.hpp"
#include "oaslam/slam.hpp"

using namespace oaslam;

namespace {

SonarPing ping_at(double t) {
  SonarPing p;
  p.timestamp = t;
  return p;
}

RunConfig noisy_run(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.noise.odometry_translation_sigma = 0.01;
  c.noise.odometry_rotation_sigma = 0.003;
  c.noise.odometry_rotation_bias = Vec3(0, 0, 0.002);
  c.noise.pixel_sigma = 1.0;
  c.noise.range_sigma = 0.02;
  c.noise.embedding_sigma = 0.05;
  c.noise.multipath_probability = 0.05;
  return c;
}

std::vector<TimedPose> dead_reckoning(const std::vector<DatasetRecord>& records) {
  const auto& fix = std::get<AbsoluteFixRecord>(records[1]);
  const auto& partial = std::get<PartialPoseRecord>(records[0]);
  std::vector<TimedPose> out{{fix.t, Pose3::from_euler(fix.heading, partial.pitch, partial.roll,
                                                       Vec3(fix.x, fix.y, partial.depth))}};
  for (const auto& r : records) {
    if (const auto* o = std::get_if<OdometryRecord>(&r)) out.push_back({o->t, compose(out.back().pose, o->delta)});
  }
  return out;
}

}  // namespace

TEST_CASE("pair_camera_sonar") {
  const std::vector<SonarPing> pings{ping_at(0.0), ping_at(1.0), ping_at(1.25), ping_at(3.0)};
  CHECK(*pair_camera_sonar(1.0, pings, 0.15) == 1);
  CHECK(*pair_camera_sonar(1.125, pings, 0.15) == 1);  // equidistant: earlier
  CHECK(*pair_camera_sonar(1.2, pings, 0.15) == 2);
  CHECK_FALSE(pair_camera_sonar(2.0, pings, 0.15).has_value());
  CHECK(*pair_camera_sonar(2.9, pings, 0.15) == 3);
  CHECK_FALSE(pair_camera_sonar(0.5, {}, 0.15).has_value());
}

TEST_CASE("disabled landmark processing is exact dead reckoning") {
  const auto sim = simulate(noisy_run(3));
  REQUIRE(std::holds_alternative<PartialPoseRecord>(sim.records[0]));
  REQUIRE(std::holds_alternative<AbsoluteFixRecord>(sim.records[1]));
  SlamConfig cfg = slam_config(noisy_run(3));
  cfg.landmarks_enabled = false;
  const auto r = run_slam(sim.records, cfg);
  const auto dr = dead_reckoning(sim.records);
  REQUIRE(r.trajectory.size() == dr.size());
  for (std::size_t i = 0; i < dr.size(); ++i) {
    CHECK(r.trajectory[i].t == dr[i].t);
    CHECK(r.trajectory[i].pose.translation() == dr[i].pose.translation());
    CHECK(r.trajectory[i].pose.rotation().coeffs() == dr[i].pose.rotation().coeffs());
  }
  CHECK(r.landmarks.empty());
}

TEST_CASE("odometry-only dataset yields no landmarks") {
  std::vector<DatasetRecord> records;
  records.emplace_back(AbsoluteFixRecord{0.0, 1.0, 2.0, 0.3});
  for (int k = 1; k <= 10; ++k) records.emplace_back(OdometryRecord{k * 1.0, Pose3::from_euler(0.05, 0, 0, Vec3(0.5, 0, 0))});
  const auto r = run_slam(records, slam_config(RunConfig{}));
  CHECK(r.landmarks.empty());
  REQUIRE(r.trajectory.size() == 11);
  Pose3 p = Pose3::from_euler(0.3, 0, 0, Vec3(1, 2, 0));
  for (int k = 1; k <= 10; ++k) p = compose(p, std::get<OdometryRecord>(records[k]).delta);
  CHECK((r.trajectory.back().pose.translation() - p.translation()).norm() < 1e-6);
}

TEST_CASE("run_slam errors") {
  const SlamConfig cfg = slam_config(RunConfig{});
  CHECK_THROWS_AS(run_slam({}, cfg), EmptyMapError);

  // Camera frames alone: no odometry or absolute source.
  auto sim = simulate(RunConfig{});
  std::vector<DatasetRecord> frames_only;
  for (const auto& r : sim.records) {
    if (std::holds_alternative<CameraFrameRecord>(r) || std::holds_alternative<SonarPing>(r)) frames_only.push_back(r);
  }
  CHECK_THROWS_AS(run_slam(frames_only, cfg), InputError);

  // Odometry and detections but nothing anchoring the first pose.
  std::vector<DatasetRecord> unanchored;
  for (const auto& r : sim.records) {
    if (!std::holds_alternative<AbsoluteFixRecord>(r) && !std::holds_alternative<PartialPoseRecord>(r)) unanchored.push_back(r);
  }
  CHECK_THROWS_AS(run_slam(unanchored, cfg), ConfigError);
  SlamConfig anchored = cfg;
  anchored.initial_pose = sim.truth.poses.front().pose;
  CHECK_NOTHROW(run_slam(unanchored, anchored));
}

TEST_CASE("end-to-end invariants on a noisy run") {
  const RunConfig rc = noisy_run(5);
  const auto sim = simulate(rc);
  const auto a = run_slam(sim.records, slam_config(rc));
  const auto b = run_slam(sim.records, slam_config(rc));

  // Determinism of the map and the decision log.
  REQUIRE(a.landmarks.size() == b.landmarks.size());
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) CHECK(format_landmark(a.landmarks[i]) == format_landmark(b.landmarks[i]));
  REQUIRE(a.decisions.size() == b.decisions.size());
  for (std::size_t i = 0; i < a.decisions.size(); ++i) CHECK(format_decision(a.decisions[i]) == format_decision(b.decisions[i]));

  int detections = 0;
  for (const auto& r : sim.records) {
    if (const auto* f = std::get_if<CameraFrameRecord>(&r)) detections += static_cast<int>(f->detections.size());
  }
  CHECK(a.report.detections == detections);
  CHECK(a.decisions.size() == static_cast<std::size_t>(detections));
  CHECK(a.landmarks.size() <= static_cast<std::size_t>(detections));
  std::set<int> ids;
  for (const auto& lm : a.landmarks) {
    CHECK(lm.support.size() >= 1);
    CHECK(lm.observation_count == lm.support.size());
    ids.insert(lm.id);
  }
  CHECK(ids.size() == a.landmarks.size());

  // One trajectory entry per odometry epoch plus the start; strictly increasing.
  std::size_t odom = 0;
  for (const auto& r : sim.records) odom += std::holds_alternative<OdometryRecord>(r);
  REQUIRE(a.trajectory.size() == odom + 1);
  for (std::size_t i = 1; i < a.trajectory.size(); ++i) CHECK(a.trajectory[i].t > a.trajectory[i - 1].t);

  CHECK(a.report.converged);
  REQUIRE(a.report.incremental_batch_max_diff.has_value());
  CHECK(*a.report.incremental_batch_max_diff < 1e-6);

  // SLAM ends closer to the truth than raw odometry.
  SlamConfig off = slam_config(rc);
  off.landmarks_enabled = false;
  const auto dr = run_slam(sim.records, off);
  const Vec3 end = sim.truth.poses.back().pose.translation();
  CHECK((a.trajectory.back().pose.translation() - end).norm() < (dr.trajectory.back().pose.translation() - end).norm());
}

TEST_CASE("zero-noise run recovers every object") {
  RunConfig rc;
  rc.trajectory.laps = 1;
  const auto sim = simulate(rc);
  const auto r = run_slam(sim.records, slam_config(rc));
  const auto pr = map_precision_recall(r.landmarks, sim.truth);
  CHECK(r.landmarks.size() == sim.truth.objects.size());
  CHECK(pr.precision == 1.0);
  CHECK(pr.recall == 1.0);
  // Bounded by sonar bin quantization.
  CHECK(ape(r.trajectory, sim.truth.poses).ape < 0.05);
}

TEST_CASE("report and decision formatting") {
  RunConfig rc;
  rc.trajectory.laps = 1;
  const auto sim = simulate(rc);
  const auto r = run_slam(sim.records, slam_config(rc));
  const auto report = nlohmann::json::parse(format_report(r.report));
  CHECK(report["landmarks"] == r.report.landmarks);
  CHECK(report["factors"] == r.report.factors);
  CHECK(report.contains("final_cost"));
  CHECK(report.contains("total_iterations"));
  const auto d = nlohmann::json::parse(format_decision(r.decisions.front()));
  CHECK(d["type"] == "decision");
  const auto lm = nlohmann::json::parse(format_landmark(r.landmarks.front()));
  CHECK(lm["type"] == "landmark");
  CHECK(lm["observation_count"] == r.landmarks.front().observation_count);
}
