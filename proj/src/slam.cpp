#include "oaslam/slam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "oaslam/errors.hpp"

namespace oaslam {

using nlohmann::json;

namespace {

int priority(const DatasetRecord& r) {
  // odom < partial_pose < abs_fix < sonar_ping < camera_frame at equal times.
  static const int order[] = {0, 2, 1, 4, 3, 5};
  return order[r.index()];
}

void check_sigmas(const Eigen::VectorXd& s, const char* name) {
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!(s(i) > 0.0) || !std::isfinite(s(i))) throw ConfigError(std::string("slam.") + name + " entries must be > 0");
  }
}

Pose3 anchor_from_fix(const AbsoluteFixRecord& fix, const PartialPoseRecord* partial) {
  const double depth = partial ? partial->depth : 0.0;
  const double pitch = partial ? partial->pitch : 0.0;
  const double roll = partial ? partial->roll : 0.0;
  return Pose3::from_euler(fix.heading, pitch, roll, Vec3(fix.x, fix.y, depth));
}

struct TrajectoryEntry {
  double t;
  int node;      // -1 when the pose is composed from the previous entry
  Pose3 delta;   // odometry from the previous entry
};

class Pipeline {
 public:
  Pipeline(const SlamConfig& cfg, std::vector<SonarPing> pings) : cfg_(cfg), pings_(std::move(pings)) {}

  void start(double t, const Pose3& anchor, const PartialPoseRecord* partial, const AbsoluteFixRecord* fix) {
    std::vector<Factor> factors{Factor::prior(0, anchor, cfg_.prior_sigma)};
    if (partial) factors.push_back(Factor::partial_pose(0, {partial->depth, partial->pitch, partial->roll}, cfg_.partial_pose_sigma));
    if (fix) factors.push_back(Factor::absolute_pose(0, {fix->x, fix->y, fix->heading}, cfg_.absolute_sigma));
    update(NewVariables{{anchor}, {}}, factors);
    last_node_ = 0;
    last_node_t_ = t;
    entries_.push_back({t, 0, Pose3()});
  }

  void odometry(const OdometryRecord& r) {
    acc_ = compose(acc_, r.delta);
    ++steps_;
    if (!entries_.empty() && entries_.back().t == r.t) {
      // Repeated timestamp: fold into the existing entry.
      entries_.back().delta = compose(entries_.back().delta, r.delta);
    } else {
      entries_.push_back({r.t, -1, r.delta});
    }
  }

  void partial(const PartialPoseRecord& r) { pending_partial_ = r; }

  void absolute(const AbsoluteFixRecord& r) {
    NewVariables nv;
    std::vector<Factor> factors;
    const int node = node_at(r.t, nv, factors);
    factors.push_back(Factor::absolute_pose(node, {r.x, r.y, r.heading}, cfg_.absolute_sigma));
    update(nv, factors);
  }

  void camera(const CameraFrameRecord& r, int frame) {
    if (r.detections.empty()) return;
    report_.detections += static_cast<int>(r.detections.size());
    const auto ping = pair_camera_sonar(r.t, pings_, cfg_.max_skew);
    std::vector<std::pair<int, ObjectFix>> fixes;
    for (std::size_t d = 0; d < r.detections.size(); ++d) {
      std::string reason;
      if (!ping) {
        reason = "no_sonar_pairing";
      } else {
        try {
          const auto outcome = localize_object(r.detections[d].centroid, pings_[*ping], cfg_.camera, cfg_.sonar,
                                               cfg_.slant_correction);
          if (outcome.fix) {
            fixes.emplace_back(static_cast<int>(d), *outcome.fix);
            continue;
          }
          reason = to_string(outcome.reason);
        } catch (const InputError& e) {
          reason = e.what();
        }
      }
      decisions_.push_back({frame, r.t, static_cast<int>(d), "dropped", -1, reason, {}, ""});
      ++report_.dropped_detections;
    }
    if (fixes.empty()) return;

    NewVariables nv;
    std::vector<Factor> factors;
    const int node = node_at(r.t, nv, factors);
    ++report_.keyframes;
    const Pose3 body = node < graph_.num_poses() ? graph_.values().poses[node] : nv.poses.back();
    const Pose3 world_from_camera = compose(body, inverse(cfg_.extrinsics.camera_from_body));

    std::vector<FrameObservation> observations;
    for (const auto& [d, fix] : fixes) {
      observations.push_back({world_from_camera.transform_point(fix.point_camera), r.detections[d].embedding,
                              observation_covariance(fix.bearing, fix.elevation, fix.point_camera.z(),
                                                     world_from_camera.rotation_matrix(),
                                                     cfg_.association.observation_sigma)});
    }

    std::vector<std::optional<Mat3>> covariances(landmarks_.size());
    std::string cov_note;
    if (cfg_.association.use_mahalanobis && !landmarks_.empty()) {
      std::vector<VariableId> ids;
      for (const auto& lm : landmarks_) ids.push_back(VariableId::landmark(lm.id));
      try {
        const auto blocks = marginal_covariances(graph_, ids);
        for (std::size_t i = 0; i < blocks.size(); ++i) covariances[i] = Mat3(blocks[i]);
      } catch (const CovarianceUnavailable& e) {
        cov_note = std::string("landmark covariance unavailable: ") + e.what();
      }
    }

    const auto decisions = associate_frame(observations, landmarks_, covariances, cfg_.association);
    for (std::size_t i = 0; i < fixes.size(); ++i) {
      const auto& [d, fix] = fixes[i];
      const auto& decision = decisions[i];
      const LandmarkMeasurement meas{fix.bearing, fix.elevation, fix.point_camera.z(), cfg_.extrinsics.camera_from_body};
      const ObservationKey key{frame, d};
      int lm_id;
      std::string outcome;
      if (decision.outcome == AssociationDecision::Outcome::kMatched) {
        lm_id = decision.landmark_id;
        Landmark& lm = landmarks_[static_cast<std::size_t>(lm_id)];
        lm.embedding = aggregate_landmark_embedding(lm.embedding, lm.observation_count, r.detections[d].embedding);
        ++lm.observation_count;
        lm.support.push_back(key);
        outcome = "matched";
      } else {
        lm_id = static_cast<int>(landmarks_.size());
        nv.landmarks.push_back(observations[i].world);
        landmarks_.push_back(Landmark{lm_id, observations[i].world, r.detections[d].embedding, 1, std::nullopt, {key}});
        outcome = "new_landmark";
      }
      factors.push_back(Factor::landmark_obs(node, lm_id, meas, cfg_.landmark_sigma));
      std::string note = decision.note;
      if (!cov_note.empty()) note = cov_note + (note.empty() ? "" : "; " + note);
      decisions_.push_back({frame, r.t, d, outcome, lm_id, "", decision.candidate_scores, note});
    }
    update(nv, factors);
    for (auto& lm : landmarks_) lm.position = graph_.values().landmarks[static_cast<std::size_t>(lm.id)];
  }

  SlamResult finish() {
    SlamResult out;
    Pose3 prev;
    for (const auto& e : entries_) {
      prev = e.node >= 0 ? graph_.values().poses[static_cast<std::size_t>(e.node)] : compose(prev, e.delta);
      out.trajectory.push_back({e.t, prev});
    }
    for (auto& lm : landmarks_) lm.position = graph_.values().landmarks[static_cast<std::size_t>(lm.id)];
    report_.poses = graph_.num_poses();
    report_.landmarks = graph_.num_landmarks();
    report_.factors = static_cast<int>(graph_.factors().size());
    report_.final_cost = total_cost(graph_, graph_.values());
    if (cfg_.batch_check) {
      const auto [batch, batch_report] = batch_optimize(graph_, cfg_.solver);
      report_.incremental_batch_max_diff = max_variable_difference(graph_.values(), batch);
      report_.batch_final_cost = batch_report.final_cost;
    }
    out.landmarks = std::move(landmarks_);
    out.decisions = std::move(decisions_);
    out.report = report_;
    out.graph = std::move(graph_);
    return out;
  }

 private:
  // Node at time t, creating one (with its odometry and partial-pose
  // factors) when the last node is older.
  int node_at(double t, NewVariables& nv, std::vector<Factor>& factors) {
    if (t == last_node_t_) return last_node_;
    const int node = graph_.num_poses() + static_cast<int>(nv.poses.size());
    const Pose3& base = last_node_ < graph_.num_poses() ? graph_.values().poses[static_cast<std::size_t>(last_node_)]
                                                        : nv.poses.back();
    nv.poses.push_back(compose(base, acc_));
    const double scale = std::sqrt(static_cast<double>(std::max(steps_, 1)));
    factors.push_back(Factor::odometry(last_node_, node, acc_, cfg_.odometry_sigma * scale));
    if (pending_partial_ && pending_partial_->t == t) {
      factors.push_back(Factor::partial_pose(node, {pending_partial_->depth, pending_partial_->pitch, pending_partial_->roll},
                                             cfg_.partial_pose_sigma));
    }
    acc_ = Pose3();
    steps_ = 0;
    last_node_ = node;
    last_node_t_ = t;
    if (!entries_.empty() && entries_.back().t == t) {
      entries_.back().node = node;
    } else {
      entries_.push_back({t, node, Pose3()});
    }
    return node;
  }

  void update(const NewVariables& nv, const std::vector<Factor>& factors) {
    const auto rep = incremental_update(graph_, nv, factors, cfg_.solver);
    ++report_.updates;
    report_.total_iterations += rep.iterations;
    report_.last_iterations = rep.iterations;
    report_.converged = rep.converged;
    report_.termination = rep.termination;
  }

  const SlamConfig& cfg_;
  std::vector<SonarPing> pings_;
  FactorGraph graph_;
  std::vector<Landmark> landmarks_;
  std::vector<DecisionRecord> decisions_;
  std::vector<TrajectoryEntry> entries_;
  ConvergenceReport report_;
  Pose3 acc_;
  int steps_ = 0;
  int last_node_ = 0;
  double last_node_t_ = 0.0;
  std::optional<PartialPoseRecord> pending_partial_;
};

json scores_json(const std::vector<CandidateScore>& scores) {
  json a = json::array();
  for (const auto& s : scores) {
    a.push_back({{"landmark", s.landmark_id},
                 {"cosine", s.cosine},
                 {"d2", s.d2 ? json(*s.d2) : json(nullptr)},
                 {"passed", s.passed}});
  }
  return a;
}

}  // namespace

void SlamConfig::validate() const {
  camera.validate();
  sonar.validate();
  if (!(max_skew >= 0.0) || !std::isfinite(max_skew)) throw ConfigError("slam.max_skew must be >= 0");
  check_sigmas(prior_sigma, "prior_sigma");
  check_sigmas(odometry_sigma, "odometry_sigma");
  check_sigmas(partial_pose_sigma, "partial_pose_sigma");
  check_sigmas(absolute_sigma, "absolute_sigma");
  check_sigmas(landmark_sigma, "landmark_sigma");
  const auto& a = association;
  if (!(a.cosine_threshold >= -1.0 && a.cosine_threshold <= 1.0)) throw ConfigError("association.cosine_threshold must lie in [-1, 1]");
  if (!(a.chi2_confidence > 0.0 && a.chi2_confidence < 1.0)) throw ConfigError("association.chi2_confidence must lie in (0, 1)");
  if (a.chi2_dof < 1) throw ConfigError("association.chi2_dof must be >= 1");
  if (!(a.nn_radius > 0.0)) throw ConfigError("association.nn_radius must be > 0");
  for (int i = 0; i < 3; ++i) {
    if (!(a.observation_sigma(i) > 0.0) || !std::isfinite(a.observation_sigma(i))) {
      throw ConfigError("association.observation_sigma entries must be > 0");
    }
  }
  if (solver.max_iterations < 1) throw ConfigError("solver.max_iterations must be >= 1");
}

std::optional<std::size_t> pair_camera_sonar(double frame_t, const std::vector<SonarPing>& pings, double max_skew) {
  auto it = std::lower_bound(pings.begin(), pings.end(), frame_t,
                             [](const SonarPing& p, double t) { return p.timestamp < t; });
  std::optional<std::size_t> best;
  double best_dt = 0.0;
  auto consider = [&](std::vector<SonarPing>::const_iterator c) {
    const double dt = std::abs(c->timestamp - frame_t);
    if (dt > max_skew) return;
    // Candidates are visited earlier-first, so strict < keeps the earlier on ties.
    if (!best || dt < best_dt) {
      best = static_cast<std::size_t>(c - pings.begin());
      best_dt = dt;
    }
  };
  if (it != pings.begin()) {
    // Walk back over equal timestamps to the first of them.
    auto prev = std::prev(it);
    while (prev != pings.begin() && std::prev(prev)->timestamp == prev->timestamp) --prev;
    consider(prev);
  }
  if (it != pings.end()) consider(it);
  return best;
}

SlamResult run_slam(const std::vector<DatasetRecord>& records, const SlamConfig& config) {
  config.validate();
  if (records.empty()) throw EmptyMapError("empty dataset");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ta = record_time(records[a]), tb = record_time(records[b]);
    if (ta != tb) return ta < tb;
    return priority(records[a]) < priority(records[b]);
  });

  bool has_motion_source = false;
  bool has_detections = false;
  std::vector<SonarPing> pings;
  for (std::size_t i : order) {
    const auto& r = records[i];
    if (std::holds_alternative<OdometryRecord>(r) || std::holds_alternative<AbsoluteFixRecord>(r)) has_motion_source = true;
    if (const auto* c = std::get_if<CameraFrameRecord>(&r)) has_detections |= !c->detections.empty();
    if (const auto* p = std::get_if<SonarPing>(&r)) pings.push_back(*p);
  }
  if (!has_motion_source) throw InputError("dataset has neither odometry nor absolute fixes");

  const double t0 = record_time(records[order.front()]);
  const AbsoluteFixRecord* first_fix = nullptr;
  const PartialPoseRecord* first_partial = nullptr;
  for (std::size_t i : order) {
    if (record_time(records[i]) != t0) break;
    if (!first_fix) first_fix = std::get_if<AbsoluteFixRecord>(&records[i]);
    if (!first_partial) first_partial = std::get_if<PartialPoseRecord>(&records[i]);
  }

  Pose3 anchor;
  if (config.initial_pose) {
    anchor = *config.initial_pose;
  } else if (first_fix) {
    anchor = anchor_from_fix(*first_fix, first_partial);
  } else if (config.landmarks_enabled && has_detections) {
    throw ConfigError("unanchored graph: set slam.initial_pose or provide an abs_fix at the first timestamp");
  }

  if (!config.landmarks_enabled) {
    SlamResult out;
    Pose3 pose = anchor;
    out.trajectory.push_back({t0, pose});
    for (std::size_t i : order) {
      const auto* odom = std::get_if<OdometryRecord>(&records[i]);
      if (!odom) continue;
      pose = compose(pose, odom->delta);
      if (out.trajectory.back().t == odom->t) {
        out.trajectory.back().pose = pose;
      } else {
        out.trajectory.push_back({odom->t, pose});
      }
    }
    return out;
  }

  Pipeline pipeline(config, std::move(pings));
  pipeline.start(t0, anchor, first_partial, first_fix);
  int frame = 0;
  for (std::size_t i : order) {
    const auto& r = records[i];
    if (const auto* odom = std::get_if<OdometryRecord>(&r)) {
      pipeline.odometry(*odom);
    } else if (const auto* partial = std::get_if<PartialPoseRecord>(&r)) {
      if (partial != first_partial) pipeline.partial(*partial);
    } else if (const auto* fix = std::get_if<AbsoluteFixRecord>(&r)) {
      if (fix != first_fix) pipeline.absolute(*fix);
    } else if (const auto* cam = std::get_if<CameraFrameRecord>(&r)) {
      pipeline.camera(*cam, frame++);
    }
  }
  return pipeline.finish();
}

std::string format_landmark(const Landmark& lm) {
  json support = json::array();
  for (const auto& k : lm.support) support.push_back({k.frame, k.detection});
  const auto& e = lm.embedding.values();
  return json{{"type", "landmark"},
              {"id", lm.id},
              {"position", {lm.position.x(), lm.position.y(), lm.position.z()}},
              {"observation_count", lm.observation_count},
              {"support", support},
              {"embedding", std::vector<double>(e.data(), e.data() + e.size())}}
      .dump();
}

std::string format_decision(const DecisionRecord& d) {
  json j{{"type", "decision"}, {"frame", d.frame}, {"t", d.t}, {"detection", d.detection}, {"outcome", d.outcome}};
  if (d.landmark_id >= 0) j["landmark"] = d.landmark_id;
  if (!d.reason.empty()) j["reason"] = d.reason;
  if (d.outcome != "dropped") j["scores"] = scores_json(d.scores);
  if (!d.note.empty()) j["note"] = d.note;
  return j.dump();
}

std::string format_report(const ConvergenceReport& r) {
  json j{{"keyframes", r.keyframes},
         {"poses", r.poses},
         {"landmarks", r.landmarks},
         {"factors", r.factors},
         {"detections", r.detections},
         {"dropped_detections", r.dropped_detections},
         {"updates", r.updates},
         {"total_iterations", r.total_iterations},
         {"iterations", r.last_iterations},
         {"final_cost", r.final_cost},
         {"converged", r.converged},
         {"termination", r.termination}};
  j["incremental_batch_max_diff"] = r.incremental_batch_max_diff ? json(*r.incremental_batch_max_diff) : json(nullptr);
  j["batch_final_cost"] = r.batch_final_cost ? json(*r.batch_final_cost) : json(nullptr);
  return j.dump(2);
}

std::vector<Landmark> read_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  std::vector<Landmark> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (j.value("type", "") != "landmark") continue;
      const auto p = j.at("position").get<std::vector<double>>();
      if (p.size() != 3) throw InputError("field 'position' must have 3 entries");
      const auto e = j.at("embedding").get<std::vector<double>>();
      Landmark lm{j.at("id").get<int>(), Vec3(p[0], p[1], p[2]),
                  Embedding(Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()))),
                  j.value("observation_count", std::size_t{1}), std::nullopt, {}};
      for (const auto& s : j.value("support", json::array())) lm.support.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
      out.push_back(std::move(lm));
    } catch (const json::exception& e) {
      throw InputError(path + ":" + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw InputError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace oaslam
