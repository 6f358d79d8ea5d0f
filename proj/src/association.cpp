#include "oaslam/association.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <sstream>

#include "oaslam/errors.hpp"

namespace oaslam {

double chi_square_quantile(double confidence, int dof) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("chi-square confidence must lie in (0, 1)");
  if (dof < 1) throw InputError("chi-square dof must be >= 1");
  return boost::math::quantile(boost::math::chi_squared(dof), confidence);
}

std::vector<int> cosine_gate(const Embedding& obs, const std::vector<Landmark>& landmarks,
                             double threshold) {
  std::vector<int> ids;
  for (const auto& lm : landmarks) {
    if (cosine_similarity(obs, lm.embedding) >= threshold) ids.push_back(lm.id);
  }
  return ids;
}

GateResult mahalanobis_gate(const Vec3& obs_world, const Landmark& candidate, const Mat3& sigma,
                            double quantile) {
  if (!sigma.allFinite() || (sigma - sigma.transpose()).cwiseAbs().maxCoeff() >
                                1e-9 * std::max(1.0, sigma.cwiseAbs().maxCoeff())) {
    throw GatingError("gating covariance is not symmetric");
  }
  Eigen::LLT<Mat3> llt(sigma);
  if (llt.info() != Eigen::Success) throw GatingError("gating covariance is not positive definite");
  const Vec3 diff = obs_world - candidate.position;
  const double d2 = diff.dot(llt.solve(diff));
  return {d2 < quantile, d2};
}

Mat3 observation_covariance(double bearing, double elevation, double depth, const Mat3& world_from_camera,
                            const Vec3& sigmas) {
  const double tb = std::tan(bearing), te = std::tan(elevation);
  Mat3 J;
  J << depth * (1 + tb * tb), 0.0, tb,
       0.0, depth * (1 + te * te), te,
       0.0, 0.0, 1.0;
  const Mat3 cam = J * sigmas.cwiseProduct(sigmas).asDiagonal() * J.transpose();
  return world_from_camera * cam * world_from_camera.transpose();
}

namespace {

bool better(const CandidateScore& a, const CandidateScore& b) {
  if (*a.d2 != *b.d2) return *a.d2 < *b.d2;
  if (a.cosine != b.cosine) return a.cosine > b.cosine;
  return a.landmark_id < b.landmark_id;
}

}  // namespace

AssociationDecision select_hypothesis(const std::vector<CandidateScore>& candidates) {
  AssociationDecision decision;
  decision.candidate_scores = candidates;
  const CandidateScore* best = nullptr;
  for (const auto& c : candidates) {
    if (!c.passed || !c.d2) continue;
    if (!best || better(c, *best)) best = &c;
  }
  if (best) {
    decision.outcome = AssociationDecision::Outcome::kMatched;
    decision.landmark_id = best->landmark_id;
  }
  return decision;
}

std::vector<AssociationDecision> associate_frame(const std::vector<FrameObservation>& observations,
                                                 const std::vector<Landmark>& landmarks,
                                                 const std::vector<std::optional<Mat3>>& landmark_covariances,
                                                 const AssociationConfig& config) {
  const double quantile = config.use_mahalanobis ? chi_square_quantile(config.chi2_confidence, config.chi2_dof) : 0.0;

  std::vector<AssociationDecision> decisions(observations.size());
  struct Pair {
    std::size_t det;
    CandidateScore score;
  };
  std::vector<Pair> pairs;

  for (std::size_t d = 0; d < observations.size(); ++d) {
    auto& decision = decisions[d];
    std::ostringstream notes;
    for (std::size_t i = 0; i < landmarks.size(); ++i) {
      const auto& lm = landmarks[i];
      const double cosine = cosine_similarity(observations[d].embedding, lm.embedding);
      if (!(cosine >= config.cosine_threshold)) continue;
      CandidateScore score{lm.id, cosine, std::nullopt, false};
      if (config.use_mahalanobis) {
        Mat3 sigma = observations[d].covariance;
        if (i < landmark_covariances.size() && landmark_covariances[i]) sigma += *landmark_covariances[i];
        try {
          const auto gate = mahalanobis_gate(observations[d].world, lm, sigma, quantile);
          score.d2 = gate.d2;
          score.passed = gate.passes;
        } catch (const GatingError& e) {
          notes << "landmark " << lm.id << ": " << e.what() << "; ";
        }
      } else {
        const double dist2 = (observations[d].world - lm.position).squaredNorm();
        score.d2 = dist2;
        score.passed = dist2 <= config.nn_radius * config.nn_radius;
      }
      decision.candidate_scores.push_back(score);
      if (score.passed) pairs.push_back({d, score});
    }
    decision.note = notes.str();
  }

  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (*a.score.d2 != *b.score.d2) return *a.score.d2 < *b.score.d2;
    if (a.score.cosine != b.score.cosine) return a.score.cosine > b.score.cosine;
    if (a.score.landmark_id != b.score.landmark_id) return a.score.landmark_id < b.score.landmark_id;
    return a.det < b.det;
  });
  std::vector<int> taken;
  std::vector<bool> assigned(observations.size(), false);
  for (const auto& p : pairs) {
    if (assigned[p.det]) continue;
    if (std::find(taken.begin(), taken.end(), p.score.landmark_id) != taken.end()) continue;
    assigned[p.det] = true;
    taken.push_back(p.score.landmark_id);
    decisions[p.det].outcome = AssociationDecision::Outcome::kMatched;
    decisions[p.det].landmark_id = p.score.landmark_id;
  }
  return decisions;
}

}  // namespace oaslam
