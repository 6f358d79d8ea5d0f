#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oaslam/embedding.hpp"
#include "oaslam/geometry.hpp"

namespace oaslam {

/// Identifies one detection: the camera frame's ordinal in the dataset and
/// the detection's index inside that frame.
struct ObservationKey {
  int frame;
  int detection;

  auto operator<=>(const ObservationKey&) const = default;
};

struct Landmark {
  int id;
  Vec3 position;
  Embedding embedding;
  std::size_t observation_count = 1;
  std::optional<int> class_label;  // simulator ground truth only; never read by association
  std::vector<ObservationKey> support;
};

struct AssociationConfig {
  /// Cosine gate; -1 disables it.
  double cosine_threshold = 0.8;
  /// Chi-square gate when true, Euclidean nearest neighbour within nn_radius otherwise.
  bool use_mahalanobis = true;
  double chi2_confidence = 0.95;
  int chi2_dof = 6;
  double nn_radius = 2.0;
  /// Gating noise on (bearing rad, elevation rad, range m), diagonal in
  /// measurement space and propagated to the world frame per observation.
  Vec3 observation_sigma = Vec3(0.05, 0.05, 0.5);
};

/// Inverse CDF of the chi-square distribution.
double chi_square_quantile(double confidence, int dof);

/// Ids of landmarks whose embedding similarity reaches the threshold, in landmark order.
std::vector<int> cosine_gate(const Embedding& obs, const std::vector<Landmark>& landmarks,
                             double threshold);

struct GateResult {
  bool passes;
  double d2;
};

/// Squared Mahalanobis distance under sigma and the strict test d2 < quantile.
/// Throws GatingError when sigma is not symmetric positive definite.
GateResult mahalanobis_gate(const Vec3& obs_world, const Landmark& candidate, const Mat3& sigma,
                            double quantile);

struct CandidateScore {
  int landmark_id;
  double cosine;
  std::optional<double> d2;  // empty when the geometric test could not be evaluated
  bool passed = false;       // passed both gates
};

struct AssociationDecision {
  enum class Outcome { kMatched, kNewLandmark };
  Outcome outcome = Outcome::kNewLandmark;
  int landmark_id = -1;
  std::vector<CandidateScore> candidate_scores;
  std::string note;
};

/// Minimum d2 among candidates that passed both gates; ties go to the higher
/// cosine, then the lower id. No candidates yields a new landmark.
AssociationDecision select_hypothesis(const std::vector<CandidateScore>& candidates);

struct FrameObservation {
  Vec3 world;
  Embedding embedding;
  Mat3 covariance = Mat3::Zero();  // world frame, added to the landmark marginal
};

/// Covariance of a camera-frame fix (Z tan(bearing), Z tan(elevation), Z)
/// under independent noise on (bearing, elevation, Z), rotated into the world.
Mat3 observation_covariance(double bearing, double elevation, double depth, const Mat3& world_from_camera,
                            const Vec3& sigmas);

/// Decisions for all detections of one frame. A landmark is matched by at
/// most one detection; pairs are committed greedily by ascending d2. The
/// gating covariance is the observation's covariance plus the landmark marginal.
/// `landmark_covariances[i]` is the marginal of landmarks[i] (or empty to
/// use the observation term alone).
std::vector<AssociationDecision> associate_frame(const std::vector<FrameObservation>& observations,
                                                 const std::vector<Landmark>& landmarks,
                                                 const std::vector<std::optional<Mat3>>& landmark_covariances,
                                                 const AssociationConfig& config);

}  // namespace oaslam
