#pragma once

#include <Eigen/Core>

#include <compare>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "oaslam/geometry.hpp"

namespace oaslam {

enum class VariableKind { kPose = 0, kLandmark = 1 };

struct VariableId {
  VariableKind kind;
  int index;

  static VariableId pose(int i) { return {VariableKind::kPose, i}; }
  static VariableId landmark(int i) { return {VariableKind::kLandmark, i}; }

  auto operator<=>(const VariableId&) const = default;
};

std::string to_string(VariableId id);

enum class FactorKind { kPrior, kOdometry, kPartialPose, kAbsolutePose, kLandmarkObs };

std::string to_string(FactorKind kind);

struct PartialPoseMeasurement {
  double depth;
  double pitch;
  double roll;
};

struct AbsolutePoseMeasurement {
  double x;
  double y;
  double heading;
};

struct LandmarkMeasurement {
  double bearing;
  double elevation;
  double range;  // camera-frame Z
  Pose3 camera_from_body;
};

using Measurement =
    std::variant<Pose3, PartialPoseMeasurement, AbsolutePoseMeasurement, LandmarkMeasurement>;

/// One probabilistic constraint. Sigmas are per residual component:
///   prior, odometry:  [rot x3 (rad), trans x3 (m)]
///   partial_pose:     [depth (m), pitch (rad), roll (rad)]
///   absolute_pose:    [x (m), y (m), heading (rad)]
///   landmark_obs:     [bearing (rad), elevation (rad), range (m)]
struct Factor {
  FactorKind kind;
  std::vector<VariableId> variables;
  Measurement measurement;
  Eigen::VectorXd sigmas;

  static Factor prior(int pose, const Pose3& measured, const Vec6& sigmas);
  static Factor odometry(int from_pose, int to_pose, const Pose3& measured_delta, const Vec6& sigmas);
  static Factor partial_pose(int pose, const PartialPoseMeasurement& m, const Vec3& sigmas);
  static Factor absolute_pose(int pose, const AbsolutePoseMeasurement& m, const Vec3& sigmas);
  static Factor landmark_obs(int pose, int landmark, const LandmarkMeasurement& m, const Vec3& sigmas);

  int dimension() const;
  /// Arity and sigma checks; throws InputError.
  void validate() const;
};

struct Values {
  std::vector<Pose3> poses;
  std::vector<Vec3> landmarks;
};

/// Whitened residual (meas - prediction) / sigma with angles wrapped to (-pi, pi].
/// Empty when the factor is inactive at these values (landmark behind camera).
std::optional<Eigen::VectorXd> residual(const Factor& f, const Values& values);

/// Jacobians of the whitened residual w.r.t. each connected variable's local
/// coordinates (pose: 6, right perturbation [rot; trans]; landmark: 3).
std::optional<std::vector<Eigen::MatrixXd>> jacobians(const Factor& f, const Values& values);

struct Linearization {
  Eigen::VectorXd residual;
  std::vector<Eigen::MatrixXd> jacobians;
};
std::optional<Linearization> linearize(const Factor& f, const Values& values);

class FactorGraph {
 public:
  VariableId add_pose(const Pose3& initial);
  VariableId add_landmark(const Vec3& initial);
  /// Validates the factor and that every referenced variable exists.
  void add_factor(Factor f);

  const Values& values() const { return values_; }
  Values& mutable_values() { return values_; }
  /// Estimates as they were when each variable was inserted.
  const Values& initial_values() const { return initial_values_; }
  const std::vector<Factor>& factors() const { return factors_; }

  int num_poses() const { return static_cast<int>(values_.poses.size()); }
  int num_landmarks() const { return static_cast<int>(values_.landmarks.size()); }
  bool has_anchor() const;

 private:
  Values values_;
  Values initial_values_;
  std::vector<Factor> factors_;
};

/// Sum of squared whitened residuals over active factors, in factor order.
double total_cost(const FactorGraph& graph, const Values& values);

struct SolverSettings {
  int max_iterations = 100;
  double relative_cost_tolerance = 1e-12;
  double step_tolerance = 1e-10;
  double gradient_tolerance = 1e-12;
  double initial_lambda = 1e-4;
  double max_lambda = 1e16;
};

struct OptimizationReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;          // linear solves performed
  int accepted_steps = 0;
  bool converged = false;
  std::string termination;
  std::vector<double> cost_history;  // cost after each accepted step, starting with the initial cost
};

/// Levenberg-Marquardt over all variables, starting from the graph's current
/// values. Throws OptimizationFailure if the graph has no anchor or the
/// damped normal equations cannot be factored.
OptimizationReport optimize(FactorGraph& graph, const SolverSettings& settings = {});

struct NewVariables {
  std::vector<Pose3> poses;
  std::vector<Vec3> landmarks;
};

/// Inserts the new variables (ids follow the existing ones) and factors, then
/// relinearizes and re-solves from the current estimates.
OptimizationReport incremental_update(FactorGraph& graph, const NewVariables& new_variables,
                                      const std::vector<Factor>& new_factors,
                                      const SolverSettings& settings = {});

/// Re-solves the whole graph from the insertion-time estimates, leaving
/// `graph` untouched. Returns the converged values and report.
std::pair<Values, OptimizationReport> batch_optimize(const FactorGraph& graph,
                                                     const SolverSettings& settings = {});

/// Gauss-Newton information matrix J^T J at the current estimates, dense.
/// Variables are ordered poses (6 each) then landmarks (3 each).
Eigen::MatrixXd information_matrix(const FactorGraph& graph);

int variable_offset(const FactorGraph& graph, VariableId id);
int variable_dimension(VariableId id);

/// Block of the inverse information matrix for `id`.
/// Throws CovarianceUnavailable when the information matrix is rank deficient.
Eigen::MatrixXd marginal_covariance(const FactorGraph& graph, VariableId id);

/// Same as marginal_covariance for several variables sharing one factorization.
std::vector<Eigen::MatrixXd> marginal_covariances(const FactorGraph& graph,
                                                  const std::vector<VariableId>& ids);

/// Largest per-variable difference between two value sets (pose: translation
/// distance and rotation angle; landmark: Euclidean distance).
double max_variable_difference(const Values& a, const Values& b);

/// NDJSON snapshot: one line per variable, then one per factor.
std::string graph_snapshot_ndjson(const FactorGraph& graph);

}  // namespace oaslam
