#include "oaslam/graph.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include "json.hpp"
#include <sstream>

#include "oaslam/errors.hpp"

namespace oaslam {

namespace {

// Landmarks closer than this to the image plane make the observation inactive.
constexpr double kMinDepth = 1e-6;

using RowVec3 = Eigen::RowVector3d;

Pose3 pose_of(const Values& v, VariableId id) { return v.poses.at(static_cast<std::size_t>(id.index)); }
const Vec3& landmark_of(const Values& v, VariableId id) {
  return v.landmarks.at(static_cast<std::size_t>(id.index));
}

struct PoseErrorParts {
  Vec6 error;
  Eigen::Matrix<double, 6, 6> d_from;  // w.r.t. the "from" pose (odometry only)
  Eigen::Matrix<double, 6, 6> d_to;
};

// error = Log(P^-1 M), P = from^-1 * to.
PoseErrorParts pose_error(const Mat3& Ri, const Vec3& ti, const Mat3& Rj, const Vec3& tj,
                          const Pose3& measured) {
  const Mat3 Rm = measured.rotation_matrix();
  const Vec3& tm = measured.translation();
  const Mat3 Re = Rj.transpose() * Ri * Rm;
  const Vec3 te = Rj.transpose() * (Ri * tm + ti - tj);
  const Vec3 e = so3_log(Re);
  const Mat3 Jr_inv = so3_right_jacobian_inverse(e);

  PoseErrorParts out;
  out.error.head<3>() = e;
  out.error.tail<3>() = te;
  out.d_from.setZero();
  out.d_from.block<3, 3>(0, 0) = Jr_inv * Rm.transpose();
  out.d_from.block<3, 3>(3, 0) = -Rj.transpose() * Ri * skew(tm);
  out.d_from.block<3, 3>(3, 3) = Rj.transpose() * Ri;
  out.d_to.setZero();
  out.d_to.block<3, 3>(0, 0) = -Jr_inv * Re.transpose();
  out.d_to.block<3, 3>(3, 0) = skew(te);
  out.d_to.block<3, 3>(3, 3) = -Mat3::Identity();
  return out;
}

Eigen::MatrixXd whiten(Eigen::MatrixXd J, const Eigen::VectorXd& sigmas) {
  for (Eigen::Index r = 0; r < J.rows(); ++r) J.row(r) /= sigmas(r);
  return J;
}

Linearization linearize_prior(const Factor& f, const Values& v) {
  const Pose3 x = pose_of(v, f.variables[0]);
  const auto& m = std::get<Pose3>(f.measurement);
  const auto parts = pose_error(Mat3::Identity(), Vec3::Zero(), x.rotation_matrix(), x.translation(), m);
  Linearization lin;
  lin.residual = parts.error.cwiseQuotient(f.sigmas);
  lin.jacobians.push_back(whiten(parts.d_to, f.sigmas));
  return lin;
}

Linearization linearize_odometry(const Factor& f, const Values& v) {
  const Pose3 xi = pose_of(v, f.variables[0]);
  const Pose3 xj = pose_of(v, f.variables[1]);
  const auto& m = std::get<Pose3>(f.measurement);
  const auto parts =
      pose_error(xi.rotation_matrix(), xi.translation(), xj.rotation_matrix(), xj.translation(), m);
  Linearization lin;
  lin.residual = parts.error.cwiseQuotient(f.sigmas);
  lin.jacobians.push_back(whiten(parts.d_from, f.sigmas));
  lin.jacobians.push_back(whiten(parts.d_to, f.sigmas));
  return lin;
}

Linearization linearize_partial(const Factor& f, const Values& v) {
  const Pose3 x = pose_of(v, f.variables[0]);
  const auto& m = std::get<PartialPoseMeasurement>(f.measurement);
  const Mat3 R = x.rotation_matrix();
  const Vec3 c = R.row(2).transpose();
  const Mat3 dc = skew(c);  // d(row 2)/d(omega)

  Eigen::Vector3d err(m.depth - x.translation().z(), wrap_angle(m.pitch - x.pitch()),
                      wrap_angle(m.roll - x.roll()));

  Eigen::Matrix<double, 3, 6> dpred = Eigen::Matrix<double, 3, 6>::Zero();
  dpred.block<1, 3>(0, 3) = R.row(2);
  const double cos_pitch = std::sqrt(std::max(1e-300, 1.0 - c(0) * c(0)));
  dpred.block<1, 3>(1, 0) = -dc.row(0) / cos_pitch;
  const double n12 = c(1) * c(1) + c(2) * c(2);
  dpred.block<1, 3>(2, 0) = (c(2) * dc.row(1) - c(1) * dc.row(2)) / n12;

  Linearization lin;
  lin.residual = err.cwiseQuotient(f.sigmas);
  lin.jacobians.push_back(whiten(-dpred, f.sigmas));
  return lin;
}

Linearization linearize_absolute(const Factor& f, const Values& v) {
  const Pose3 x = pose_of(v, f.variables[0]);
  const auto& m = std::get<AbsolutePoseMeasurement>(f.measurement);
  const Mat3 R = x.rotation_matrix();
  const Vec3 a = R.col(0);
  const Mat3 da = -R * skew(Vec3::UnitX());

  Eigen::Vector3d err(m.x - x.translation().x(), m.y - x.translation().y(),
                      wrap_angle(m.heading - std::atan2(a(1), a(0))));

  Eigen::Matrix<double, 3, 6> dpred = Eigen::Matrix<double, 3, 6>::Zero();
  dpred.block<1, 3>(0, 3) = R.row(0);
  dpred.block<1, 3>(1, 3) = R.row(1);
  dpred.block<1, 3>(2, 0) = (a(0) * da.row(1) - a(1) * da.row(0)) / (a(0) * a(0) + a(1) * a(1));

  Linearization lin;
  lin.residual = err.cwiseQuotient(f.sigmas);
  lin.jacobians.push_back(whiten(-dpred, f.sigmas));
  return lin;
}

std::optional<Linearization> linearize_landmark(const Factor& f, const Values& v) {
  const Pose3 x = pose_of(v, f.variables[0]);
  const Vec3& l = landmark_of(v, f.variables[1]);
  const auto& m = std::get<LandmarkMeasurement>(f.measurement);
  const Mat3 R = x.rotation_matrix();
  const Mat3 Rc = m.camera_from_body.rotation_matrix();
  const Vec3 pb = R.transpose() * (l - x.translation());
  const Vec3 pc = Rc * pb + m.camera_from_body.translation();
  const double X = pc.x(), Y = pc.y(), Z = pc.z();
  if (!(Z > kMinDepth)) return std::nullopt;

  Eigen::Vector3d err(wrap_angle(m.bearing - std::atan2(X, Z)),
                      wrap_angle(m.elevation - std::atan2(Y, Z)), m.range - Z);

  const double nxz = X * X + Z * Z;
  const double nyz = Y * Y + Z * Z;
  Mat3 dpred;
  dpred << Z / nxz, 0.0, -X / nxz,
           0.0, Z / nyz, -Y / nyz,
           0.0, 0.0, 1.0;

  Eigen::Matrix<double, 3, 6> dpose;
  dpose.block<3, 3>(0, 0) = dpred * Rc * skew(pb);
  dpose.block<3, 3>(0, 3) = -dpred * Rc;
  const Mat3 dlm = dpred * Rc * R.transpose();

  Linearization lin;
  lin.residual = err.cwiseQuotient(f.sigmas);
  lin.jacobians.push_back(whiten(-dpose, f.sigmas));
  lin.jacobians.push_back(whiten(-dlm, f.sigmas));
  return lin;
}

}  // namespace

std::string to_string(VariableId id) {
  return (id.kind == VariableKind::kPose ? "x" : "l") + std::to_string(id.index);
}

std::string to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::kPrior: return "prior";
    case FactorKind::kOdometry: return "odometry";
    case FactorKind::kPartialPose: return "partial_pose";
    case FactorKind::kAbsolutePose: return "absolute_pose";
    case FactorKind::kLandmarkObs: return "landmark_obs";
  }
  return "unknown";
}

Factor Factor::prior(int pose, const Pose3& measured, const Vec6& sigmas) {
  Factor f{FactorKind::kPrior, {VariableId::pose(pose)}, measured, sigmas};
  f.validate();
  return f;
}

Factor Factor::odometry(int from_pose, int to_pose, const Pose3& measured_delta, const Vec6& sigmas) {
  Factor f{FactorKind::kOdometry, {VariableId::pose(from_pose), VariableId::pose(to_pose)},
           measured_delta, sigmas};
  f.validate();
  return f;
}

Factor Factor::partial_pose(int pose, const PartialPoseMeasurement& m, const Vec3& sigmas) {
  Factor f{FactorKind::kPartialPose, {VariableId::pose(pose)}, m, sigmas};
  f.validate();
  return f;
}

Factor Factor::absolute_pose(int pose, const AbsolutePoseMeasurement& m, const Vec3& sigmas) {
  Factor f{FactorKind::kAbsolutePose, {VariableId::pose(pose)}, m, sigmas};
  f.validate();
  return f;
}

Factor Factor::landmark_obs(int pose, int landmark, const LandmarkMeasurement& m, const Vec3& sigmas) {
  Factor f{FactorKind::kLandmarkObs, {VariableId::pose(pose), VariableId::landmark(landmark)}, m, sigmas};
  f.validate();
  return f;
}

int Factor::dimension() const {
  return (kind == FactorKind::kPrior || kind == FactorKind::kOdometry) ? 6 : 3;
}

void Factor::validate() const {
  std::ostringstream msg;
  const auto poses = std::count_if(variables.begin(), variables.end(),
                                   [](VariableId id) { return id.kind == VariableKind::kPose; });
  const auto lms = static_cast<long>(variables.size()) - poses;
  bool arity_ok = false;
  bool measurement_ok = false;
  switch (kind) {
    case FactorKind::kPrior:
      arity_ok = poses == 1 && lms == 0;
      measurement_ok = std::holds_alternative<Pose3>(measurement);
      break;
    case FactorKind::kOdometry:
      arity_ok = poses == 2 && lms == 0;
      measurement_ok = std::holds_alternative<Pose3>(measurement);
      break;
    case FactorKind::kPartialPose:
      arity_ok = poses == 1 && lms == 0;
      measurement_ok = std::holds_alternative<PartialPoseMeasurement>(measurement);
      break;
    case FactorKind::kAbsolutePose:
      arity_ok = poses == 1 && lms == 0;
      measurement_ok = std::holds_alternative<AbsolutePoseMeasurement>(measurement);
      break;
    case FactorKind::kLandmarkObs:
      arity_ok = variables.size() == 2 && variables[0].kind == VariableKind::kPose &&
                 variables[1].kind == VariableKind::kLandmark;
      measurement_ok = std::holds_alternative<LandmarkMeasurement>(measurement);
      break;
  }
  if (!arity_ok) msg << to_string(kind) << " factor has wrong arity";
  else if (!measurement_ok) msg << to_string(kind) << " factor has wrong measurement type";
  else if (sigmas.size() != dimension()) msg << to_string(kind) << " factor needs " << dimension() << " sigmas";
  else if (!(sigmas.array() > 0.0).all() || !sigmas.allFinite())
    msg << to_string(kind) << " factor sigmas must be finite and > 0";
  if (!msg.str().empty()) throw InputError(msg.str());
}

std::optional<Linearization> linearize(const Factor& f, const Values& values) {
  switch (f.kind) {
    case FactorKind::kPrior: return linearize_prior(f, values);
    case FactorKind::kOdometry: return linearize_odometry(f, values);
    case FactorKind::kPartialPose: return linearize_partial(f, values);
    case FactorKind::kAbsolutePose: return linearize_absolute(f, values);
    case FactorKind::kLandmarkObs: return linearize_landmark(f, values);
  }
  return std::nullopt;
}

std::optional<Eigen::VectorXd> residual(const Factor& f, const Values& values) {
  auto lin = linearize(f, values);
  if (!lin) return std::nullopt;
  return std::move(lin->residual);
}

std::optional<std::vector<Eigen::MatrixXd>> jacobians(const Factor& f, const Values& values) {
  auto lin = linearize(f, values);
  if (!lin) return std::nullopt;
  return std::move(lin->jacobians);
}

VariableId FactorGraph::add_pose(const Pose3& initial) {
  values_.poses.push_back(initial);
  initial_values_.poses.push_back(initial);
  return VariableId::pose(num_poses() - 1);
}

VariableId FactorGraph::add_landmark(const Vec3& initial) {
  if (!initial.allFinite()) throw InputError("landmark initial estimate must be finite");
  values_.landmarks.push_back(initial);
  initial_values_.landmarks.push_back(initial);
  return VariableId::landmark(num_landmarks() - 1);
}

void FactorGraph::add_factor(Factor f) {
  f.validate();
  for (const auto& id : f.variables) {
    const int n = id.kind == VariableKind::kPose ? num_poses() : num_landmarks();
    if (id.index < 0 || id.index >= n) {
      throw InputError(to_string(f.kind) + " factor references missing variable " + to_string(id));
    }
  }
  factors_.push_back(std::move(f));
}

bool FactorGraph::has_anchor() const {
  return std::any_of(factors_.begin(), factors_.end(), [](const Factor& f) {
    return f.kind == FactorKind::kPrior || f.kind == FactorKind::kAbsolutePose;
  });
}

double total_cost(const FactorGraph& graph, const Values& values) {
  double cost = 0.0;
  for (const auto& f : graph.factors()) {
    if (auto r = residual(f, values)) cost += r->squaredNorm();
  }
  return cost;
}

int variable_dimension(VariableId id) { return id.kind == VariableKind::kPose ? 6 : 3; }

int variable_offset(const FactorGraph& graph, VariableId id) {
  return id.kind == VariableKind::kPose ? 6 * id.index : 6 * graph.num_poses() + 3 * id.index;
}

namespace {

int total_dimension(const FactorGraph& graph) {
  return 6 * graph.num_poses() + 3 * graph.num_landmarks();
}

struct NormalEquations {
  double cost = 0.0;
  Eigen::SparseMatrix<double> H;
  Eigen::VectorXd g;
};

NormalEquations build_normal_equations(const FactorGraph& graph, const Values& values) {
  const int n = total_dimension(graph);
  NormalEquations ne;
  ne.g = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(graph.factors().size() * 72);
  for (const auto& f : graph.factors()) {
    auto lin = linearize(f, values);
    if (!lin) continue;
    ne.cost += lin->residual.squaredNorm();
    for (std::size_t a = 0; a < f.variables.size(); ++a) {
      const int oa = variable_offset(graph, f.variables[a]);
      const auto& Ja = lin->jacobians[a];
      ne.g.segment(oa, Ja.cols()) += Ja.transpose() * lin->residual;
      for (std::size_t b = 0; b < f.variables.size(); ++b) {
        const int ob = variable_offset(graph, f.variables[b]);
        const Eigen::MatrixXd block = Ja.transpose() * lin->jacobians[b];
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
          for (Eigen::Index c = 0; c < block.cols(); ++c) {
            triplets.emplace_back(oa + static_cast<int>(r), ob + static_cast<int>(c), block(r, c));
          }
        }
      }
    }
  }
  ne.H.resize(n, n);
  ne.H.setFromTriplets(triplets.begin(), triplets.end());
  return ne;
}

Values retract(const FactorGraph& graph, const Values& values, const Eigen::VectorXd& delta) {
  Values out = values;
  for (int i = 0; i < graph.num_poses(); ++i) {
    out.poses[static_cast<std::size_t>(i)] =
        values.poses[static_cast<std::size_t>(i)].retract(delta.segment<6>(6 * i));
  }
  const int base = 6 * graph.num_poses();
  for (int j = 0; j < graph.num_landmarks(); ++j) {
    out.landmarks[static_cast<std::size_t>(j)] += delta.segment<3>(base + 3 * j);
  }
  return out;
}

}  // namespace

OptimizationReport optimize(FactorGraph& graph, const SolverSettings& settings) {
  if (!graph.has_anchor()) {
    throw OptimizationFailure("graph has no prior or absolute factor anchoring the gauge");
  }
  OptimizationReport report;
  Values current = graph.values();
  NormalEquations ne = build_normal_equations(graph, current);
  double cost = ne.cost;
  report.initial_cost = cost;
  report.cost_history.push_back(cost);

  auto finish = [&](bool converged, std::string why) {
    graph.mutable_values() = current;
    report.final_cost = cost;
    report.converged = converged;
    report.termination = std::move(why);
    return report;
  };

  if (total_dimension(graph) == 0 || cost == 0.0 ||
      ne.g.lpNorm<Eigen::Infinity>() <= settings.gradient_tolerance) {
    return finish(true, "gradient");
  }

  double lambda = settings.initial_lambda;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool pattern_ready = false;
  while (report.iterations < settings.max_iterations) {
    Eigen::SparseMatrix<double> damped = ne.H;
    for (int k = 0; k < damped.rows(); ++k) {
      const double d = std::clamp(ne.H.coeff(k, k), 1e-6, 1e32);
      damped.coeffRef(k, k) += lambda * d;
    }
    if (!pattern_ready) {
      solver.analyzePattern(damped);
      pattern_ready = true;
    }
    solver.factorize(damped);
    ++report.iterations;
    Eigen::VectorXd delta;
    bool solved = solver.info() == Eigen::Success;
    if (solved) {
      delta = solver.solve(-ne.g);
      solved = solver.info() == Eigen::Success && delta.allFinite();
    }
    if (!solved) {
      lambda *= 10.0;
      if (lambda > settings.max_lambda) {
        std::ostringstream msg;
        msg << "normal equations singular after maximum damping (lambda=" << lambda
            << ", cost=" << cost << ", dim=" << damped.rows() << ")";
        graph.mutable_values() = current;
        throw OptimizationFailure(msg.str());
      }
      continue;
    }

    const double step = delta.norm();
    Values candidate = retract(graph, current, delta);
    const double new_cost = total_cost(graph, candidate);
    // Equal cost is accepted: near the optimum the cost stops resolving
    // changes that the step still captures.
    if (new_cost <= cost) {
      const double rel = (cost - new_cost) / cost;
      current = std::move(candidate);
      cost = new_cost;
      ++report.accepted_steps;
      report.cost_history.push_back(cost);
      lambda = std::max(lambda / 10.0, 1e-12);
      if (rel < settings.relative_cost_tolerance) return finish(true, "relative_cost");
      if (step < settings.step_tolerance) return finish(true, "step");
      ne = build_normal_equations(graph, current);
      if (cost == 0.0 || ne.g.lpNorm<Eigen::Infinity>() <= settings.gradient_tolerance) {
        return finish(true, "gradient");
      }
    } else {
      if (step < settings.step_tolerance) return finish(true, "step");
      lambda *= 10.0;
      if (lambda > settings.max_lambda) {
        std::ostringstream msg;
        msg << "no cost decrease at maximum damping (lambda=" << lambda << ", cost=" << cost
            << ", step=" << step << ")";
        graph.mutable_values() = current;
        throw OptimizationFailure(msg.str());
      }
    }
  }
  return finish(false, "max_iterations");
}

OptimizationReport incremental_update(FactorGraph& graph, const NewVariables& new_variables,
                                      const std::vector<Factor>& new_factors,
                                      const SolverSettings& settings) {
  for (const auto& p : new_variables.poses) graph.add_pose(p);
  for (const auto& l : new_variables.landmarks) graph.add_landmark(l);
  for (const auto& f : new_factors) graph.add_factor(f);
  return optimize(graph, settings);
}

std::pair<Values, OptimizationReport> batch_optimize(const FactorGraph& graph,
                                                     const SolverSettings& settings) {
  FactorGraph copy = graph;
  copy.mutable_values() = graph.initial_values();
  auto report = optimize(copy, settings);
  return {copy.values(), report};
}

Eigen::MatrixXd information_matrix(const FactorGraph& graph) {
  return Eigen::MatrixXd(build_normal_equations(graph, graph.values()).H);
}

std::vector<Eigen::MatrixXd> marginal_covariances(const FactorGraph& graph,
                                                  const std::vector<VariableId>& ids) {
  std::vector<Eigen::MatrixXd> out;
  if (ids.empty()) return out;
  const auto ne = build_normal_equations(graph, graph.values());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(ne.H);
  if (solver.info() != Eigen::Success) {
    throw CovarianceUnavailable("information matrix factorization failed");
  }
  const Eigen::VectorXd d = solver.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(d.minCoeff() > 1e-10 * dmax)) {
    throw CovarianceUnavailable("information matrix is rank deficient");
  }
  const int n = total_dimension(graph);
  for (const auto& id : ids) {
    const int off = variable_offset(graph, id);
    const int dim = variable_dimension(id);
    if (off + dim > n || id.index < 0) throw InputError("covariance requested for missing variable " + to_string(id));
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, dim);
    for (int k = 0; k < dim; ++k) rhs(off + k, k) = 1.0;
    const Eigen::MatrixXd cols = solver.solve(rhs);
    Eigen::MatrixXd block = cols.block(off, 0, dim, dim);
    out.push_back(0.5 * (block + block.transpose()));
  }
  return out;
}

Eigen::MatrixXd marginal_covariance(const FactorGraph& graph, VariableId id) {
  return marginal_covariances(graph, {id}).front();
}

double max_variable_difference(const Values& a, const Values& b) {
  if (a.poses.size() != b.poses.size() || a.landmarks.size() != b.landmarks.size()) {
    throw InputError("value sets have different variable counts");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.poses.size(); ++i) {
    const auto d = pose_distance(a.poses[i], b.poses[i]);
    worst = std::max({worst, d.angle, d.translation});
  }
  for (std::size_t j = 0; j < a.landmarks.size(); ++j) {
    worst = std::max(worst, (a.landmarks[j] - b.landmarks[j]).norm());
  }
  return worst;
}

namespace {

nlohmann::json pose_json(const Pose3& p) {
  const auto& q = p.rotation();
  const auto& t = p.translation();
  return {{"rotation", {q.w(), q.x(), q.y(), q.z()}}, {"translation", {t.x(), t.y(), t.z()}}};
}

}  // namespace

std::string graph_snapshot_ndjson(const FactorGraph& graph) {
  std::ostringstream out;
  const auto& v = graph.values();
  for (std::size_t i = 0; i < v.poses.size(); ++i) {
    nlohmann::json j = pose_json(v.poses[i]);
    j["record"] = "variable";
    j["id"] = to_string(VariableId::pose(static_cast<int>(i)));
    out << j.dump() << '\n';
  }
  for (std::size_t i = 0; i < v.landmarks.size(); ++i) {
    const auto& l = v.landmarks[i];
    nlohmann::json j{{"record", "variable"},
                     {"id", to_string(VariableId::landmark(static_cast<int>(i)))},
                     {"position", {l.x(), l.y(), l.z()}}};
    out << j.dump() << '\n';
  }
  for (const auto& f : graph.factors()) {
    nlohmann::json j{{"record", "factor"}, {"kind", to_string(f.kind)}};
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& id : f.variables) ids.push_back(to_string(id));
    j["ids"] = ids;
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Pose3>) {
            j["measurement"] = pose_json(m);
          } else if constexpr (std::is_same_v<T, PartialPoseMeasurement>) {
            j["measurement"] = {{"depth", m.depth}, {"pitch", m.pitch}, {"roll", m.roll}};
          } else if constexpr (std::is_same_v<T, AbsolutePoseMeasurement>) {
            j["measurement"] = {{"x", m.x}, {"y", m.y}, {"heading", m.heading}};
          } else {
            j["measurement"] = {{"bearing", m.bearing}, {"elevation", m.elevation}, {"range", m.range}};
          }
        },
        f.measurement);
    j["sigma"] = std::vector<double>(f.sigmas.data(), f.sigmas.data() + f.sigmas.size());
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace oaslam
