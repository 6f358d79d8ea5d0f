#include "oaslam/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oaslam/errors.hpp"

namespace oaslam {

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

double wrap_two_pi(double a) {
  double w = std::fmod(a, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  if (w >= 2.0 * kPi) w = 0.0;
  return w;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    return Mat3::Identity() + skew(w);
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

namespace {

Vec3 quaternion_log(Eigen::Quaterniond q) {
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) {
    return 2.0 * v / q.w();
  }
  const double angle = 2.0 * std::atan2(n, q.w());
  return angle / n * v;
}

}  // namespace

Vec3 so3_log(const Mat3& R) { return quaternion_log(Eigen::Quaterniond(R).normalized()); }

Mat3 so3_right_jacobian_inverse(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = skew(w);
  if (theta < 1e-6) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
  }
  const double coeff =
      1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * W + coeff * W * W;
}

Pose3::Pose3() : rotation_(Eigen::Quaterniond::Identity()), translation_(Vec3::Zero()) {}

Pose3::Pose3(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

Pose3::Pose3(const Mat3& rotation, const Vec3& translation)
    : rotation_(Eigen::Quaterniond(rotation).normalized()), translation_(translation) {}

Pose3 Pose3::from_euler(double yaw, double pitch, double roll, const Vec3& translation) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                               Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                               Eigen::AngleAxisd(roll, Vec3::UnitX());
  return {q, translation};
}

double Pose3::yaw() const {
  const Mat3 R = rotation_matrix();
  return std::atan2(R(1, 0), R(0, 0));
}

double Pose3::pitch() const {
  const Mat3 R = rotation_matrix();
  return std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
}

double Pose3::roll() const {
  const Mat3 R = rotation_matrix();
  return std::atan2(R(2, 1), R(2, 2));
}

Pose3 Pose3::compose(const Pose3& other) const {
  return {rotation_ * other.rotation_, translation_ + rotation_ * other.translation_};
}

Pose3 Pose3::inverse() const {
  const Eigen::Quaterniond qi = rotation_.conjugate();
  return {qi, -(qi * translation_)};
}

Vec3 Pose3::transform_point(const Vec3& x) const { return rotation_ * x + translation_; }

Pose3 Pose3::retract(const Vec6& delta) const {
  const Vec3 w = delta.head<3>();
  const Vec3 v = delta.tail<3>();
  Eigen::Quaterniond dq(so3_exp(w));
  return {rotation_ * dq, translation_ + rotation_ * v};
}

Pose3 compose(const Pose3& a, const Pose3& b) { return a.compose(b); }
Pose3 inverse(const Pose3& p) { return p.inverse(); }
Vec3 transform_point(const Pose3& p, const Vec3& x) { return p.transform_point(x); }

Vec6 pose_log(const Pose3& p) {
  Vec6 out;
  out.head<3>() = quaternion_log(p.rotation());
  out.tail<3>() = p.translation();
  return out;
}

PoseDistance pose_distance(const Pose3& a, const Pose3& b) {
  const Pose3 d = a.inverse().compose(b);
  return {quaternion_log(d.rotation()).norm(), (a.translation() - b.translation()).norm()};
}

void CameraIntrinsics::validate() const {
  std::ostringstream msg;
  if (!(fx > 0.0)) msg << "camera.fx must be > 0; ";
  if (!(fy > 0.0)) msg << "camera.fy must be > 0; ";
  if (!(cx > 0.0 && cx < width)) msg << "camera.cx must lie in (0, width); ";
  if (!(cy > 0.0 && cy < height)) msg << "camera.cy must lie in (0, height); ";
  if (!msg.str().empty()) throw InputError(msg.str());
}

bool CameraIntrinsics::contains(const Pixel& px) const {
  return std::isfinite(px.u) && std::isfinite(px.v) && px.u >= 0.0 && px.u <= width &&
         px.v >= 0.0 && px.v <= height;
}

Pixel CameraIntrinsics::project(const Vec3& p) const {
  return {cx + fx * p.x() / p.z(), cy + fy * p.y() / p.z()};
}

void SonarConfig::validate() const {
  std::ostringstream msg;
  if (!(horizontal_fov > 0.0 && horizontal_fov < 2.0 * kPi)) msg << "sonar.horizontal_fov must lie in (0, 2pi); ";
  if (num_beams < 2) msg << "sonar.num_beams must be >= 2; ";
  if (!(range_resolution > 0.0)) msg << "sonar.range_resolution must be > 0; ";
  if (num_bins < 1) msg << "sonar.num_bins must be >= 1; ";
  if (!(vertical_aperture > 0.0)) msg << "sonar.vertical_aperture must be > 0; ";
  if (!(intensity_threshold >= 0.0 && intensity_threshold <= 1.0))
    msg << "sonar.intensity_threshold must lie in [0, 1]; ";
  if (!msg.str().empty()) throw InputError(msg.str());
}

double SonarConfig::beam_bearing(int i) const {
  return -0.5 * horizontal_fov + (i + 0.5) * angular_resolution();
}

Mat3 optical_from_body_rotation() {
  Mat3 R;
  R << 0.0, 1.0, 0.0,
       0.0, 0.0, 1.0,
       1.0, 0.0, 0.0;
  return R;
}

Extrinsics Extrinsics::colocated() {
  const Pose3 optical(optical_from_body_rotation(), Vec3::Zero());
  return {optical, optical};
}

double pixel_to_bearing(const Pixel& centroid, const CameraIntrinsics& cam) {
  if (!cam.contains(centroid)) {
    std::ostringstream msg;
    msg << "centroid (" << centroid.u << ", " << centroid.v << ") outside the image";
    throw InputError(msg.str());
  }
  return std::atan((centroid.u - cam.cx) / cam.fx);
}

double pixel_to_elevation(const Pixel& centroid, const CameraIntrinsics& cam) {
  if (!cam.contains(centroid)) {
    std::ostringstream msg;
    msg << "centroid (" << centroid.u << ", " << centroid.v << ") outside the image";
    throw InputError(msg.str());
  }
  return std::atan((centroid.v - cam.cy) / cam.fy);
}

}  // namespace oaslam
