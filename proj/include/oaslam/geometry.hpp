#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace oaslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Wraps an angle to [0, 2*pi).
double wrap_two_pi(double a);

Mat3 skew(const Vec3& v);

/// SO(3) exponential of a rotation vector.
Mat3 so3_exp(const Vec3& w);

/// SO(3) logarithm; returns the rotation vector with angle in [0, pi].
Vec3 so3_log(const Mat3& R);

/// Inverse of the right Jacobian of SO(3) evaluated at rotation vector w.
Mat3 so3_right_jacobian_inverse(const Vec3& w);

/// Rigid transform world<-body. Local coordinates are [rotation; translation]
/// with right perturbation: R' = R Exp(w), t' = t + R v.
class Pose3 {
 public:
  Pose3();
  Pose3(const Eigen::Quaterniond& rotation, const Vec3& translation);
  Pose3(const Mat3& rotation, const Vec3& translation);

  static Pose3 identity() { return {}; }

  /// Z-Y-X Euler construction (yaw about z, then pitch about y, then roll about x).
  static Pose3 from_euler(double yaw, double pitch, double roll, const Vec3& translation);

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }

  double yaw() const;
  double pitch() const;
  double roll() const;

  Pose3 compose(const Pose3& other) const;
  Pose3 inverse() const;
  Vec3 transform_point(const Vec3& x) const;

  /// this * Exp(delta) under the right-perturbation convention above.
  Pose3 retract(const Vec6& delta) const;

 private:
  Eigen::Quaterniond rotation_;
  Vec3 translation_;
};

Pose3 compose(const Pose3& a, const Pose3& b);
Pose3 inverse(const Pose3& p);
Vec3 transform_point(const Pose3& p, const Vec3& x);

/// Decoupled log: [Log(R); t]. Zero iff the pose is the identity.
Vec6 pose_log(const Pose3& p);

/// Rotation angle (radians) and translation distance between two poses.
struct PoseDistance {
  double angle;
  double translation;
};
PoseDistance pose_distance(const Pose3& a, const Pose3& b);

struct Pixel {
  double u;
  double v;
};

struct CameraIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  double width;
  double height;

  /// Throws InputError if fx/fy are not positive or the principal point is
  /// outside the image.
  void validate() const;
  bool contains(const Pixel& px) const;
  /// Pinhole projection of a camera-frame point with Z > 0.
  Pixel project(const Vec3& point_camera) const;
};

struct SonarConfig {
  double horizontal_fov;
  int num_beams;
  double range_resolution;
  int num_bins;
  double vertical_aperture;
  double intensity_threshold;

  void validate() const;
  double angular_resolution() const { return horizontal_fov / num_beams; }
  double max_range() const { return num_bins * range_resolution; }
  /// Center bearing of beam i; beams are ordered by increasing bearing.
  double beam_bearing(int i) const;
};

/// Sensor mounting. Each pose maps body-frame coordinates into the sensor frame.
struct Extrinsics {
  Pose3 camera_from_body;
  Pose3 sonar_from_body;

  /// Co-located sensors looking along the body x axis. Camera/sonar frame:
  /// z forward, x right, y down; body frame: x forward, y right, z down.
  static Extrinsics colocated();
};

/// Rotation taking body (x fwd, y right, z down) into optical (z fwd, x right, y down) axes.
Mat3 optical_from_body_rotation();

/// Bearing to the right of the optical axis, from the column coordinate.
double pixel_to_bearing(const Pixel& centroid, const CameraIntrinsics& cam);

/// Elevation below the optical axis, from the row coordinate.
double pixel_to_elevation(const Pixel& centroid, const CameraIntrinsics& cam);

}  // namespace oaslam
