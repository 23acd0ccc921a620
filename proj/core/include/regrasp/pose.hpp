#pragma once

#include <Eigen/Core>

#include <array>

namespace regrasp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Network-facing pose representation: translation followed by the first two
// rotation-matrix columns. Smooth and injective on SO(3); the third column
// is recovered by cross product.
using PoseEncoding = Eigen::Matrix<double, 9, 1>;
using PoseJacobian = Eigen::Matrix<double, 9, 3>;

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Pose operator*(const Pose& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  // Orthonormal with determinant +1, both within tol (max-abs norm).
  bool is_valid(double tol = 1e-9) const;

  // Row-major 3x4 (rotation | translation), the on-disk layout.
  std::array<double, 12> to_row_major() const;
  static Pose from_row_major(const std::array<double, 12>& a);
};

Pose rot_z(double theta);

// Planar perturbation of a stable placement: offset in the table plane plus
// a yaw about the world z axis. theta is kept unwrapped while optimizing and
// wrapped only for verification and reporting.
struct PlanarParams {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

struct StablePlacement {
  int index = 1;  // 1-based, unique and contiguous within a scene
  Pose pose;
};

// Maps any finite angle into [0, 2*pi). Throws std::invalid_argument on
// non-finite input.
double wrap_angle(double theta);

// T = DeltaT(xi) * T_s: left multiplication, so the offset and yaw act in
// the world frame.
Pose compose_intermediate_pose(const StablePlacement& placement, const PlanarParams& xi);

// d encode_pose(compose_intermediate_pose(placement, xi)) / d [x, y, theta].
PoseJacobian compose_jacobian(const StablePlacement& placement, const PlanarParams& xi);

PoseEncoding encode_pose(const Pose& pose);

// Gram-Schmidt reconstruction; inverse of encode_pose on valid encodings.
Pose decode_pose(const PoseEncoding& enc);

}  // namespace regrasp
