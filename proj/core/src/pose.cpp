#include "regrasp/pose.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace regrasp {

bool Pose::is_valid(double tol) const {
  Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() >= tol) return false;
  if (std::abs(rotation.determinant() - 1.0) >= tol) return false;
  return translation.allFinite();
}

std::array<double, 12> Pose::to_row_major() const {
  std::array<double, 12> a{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a[static_cast<size_t>(r * 4 + c)] = rotation(r, c);
    a[static_cast<size_t>(r * 4 + 3)] = translation(r);
  }
  return a;
}

Pose Pose::from_row_major(const std::array<double, 12>& a) {
  Pose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = a[static_cast<size_t>(r * 4 + c)];
    p.translation(r) = a[static_cast<size_t>(r * 4 + 3)];
  }
  return p;
}

Pose rot_z(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Pose p;
  p.rotation << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return p;
}

double wrap_angle(double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("wrap_angle: non-finite angle");
  const double two_pi = 2.0 * M_PI;
  double w = std::fmod(theta, two_pi);
  if (w < 0.0) w += two_pi;
  if (w >= two_pi) w = 0.0;  // fmod can land exactly on 2*pi after the add
  return w;
}

Pose compose_intermediate_pose(const StablePlacement& placement, const PlanarParams& xi) {
  Pose delta = rot_z(xi.theta);
  delta.translation = Vec3(xi.x, xi.y, 0.0);
  return delta * placement.pose;
}

PoseJacobian compose_jacobian(const StablePlacement& placement, const PlanarParams& xi) {
  const double c = std::cos(xi.theta);
  const double s = std::sin(xi.theta);
  Mat3 drz;  // d Rz(theta) / d theta
  drz << -s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0;

  const Mat3& rs = placement.pose.rotation;
  const Vec3& ts = placement.pose.translation;

  PoseJacobian jac = PoseJacobian::Zero();
  // translation rows: t = Rz*ts + [x, y, 0]
  jac(0, 0) = 1.0;
  jac(1, 1) = 1.0;
  jac.block<3, 1>(0, 2) = drz * ts;
  // rotation-column rows: col_k = Rz * rs.col(k), k = 0, 1
  jac.block<3, 1>(3, 2) = drz * rs.col(0);
  jac.block<3, 1>(6, 2) = drz * rs.col(1);
  return jac;
}

PoseEncoding encode_pose(const Pose& pose) {
  PoseEncoding e;
  e.segment<3>(0) = pose.translation;
  e.segment<3>(3) = pose.rotation.col(0);
  e.segment<3>(6) = pose.rotation.col(1);
  return e;
}

Pose decode_pose(const PoseEncoding& enc) {
  Vec3 a = enc.segment<3>(3);
  Vec3 b = enc.segment<3>(6);
  const double na = a.norm();
  if (na < 1e-12) throw std::invalid_argument("decode_pose: degenerate first column");
  Vec3 r0 = a / na;
  Vec3 b_perp = b - r0.dot(b) * r0;
  const double nb = b_perp.norm();
  if (nb < 1e-12) throw std::invalid_argument("decode_pose: collinear columns");
  Vec3 r1 = b_perp / nb;
  Pose p;
  p.rotation.col(0) = r0;
  p.rotation.col(1) = r1;
  p.rotation.col(2) = r0.cross(r1);
  p.translation = enc.segment<3>(0);
  return p;
}

}  // namespace regrasp
