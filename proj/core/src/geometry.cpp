#include "regrasp/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace regrasp {

namespace {

constexpr double kPlaneTol = 1e-9;

// Rotation taking unit vector `from` onto unit vector `to`.
Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  const double c = from.dot(to);
  Vec3 axis = from.cross(to);
  const double s = axis.norm();
  if (s < 1e-12) {
    if (c > 0.0) return Mat3::Identity();
    // Opposite vectors: rotate pi about any axis orthogonal to `from`.
    Vec3 ortho = std::abs(from.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    axis = from.cross(ortho).normalized();
    return Eigen::AngleAxisd(M_PI, axis).toRotationMatrix();
  }
  axis /= s;
  return Eigen::AngleAxisd(std::atan2(s, c), axis).toRotationMatrix();
}

// Signed distance of point p to the polygon boundary in 2D; positive inside.
// Polygon must be convex and ordered counter-clockwise.
double inside_distance(const std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& p) {
  double d = std::numeric_limits<double>::infinity();
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d a = poly[i];
    const Eigen::Vector2d b = poly[(i + 1) % n];
    const Eigen::Vector2d e = b - a;
    const double len = e.norm();
    if (len < 1e-12) continue;
    // Left of edge a->b is inside for CCW order.
    const double cross = e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x());
    d = std::min(d, cross / len);
  }
  return d;
}

}  // namespace

double ConvexPolytope::support(const Vec3& dir) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& v : vertices) best = std::max(best, v.dot(dir));
  return best;
}

double ConvexPolytope::extent(const Vec3& dir) const { return support(dir) + support(-dir); }

std::vector<HullFace> ConvexPolytope::faces() const {
  const int n = static_cast<int>(vertices.size());
  if (n < 4) throw std::invalid_argument("ConvexPolytope: need at least 4 vertices");

  std::vector<HullFace> result;
  auto already_found = [&](const Vec3& normal, double offset) {
    for (const auto& f : result) {
      if ((f.normal - normal).norm() < 1e-7 && std::abs(f.offset - offset) < 1e-7) return true;
    }
    return false;
  };

  // Brute-force plane enumeration; n is small for the shapes we model.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int k = j + 1; k < n; ++k) {
        Vec3 normal = (vertices[j] - vertices[i]).cross(vertices[k] - vertices[i]);
        const double len = normal.norm();
        if (len < 1e-12) continue;
        normal /= len;
        double offset = normal.dot(vertices[i]);
        // Orient outward: all vertices on or below the plane.
        double max_side = -std::numeric_limits<double>::infinity();
        double min_side = std::numeric_limits<double>::infinity();
        for (const auto& v : vertices) {
          const double s = normal.dot(v) - offset;
          max_side = std::max(max_side, s);
          min_side = std::min(min_side, s);
        }
        if (max_side > kPlaneTol && min_side < -kPlaneTol) continue;  // cuts the hull
        if (max_side > kPlaneTol) {
          normal = -normal;
          offset = -offset;
        }
        if (already_found(normal, offset)) continue;

        HullFace face;
        face.normal = normal;
        face.offset = offset;
        for (int v = 0; v < n; ++v) {
          if (std::abs(normal.dot(vertices[v]) - offset) < 1e-8) face.vertices.push_back(v);
        }
        if (face.vertices.size() < 3) continue;

        // Order vertices counter-clockwise around the outward normal.
        Vec3 centroid = Vec3::Zero();
        for (int v : face.vertices) centroid += vertices[static_cast<size_t>(v)];
        centroid /= static_cast<double>(face.vertices.size());
        Vec3 u = (vertices[static_cast<size_t>(face.vertices[0])] - centroid).normalized();
        Vec3 w = normal.cross(u);
        std::sort(face.vertices.begin(), face.vertices.end(), [&](int a, int b) {
          const Vec3 pa = vertices[static_cast<size_t>(a)] - centroid;
          const Vec3 pb = vertices[static_cast<size_t>(b)] - centroid;
          return std::atan2(pa.dot(w), pa.dot(u)) < std::atan2(pb.dot(w), pb.dot(u));
        });
        result.push_back(std::move(face));
      }
    }
  }
  return result;
}

std::vector<StablePlacement> compute_stable_placements(const ConvexPolytope& poly,
                                                       double table_height,
                                                       double stability_margin) {
  std::vector<StablePlacement> placements;
  for (const auto& face : poly.faces()) {
    // Rest on this face: outward normal points down.
    const Mat3 rot = rotation_between(face.normal, -Vec3::UnitZ());

    // Support polygon and COM projection in the rotated frame.
    std::vector<Eigen::Vector2d> polygon;
    polygon.reserve(face.vertices.size());
    for (int v : face.vertices) {
      const Vec3 p = rot * poly.vertices[static_cast<size_t>(v)];
      polygon.push_back({p.x(), p.y()});
    }
    // Rotation maps the outward normal to -z, so the CCW order seen from
    // outside (below) becomes clockwise from above; flip for inside tests.
    std::reverse(polygon.begin(), polygon.end());
    const Vec3 com_rot = rot * poly.com;
    if (inside_distance(polygon, {com_rot.x(), com_rot.y()}) <= stability_margin) continue;

    double min_z = std::numeric_limits<double>::infinity();
    for (const auto& v : poly.vertices) min_z = std::min(min_z, (rot * v).z());

    StablePlacement sp;
    sp.index = static_cast<int>(placements.size()) + 1;
    sp.pose.rotation = rot;
    sp.pose.translation = Vec3(0.0, 0.0, table_height - min_z);
    placements.push_back(sp);
  }
  if (placements.empty())
    throw std::runtime_error("compute_stable_placements: no stable resting face");
  return placements;
}

}  // namespace regrasp
