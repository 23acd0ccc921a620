#pragma once

#include "regrasp/pose.hpp"

#include <vector>

namespace regrasp {

struct HullFace {
  Vec3 normal;               // outward unit normal
  double offset = 0.0;       // normal . x = offset on the face plane
  std::vector<int> vertices; // indices, ordered around the face
};

// Convex polytope in the object canonical frame. Vertices are assumed to be
// hull vertices (interior points would only add degenerate faces).
struct ConvexPolytope {
  std::vector<Vec3> vertices;
  Vec3 com = Vec3::Zero();

  double support(const Vec3& dir) const;           // max v . dir
  double extent(const Vec3& dir) const;            // support(dir) + support(-dir)
  std::vector<HullFace> faces() const;
};

// Resting poses on the plane z = table_height: one per hull face whose
// support polygon contains the center-of-mass projection with at least
// stability_margin of clearance. Canonical poses sit at x = y = 0; yaw comes
// from the planar perturbation applied later.
std::vector<StablePlacement> compute_stable_placements(const ConvexPolytope& poly,
                                                       double table_height,
                                                       double stability_margin);

}  // namespace regrasp
