#pragma once

#include "regrasp/connectivity.hpp"
#include "regrasp/energy.hpp"
#include "regrasp/eval.hpp"
#include "regrasp/world.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace regrasp::testing {

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Pose random_pose(std::mt19937_64& rng, double span = 0.5) {
  std::uniform_real_distribution<double> u(-span, span);
  Pose p;
  p.rotation = random_rotation(rng);
  p.translation = Vec3(u(rng), u(rng), u(rng));
  return p;
}

// Max-abs error normalized by the reference magnitude.
inline double rel_err(double got, double want, double floor = 1e-9) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

template <typename VecA, typename VecB>
double rel_err_vec(const VecA& got, const VecB& want, double floor = 1e-9) {
  double scale = floor;
  for (int i = 0; i < want.size(); ++i) scale = std::max(scale, std::abs(double(want(i))));
  double err = 0.0;
  for (int i = 0; i < want.size(); ++i) err = std::max(err, std::abs(double(got(i) - want(i))));
  return err / scale;
}

// Plain nested-loop forward pass, the independent oracle for the GEMM path.
inline double naive_forward(const EnergyModel& model, const Eigen::VectorXd& input) {
  std::vector<double> a(input.data(), input.data() + input.size());
  const double lambda = 1.0507009873554804934193349852946;
  const double alpha = 1.6732632423543772848170429916717;
  for (size_t l = 0; l < model.weights().size(); ++l) {
    const auto& w = model.weights()[l];
    const auto& b = model.biases()[l];
    std::vector<double> next(static_cast<size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double z = b(r);
      for (Eigen::Index c = 0; c < w.cols(); ++c) z += w(r, c) * a[static_cast<size_t>(c)];
      if (l + 1 < model.weights().size() && model.activation() == Activation::Selu)
        z = z > 0.0 ? lambda * z : lambda * alpha * (std::exp(z) - 1.0);
      next[static_cast<size_t>(r)] = z;
    }
    a = std::move(next);
  }
  return a[0];
}

// Unshifted summation in extended precision.
inline long double naive_lse_q(const std::vector<double>& sums, double alpha) {
  long double acc = 0.0L;
  for (double s : sums) acc += expl(-static_cast<long double>(s) / alpha);
  return -static_cast<long double>(alpha) * logl(acc);
}

inline std::vector<Vec3> fd_grad(const std::function<double(const SequenceCandidate&)>& cost,
                                 const SequenceCandidate& cand, double step = 1e-5) {
  std::vector<Vec3> grad(cand.steps.size(), Vec3::Zero());
  for (size_t i = 0; i < cand.steps.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      SequenceCandidate lo = cand, hi = cand;
      double* plo = c == 0 ? &lo.steps[i].xi.x : c == 1 ? &lo.steps[i].xi.y : &lo.steps[i].xi.theta;
      double* phi = c == 0 ? &hi.steps[i].xi.x : c == 1 ? &hi.steps[i].xi.y : &hi.steps[i].xi.theta;
      *plo -= step;
      *phi += step;
      grad[i](c) = (cost(hi) - cost(lo)) / (2.0 * step);
    }
  }
  return grad;
}

inline ConvexPolytope small_box(double hx = 0.02, double hy = 0.02, double hz = 0.02) {
  ConvexPolytope poly;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {0, 1}) poly.vertices.push_back({sx * hx, sy * hy, sz * 2.0 * hz});
  poly.com = Vec3(0.0, 0.0, hz);
  return poly;
}

// Grasp clusters with analytically controlled oracle feasibility windows in
// the pose x coordinate: cluster k is feasible iff |x - center_k| <= width_k.
// The matching quadratic energy steep_k * (x - center_k)^2 crosses the level
// h = steep_k * width_k^2 exactly at the window boundary.
struct ClusterSpec {
  int count = 1;
  double center = 0.0;
  double steepness = 1.0;
  double window = 0.5;  // half-width in x
};

// E = steepness * (|TCP - reach_center|^2 - dz^2), with dz chosen per cluster
// so the level set E = steepness * window^2 is exactly the oracle's reach
// sphere. Along the theta = 0, y = 0.35 sweep line this reduces to
// steepness * (x - center)^2.
class ClusterEnergy final : public EnergySource {
 public:
  ClusterEnergy(std::vector<ClusterSpec> clusters, Vec3 reach_center, double reach_radius)
      : clusters_(std::move(clusters)),
        reach_center_(std::move(reach_center)),
        reach_radius_(reach_radius) {}

  int grasp_dim() const override { return 10; }

  void eval_batch(const PoseEncoding& pose, const Eigen::Ref<const Eigen::MatrixXd>& grasp_encs,
                  Eigen::VectorXd& energies, Eigen::MatrixXd* dpose) const override {
    const Vec3 t = pose.segment<3>(0);
    const Vec3 c0 = pose.segment<3>(3);
    const Vec3 c1 = pose.segment<3>(6);
    const Vec3 c2 = c0.cross(c1);
    const Eigen::Index k = grasp_encs.rows();
    energies.resize(k);
    if (dpose != nullptr) dpose->resize(k, 9);
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& spec = cluster_of(grasp_encs(j, 9));
      const Vec3 tg = grasp_encs.row(j).segment<3>(0).transpose();
      const Vec3 v = t + c0 * tg(0) + c1 * tg(1) + c2 * tg(2) - reach_center_;
      const double dz2 =
          reach_radius_ * reach_radius_ - spec.window * spec.window;
      energies(j) = spec.steepness * (v.squaredNorm() - dz2);
      if (dpose != nullptr) {
        const double s2 = 2.0 * spec.steepness;
        dpose->row(j).segment<3>(0) = s2 * v.transpose();
        dpose->row(j).segment<3>(3) = s2 * (tg(0) * v + tg(2) * c1.cross(v)).transpose();
        dpose->row(j).segment<3>(6) = s2 * (tg(1) * v + tg(2) * v.cross(c0)).transpose();
      }
    }
  }

  // width channel encodes the cluster id as (id + 0.5) / cluster count
  double width_for(size_t cluster_idx) const {
    return (static_cast<double>(cluster_idx) + 0.5) / static_cast<double>(clusters_.size());
  }

 private:
  const ClusterSpec& cluster_of(double width) const {
    const size_t idx = std::min(
        clusters_.size() - 1,
        static_cast<size_t>(width * static_cast<double>(clusters_.size())));
    return clusters_[idx];
  }

  std::vector<ClusterSpec> clusters_;
  Vec3 reach_center_;
  double reach_radius_;
};

struct ClusterWorld {
  SyntheticScene scene;
  GraspSet grasps;
  ClusterEnergy source;
  int base_placement = 1;  // the placement whose rotation is the identity

  Pose pose_at(double x, double y = 0.35) const {
    return compose_intermediate_pose(scene.placement(base_placement), {x, y, 0.0});
  }
};

// Oracle windows are realized through the reach sphere: every cluster grasp
// approaches straight down, and its TCP height eats up part of the radius so
// that the horizontal window comes out at the requested half-width.
inline ClusterWorld make_cluster_world(const std::vector<ClusterSpec>& clusters) {
  SyntheticScene scene;
  scene.name = "cluster";
  scene.object = small_box();
  scene.bounds = {-2.0, 2.0, 0.1, 0.6};
  scene.reach_center = Vec3(0.5, 0.35, 1.0);
  scene.reach_radius = 0.8;
  scene.approach_half_angle = 1.0;
  scene.placements = compute_stable_placements(scene.object, 0.0, scene.stability_margin);

  int base = 1;
  for (const auto& sp : scene.placements) {
    if ((sp.pose.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9) base = sp.index;
  }
  const StablePlacement& sp = scene.placement(base);

  ClusterEnergy source(clusters, scene.reach_center, scene.reach_radius);
  std::vector<Grasp> grasps;
  for (size_t c = 0; c < clusters.size(); ++c) {
    const auto& spec = clusters[c];
    const double dz =
        std::sqrt(scene.reach_radius * scene.reach_radius - spec.window * spec.window);
    // TCP offset in the world frame at theta = 0 for a pose at (x, 0.35).
    const Vec3 offset(scene.reach_center.x() - spec.center,
                      0.0, scene.reach_center.z() - dz);
    for (int i = 0; i < spec.count; ++i) {
      Grasp g;
      Mat3 flip;  // approach axis (col 2) points straight down
      flip << 1, 0, 0, 0, -1, 0, 0, 0, -1;
      g.pose.rotation = sp.pose.rotation.transpose() * flip;
      g.pose.translation = sp.pose.rotation.transpose() * (offset - sp.pose.translation);
      g.width = source.width_for(c);
      grasps.push_back(g);
    }
  }
  ClusterWorld world{std::move(scene), GraspSet(std::move(grasps)), std::move(source), base};
  return world;
}

}  // namespace regrasp::testing
