#pragma once

#include "regrasp/geometry.hpp"
#include "regrasp/pose.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace regrasp {

// End-effector pose in the object canonical frame plus opening width
// normalized by the maximum stroke.
struct Grasp {
  Pose pose;
  double width = 0.0;
};

// Immutable ordered grasp candidates; the id of a grasp is its position and
// energy tables index by it.
class GraspSet {
 public:
  GraspSet() = default;
  explicit GraspSet(std::vector<Grasp> grasps);

  int size() const { return static_cast<int>(grasps_.size()); }
  const Grasp& at(int id) const { return grasps_.at(static_cast<size_t>(id)); }
  const std::vector<Grasp>& grasps() const { return grasps_; }

  // K x 10: pose encoding (9 columns) then width. Models that exclude the
  // width read the leading 9 columns.
  const Eigen::MatrixXd& encodings() const { return encodings_; }

  GraspSet prefix(int count) const;

 private:
  std::vector<Grasp> grasps_;
  Eigen::MatrixXd encodings_;
};

struct WorkspaceBounds {
  double x_min = -0.45;
  double x_max = 0.45;
  double y_min = 0.1;
  double y_max = 0.6;
};

// Tabletop scene with an analytic feasibility rule standing in for IK and
// collision checking: reachability sphere, table clearance, approach-cone
// alignment, and workspace bounds.
struct SyntheticScene {
  std::string name;
  ConvexPolytope object;
  double table_height = 0.0;
  double table_clearance = 0.005;
  WorkspaceBounds bounds;
  Vec3 reach_center{0.0, 0.3, 0.1};
  double reach_radius = 0.28;
  double approach_half_angle = 0.9;  // radians, (0, pi/2]
  double grasp_standoff = 0.015;
  double max_stroke = 0.12;
  double stability_margin = 0.003;
  std::vector<StablePlacement> placements;

  const StablePlacement& placement(int index) const;  // 1-based
  double workspace_center_y() const { return 0.5 * (bounds.y_min + bounds.y_max); }
};

// Presets: box5 (ridge-top box, 5 placements), prism7 (pentagonal prism, 7),
// peg2 (octagonal peg, 2), plus box5_suction / box5_gripper oracle variants
// that differ in approach cone and standoff.
SyntheticScene scene_from_preset(const std::string& name);
SyntheticScene scene_load(const std::string& path);
void scene_save(const SyntheticScene& scene, const std::string& path);

// True iff the world-frame end-effector pose T * g.pose satisfies all four
// analytic conditions. Pure and deterministic.
bool oracle_feasible(const SyntheticScene& scene, const Pose& object_pose, const Grasp& grasp);

// Deterministic rejection sampling of grasps on surface-offset shells with
// approach axes toward the surface. Every accepted grasp is feasible under
// at least one placement posed at the workspace center.
GraspSet sample_grasps(const SyntheticScene& scene, int count, uint64_t rng_seed);

std::vector<int> feasible_set(const SyntheticScene& scene, const Pose& pose,
                              const GraspSet& grasps);

std::vector<int> shared_grasps_ground_truth(const SyntheticScene& scene, const Pose& pose_a,
                                            const Pose& pose_b, const GraspSet& grasps);

struct GridSpec {
  double xy_step = 0.01;
  double theta_step = M_PI / 3.0;
};

struct GridPose {
  int placement = 1;
  PlanarParams xi;
};

// Per-cell grasp-feasibility bitmasks over placements x workspace grid.
// Building it is the expensive part; ground-truth queries against it are
// cheap, so evaluation reuses one grid across episodes.
class FeasibilityGrid {
 public:
  FeasibilityGrid(const SyntheticScene& scene, const GraspSet& grasps, GridSpec spec,
                  int threads = 1);

  size_t cell_count() const { return cells_; }
  GridPose cell_params(size_t idx) const;
  Pose cell_pose(size_t idx) const;
  const uint64_t* cell_mask(size_t idx) const { return masks_.data() + idx * words_; }
  size_t words() const { return words_; }
  const GridSpec& spec() const { return spec_; }
  const SyntheticScene& scene() const { return *scene_; }

  // Exact feasibility mask of an arbitrary pose (not grid-snapped).
  std::vector<uint64_t> pose_mask(const Pose& pose) const;

  static bool masks_intersect(const uint64_t* a, const uint64_t* b, size_t words);

 private:
  const SyntheticScene* scene_;
  const GraspSet* grasps_;
  GridSpec spec_;
  std::vector<double> xs_, ys_, thetas_;
  size_t cells_ = 0;
  size_t words_ = 0;
  std::vector<uint64_t> masks_;
};

// Grid cells whose pose has nonempty ground-truth shared sets with both
// endpoints.
std::vector<GridPose> grid_ground_truth_midposes(const FeasibilityGrid& grid, const Pose& t_init,
                                                 const Pose& t_goal);
std::vector<GridPose> grid_ground_truth_midposes(const SyntheticScene& scene, const Pose& t_init,
                                                 const Pose& t_goal, const GraspSet& grasps,
                                                 double xy_step, double theta_step,
                                                 int threads = 1);

// Minimum number of intermediate poses over the discretized placement graph;
// nullopt when the goal is unreachable. 0 means a direct transfer exists.
std::optional<int> min_steps_oracle(const FeasibilityGrid& grid, const Pose& t_init,
                                    const Pose& t_goal);
std::optional<int> min_steps_oracle(const SyntheticScene& scene, const Pose& t_init,
                                    const Pose& t_goal, const GraspSet& grasps, GridSpec spec,
                                    int threads = 1);

struct FeasibilityLabel {
  Pose pose;
  int grasp_id = 0;
  bool feasible = false;
};

void save_grasps_jsonl(const GraspSet& grasps, const std::string& path);
GraspSet load_grasps_jsonl(const std::string& path);
void save_labels_jsonl(const std::vector<FeasibilityLabel>& labels, const std::string& path);
std::vector<FeasibilityLabel> load_labels_jsonl(const std::string& path);

}  // namespace regrasp
