#include "regrasp/world.hpp"

#include "regrasp/config.hpp"
#include "regrasp/parallel.hpp"

#include <Eigen/Geometry>

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace regrasp {

using nlohmann::json;

GraspSet::GraspSet(std::vector<Grasp> grasps) : grasps_(std::move(grasps)) {
  encodings_.resize(static_cast<Eigen::Index>(grasps_.size()), 10);
  for (size_t i = 0; i < grasps_.size(); ++i) {
    encodings_.row(static_cast<Eigen::Index>(i)).head<9>() = encode_pose(grasps_[i].pose);
    encodings_(static_cast<Eigen::Index>(i), 9) = grasps_[i].width;
  }
}

GraspSet GraspSet::prefix(int count) const {
  if (count < 0 || count > size()) throw std::out_of_range("GraspSet::prefix: bad count");
  return GraspSet(std::vector<Grasp>(grasps_.begin(), grasps_.begin() + count));
}

const StablePlacement& SyntheticScene::placement(int index) const {
  if (index < 1 || index > static_cast<int>(placements.size()))
    throw std::out_of_range("SyntheticScene: placement index " + std::to_string(index));
  return placements[static_cast<size_t>(index - 1)];
}

namespace {

ConvexPolytope make_ridge_box() {
  // Box with a shallow ridge replacing the top face; the two near-horizontal
  // ridge faces fail the stability margin, leaving bottom + 4 walls = 5.
  ConvexPolytope poly;
  const double hx = 0.035, hy = 0.045, hz = 0.066, ridge_z = 0.068;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1}) {
      poly.vertices.push_back({sx * hx, sy * hy, 0.0});
      poly.vertices.push_back({sx * hx, sy * hy, hz});
    }
  poly.vertices.push_back({0.0, -hy, ridge_z});
  poly.vertices.push_back({0.0, hy, ridge_z});
  poly.com = Vec3(0.0, 0.0, 0.0335);
  return poly;
}

ConvexPolytope make_pentagon_prism() {
  ConvexPolytope poly;
  const double radius = 0.035, length = 0.11;
  for (int k = 0; k < 5; ++k) {
    const double a = 2.0 * M_PI * k / 5.0 + M_PI / 2.0;
    poly.vertices.push_back({radius * std::cos(a), radius * std::sin(a), 0.0});
    poly.vertices.push_back({radius * std::cos(a), radius * std::sin(a), length});
  }
  poly.com = Vec3(0.0, 0.0, length / 2.0);
  return poly;
}

ConvexPolytope make_octagon_peg() {
  // Slender octagonal peg: the eight side strips are narrower than twice the
  // stability margin, so only the two end faces rest stably.
  ConvexPolytope poly;
  const double radius = 0.0075, length = 0.09;
  for (int k = 0; k < 8; ++k) {
    const double a = 2.0 * M_PI * k / 8.0;
    poly.vertices.push_back({radius * std::cos(a), radius * std::sin(a), 0.0});
    poly.vertices.push_back({radius * std::cos(a), radius * std::sin(a), length});
  }
  poly.com = Vec3(0.0, 0.0, length / 2.0);
  return poly;
}

void finalize_scene(SyntheticScene& scene) {
  scene.placements =
      compute_stable_placements(scene.object, scene.table_height, scene.stability_margin);
}

}  // namespace

SyntheticScene scene_from_preset(const std::string& name) {
  SyntheticScene scene;
  scene.name = name;
  if (name == "box5" || name == "box5_suction" || name == "box5_gripper") {
    scene.object = make_ridge_box();
    if (name == "box5_suction") {
      scene.approach_half_angle = 1.1;
      scene.grasp_standoff = 0.01;
    } else if (name == "box5_gripper") {
      scene.approach_half_angle = 0.5;
      scene.grasp_standoff = 0.02;
    }
  } else if (name == "prism7") {
    scene.object = make_pentagon_prism();
  } else if (name == "peg2") {
    scene.object = make_octagon_peg();
    scene.max_stroke = 0.06;
  } else {
    throw std::invalid_argument("scene_from_preset: unknown preset '" + name + "'");
  }
  finalize_scene(scene);
  return scene;
}

SyntheticScene scene_load(const std::string& path) {
  ConfigFile cfg = ConfigFile::parse_file(path);
  SyntheticScene scene;
  scene.name = cfg.get_string("scene", "name", "custom");

  const std::string verts = cfg.get_string("object", "vertices", "");
  if (verts.empty()) throw std::runtime_error("scene_load: [object] vertices missing");
  for (const auto& entry : split_list(verts, ';')) {
    std::istringstream in(entry);
    Vec3 v;
    if (!(in >> v.x() >> v.y() >> v.z()))
      throw std::runtime_error("scene_load: bad vertex '" + entry + "'");
    scene.object.vertices.push_back(v);
  }
  {
    std::istringstream in(cfg.get_string("object", "com", "0 0 0"));
    in >> scene.object.com.x() >> scene.object.com.y() >> scene.object.com.z();
  }
  scene.table_height = cfg.get_double("table", "height", scene.table_height);
  scene.table_clearance = cfg.get_double("table", "clearance", scene.table_clearance);
  scene.bounds.x_min = cfg.get_double("workspace", "x_min", scene.bounds.x_min);
  scene.bounds.x_max = cfg.get_double("workspace", "x_max", scene.bounds.x_max);
  scene.bounds.y_min = cfg.get_double("workspace", "y_min", scene.bounds.y_min);
  scene.bounds.y_max = cfg.get_double("workspace", "y_max", scene.bounds.y_max);
  {
    std::istringstream in(cfg.get_string("reach", "center", "0 0.3 0.1"));
    in >> scene.reach_center.x() >> scene.reach_center.y() >> scene.reach_center.z();
  }
  scene.reach_radius = cfg.get_double("reach", "radius", scene.reach_radius);
  scene.approach_half_angle =
      cfg.get_double("reach", "approach_half_angle", scene.approach_half_angle);
  scene.grasp_standoff = cfg.get_double("grasping", "standoff", scene.grasp_standoff);
  scene.max_stroke = cfg.get_double("grasping", "max_stroke", scene.max_stroke);
  scene.stability_margin = cfg.get_double("stability", "margin", scene.stability_margin);
  cfg.validate();

  if (scene.reach_radius <= 0.0) throw std::runtime_error("scene_load: reach radius must be > 0");
  if (scene.approach_half_angle <= 0.0 || scene.approach_half_angle > M_PI / 2.0)
    throw std::runtime_error("scene_load: approach_half_angle outside (0, pi/2]");
  finalize_scene(scene);
  return scene;
}

void scene_save(const SyntheticScene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("scene_save: cannot open " + path);
  out.precision(17);
  out << "[scene]\nname = " << scene.name << "\n\n[object]\nvertices = ";
  for (size_t i = 0; i < scene.object.vertices.size(); ++i) {
    const Vec3& v = scene.object.vertices[i];
    out << v.x() << " " << v.y() << " " << v.z();
    if (i + 1 < scene.object.vertices.size()) out << "; ";
  }
  out << "\ncom = " << scene.object.com.x() << " " << scene.object.com.y() << " "
      << scene.object.com.z() << "\n\n";
  out << "[table]\nheight = " << scene.table_height << "\nclearance = " << scene.table_clearance
      << "\n\n";
  out << "[workspace]\nx_min = " << scene.bounds.x_min << "\nx_max = " << scene.bounds.x_max
      << "\ny_min = " << scene.bounds.y_min << "\ny_max = " << scene.bounds.y_max << "\n\n";
  out << "[reach]\ncenter = " << scene.reach_center.x() << " " << scene.reach_center.y() << " "
      << scene.reach_center.z() << "\nradius = " << scene.reach_radius
      << "\napproach_half_angle = " << scene.approach_half_angle << "\n\n";
  out << "[grasping]\nstandoff = " << scene.grasp_standoff << "\nmax_stroke = " << scene.max_stroke
      << "\n\n";
  out << "[stability]\nmargin = " << scene.stability_margin << "\n";
}

bool oracle_feasible(const SyntheticScene& scene, const Pose& object_pose, const Grasp& grasp) {
  const Pose ee = object_pose * grasp.pose;
  const Vec3& tcp = ee.translation;
  if ((tcp - scene.reach_center).norm() > scene.reach_radius) return false;
  if (tcp.z() <= scene.table_height + scene.table_clearance) return false;
  // Approach axis (ee z) against world down; angle <= half-angle.
  if (ee.rotation(2, 2) > -std::cos(scene.approach_half_angle)) return false;
  if (tcp.x() < scene.bounds.x_min || tcp.x() > scene.bounds.x_max) return false;
  if (tcp.y() < scene.bounds.y_min || tcp.y() > scene.bounds.y_max) return false;
  return true;
}

GraspSet sample_grasps(const SyntheticScene& scene, int count, uint64_t rng_seed) {
  if (count < 1) throw std::invalid_argument("sample_grasps: count must be >= 1");
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Screening poses: placements centered in the workspace.
  std::vector<Pose> screen_poses;
  for (const auto& sp : scene.placements)
    screen_poses.push_back(
        compose_intermediate_pose(sp, {0.0, scene.workspace_center_y(), 0.0}));

  std::vector<Grasp> accepted;
  accepted.reserve(static_cast<size_t>(count));
  const long long max_attempts = 20000LL * count;
  long long attempts = 0;
  while (static_cast<int>(accepted.size()) < count) {
    if (++attempts > max_attempts)
      throw std::runtime_error("sample_grasps: rejection budget exhausted");
    const double z = 1.0 - 2.0 * unit(rng);
    const double phi = 2.0 * M_PI * unit(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);

    Grasp g;
    g.pose.translation = (scene.object.support(dir) + scene.grasp_standoff) * dir;
    const Vec3 approach = -dir;
    Vec3 seed_axis = std::abs(approach.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = approach.cross(seed_axis).normalized();
    const double roll = 2.0 * M_PI * unit(rng);
    const Vec3 closing = std::cos(roll) * e1 + std::sin(roll) * approach.cross(e1);
    g.pose.rotation.col(0) = closing;
    g.pose.rotation.col(1) = approach.cross(closing);
    g.pose.rotation.col(2) = approach;
    g.width = std::clamp(scene.object.extent(closing) / scene.max_stroke, 0.0, 1.0);

    bool usable = false;
    for (const auto& pose : screen_poses) {
      if (oracle_feasible(scene, pose, g)) {
        usable = true;
        break;
      }
    }
    if (usable) accepted.push_back(g);
  }
  return GraspSet(std::move(accepted));
}

std::vector<int> feasible_set(const SyntheticScene& scene, const Pose& pose,
                              const GraspSet& grasps) {
  std::vector<int> out;
  for (int id = 0; id < grasps.size(); ++id)
    if (oracle_feasible(scene, pose, grasps.at(id))) out.push_back(id);
  return out;
}

std::vector<int> shared_grasps_ground_truth(const SyntheticScene& scene, const Pose& pose_a,
                                            const Pose& pose_b, const GraspSet& grasps) {
  std::vector<int> out;
  for (int id = 0; id < grasps.size(); ++id) {
    const Grasp& g = grasps.at(id);
    if (oracle_feasible(scene, pose_a, g) && oracle_feasible(scene, pose_b, g)) out.push_back(id);
  }
  return out;
}

FeasibilityGrid::FeasibilityGrid(const SyntheticScene& scene, const GraspSet& grasps,
                                 GridSpec spec, int threads)
    : scene_(&scene), grasps_(&grasps), spec_(spec) {
  if (spec.xy_step <= 0.0 || spec.theta_step <= 0.0)
    throw std::invalid_argument("FeasibilityGrid: steps must be > 0");
  for (double x = scene.bounds.x_min; x <= scene.bounds.x_max + 1e-12; x += spec.xy_step)
    xs_.push_back(x);
  for (double y = scene.bounds.y_min; y <= scene.bounds.y_max + 1e-12; y += spec.xy_step)
    ys_.push_back(y);
  for (double t = 0.0; t < 2.0 * M_PI - 1e-9; t += spec.theta_step) thetas_.push_back(t);

  cells_ = scene.placements.size() * xs_.size() * ys_.size() * thetas_.size();
  words_ = (static_cast<size_t>(grasps.size()) + 63) / 64;
  masks_.assign(cells_ * words_, 0);

  parallel_for(cells_, threads, [&](size_t idx) {
    const Pose pose = cell_pose(idx);
    uint64_t* mask = masks_.data() + idx * words_;
    for (int id = 0; id < grasps.size(); ++id) {
      if (oracle_feasible(scene, pose, grasps.at(id)))
        mask[id / 64] |= (uint64_t{1} << (id % 64));
    }
  });
}

GridPose FeasibilityGrid::cell_params(size_t idx) const {
  const size_t nt = thetas_.size(), ny = ys_.size(), nx = xs_.size();
  GridPose gp;
  gp.xi.theta = thetas_[idx % nt];
  idx /= nt;
  gp.xi.y = ys_[idx % ny];
  idx /= ny;
  gp.xi.x = xs_[idx % nx];
  idx /= nx;
  gp.placement = static_cast<int>(idx) + 1;
  return gp;
}

Pose FeasibilityGrid::cell_pose(size_t idx) const {
  const GridPose gp = cell_params(idx);
  return compose_intermediate_pose(scene_->placement(gp.placement), gp.xi);
}

std::vector<uint64_t> FeasibilityGrid::pose_mask(const Pose& pose) const {
  std::vector<uint64_t> mask(words_, 0);
  for (int id = 0; id < grasps_->size(); ++id) {
    if (oracle_feasible(*scene_, pose, grasps_->at(id)))
      mask[static_cast<size_t>(id) / 64] |= (uint64_t{1} << (id % 64));
  }
  return mask;
}

bool FeasibilityGrid::masks_intersect(const uint64_t* a, const uint64_t* b, size_t words) {
  for (size_t w = 0; w < words; ++w)
    if (a[w] & b[w]) return true;
  return false;
}

std::vector<GridPose> grid_ground_truth_midposes(const FeasibilityGrid& grid, const Pose& t_init,
                                                 const Pose& t_goal) {
  const std::vector<uint64_t> m_init = grid.pose_mask(t_init);
  const std::vector<uint64_t> m_goal = grid.pose_mask(t_goal);
  std::vector<GridPose> out;
  for (size_t idx = 0; idx < grid.cell_count(); ++idx) {
    const uint64_t* mask = grid.cell_mask(idx);
    if (FeasibilityGrid::masks_intersect(mask, m_init.data(), grid.words()) &&
        FeasibilityGrid::masks_intersect(mask, m_goal.data(), grid.words()))
      out.push_back(grid.cell_params(idx));
  }
  return out;
}

std::vector<GridPose> grid_ground_truth_midposes(const SyntheticScene& scene, const Pose& t_init,
                                                 const Pose& t_goal, const GraspSet& grasps,
                                                 double xy_step, double theta_step, int threads) {
  FeasibilityGrid grid(scene, grasps, GridSpec{xy_step, theta_step}, threads);
  return grid_ground_truth_midposes(grid, t_init, t_goal);
}

std::optional<int> min_steps_oracle(const FeasibilityGrid& grid, const Pose& t_init,
                                    const Pose& t_goal) {
  const size_t words = grid.words();
  const std::vector<uint64_t> m_goal = grid.pose_mask(t_goal);
  std::vector<uint64_t> frontier = grid.pose_mask(t_init);
  if (FeasibilityGrid::masks_intersect(frontier.data(), m_goal.data(), words)) return 0;

  std::vector<char> used(grid.cell_count(), 0);
  for (int depth = 1;; ++depth) {
    bool grew = false;
    std::vector<uint64_t> next = frontier;
    for (size_t idx = 0; idx < grid.cell_count(); ++idx) {
      if (used[idx]) continue;
      const uint64_t* mask = grid.cell_mask(idx);
      if (!FeasibilityGrid::masks_intersect(mask, frontier.data(), words)) continue;
      used[idx] = 1;
      for (size_t w = 0; w < words; ++w) {
        if (mask[w] & ~next[w]) grew = true;
        next[w] |= mask[w];
      }
    }
    if (FeasibilityGrid::masks_intersect(next.data(), m_goal.data(), words)) return depth;
    if (!grew) return std::nullopt;
    frontier = std::move(next);
  }
}

std::optional<int> min_steps_oracle(const SyntheticScene& scene, const Pose& t_init,
                                    const Pose& t_goal, const GraspSet& grasps, GridSpec spec,
                                    int threads) {
  FeasibilityGrid grid(scene, grasps, spec, threads);
  return min_steps_oracle(grid, t_init, t_goal);
}

namespace {

json pose_to_json(const Pose& pose) {
  const auto a = pose.to_row_major();
  return json(std::vector<double>(a.begin(), a.end()));
}

Pose pose_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 12) throw std::runtime_error("pose: expected 12 numbers");
  std::array<double, 12> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return Pose::from_row_major(a);
}

}  // namespace

void save_grasps_jsonl(const GraspSet& grasps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_grasps_jsonl: cannot open " + path);
  for (int id = 0; id < grasps.size(); ++id) {
    const Grasp& g = grasps.at(id);
    json line = {{"id", id}, {"pose", pose_to_json(g.pose)}, {"width", g.width}};
    out << line.dump() << "\n";
  }
}

GraspSet load_grasps_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_grasps_jsonl: cannot open " + path);
  std::vector<Grasp> grasps;
  std::string line;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.at("id").get<int>() != expected)
      throw std::runtime_error("load_grasps_jsonl: ids must be 0..K-1 in order");
    Grasp g;
    g.pose = pose_from_json(j.at("pose"));
    g.width = j.at("width").get<double>();
    grasps.push_back(g);
    ++expected;
  }
  return GraspSet(std::move(grasps));
}

void save_labels_jsonl(const std::vector<FeasibilityLabel>& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_labels_jsonl: cannot open " + path);
  for (const auto& label : labels) {
    json line = {{"pose", pose_to_json(label.pose)},
                 {"grasp_id", label.grasp_id},
                 {"feasible", label.feasible}};
    out << line.dump() << "\n";
  }
}

std::vector<FeasibilityLabel> load_labels_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_labels_jsonl: cannot open " + path);
  std::vector<FeasibilityLabel> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    FeasibilityLabel label;
    label.pose = pose_from_json(j.at("pose"));
    label.grasp_id = j.at("grasp_id").get<int>();
    label.feasible = j.at("feasible").get<bool>();
    labels.push_back(label);
  }
  return labels;
}

}  // namespace regrasp
