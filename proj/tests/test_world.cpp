#include "regrasp/world.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

using namespace regrasp;
using namespace regrasp::testing;

namespace {

// Condition-by-condition re-implementation with different arithmetic
// (squared norms, acos) used as the oracle's oracle.
bool oracle_reference(const SyntheticScene& s, const Pose& object_pose, const Grasp& g) {
  const Mat3 r = object_pose.rotation * g.pose.rotation;
  const Vec3 tcp = object_pose.rotation * g.pose.translation + object_pose.translation;
  const double d2 = (tcp - s.reach_center).squaredNorm();
  const bool reach = d2 <= s.reach_radius * s.reach_radius;
  const bool above = tcp.z() > s.table_height + s.table_clearance;
  const Vec3 approach = r.col(2);
  const double cosang = std::clamp(approach.dot(Vec3(0, 0, -1)), -1.0, 1.0);
  const bool cone = std::acos(cosang) <= s.approach_half_angle;
  const bool in_x = tcp.x() >= s.bounds.x_min && tcp.x() <= s.bounds.x_max;
  const bool in_y = tcp.y() >= s.bounds.y_min && tcp.y() <= s.bounds.y_max;
  return reach && above && cone && in_x && in_y;
}

}  // namespace

TEST_CASE("scene presets expose the expected placement counts") {
  CHECK(scene_from_preset("box5").placements.size() == 5);
  CHECK(scene_from_preset("prism7").placements.size() == 7);
  CHECK(scene_from_preset("peg2").placements.size() == 2);
  CHECK_THROWS(scene_from_preset("nope"));
}

TEST_CASE("stable placements rest the polytope on the table") {
  for (const char* name : {"box5", "prism7", "peg2"}) {
    const SyntheticScene scene = scene_from_preset(name);
    int expected = 1;
    for (const auto& sp : scene.placements) {
      CHECK(sp.index == expected++);
      CHECK(sp.pose.is_valid(1e-9));
      double min_z = 1e300;
      for (const auto& v : scene.object.vertices)
        min_z = std::min(min_z, (sp.pose.rotation * v + sp.pose.translation).z());
      CHECK(std::abs(min_z - scene.table_height) < 1e-6);
    }
  }
}

TEST_CASE("scene config files round-trip") {
  const SyntheticScene scene = scene_from_preset("box5");
  const std::string path = (std::filesystem::temp_directory_path() / "scene_rt.cfg").string();
  scene_save(scene, path);
  const SyntheticScene back = scene_load(path);
  CHECK(back.name == scene.name);
  CHECK(back.placements.size() == scene.placements.size());
  CHECK(back.reach_radius == doctest::Approx(scene.reach_radius));
  CHECK(back.object.vertices.size() == scene.object.vertices.size());
}

TEST_CASE("oracle_feasible") {
  const SyntheticScene scene = scene_from_preset("box5");
  const StablePlacement& sp = scene.placement(1);
  const Pose pose = compose_intermediate_pose(sp, {0.0, scene.workspace_center_y(), 0.0});

  SUBCASE("TCP at the reach center approaching straight down is feasible") {
    Grasp g;
    Mat3 flip;
    flip << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    g.pose.rotation = pose.rotation.transpose() * flip;
    g.pose.translation = pose.rotation.transpose() * (scene.reach_center - pose.translation);
    CHECK(oracle_feasible(scene, pose, g));
  }
  SUBCASE("TCP below the table is infeasible") {
    Grasp g;
    Mat3 flip;
    flip << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    g.pose.rotation = pose.rotation.transpose() * flip;
    Vec3 below = scene.reach_center;
    below.z() = scene.table_height - 0.01;
    g.pose.translation = pose.rotation.transpose() * (below - pose.translation);
    CHECK_FALSE(oracle_feasible(scene, pose, g));
  }
  SUBCASE("1000 randomized pairs agree with the independent re-implementation") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const GraspSet grasps = sample_grasps(scene, 25, 404);
    int feasible = 0;
    for (int t = 0; t < 1000; ++t) {
      const int m = 1 + static_cast<int>((u(rng) + 1.0) / 2.0 * scene.placements.size()) %
                            static_cast<int>(scene.placements.size());
      const PlanarParams xi{0.5 * u(rng), 0.35 + 0.25 * u(rng), 3.2 * (u(rng) + 1.0)};
      const Pose p = compose_intermediate_pose(scene.placement(m), xi);
      const Grasp& g = grasps.at(t % grasps.size());
      const bool got = oracle_feasible(scene, p, g);
      CHECK(got == oracle_reference(scene, p, g));
      feasible += got ? 1 : 0;
    }
    CHECK(feasible > 0);       // the agreement check must exercise both branches
    CHECK(feasible < 1000);
  }
}

TEST_CASE("sample_grasps") {
  const SyntheticScene scene = scene_from_preset("box5");

  SUBCASE("deterministic for a fixed seed") {
    const GraspSet a = sample_grasps(scene, 40, 7);
    const GraspSet b = sample_grasps(scene, 40, 7);
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) {
      CHECK((a.at(i).pose.rotation - b.at(i).pose.rotation).cwiseAbs().maxCoeff() == 0.0);
      CHECK((a.at(i).pose.translation - b.at(i).pose.translation).cwiseAbs().maxCoeff() == 0.0);
      CHECK(a.at(i).width == b.at(i).width);
    }
    const GraspSet c = sample_grasps(scene, 40, 8);
    bool differs = false;
    for (int i = 0; i < c.size() && !differs; ++i)
      differs = (a.at(i).pose.translation - c.at(i).pose.translation).cwiseAbs().maxCoeff() > 0;
    CHECK(differs);
  }
  SUBCASE("count and widths") {
    const GraspSet g = sample_grasps(scene, 200, 11);
    CHECK(g.size() == 200);
    CHECK(g.encodings().rows() == 200);
    for (int i = 0; i < g.size(); ++i) {
      CHECK(g.at(i).width >= 0.0);
      CHECK(g.at(i).width <= 1.0);
      CHECK(g.at(i).pose.is_valid(1e-9));
    }
  }
  SUBCASE("zero count is an error") { CHECK_THROWS(sample_grasps(scene, 0, 1)); }
  SUBCASE("every grasp is feasible under at least one centered placement") {
    const GraspSet g = sample_grasps(scene, 60, 12);
    for (int i = 0; i < g.size(); ++i) {
      bool ok = false;
      for (const auto& sp : scene.placements) {
        const Pose p = compose_intermediate_pose(sp, {0.0, scene.workspace_center_y(), 0.0});
        if (oracle_feasible(scene, p, g.at(i))) ok = true;
      }
      CHECK(ok);
    }
  }
}

TEST_CASE("shared_grasps_ground_truth") {
  const SyntheticScene scene = scene_from_preset("box5");
  const GraspSet grasps = sample_grasps(scene, 60, 19);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  SUBCASE("idempotence: identical poses give the per-pose feasible set") {
    const Pose p = compose_intermediate_pose(scene.placement(2), {0.1, 0.3, 0.7});
    CHECK(shared_grasps_ground_truth(scene, p, p, grasps) == feasible_set(scene, p, grasps));
  }
  SUBCASE("a pose with an empty feasible set shares nothing") {
    const Pose p = compose_intermediate_pose(scene.placement(1), {0.0, 0.35, 0.0});
    const Pose far = compose_intermediate_pose(scene.placement(1), {0.44, 0.59, 0.0});
    CHECK(feasible_set(scene, far, grasps).empty());
    CHECK(shared_grasps_ground_truth(scene, p, far, grasps).empty());
  }
  SUBCASE("equals the intersection of independent per-pose sets") {
    for (int t = 0; t < 20; ++t) {
      const int ma = 1 + t % static_cast<int>(scene.placements.size());
      const int mb = 1 + (t * 3 + 1) % static_cast<int>(scene.placements.size());
      const Pose a =
          compose_intermediate_pose(scene.placement(ma), {0.3 * u(rng), 0.35 + 0.2 * u(rng), 3 * (u(rng) + 1)});
      const Pose b =
          compose_intermediate_pose(scene.placement(mb), {0.3 * u(rng), 0.35 + 0.2 * u(rng), 3 * (u(rng) + 1)});
      const auto fa = feasible_set(scene, a, grasps);
      const auto fb = feasible_set(scene, b, grasps);
      std::vector<int> inter;
      std::set_intersection(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(inter));
      CHECK(shared_grasps_ground_truth(scene, a, b, grasps) == inter);
    }
  }
}

TEST_CASE("grid spec defaults follow the ground-truth protocol") {
  const GridSpec spec;
  CHECK(spec.xy_step == doctest::Approx(0.01));
  CHECK(spec.theta_step == doctest::Approx(M_PI / 3.0));
}

TEST_CASE("two-window world drives grid ground truth and min steps") {
  // Three grasp windows: A around x=0, B around x=0.15, C around x=0.3; the
  // theta grid is collapsed so window centers stay put.
  const ClusterWorld world = make_cluster_world({{1, 0.0, 1.0, 0.1},
                                                 {1, 0.15, 1.0, 0.1},
                                                 {1, 0.3, 1.0, 0.1}});
  const GridSpec spec{0.02, 2.0 * M_PI};
  const FeasibilityGrid grid(world.scene, world.grasps, spec, 2);

  const Pose at0 = world.pose_at(0.0);
  const Pose at015 = world.pose_at(0.15);
  const Pose at03 = world.pose_at(0.3);
  const Pose at008 = world.pose_at(0.08);

  SUBCASE("window sanity") {
    CHECK(feasible_set(world.scene, at0, world.grasps) == std::vector<int>{0});
    CHECK(feasible_set(world.scene, at015, world.grasps) == std::vector<int>{1});
    CHECK(feasible_set(world.scene, at008, world.grasps) == (std::vector<int>{0, 1}));
  }
  SUBCASE("direct share gives zero steps") {
    CHECK(min_steps_oracle(grid, at0, at008) == 0);
  }
  SUBCASE("constructed one-intermediate instance") {
    CHECK(min_steps_oracle(grid, at0, at015) == 1);
    const auto mids = grid_ground_truth_midposes(grid, at0, at015);
    CHECK(!mids.empty());
    for (const auto& mid : mids) {
      const Pose p = compose_intermediate_pose(world.scene.placement(mid.placement), mid.xi);
      CHECK(!shared_grasps_ground_truth(world.scene, at0, p, world.grasps).empty());
      CHECK(!shared_grasps_ground_truth(world.scene, p, at015, world.grasps).empty());
    }
  }
  SUBCASE("two intermediates when windows only chain pairwise") {
    CHECK(min_steps_oracle(grid, at0, at03) == 2);
    CHECK(grid_ground_truth_midposes(grid, at0, at03).empty());
  }
  SUBCASE("unreachable without the bridging window") {
    std::vector<Grasp> pruned{world.grasps.at(0), world.grasps.at(2)};
    const GraspSet no_bridge(std::move(pruned));
    const FeasibilityGrid grid2(world.scene, no_bridge, spec, 2);
    CHECK_FALSE(min_steps_oracle(grid2, at0, at03).has_value());
  }
  SUBCASE("refining the grid never increases the step count") {
    const FeasibilityGrid coarse(world.scene, world.grasps, GridSpec{0.04, 2.0 * M_PI}, 2);
    const FeasibilityGrid fine(world.scene, world.grasps, GridSpec{0.02, 2.0 * M_PI}, 2);
    for (const auto& [a, b] : std::vector<std::pair<Pose, Pose>>{
             {at0, at008}, {at0, at015}, {at0, at03}}) {
      const auto mc = min_steps_oracle(coarse, a, b);
      const auto mf = min_steps_oracle(fine, a, b);
      REQUIRE(mc.has_value());
      REQUIRE(mf.has_value());
      CHECK(*mf <= *mc);
    }
  }
  SUBCASE("grid soundness on the box5 scene") {
    const SyntheticScene scene = scene_from_preset("box5");
    const GraspSet grasps = sample_grasps(scene, 40, 77);
    const FeasibilityGrid g(scene, grasps, GridSpec{0.15, M_PI}, 2);
    const Pose a = compose_intermediate_pose(scene.placement(1), {0.0, 0.3, 0.0});
    const Pose b = compose_intermediate_pose(scene.placement(3), {0.1, 0.4, 1.0});
    for (const auto& mid : grid_ground_truth_midposes(g, a, b)) {
      const Pose p = compose_intermediate_pose(scene.placement(mid.placement), mid.xi);
      CHECK(!shared_grasps_ground_truth(scene, a, p, grasps).empty());
      CHECK(!shared_grasps_ground_truth(scene, p, b, grasps).empty());
    }
  }
}

TEST_CASE("grasp and label files round-trip") {
  const SyntheticScene scene = scene_from_preset("box5");
  const GraspSet grasps = sample_grasps(scene, 10, 3);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string gpath = (dir / "grasps_rt.jsonl").string();
  save_grasps_jsonl(grasps, gpath);
  const GraspSet back = load_grasps_jsonl(gpath);
  REQUIRE(back.size() == grasps.size());
  for (int i = 0; i < grasps.size(); ++i) {
    CHECK((back.at(i).pose.rotation - grasps.at(i).pose.rotation).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.at(i).width == grasps.at(i).width);
  }

  std::vector<FeasibilityLabel> labels;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 12; ++i)
    labels.push_back({random_pose(rng), i % grasps.size(), i % 3 == 0});
  const std::string lpath = (dir / "labels_rt.jsonl").string();
  save_labels_jsonl(labels, lpath);
  const auto lback = load_labels_jsonl(lpath);
  REQUIRE(lback.size() == labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    CHECK(lback[i].grasp_id == labels[i].grasp_id);
    CHECK(lback[i].feasible == labels[i].feasible);
    CHECK((lback[i].pose.translation - labels[i].pose.translation).cwiseAbs().maxCoeff() == 0.0);
  }
}
