#pragma once

#include "regrasp/config.hpp"
#include "regrasp/connectivity.hpp"
#include "regrasp/energy.hpp"
#include "regrasp/parallel.hpp"
#include "regrasp/planner.hpp"
#include "regrasp/world.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace regrasp {

struct ModelSpec {
  std::vector<int> hidden{128, 128, 128};
  bool include_width = true;
};

struct DataGenConfig {
  int positives = 20000;
  double negative_ratio = 1.0;
  double val_fraction = 0.1;
  int pair_samples = 5000;
};

struct EvalProtocolConfig {
  int onestep_episodes = 10;
  std::vector<int> onestep_ktop{200, 100, 50, 10};
  int multistep_episodes = 50;
  std::vector<int> multistep_ktop{10, 50};
  int multistep_batch = 1000;
  int sample_budget = 10000;
  double grid_xy_step = 0.01;
  double grid_theta_step = M_PI / 3.0;
  int ablate_steps = 40;
  std::vector<int> ablate_subsets{50, 100, 150, 200};
};

struct RunConfig {
  std::string scene_preset = "box5";
  std::string scene_file;  // wins over the preset when set
  int grasp_count = 200;
  uint64_t seed = 1;
  int threads = default_thread_count();
  std::string out_dir = "out";

  ModelSpec model;
  TrainConfig train;
  ConnectivityConfig connectivity;
  LangevinConfig langevin;
  PlannerConfig planner;
  DataGenConfig data;
  EvalProtocolConfig eval;

  // Derived sub-seeds so each stage owns an independent stream.
  uint64_t grasp_seed() const;
  uint64_t data_seed() const;
  uint64_t pair_seed() const;
  uint64_t episode_seed() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_file(const ConfigFile& cfg);

SyntheticScene scene_for(const RunConfig& cfg);

// "m:x,y,theta" (placement + planar params) or 12 comma/space separated
// numbers (row-major rotation | translation).
Pose parse_pose_spec(const std::string& spec, const SyntheticScene& scene);

struct Episode {
  Pose t_init, t_goal;
  int placement_init = 1, placement_goal = 1;
  PlanarParams xi_init, xi_goal;
  std::optional<int> oracle_min;
};

// Rejection-samples endpoint pairs whose grid min-step count satisfies the
// predicate. Throws with a budget report when the sampling budget runs out.
std::vector<Episode> sample_episodes(const FeasibilityGrid& grid, uint64_t seed, int count,
                                     const std::function<bool(std::optional<int>)>& accept,
                                     int budget, bool same_placement = false);

struct MetricsSummaryEntry {
  std::string variant;  // cost variant or "gt"
  int ktop = 0;
  double sv = 0.0;  // hard-check verification success rate
  double st = 0.0;  // threshold-check success rate
  double sh = 0.0;  // hard-check success rate of optimized sequences
  double el = 0.0;  // mean sequence length over successes
  double et = 0.0;  // mean planning seconds over successes
};

struct EpisodeRow {
  int episode = 0;
  std::string variant;
  int ktop = 0;
  bool threshold_success = false;
  bool hard_success = false;
  int n = 0;
  std::optional<int> oracle_min;
  double seconds = 0.0;
};

struct MetricsReport {
  std::vector<MetricsSummaryEntry> summary;
  std::vector<EpisodeRow> rows;
};

extern const char* kOracleNote;

void cmd_gen_data(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
CalibrationResult cmd_calibrate(const RunConfig& cfg);

struct PlanInvocation {
  std::string init_spec;
  std::string goal_spec;
  bool hard_check = false;
};
PlanResult cmd_plan(const RunConfig& cfg, const PlanInvocation& invocation);

MetricsReport cmd_eval_onestep(const RunConfig& cfg);
MetricsReport cmd_eval_multistep(const RunConfig& cfg);
void cmd_ablate_sweep(const RunConfig& cfg);

// Loads checkpoint + calibration from the run's output directory; the h in
// the config wins when finite.
double resolve_threshold(const RunConfig& cfg);

std::string out_path(const RunConfig& cfg, const std::string& filename);

}  // namespace regrasp
