#pragma once

#include "regrasp/connectivity.hpp"
#include "regrasp/energy.hpp"
#include "regrasp/pose.hpp"
#include "regrasp/world.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace regrasp {

struct LangevinConfig {
  double eta = 0.3;   // step size
  double tau = 0.1;   // temperature; 0 reduces to plain gradient descent
  int k_opt = 20;     // iterations
  uint64_t seed = 0;
  bool clamp_to_workspace = true;
};

enum class CheckMode { Sequential, Batch };

struct PlannerConfig {
  int n_max = 5;
  int batch_size = 200;
  int k_top = 10;
  CostVariant cost = CostVariant::Full;
  CheckMode check = CheckMode::Batch;
  bool include_direct_check = true;
};

// Grasps whose summed energy under both poses is at or below h.
std::vector<int> shared_grasp_set(const EnergySource& src, const Pose& t_a, const Pose& t_b,
                                  const GraspSet& grasps, double h);

struct SharedPairSample {
  Pose pose_a, pose_b;
  int grasp_id = 0;
  bool shared = false;
};

struct CalibrationPoint {
  double h = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct CalibrationResult {
  double h = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::vector<CalibrationPoint> curve;  // one point per distinct sum
};

// Exhaustive threshold sweep over the observed sums; maximizes F1 of the
// classifier [sum <= h], ties broken toward the smallest h. Throws when the
// labels are single-class.
CalibrationResult calibrate_h_from_sums(const std::vector<double>& sums,
                                        const std::vector<uint8_t>& labels);
CalibrationResult calibrate_h(const EnergySource& src, const GraspSet& grasps,
                              const std::vector<SharedPairSample>& samples);

// One Eq.-update of every unfrozen candidate. Noise draws are keyed by
// (seed, candidate, pose, coordinate, step), so the result is independent of
// evaluation order. A candidate with a non-finite gradient is frozen in
// place for the remaining iterations.
void langevin_step(std::vector<SequenceCandidate>& batch,
                   const std::vector<std::vector<Vec3>>& gradients, std::vector<uint8_t>& frozen,
                   const LangevinConfig& cfg, int step,
                   const WorkspaceBounds* clamp_bounds);

struct OptimizeResult {
  std::vector<SequenceCandidate> batch;
  Eigen::VectorXd costs;
  std::vector<uint8_t> frozen;
  int iterations = 0;
};

// Initializes B candidates (uniform placements, uniform planar params over
// the workspace and [0, 2pi)) and runs k_opt update iterations on the
// selected cost. Final costs are evaluated after the last update.
OptimizeResult optimize_batch(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                              int n, const EnergySource& src, const GraspSet& grasps,
                              const PlannerConfig& pcfg, const LangevinConfig& lcfg,
                              const ConnectivityConfig& ccfg, int threads = 1);

struct VerifyOutcome {
  bool valid = false;
  int pairs_checked = 0;
};

// Scans pairs 0..N in order and stops at the first empty shared set.
VerifyOutcome verify_sequential(const SyntheticScene& scene, const Pose& t_init,
                                const Pose& t_goal, const SequenceCandidate& cand,
                                const EnergySource& src, const GraspSet& grasps, double h);

struct BatchVerifyResult {
  std::optional<int> best_index;  // index into the batch
  int pairs_processed = 0;
};

// Filters the k_top lowest-cost candidates pair index by pair index and
// returns the lowest-cost survivor.
BatchVerifyResult verify_batch(const SyntheticScene& scene, const Pose& t_init,
                               const Pose& t_goal, const std::vector<SequenceCandidate>& batch,
                               const Eigen::VectorXd& costs, const EnergySource& src,
                               const GraspSet& grasps, double h, int k_top);

enum class PlanStatus { Success, Failure };

struct PlanLevelStats {
  int n = 0;
  double best_cost = 0.0;
  bool accepted = false;
};

struct PlanResult {
  PlanStatus status = PlanStatus::Failure;
  int n = 0;
  std::vector<SequenceStep> sequence;               // theta wrapped for reporting
  std::vector<std::vector<int>> pair_shared_ids;    // N+1 entries on success
  double final_cost = 0.0;
  int iterations = 0;
  double wall_time_s = 0.0;
  uint64_t seed = 0;
  std::vector<PlanLevelStats> per_n;
};

// Stable field names for the evaluation harness. Timing is volatile, so it
// is only serialized on request.
std::string plan_result_to_json(const PlanResult& result, bool include_timing = false);

// Direct check at N = 0 (flag-controlled), then deepening N = 1..n_max with
// batched optimization and the selected threshold verifier. Failure is a
// value, not an error.
PlanResult plan(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                const EnergySource& src, const GraspSet& grasps, const PlannerConfig& pcfg,
                const LangevinConfig& lcfg, const ConnectivityConfig& ccfg, int threads = 1);

}  // namespace regrasp
