#pragma once

#include "regrasp/energy.hpp"
#include "regrasp/pose.hpp"
#include "regrasp/world.hpp"

#include <Eigen/Core>

#include <limits>
#include <span>
#include <vector>

namespace regrasp {

struct ConnectivityConfig {
  double alpha = 1.0;        // soft-min temperature
  double lambda_reg = 0.5;   // weight of the bottleneck regularizer
  double h = std::numeric_limits<double>::infinity();  // truncation threshold
  double plateau_penalty = 0.0;  // value of a truncated pair with no grasps below h
};

enum class CostVariant { Full, Naive, Truncated };

struct SequenceStep {
  int placement = 1;
  PlanarParams xi;
};

// Intermediate poses of one candidate chain; endpoints are supplied by the
// planning problem and stay fixed.
struct SequenceCandidate {
  std::vector<SequenceStep> steps;
};

std::vector<Pose> chain_poses(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                              const SequenceCandidate& cand);

// -alpha * log sum_j exp(-sums[j] / alpha), max-shifted for stability.
double q_from_sums(std::span<const double> sums, double alpha);

// Same with the summation restricted to sums[j] < h (strict); returns
// plateau_penalty when nothing qualifies.
double q_truncated_from_sums(std::span<const double> sums, double alpha, double h,
                             double plateau_penalty);

// Eq.-level arithmetic on precomputed pairwise scores:
// sum(q) + lambda * sum_i (q[i] - q[i+1])^2.
double j_seq_from_pair_scores(std::span<const double> pair_scores, double lambda_reg);

double q_pair(const EnergySource& src, const Pose& t_a, const Pose& t_b, const GraspSet& grasps,
              double alpha);
double q_pair_truncated(const EnergySource& src, const Pose& t_a, const Pose& t_b,
                        const GraspSet& grasps, double alpha, double h, double plateau_penalty);

// Per-chain cache: every pose's energies are computed once and shared by the
// two pair terms touching the pose.
struct EnergyTable {
  Eigen::MatrixXd energies;             // (N+2) x K
  std::vector<Eigen::MatrixXd> dpose;   // N entries, K x 9 (intermediates only)
  std::vector<PoseJacobian> jacobians;  // N entries
};

// Endpoint energies can be shared across a whole batch; they never change
// during optimization.
struct EndpointCache {
  Eigen::VectorXd init_energies;
  Eigen::VectorXd goal_energies;
};
EndpointCache make_endpoint_cache(const EnergySource& src, const Pose& t_init, const Pose& t_goal,
                                  const GraspSet& grasps);

EnergyTable build_energy_table(const SyntheticScene& scene, const Pose& t_init,
                               const Pose& t_goal, const SequenceCandidate& cand,
                               const EnergySource& src, const GraspSet& grasps, bool with_grads,
                               const EndpointCache* cache = nullptr);

struct ChainEval {
  double cost = 0.0;
  std::vector<Vec3> grad;  // one 3-vector per intermediate pose
};
ChainEval eval_chain(const EnergyTable& table, const ConnectivityConfig& cfg, CostVariant variant,
                     bool with_grad);

double j_seq(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
             const SequenceCandidate& cand, const EnergySource& src, const GraspSet& grasps,
             const ConnectivityConfig& cfg);
double j_seq_naive(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                   const SequenceCandidate& cand, const EnergySource& src, const GraspSet& grasps,
                   double alpha);
double j_seq_truncated(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                       const SequenceCandidate& cand, const EnergySource& src,
                       const GraspSet& grasps, const ConnectivityConfig& cfg);

std::vector<Vec3> grad_j_seq(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                             const SequenceCandidate& cand, const EnergySource& src,
                             const GraspSet& grasps, const ConnectivityConfig& cfg,
                             CostVariant variant = CostVariant::Full);

}  // namespace regrasp
