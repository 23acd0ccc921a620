#include "regrasp/connectivity.hpp"

#include <cmath>
#include <stdexcept>

namespace regrasp {

namespace {

void require_grasps(int count) {
  if (count < 1)
    throw std::invalid_argument("connectivity: the grasp summation needs at least one candidate");
}

Eigen::MatrixXd grasp_block(const EnergySource& src, const GraspSet& grasps) {
  return grasps.encodings().leftCols(src.grasp_dim());
}

}  // namespace

std::vector<Pose> chain_poses(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                              const SequenceCandidate& cand) {
  std::vector<Pose> poses;
  poses.reserve(cand.steps.size() + 2);
  poses.push_back(t_init);
  for (const auto& step : cand.steps)
    poses.push_back(compose_intermediate_pose(scene.placement(step.placement), step.xi));
  poses.push_back(t_goal);
  return poses;
}

double q_from_sums(std::span<const double> sums, double alpha) {
  require_grasps(static_cast<int>(sums.size()));
  if (alpha <= 0.0) throw std::invalid_argument("q_from_sums: alpha must be > 0");
  double smin = sums[0];
  for (double s : sums) smin = std::min(smin, s);
  double acc = 0.0;
  for (double s : sums) acc += std::exp((smin - s) / alpha);
  return smin - alpha * std::log(acc);
}

double q_truncated_from_sums(std::span<const double> sums, double alpha, double h,
                             double plateau_penalty) {
  require_grasps(static_cast<int>(sums.size()));
  if (alpha <= 0.0) throw std::invalid_argument("q_truncated_from_sums: alpha must be > 0");
  double smin = std::numeric_limits<double>::infinity();
  for (double s : sums)
    if (s < h) smin = std::min(smin, s);
  if (!std::isfinite(smin)) return plateau_penalty;
  double acc = 0.0;
  for (double s : sums)
    if (s < h) acc += std::exp((smin - s) / alpha);
  return smin - alpha * std::log(acc);
}

double j_seq_from_pair_scores(std::span<const double> pair_scores, double lambda_reg) {
  if (pair_scores.empty()) throw std::invalid_argument("j_seq_from_pair_scores: no pairs");
  double total = 0.0;
  for (double q : pair_scores) total += q;
  for (size_t i = 0; i + 1 < pair_scores.size(); ++i) {
    const double d = pair_scores[i] - pair_scores[i + 1];
    total += lambda_reg * d * d;
  }
  return total;
}

double q_pair(const EnergySource& src, const Pose& t_a, const Pose& t_b, const GraspSet& grasps,
              double alpha) {
  require_grasps(grasps.size());
  const Eigen::MatrixXd encs = grasp_block(src, grasps);
  Eigen::VectorXd ea, eb;
  src.eval_batch(encode_pose(t_a), encs, ea, nullptr);
  src.eval_batch(encode_pose(t_b), encs, eb, nullptr);
  const Eigen::VectorXd sums = ea + eb;
  return q_from_sums({sums.data(), static_cast<size_t>(sums.size())}, alpha);
}

double q_pair_truncated(const EnergySource& src, const Pose& t_a, const Pose& t_b,
                        const GraspSet& grasps, double alpha, double h, double plateau_penalty) {
  require_grasps(grasps.size());
  const Eigen::MatrixXd encs = grasp_block(src, grasps);
  Eigen::VectorXd ea, eb;
  src.eval_batch(encode_pose(t_a), encs, ea, nullptr);
  src.eval_batch(encode_pose(t_b), encs, eb, nullptr);
  const Eigen::VectorXd sums = ea + eb;
  return q_truncated_from_sums({sums.data(), static_cast<size_t>(sums.size())}, alpha, h,
                               plateau_penalty);
}

EndpointCache make_endpoint_cache(const EnergySource& src, const Pose& t_init, const Pose& t_goal,
                                  const GraspSet& grasps) {
  const Eigen::MatrixXd encs = grasp_block(src, grasps);
  EndpointCache cache;
  src.eval_batch(encode_pose(t_init), encs, cache.init_energies, nullptr);
  src.eval_batch(encode_pose(t_goal), encs, cache.goal_energies, nullptr);
  return cache;
}

EnergyTable build_energy_table(const SyntheticScene& scene, const Pose& t_init,
                               const Pose& t_goal, const SequenceCandidate& cand,
                               const EnergySource& src, const GraspSet& grasps, bool with_grads,
                               const EndpointCache* cache) {
  require_grasps(grasps.size());
  const Eigen::MatrixXd encs = grasp_block(src, grasps);
  const int n = static_cast<int>(cand.steps.size());

  EnergyTable table;
  table.energies.resize(n + 2, grasps.size());
  if (with_grads) {
    table.dpose.resize(static_cast<size_t>(n));
    table.jacobians.resize(static_cast<size_t>(n));
  }

  Eigen::VectorXd energies;
  if (cache != nullptr) {
    table.energies.row(0) = cache->init_energies.transpose();
    table.energies.row(n + 1) = cache->goal_energies.transpose();
  } else {
    src.eval_batch(encode_pose(t_init), encs, energies, nullptr);
    table.energies.row(0) = energies.transpose();
    src.eval_batch(encode_pose(t_goal), encs, energies, nullptr);
    table.energies.row(n + 1) = energies.transpose();
  }

  for (int i = 0; i < n; ++i) {
    const auto& step = cand.steps[static_cast<size_t>(i)];
    const StablePlacement& sp = scene.placement(step.placement);
    const Pose pose = compose_intermediate_pose(sp, step.xi);
    Eigen::MatrixXd* dpose = with_grads ? &table.dpose[static_cast<size_t>(i)] : nullptr;
    src.eval_batch(encode_pose(pose), encs, energies, dpose);
    table.energies.row(i + 1) = energies.transpose();
    if (with_grads) table.jacobians[static_cast<size_t>(i)] = compose_jacobian(sp, step.xi);
  }
  return table;
}

ChainEval eval_chain(const EnergyTable& table, const ConnectivityConfig& cfg, CostVariant variant,
                     bool with_grad) {
  const int pairs = static_cast<int>(table.energies.rows()) - 1;
  const int n = pairs - 1;  // intermediates
  const Eigen::Index k = table.energies.cols();
  const bool truncated = variant == CostVariant::Truncated;
  const double lambda = variant == CostVariant::Full || truncated ? cfg.lambda_reg : 0.0;

  std::vector<double> q(static_cast<size_t>(pairs));
  // Softmax weights per pair; for the truncated variant, grasps at or above
  // h get weight zero, and an empty pair contributes no gradient at all.
  Eigen::MatrixXd weights;
  if (with_grad) weights = Eigen::MatrixXd::Zero(pairs, k);

  for (int m = 0; m < pairs; ++m) {
    const Eigen::VectorXd sums =
        (table.energies.row(m) + table.energies.row(m + 1)).transpose();
    double smin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < k; ++j) {
      if (truncated && !(sums(j) < cfg.h)) continue;
      smin = std::min(smin, sums(j));
    }
    if (!std::isfinite(smin)) {  // truncated pair with nothing below h
      q[static_cast<size_t>(m)] = cfg.plateau_penalty;
      continue;
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (truncated && !(sums(j) < cfg.h)) continue;
      acc += std::exp((smin - sums(j)) / cfg.alpha);
    }
    q[static_cast<size_t>(m)] = smin - cfg.alpha * std::log(acc);
    if (with_grad) {
      for (Eigen::Index j = 0; j < k; ++j) {
        if (truncated && !(sums(j) < cfg.h)) continue;
        weights(m, j) = std::exp((smin - sums(j)) / cfg.alpha) / acc;
      }
    }
  }

  ChainEval out;
  out.cost = j_seq_from_pair_scores(q, lambda);

  if (with_grad) {
    out.grad.assign(static_cast<size_t>(n), Vec3::Zero());
    // dJ/dQ_m: the connectivity term plus the regularizer chain.
    std::vector<double> coeff(static_cast<size_t>(pairs), 1.0);
    for (int m = 0; m < pairs; ++m) {
      if (m + 1 < pairs)
        coeff[static_cast<size_t>(m)] +=
            2.0 * lambda * (q[static_cast<size_t>(m)] - q[static_cast<size_t>(m + 1)]);
      if (m > 0)
        coeff[static_cast<size_t>(m)] -=
            2.0 * lambda * (q[static_cast<size_t>(m - 1)] - q[static_cast<size_t>(m)]);
    }
    for (int i = 1; i <= n; ++i) {
      // Pose i participates in pairs i-1 and i.
      Eigen::VectorXd v = coeff[static_cast<size_t>(i - 1)] * weights.row(i - 1).transpose() +
                          coeff[static_cast<size_t>(i)] * weights.row(i).transpose();
      const Eigen::MatrixXd& dpose = table.dpose[static_cast<size_t>(i - 1)];
      const Eigen::Matrix<double, 9, 1> dpose_sum = dpose.transpose() * v;
      out.grad[static_cast<size_t>(i - 1)] =
          table.jacobians[static_cast<size_t>(i - 1)].transpose() * dpose_sum;
    }
  }
  return out;
}

namespace {

double chain_cost(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                  const SequenceCandidate& cand, const EnergySource& src, const GraspSet& grasps,
                  const ConnectivityConfig& cfg, CostVariant variant) {
  const EnergyTable table =
      build_energy_table(scene, t_init, t_goal, cand, src, grasps, false);
  return eval_chain(table, cfg, variant, false).cost;
}

}  // namespace

double j_seq(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
             const SequenceCandidate& cand, const EnergySource& src, const GraspSet& grasps,
             const ConnectivityConfig& cfg) {
  return chain_cost(scene, t_init, t_goal, cand, src, grasps, cfg, CostVariant::Full);
}

double j_seq_naive(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                   const SequenceCandidate& cand, const EnergySource& src, const GraspSet& grasps,
                   double alpha) {
  ConnectivityConfig cfg;
  cfg.alpha = alpha;
  return chain_cost(scene, t_init, t_goal, cand, src, grasps, cfg, CostVariant::Naive);
}

double j_seq_truncated(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                       const SequenceCandidate& cand, const EnergySource& src,
                       const GraspSet& grasps, const ConnectivityConfig& cfg) {
  return chain_cost(scene, t_init, t_goal, cand, src, grasps, cfg, CostVariant::Truncated);
}

std::vector<Vec3> grad_j_seq(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                             const SequenceCandidate& cand, const EnergySource& src,
                             const GraspSet& grasps, const ConnectivityConfig& cfg,
                             CostVariant variant) {
  if (cand.steps.empty())
    throw std::invalid_argument("grad_j_seq: chain has no intermediate poses");
  const EnergyTable table = build_energy_table(scene, t_init, t_goal, cand, src, grasps, true);
  return eval_chain(table, cfg, variant, true).grad;
}

}  // namespace regrasp
