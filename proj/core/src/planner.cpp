#include "regrasp/planner.hpp"

#include "regrasp/parallel.hpp"
#include "regrasp/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace regrasp {

using nlohmann::json;

std::vector<int> shared_grasp_set(const EnergySource& src, const Pose& t_a, const Pose& t_b,
                                  const GraspSet& grasps, double h) {
  const Eigen::MatrixXd encs = grasps.encodings().leftCols(src.grasp_dim());
  Eigen::VectorXd ea, eb;
  src.eval_batch(encode_pose(t_a), encs, ea, nullptr);
  src.eval_batch(encode_pose(t_b), encs, eb, nullptr);
  std::vector<int> ids;
  for (int j = 0; j < grasps.size(); ++j)
    if (ea(j) + eb(j) <= h) ids.push_back(j);
  return ids;
}

CalibrationResult calibrate_h_from_sums(const std::vector<double>& sums,
                                        const std::vector<uint8_t>& labels) {
  if (sums.size() != labels.size())
    throw std::invalid_argument("calibrate_h: size mismatch");
  size_t total_pos = 0;
  for (uint8_t l : labels) total_pos += l ? 1 : 0;
  if (total_pos == 0 || total_pos == labels.size())
    throw std::invalid_argument("calibrate_h: validation set needs both classes");

  std::vector<size_t> order(sums.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return sums[a] < sums[b]; });

  CalibrationResult best;
  best.f1 = -1.0;
  size_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    // Consume the whole group of equal sums so the threshold sits at a
    // realized value and every achievable confusion matrix is visited.
    const double h = sums[order[i]];
    while (i < order.size() && sums[order[i]] == h) {
      if (labels[order[i]]) ++tp;
      else ++fp;
      ++i;
    }
    const size_t fn = total_pos - tp;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    best.curve.push_back({h, precision, recall, f1});
    if (f1 > best.f1) {
      best.f1 = f1;
      best.h = h;
      best.precision = precision;
      best.recall = recall;
    }
  }
  return best;
}

CalibrationResult calibrate_h(const EnergySource& src, const GraspSet& grasps,
                              const std::vector<SharedPairSample>& samples) {
  std::vector<double> sums;
  std::vector<uint8_t> labels;
  sums.reserve(samples.size());
  labels.reserve(samples.size());
  const Eigen::MatrixXd encs = grasps.encodings().leftCols(src.grasp_dim());
  for (const auto& sample : samples) {
    const Eigen::VectorXd genc = encs.row(sample.grasp_id).transpose();
    const double sum = energy_forward(src, encode_pose(sample.pose_a), genc) +
                       energy_forward(src, encode_pose(sample.pose_b), genc);
    sums.push_back(sum);
    labels.push_back(sample.shared ? 1 : 0);
  }
  return calibrate_h_from_sums(sums, labels);
}

void langevin_step(std::vector<SequenceCandidate>& batch,
                   const std::vector<std::vector<Vec3>>& gradients, std::vector<uint8_t>& frozen,
                   const LangevinConfig& cfg, int step, const WorkspaceBounds* clamp_bounds) {
  if (batch.size() != gradients.size() || batch.size() != frozen.size())
    throw std::invalid_argument("langevin_step: batch/gradient shape mismatch");
  if (cfg.eta < 0.0) throw std::invalid_argument("langevin_step: eta must be >= 0");
  if (cfg.tau < 0.0) throw std::invalid_argument("langevin_step: tau must be >= 0");
  const double noise_scale = std::sqrt(2.0 * cfg.eta * cfg.tau);

  for (size_t b = 0; b < batch.size(); ++b) {
    if (frozen[b]) continue;
    const auto& grad = gradients[b];
    if (grad.size() != batch[b].steps.size())
      throw std::invalid_argument("langevin_step: gradient count mismatch");
    bool finite = true;
    for (const auto& g : grad)
      if (!g.allFinite()) finite = false;
    if (!finite) {
      frozen[b] = 1;
      continue;
    }
    for (size_t i = 0; i < batch[b].steps.size(); ++i) {
      PlanarParams& xi = batch[b].steps[i].xi;
      double* coords[3] = {&xi.x, &xi.y, &xi.theta};
      for (int c = 0; c < 3; ++c) {
        double delta = -cfg.eta * grad[i](c);
        if (cfg.tau > 0.0)
          delta += noise_scale * counter_normal(cfg.seed, b, i, static_cast<uint64_t>(c),
                                                static_cast<uint64_t>(step));
        *coords[c] += delta;
      }
      if (clamp_bounds != nullptr) {
        xi.x = std::clamp(xi.x, clamp_bounds->x_min, clamp_bounds->x_max);
        xi.y = std::clamp(xi.y, clamp_bounds->y_min, clamp_bounds->y_max);
      }
    }
  }
}

OptimizeResult optimize_batch(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                              int n, const EnergySource& src, const GraspSet& grasps,
                              const PlannerConfig& pcfg, const LangevinConfig& lcfg,
                              const ConnectivityConfig& ccfg, int threads) {
  if (n < 1) throw std::invalid_argument("optimize_batch: n must be >= 1");
  if (pcfg.batch_size < 1) throw std::invalid_argument("optimize_batch: batch size must be >= 1");

  OptimizeResult result;
  result.batch.resize(static_cast<size_t>(pcfg.batch_size));
  result.frozen.assign(static_cast<size_t>(pcfg.batch_size), 0);

  // Randomly sampled placement sequences with uniform planar perturbations.
  std::mt19937_64 rng(lcfg.seed);
  std::uniform_int_distribution<int> placement_dist(1, static_cast<int>(scene.placements.size()));
  std::uniform_real_distribution<double> xdist(scene.bounds.x_min, scene.bounds.x_max);
  std::uniform_real_distribution<double> ydist(scene.bounds.y_min, scene.bounds.y_max);
  std::uniform_real_distribution<double> tdist(0.0, 2.0 * M_PI);
  for (auto& cand : result.batch) {
    cand.steps.resize(static_cast<size_t>(n));
    for (auto& step : cand.steps) {
      step.placement = placement_dist(rng);
      step.xi = {xdist(rng), ydist(rng), tdist(rng)};
    }
  }

  const EndpointCache cache = make_endpoint_cache(src, t_init, t_goal, grasps);
  std::vector<std::vector<Vec3>> grads(result.batch.size());

  for (int k = 1; k <= lcfg.k_opt; ++k) {
    parallel_for(result.batch.size(), threads, [&](size_t b) {
      if (result.frozen[b]) return;
      const EnergyTable table = build_energy_table(scene, t_init, t_goal, result.batch[b], src,
                                                   grasps, true, &cache);
      grads[b] = eval_chain(table, ccfg, pcfg.cost, true).grad;
    });
    langevin_step(result.batch, grads, result.frozen, lcfg, k,
                  lcfg.clamp_to_workspace ? &scene.bounds : nullptr);
    ++result.iterations;
  }

  result.costs.resize(pcfg.batch_size);
  parallel_for(result.batch.size(), threads, [&](size_t b) {
    const EnergyTable table =
        build_energy_table(scene, t_init, t_goal, result.batch[b], src, grasps, false, &cache);
    result.costs(static_cast<Eigen::Index>(b)) = eval_chain(table, ccfg, pcfg.cost, false).cost;
  });
  return result;
}

VerifyOutcome verify_sequential(const SyntheticScene& scene, const Pose& t_init,
                                const Pose& t_goal, const SequenceCandidate& cand,
                                const EnergySource& src, const GraspSet& grasps, double h) {
  const std::vector<Pose> poses = chain_poses(scene, t_init, t_goal, cand);
  VerifyOutcome outcome;
  for (size_t m = 0; m + 1 < poses.size(); ++m) {
    ++outcome.pairs_checked;
    if (shared_grasp_set(src, poses[m], poses[m + 1], grasps, h).empty()) return outcome;
  }
  outcome.valid = true;
  return outcome;
}

BatchVerifyResult verify_batch(const SyntheticScene& scene, const Pose& t_init,
                               const Pose& t_goal, const std::vector<SequenceCandidate>& batch,
                               const Eigen::VectorXd& costs, const EnergySource& src,
                               const GraspSet& grasps, double h, int k_top) {
  if (batch.empty()) throw std::invalid_argument("verify_batch: empty batch");
  if (k_top < 1 || k_top > static_cast<int>(batch.size()))
    throw std::invalid_argument("verify_batch: k_top outside [1, batch size]");
  if (costs.size() != static_cast<Eigen::Index>(batch.size()))
    throw std::invalid_argument("verify_batch: cost count mismatch");

  std::vector<int> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return costs(a) < costs(b); });
  std::vector<int> survivors(order.begin(), order.begin() + k_top);

  const Eigen::MatrixXd encs = grasps.encodings().leftCols(src.grasp_dim());
  const size_t n = batch.front().steps.size();

  // Lazy per-candidate pose energies: row i is filled the first time pair
  // i-1 or i is checked.
  std::vector<std::vector<Eigen::VectorXd>> cached(batch.size(),
                                                   std::vector<Eigen::VectorXd>(n + 2));
  EndpointCache endpoints = make_endpoint_cache(src, t_init, t_goal, grasps);
  auto energies_of = [&](int cand_idx, size_t pose_idx) -> const Eigen::VectorXd& {
    auto& slot = cached[static_cast<size_t>(cand_idx)][pose_idx];
    if (slot.size() == 0) {
      if (pose_idx == 0) {
        slot = endpoints.init_energies;
      } else if (pose_idx == n + 1) {
        slot = endpoints.goal_energies;
      } else {
        const auto& step = batch[static_cast<size_t>(cand_idx)].steps[pose_idx - 1];
        const Pose pose = compose_intermediate_pose(scene.placement(step.placement), step.xi);
        src.eval_batch(encode_pose(pose), encs, slot, nullptr);
      }
    }
    return slot;
  };

  BatchVerifyResult result;
  for (size_t m = 0; m + 1 < n + 2; ++m) {
    ++result.pairs_processed;
    std::vector<int> next;
    for (int idx : survivors) {
      const Eigen::VectorXd& ea = energies_of(idx, m);
      const Eigen::VectorXd& eb = energies_of(idx, m + 1);
      bool nonempty = false;
      for (Eigen::Index j = 0; j < ea.size(); ++j) {
        if (ea(j) + eb(j) <= h) {
          nonempty = true;
          break;
        }
      }
      if (nonempty) next.push_back(idx);
    }
    survivors = std::move(next);
    if (survivors.empty()) return result;
  }

  // Survivors are in ascending cost order already; the first is the argmin.
  result.best_index = survivors.front();
  return result;
}

std::string plan_result_to_json(const PlanResult& result, bool include_timing) {
  json j;
  j["status"] = result.status == PlanStatus::Success ? "success" : "failure";
  j["n"] = result.n;
  j["sequence"] = json::array();
  for (const auto& step : result.sequence) {
    j["sequence"].push_back(
        {{"m", step.placement}, {"x", step.xi.x}, {"y", step.xi.y}, {"theta", step.xi.theta}});
  }
  j["pair_shared_ids"] = result.pair_shared_ids;
  j["final_cost"] = result.final_cost;
  json diag;
  diag["iterations"] = result.iterations;
  diag["seed"] = result.seed;
  if (include_timing) diag["wall_time_s"] = result.wall_time_s;
  diag["per_n"] = json::array();
  for (const auto& level : result.per_n) {
    diag["per_n"].push_back(
        {{"n", level.n}, {"best_cost", level.best_cost}, {"accepted", level.accepted}});
  }
  j["diagnostics"] = diag;
  return j.dump(2);
}

PlanResult plan(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                const EnergySource& src, const GraspSet& grasps, const PlannerConfig& pcfg,
                const LangevinConfig& lcfg, const ConnectivityConfig& ccfg, int threads) {
  if (pcfg.n_max < 1) throw std::invalid_argument("plan: n_max must be >= 1");
  if (pcfg.k_top < 1 || pcfg.k_top > pcfg.batch_size)
    throw std::invalid_argument("plan: k_top outside [1, batch size]");

  const auto start = std::chrono::steady_clock::now();
  PlanResult result;
  result.seed = lcfg.seed;

  auto finish = [&](PlanResult& r) -> PlanResult& {
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  };

  auto accept = [&](const SequenceCandidate& cand, double cost) {
    result.status = PlanStatus::Success;
    result.n = static_cast<int>(cand.steps.size());
    result.sequence = cand.steps;
    for (auto& step : result.sequence) step.xi.theta = wrap_angle(step.xi.theta);
    result.final_cost = cost;
    const std::vector<Pose> poses = chain_poses(scene, t_init, t_goal, cand);
    result.pair_shared_ids.clear();
    for (size_t m = 0; m + 1 < poses.size(); ++m)
      result.pair_shared_ids.push_back(
          shared_grasp_set(src, poses[m], poses[m + 1], grasps, ccfg.h));
  };

  if (pcfg.include_direct_check) {
    const std::vector<int> direct = shared_grasp_set(src, t_init, t_goal, grasps, ccfg.h);
    if (!direct.empty()) {
      accept(SequenceCandidate{}, q_pair(src, t_init, t_goal, grasps, ccfg.alpha));
      return finish(result);
    }
  }

  for (int n = 1; n <= pcfg.n_max; ++n) {
    OptimizeResult opt =
        optimize_batch(scene, t_init, t_goal, n, src, grasps, pcfg, lcfg, ccfg, threads);
    result.iterations += opt.iterations;

    PlanLevelStats level;
    level.n = n;
    level.best_cost = opt.costs.minCoeff();

    std::optional<int> chosen;
    if (pcfg.check == CheckMode::Sequential) {
      // Verify only the single lowest-cost candidate, as printed.
      int best = 0;
      for (int i = 1; i < pcfg.batch_size; ++i)
        if (opt.costs(i) < opt.costs(best)) best = i;
      if (verify_sequential(scene, t_init, t_goal, opt.batch[static_cast<size_t>(best)], src,
                            grasps, ccfg.h)
              .valid)
        chosen = best;
    } else {
      chosen = verify_batch(scene, t_init, t_goal, opt.batch, opt.costs, src, grasps, ccfg.h,
                            pcfg.k_top)
                   .best_index;
    }

    if (chosen.has_value()) {
      level.accepted = true;
      result.per_n.push_back(level);
      accept(opt.batch[static_cast<size_t>(*chosen)], opt.costs(*chosen));
      return finish(result);
    }
    result.per_n.push_back(level);
  }

  result.status = PlanStatus::Failure;
  return finish(result);
}

}  // namespace regrasp
