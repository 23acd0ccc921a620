#include "regrasp/eval.hpp"
#include "regrasp/random.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  int threads = -1;
};

regrasp::RunConfig resolve_config(const GlobalOpts& opts) {
  regrasp::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = regrasp::load_run_config(opts.config_path);
  if (opts.seed >= 0) {
    cfg.seed = static_cast<uint64_t>(opts.seed);
    cfg.train.seed = regrasp::hash_combine(cfg.seed, 5);
    cfg.langevin.seed = regrasp::hash_combine(cfg.seed, 6);
  }
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.threads > 0) cfg.threads = opts.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared-grasp connectivity metrics and regrasp sequence planning"};
  app.require_subcommand(1);

  GlobalOpts opts;
  app.add_option("--config", opts.config_path, "Run configuration file");
  app.add_option("--seed", opts.seed, "Override the run seed");
  app.add_option("--out", opts.out_dir, "Output directory");
  app.add_option("--threads", opts.threads, "Worker thread count");

  auto* gen = app.add_subcommand("gen-data", "Sample grasps and oracle-labeled datasets");
  auto* train = app.add_subcommand("train", "Train the feasibility energy model");
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate the shared-grasp threshold h");
  auto* plan_cmd = app.add_subcommand("plan", "Plan a regrasp sequence");
  auto* onestep = app.add_subcommand("eval-onestep", "One-intermediate-pose benchmark");
  auto* multistep = app.add_subcommand("eval-multistep", "Iterative-deepening benchmark");
  auto* ablate = app.add_subcommand("ablate", "Cost-formulation sweep along an interpolation");

  regrasp::PlanInvocation invocation;
  std::string cost_override, ktop_override, nmax_override, batch_override;
  plan_cmd->add_option("--init", invocation.init_spec,
                       "Initial pose: 12 numbers or m:x,y,theta")->required();
  plan_cmd->add_option("--goal", invocation.goal_spec,
                       "Goal pose: 12 numbers or m:x,y,theta")->required();
  plan_cmd->add_flag("--hard-check", invocation.hard_check,
                     "Re-validate the plan against the analytic oracle");
  plan_cmd->add_option("--cost", cost_override, "Cost variant: jseq|jplus|jtrunc");
  plan_cmd->add_option("--ktop", ktop_override, "Batch-verification pool size");
  plan_cmd->add_option("--nmax", nmax_override, "Maximum number of intermediate poses");
  plan_cmd->add_option("--batch", batch_override, "Candidate batch size");

  CLI11_PARSE(app, argc, argv);

  try {
    regrasp::RunConfig cfg = resolve_config(opts);
    if (gen->parsed()) {
      regrasp::cmd_gen_data(cfg);
      std::cout << "datasets written to " << cfg.out_dir << "\n";
    } else if (train->parsed()) {
      regrasp::cmd_train(cfg);
      std::cout << "checkpoint written to " << regrasp::out_path(cfg, "checkpoint.ebm") << "\n";
    } else if (calibrate->parsed()) {
      const auto result = regrasp::cmd_calibrate(cfg);
      std::cout << "h = " << result.h << "  F1 = " << result.f1 << "\n";
    } else if (plan_cmd->parsed()) {
      if (!cost_override.empty()) {
        if (cost_override == "jseq") cfg.planner.cost = regrasp::CostVariant::Full;
        else if (cost_override == "jplus") cfg.planner.cost = regrasp::CostVariant::Naive;
        else if (cost_override == "jtrunc") cfg.planner.cost = regrasp::CostVariant::Truncated;
        else throw std::runtime_error("unknown --cost value: " + cost_override);
      }
      if (!ktop_override.empty()) cfg.planner.k_top = std::stoi(ktop_override);
      if (!nmax_override.empty()) cfg.planner.n_max = std::stoi(nmax_override);
      if (!batch_override.empty()) cfg.planner.batch_size = std::stoi(batch_override);
      const regrasp::PlanResult result = regrasp::cmd_plan(cfg, invocation);
      if (result.status == regrasp::PlanStatus::Success) {
        std::cout << "plan found: n = " << result.n << " (took " << result.wall_time_s << " s)\n";
      } else {
        std::cout << "no plan within n_max (took " << result.wall_time_s << " s)\n";
        return 2;
      }
    } else if (onestep->parsed()) {
      const auto report = regrasp::cmd_eval_onestep(cfg);
      for (const auto& entry : report.summary)
        std::cout << entry.variant << " ktop=" << entry.ktop << " S.V.=" << entry.sv << "\n";
    } else if (multistep->parsed()) {
      const auto report = regrasp::cmd_eval_multistep(cfg);
      for (const auto& entry : report.summary)
        std::cout << "ktop=" << entry.ktop << " S.T.=" << entry.st << " S.H.=" << entry.sh
                  << " E.L.=" << entry.el << " E.T.=" << entry.et << "\n";
    } else if (ablate->parsed()) {
      regrasp::cmd_ablate_sweep(cfg);
      std::cout << "sweep written to " << regrasp::out_path(cfg, "ablate.csv") << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
