#include "regrasp/eval.hpp"

#include "regrasp/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace regrasp {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kOracleNote =
    "hard checks use the synthetic analytic feasibility oracle "
    "(reach sphere, table clearance, approach cone, workspace bounds); "
    "no robot IK or mesh collision is involved";

uint64_t RunConfig::grasp_seed() const { return hash_combine(seed, 1); }
uint64_t RunConfig::data_seed() const { return hash_combine(seed, 2); }
uint64_t RunConfig::pair_seed() const { return hash_combine(seed, 3); }
uint64_t RunConfig::episode_seed() const { return hash_combine(seed, 4); }

namespace {

CostVariant parse_cost_variant(const std::string& name) {
  if (name == "jseq") return CostVariant::Full;
  if (name == "jplus") return CostVariant::Naive;
  if (name == "jtrunc") return CostVariant::Truncated;
  throw std::runtime_error("config: unknown cost variant '" + name + "' (jseq|jplus|jtrunc)");
}

std::string variant_name(CostVariant v) {
  switch (v) {
    case CostVariant::Full: return "jseq";
    case CostVariant::Naive: return "jplus";
    case CostVariant::Truncated: return "jtrunc";
  }
  return "?";
}

}  // namespace

RunConfig run_config_from_file(const ConfigFile& cfg) {
  RunConfig rc;
  rc.scene_preset = cfg.get_string("run", "scene", rc.scene_preset);
  rc.scene_file = cfg.get_string("run", "scene_file", rc.scene_file);
  rc.grasp_count = static_cast<int>(cfg.get_int("run", "grasps", rc.grasp_count));
  rc.seed = static_cast<uint64_t>(cfg.get_int("run", "seed", static_cast<long long>(rc.seed)));
  rc.threads = static_cast<int>(cfg.get_int("run", "threads", rc.threads));
  rc.out_dir = cfg.get_string("run", "out", rc.out_dir);

  {
    std::vector<long long> hidden(rc.model.hidden.begin(), rc.model.hidden.end());
    hidden = cfg.get_ints("model", "hidden", hidden);
    rc.model.hidden.assign(hidden.begin(), hidden.end());
    rc.model.include_width = cfg.get_bool("model", "include_width", rc.model.include_width);
  }

  rc.train.learning_rate = cfg.get_double("train", "learning_rate", rc.train.learning_rate);
  rc.train.epochs = static_cast<int>(cfg.get_int("train", "epochs", rc.train.epochs));
  rc.train.batch_size = static_cast<int>(cfg.get_int("train", "batch_size", rc.train.batch_size));
  rc.train.alpha_reg = cfg.get_double("train", "alpha_reg", rc.train.alpha_reg);
  rc.train.negative_ratio = cfg.get_double("train", "negative_ratio", rc.train.negative_ratio);
  rc.train.margin = cfg.get_double("train", "margin", rc.train.margin);
  rc.train.seed = static_cast<uint64_t>(
      cfg.get_int("train", "seed", static_cast<long long>(hash_combine(rc.seed, 5))));
  rc.train.include_width = rc.model.include_width;

  rc.connectivity.alpha = cfg.get_double("connectivity", "alpha", rc.connectivity.alpha);
  rc.connectivity.lambda_reg =
      cfg.get_double("connectivity", "lambda_reg", rc.connectivity.lambda_reg);
  if (cfg.has("connectivity", "h"))
    rc.connectivity.h = cfg.get_double("connectivity", "h", rc.connectivity.h);
  rc.connectivity.plateau_penalty =
      cfg.get_double("connectivity", "plateau_penalty", rc.connectivity.plateau_penalty);

  rc.langevin.eta = cfg.get_double("langevin", "eta", rc.langevin.eta);
  rc.langevin.tau = cfg.get_double("langevin", "tau", rc.langevin.tau);
  rc.langevin.k_opt = static_cast<int>(cfg.get_int("langevin", "k_opt", rc.langevin.k_opt));
  rc.langevin.seed = static_cast<uint64_t>(
      cfg.get_int("langevin", "seed", static_cast<long long>(hash_combine(rc.seed, 6))));
  rc.langevin.clamp_to_workspace =
      cfg.get_bool("langevin", "clamp_to_workspace", rc.langevin.clamp_to_workspace);

  rc.planner.n_max = static_cast<int>(cfg.get_int("planner", "n_max", rc.planner.n_max));
  rc.planner.batch_size =
      static_cast<int>(cfg.get_int("planner", "batch_size", rc.planner.batch_size));
  rc.planner.k_top = static_cast<int>(cfg.get_int("planner", "k_top", rc.planner.k_top));
  rc.planner.cost = parse_cost_variant(cfg.get_string("planner", "cost", "jseq"));
  const std::string check = cfg.get_string("planner", "check", "batch");
  if (check == "batch") rc.planner.check = CheckMode::Batch;
  else if (check == "sequential") rc.planner.check = CheckMode::Sequential;
  else throw std::runtime_error("config: unknown check mode '" + check + "'");
  rc.planner.include_direct_check =
      cfg.get_bool("planner", "include_direct_check", rc.planner.include_direct_check);

  rc.data.positives = static_cast<int>(cfg.get_int("data", "positives", rc.data.positives));
  rc.data.negative_ratio = cfg.get_double("data", "negative_ratio", rc.data.negative_ratio);
  rc.data.val_fraction = cfg.get_double("data", "val_fraction", rc.data.val_fraction);
  rc.data.pair_samples = static_cast<int>(cfg.get_int("data", "pair_samples", rc.data.pair_samples));

  {
    auto& ev = rc.eval;
    ev.onestep_episodes =
        static_cast<int>(cfg.get_int("eval", "onestep_episodes", ev.onestep_episodes));
    std::vector<long long> kt(ev.onestep_ktop.begin(), ev.onestep_ktop.end());
    kt = cfg.get_ints("eval", "onestep_ktop", kt);
    ev.onestep_ktop.assign(kt.begin(), kt.end());
    ev.multistep_episodes =
        static_cast<int>(cfg.get_int("eval", "multistep_episodes", ev.multistep_episodes));
    std::vector<long long> mkt(ev.multistep_ktop.begin(), ev.multistep_ktop.end());
    mkt = cfg.get_ints("eval", "multistep_ktop", mkt);
    ev.multistep_ktop.assign(mkt.begin(), mkt.end());
    ev.multistep_batch = static_cast<int>(cfg.get_int("eval", "multistep_batch", ev.multistep_batch));
    ev.sample_budget = static_cast<int>(cfg.get_int("eval", "sample_budget", ev.sample_budget));
    ev.grid_xy_step = cfg.get_double("eval", "grid_xy_step", ev.grid_xy_step);
    const double theta_deg = cfg.get_double("eval", "grid_theta_step_deg", -1.0);
    if (theta_deg > 0.0) ev.grid_theta_step = theta_deg * M_PI / 180.0;
    ev.ablate_steps = static_cast<int>(cfg.get_int("eval", "ablate_steps", ev.ablate_steps));
    std::vector<long long> subs(ev.ablate_subsets.begin(), ev.ablate_subsets.end());
    subs = cfg.get_ints("eval", "ablate_subsets", subs);
    ev.ablate_subsets.assign(subs.begin(), subs.end());
  }

  cfg.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_file(ConfigFile::parse_file(path));
}

SyntheticScene scene_for(const RunConfig& cfg) {
  if (!cfg.scene_file.empty()) return scene_load(cfg.scene_file);
  return scene_from_preset(cfg.scene_preset);
}

Pose parse_pose_spec(const std::string& spec, const SyntheticScene& scene) {
  if (spec.find(':') != std::string::npos) {
    const size_t colon = spec.find(':');
    const int placement = std::stoi(spec.substr(0, colon));
    const auto parts = split_list(spec.substr(colon + 1), ',');
    if (parts.size() != 3)
      throw std::runtime_error("pose spec: expected m:x,y,theta in '" + spec + "'");
    PlanarParams xi{std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
    return compose_intermediate_pose(scene.placement(placement), xi);
  }
  std::string cleaned = spec;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream in(cleaned);
  std::array<double, 12> a{};
  for (double& v : a) {
    if (!(in >> v)) throw std::runtime_error("pose spec: expected 12 numbers in '" + spec + "'");
  }
  const Pose pose = Pose::from_row_major(a);
  if (!pose.is_valid(1e-6)) throw std::runtime_error("pose spec: rotation is not orthonormal");
  return pose;
}

std::string out_path(const RunConfig& cfg, const std::string& filename) {
  return (fs::path(cfg.out_dir) / filename).string();
}

namespace {

void ensure_out_dir(const RunConfig& cfg) { fs::create_directories(cfg.out_dir); }

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing required file: " + path);
}

struct PoseSampler {
  const SyntheticScene& scene;
  std::mt19937_64 rng;
  std::uniform_int_distribution<int> placement_dist;
  std::uniform_real_distribution<double> xdist, ydist, tdist;

  PoseSampler(const SyntheticScene& s, uint64_t seed)
      : scene(s),
        rng(seed),
        placement_dist(1, static_cast<int>(s.placements.size())),
        xdist(s.bounds.x_min, s.bounds.x_max),
        ydist(s.bounds.y_min, s.bounds.y_max),
        tdist(0.0, 2.0 * M_PI) {}

  std::pair<int, PlanarParams> draw() {
    const int placement = placement_dist(rng);
    PlanarParams xi{xdist(rng), ydist(rng), tdist(rng)};
    return {placement, xi};
  }

  int draw_grasp(int count) {
    std::uniform_int_distribution<int> dist(0, count - 1);
    return dist(rng);
  }
};

json pose_json(const Pose& pose) {
  const auto a = pose.to_row_major();
  return json(std::vector<double>(a.begin(), a.end()));
}

Checkpoint load_run_checkpoint(const RunConfig& cfg) {
  const std::string path = out_path(cfg, "checkpoint.ebm");
  require_file(path);
  return checkpoint_load(path);
}

GraspSet load_run_grasps(const RunConfig& cfg) {
  const std::string path = out_path(cfg, "grasps.jsonl");
  require_file(path);
  return load_grasps_jsonl(path);
}

}  // namespace

double resolve_threshold(const RunConfig& cfg) {
  if (std::isfinite(cfg.connectivity.h)) return cfg.connectivity.h;
  const std::string path = out_path(cfg, "calibration.json");
  require_file(path);
  std::ifstream in(path);
  json j;
  in >> j;
  return j.at("h").get<double>();
}

void cmd_gen_data(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const SyntheticScene scene = scene_for(cfg);
  scene_save(scene, out_path(cfg, "scene.cfg"));

  const GraspSet grasps = sample_grasps(scene, cfg.grasp_count, cfg.grasp_seed());
  save_grasps_jsonl(grasps, out_path(cfg, "grasps.jsonl"));

  // Feasibility labels: uniform (pose, grasp) draws filled per class.
  const int want_pos = cfg.data.positives;
  const int want_neg = std::max(1, static_cast<int>(std::lround(cfg.data.negative_ratio * want_pos)));
  std::vector<FeasibilityLabel> positives, negatives;
  positives.reserve(static_cast<size_t>(want_pos));
  negatives.reserve(static_cast<size_t>(want_neg));
  PoseSampler sampler(scene, cfg.data_seed());
  const long long budget = 2000LL * (want_pos + want_neg);
  long long draws = 0;
  while (static_cast<int>(positives.size()) < want_pos ||
         static_cast<int>(negatives.size()) < want_neg) {
    if (++draws > budget)
      throw std::runtime_error("gen-data: label sampling budget exhausted after " +
                               std::to_string(draws - 1) + " draws");
    const auto [placement, xi] = sampler.draw();
    FeasibilityLabel label;
    label.pose = compose_intermediate_pose(scene.placement(placement), xi);
    label.grasp_id = sampler.draw_grasp(grasps.size());
    label.feasible = oracle_feasible(scene, label.pose, grasps.at(label.grasp_id));
    auto& bucket = label.feasible ? positives : negatives;
    const int want = label.feasible ? want_pos : want_neg;
    if (static_cast<int>(bucket.size()) < want) bucket.push_back(label);
  }

  auto split = [&](std::vector<FeasibilityLabel>& all, std::vector<FeasibilityLabel>& train,
                   std::vector<FeasibilityLabel>& val) {
    const size_t n_val = std::max<size_t>(
        1, static_cast<size_t>(std::lround(cfg.data.val_fraction * static_cast<double>(all.size()))));
    const size_t n_train = all.size() - n_val;
    train.insert(train.end(), all.begin(), all.begin() + static_cast<long>(n_train));
    val.insert(val.end(), all.begin() + static_cast<long>(n_train), all.end());
  };
  std::vector<FeasibilityLabel> train_labels, val_labels;
  split(positives, train_labels, val_labels);
  split(negatives, train_labels, val_labels);
  save_labels_jsonl(train_labels, out_path(cfg, "labels_train.jsonl"));
  save_labels_jsonl(val_labels, out_path(cfg, "labels_val.jsonl"));

  // Pose-pair validation set for threshold calibration.
  PoseSampler pair_sampler(scene, cfg.pair_seed());
  int shared_count = 0;
  std::ofstream pairs_out(out_path(cfg, "pairs_val.jsonl"));
  if (!pairs_out) throw std::runtime_error("gen-data: cannot open pairs_val.jsonl");
  long long pair_draws = 0;
  int emitted = 0;
  while (emitted < cfg.data.pair_samples ||
         shared_count == 0 || shared_count == emitted) {
    if (++pair_draws > budget)
      throw std::runtime_error("gen-data: pair sampling budget exhausted");
    const auto [pa, xa] = pair_sampler.draw();
    const auto [pb, xb] = pair_sampler.draw();
    const Pose pose_a = compose_intermediate_pose(scene.placement(pa), xa);
    const Pose pose_b = compose_intermediate_pose(scene.placement(pb), xb);
    const int grasp_id = pair_sampler.draw_grasp(grasps.size());
    const bool shared = oracle_feasible(scene, pose_a, grasps.at(grasp_id)) &&
                        oracle_feasible(scene, pose_b, grasps.at(grasp_id));
    json line = {{"pose_a", pose_json(pose_a)},
                 {"pose_b", pose_json(pose_b)},
                 {"grasp_id", grasp_id},
                 {"shared", shared}};
    pairs_out << line.dump() << "\n";
    shared_count += shared ? 1 : 0;
    ++emitted;
  }
  pairs_out.close();

  json manifest;
  manifest["scene"] = scene.name;
  manifest["seed"] = cfg.seed;
  manifest["seeds"] = {{"grasps", cfg.grasp_seed()},
                       {"labels", cfg.data_seed()},
                       {"pairs", cfg.pair_seed()}};
  manifest["counts"] = {{"grasps", grasps.size()},
                        {"positives", want_pos},
                        {"negatives", want_neg},
                        {"train", train_labels.size()},
                        {"validation", val_labels.size()},
                        {"pairs", emitted},
                        {"pairs_shared", shared_count}};
  manifest["files"] = {"scene.cfg", "grasps.jsonl", "labels_train.jsonl", "labels_val.jsonl",
                       "pairs_val.jsonl"};
  manifest["oracle"] = kOracleNote;
  std::ofstream mf(out_path(cfg, "manifest.json"));
  mf << manifest.dump(2) << "\n";
}

void cmd_train(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const GraspSet grasps = load_run_grasps(cfg);
  require_file(out_path(cfg, "labels_train.jsonl"));
  require_file(out_path(cfg, "labels_val.jsonl"));
  const auto train_labels = load_labels_jsonl(out_path(cfg, "labels_train.jsonl"));
  const auto val_labels = load_labels_jsonl(out_path(cfg, "labels_val.jsonl"));
  const LabeledDataset dataset =
      encode_dataset(train_labels, val_labels, grasps, cfg.model.include_width);

  const EnergyModel init(cfg.model.hidden, cfg.model.include_width, Activation::Selu,
                         cfg.train.seed);
  const TrainResult result = train(init, dataset, cfg.train);
  checkpoint_save(result.model, cfg.train.seed, out_path(cfg, "checkpoint.ebm"));

  json report;
  report["final_loss"] = result.final_loss;
  report["validation_separation"] = result.validation_separation;
  report["epochs"] = cfg.train.epochs;
  report["learning_rate"] = cfg.train.learning_rate;
  report["hidden"] = cfg.model.hidden;
  report["include_width"] = cfg.model.include_width;
  report["seed"] = cfg.train.seed;
  std::ofstream out(out_path(cfg, "train_report.json"));
  out << report.dump(2) << "\n";
}

CalibrationResult cmd_calibrate(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const GraspSet grasps = load_run_grasps(cfg);
  const Checkpoint ck = load_run_checkpoint(cfg);
  require_file(out_path(cfg, "pairs_val.jsonl"));

  std::vector<SharedPairSample> samples;
  std::ifstream in(out_path(cfg, "pairs_val.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    SharedPairSample sample;
    auto read_pose = [&](const char* key) {
      const auto v = j.at(key).get<std::vector<double>>();
      std::array<double, 12> a{};
      std::copy(v.begin(), v.end(), a.begin());
      return Pose::from_row_major(a);
    };
    sample.pose_a = read_pose("pose_a");
    sample.pose_b = read_pose("pose_b");
    sample.grasp_id = j.at("grasp_id").get<int>();
    sample.shared = j.at("shared").get<bool>();
    samples.push_back(sample);
  }

  const CalibrationResult result = calibrate_h(ck.model, grasps, samples);

  json report;
  report["h"] = result.h;
  report["f1"] = result.f1;
  report["precision"] = result.precision;
  report["recall"] = result.recall;
  report["samples"] = samples.size();
  report["oracle"] = kOracleNote;
  std::ofstream out(out_path(cfg, "calibration.json"));
  out << report.dump(2) << "\n";

  std::ofstream curve(out_path(cfg, "pr_curve.csv"));
  curve << "# " << kOracleNote << "\n";
  curve << "h,precision,recall,f1\n";
  curve.precision(17);
  for (const auto& p : result.curve)
    curve << p.h << "," << p.precision << "," << p.recall << "," << p.f1 << "\n";
  return result;
}

PlanResult cmd_plan(const RunConfig& cfg, const PlanInvocation& invocation) {
  ensure_out_dir(cfg);
  const SyntheticScene scene = scene_for(cfg);
  const GraspSet grasps = load_run_grasps(cfg);
  const Checkpoint ck = load_run_checkpoint(cfg);
  ConnectivityConfig ccfg = cfg.connectivity;
  ccfg.h = resolve_threshold(cfg);

  const Pose t_init = parse_pose_spec(invocation.init_spec, scene);
  const Pose t_goal = parse_pose_spec(invocation.goal_spec, scene);

  const PlanResult result =
      plan(scene, t_init, t_goal, ck.model, grasps, cfg.planner, cfg.langevin, ccfg, cfg.threads);

  json j = json::parse(plan_result_to_json(result));
  j["h"] = ccfg.h;
  j["cost_variant"] = variant_name(cfg.planner.cost);
  if (invocation.hard_check) {
    json hard;
    hard["oracle"] = kOracleNote;
    hard["pairs"] = json::array();
    bool all_pass = result.status == PlanStatus::Success;
    if (result.status == PlanStatus::Success) {
      SequenceCandidate cand;
      cand.steps = result.sequence;
      const std::vector<Pose> poses = chain_poses(scene, t_init, t_goal, cand);
      for (size_t m = 0; m + 1 < poses.size(); ++m) {
        const auto gt = shared_grasps_ground_truth(scene, poses[m], poses[m + 1], grasps);
        hard["pairs"].push_back({{"pair", m}, {"gt_shared_count", gt.size()},
                                 {"pass", !gt.empty()}});
        all_pass = all_pass && !gt.empty();
      }
    }
    hard["all_pass"] = all_pass;
    j["hard_check"] = hard;
  }
  std::ofstream out(out_path(cfg, "plan.json"));
  out << j.dump(2) << "\n";
  return result;
}

std::vector<Episode> sample_episodes(const FeasibilityGrid& grid, uint64_t seed, int count,
                                     const std::function<bool(std::optional<int>)>& accept,
                                     int budget, bool same_placement) {
  const SyntheticScene& scene = grid.scene();
  PoseSampler sampler(scene, seed);
  std::vector<Episode> episodes;
  int draws = 0;
  while (static_cast<int>(episodes.size()) < count) {
    if (++draws > budget)
      throw std::runtime_error("episode sampling budget exhausted: " + std::to_string(draws - 1) +
                               " draws produced " + std::to_string(episodes.size()) + "/" +
                               std::to_string(count) + " episodes");
    Episode ep;
    std::tie(ep.placement_init, ep.xi_init) = sampler.draw();
    std::tie(ep.placement_goal, ep.xi_goal) = sampler.draw();
    if (same_placement) ep.placement_goal = ep.placement_init;
    ep.t_init = compose_intermediate_pose(scene.placement(ep.placement_init), ep.xi_init);
    ep.t_goal = compose_intermediate_pose(scene.placement(ep.placement_goal), ep.xi_goal);
    ep.oracle_min = min_steps_oracle(grid, ep.t_init, ep.t_goal);
    if (accept(ep.oracle_min)) episodes.push_back(ep);
  }
  return episodes;
}

namespace {

bool hard_check_chain(const SyntheticScene& scene, const Pose& t_init, const Pose& t_goal,
                      const std::vector<SequenceStep>& steps, const GraspSet& grasps) {
  SequenceCandidate cand;
  cand.steps = steps;
  const std::vector<Pose> poses = chain_poses(scene, t_init, t_goal, cand);
  for (size_t m = 0; m + 1 < poses.size(); ++m)
    if (shared_grasps_ground_truth(scene, poses[m], poses[m + 1], grasps).empty()) return false;
  return true;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  out << "# " << kOracleNote << "\n";
  out << "episode,variant,ktop,threshold_success,hard_success,n,oracle_min,seconds\n";
  out.precision(17);
  for (const auto& row : report.rows) {
    out << row.episode << "," << row.variant << "," << row.ktop << ","
        << (row.threshold_success ? 1 : 0) << "," << (row.hard_success ? 1 : 0) << "," << row.n
        << "," << (row.oracle_min ? std::to_string(*row.oracle_min) : std::string("unreachable"))
        << "," << row.seconds << "\n";
  }
}

json summary_json(const MetricsReport& report) {
  json arr = json::array();
  for (const auto& entry : report.summary) {
    arr.push_back({{"variant", entry.variant},
                   {"ktop", entry.ktop},
                   {"sv", entry.sv},
                   {"st", entry.st},
                   {"sh", entry.sh},
                   {"el", entry.el},
                   {"et", entry.et}});
  }
  return arr;
}

}  // namespace

MetricsReport cmd_eval_onestep(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const SyntheticScene scene = scene_for(cfg);
  const GraspSet grasps = load_run_grasps(cfg);
  const Checkpoint ck = load_run_checkpoint(cfg);
  ConnectivityConfig ccfg = cfg.connectivity;
  ccfg.h = resolve_threshold(cfg);

  const FeasibilityGrid grid(scene, grasps,
                             GridSpec{cfg.eval.grid_xy_step, cfg.eval.grid_theta_step},
                             cfg.threads);
  const auto episodes = sample_episodes(
      grid, cfg.episode_seed(), cfg.eval.onestep_episodes,
      [](std::optional<int> steps) { return steps.has_value() && *steps == 1; },
      cfg.eval.sample_budget);

  MetricsReport report;
  const std::vector<CostVariant> variants{CostVariant::Full, CostVariant::Naive,
                                          CostVariant::Truncated};
  struct Tally {
    int hard = 0;
    int threshold = 0;
  };
  std::map<std::pair<std::string, int>, Tally> tallies;

  for (size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];

    // Ground-truth mid poses pushed through the same hard check; the GT row
    // of the summary must come out at 1.0 under the oracle.
    {
      const auto gt_mids = grid_ground_truth_midposes(grid, ep.t_init, ep.t_goal);
      bool gt_ok = false;
      if (!gt_mids.empty()) {
        const std::vector<SequenceStep> steps{{gt_mids.front().placement, gt_mids.front().xi}};
        gt_ok = hard_check_chain(scene, ep.t_init, ep.t_goal, steps, grasps);
      }
      tallies[{"gt", 0}].hard += gt_ok ? 1 : 0;
      tallies[{"gt", 0}].threshold += gt_mids.empty() ? 0 : 1;
      EpisodeRow row;
      row.episode = static_cast<int>(e);
      row.variant = "gt";
      row.threshold_success = !gt_mids.empty();
      row.hard_success = gt_ok;
      row.n = 1;
      row.oracle_min = ep.oracle_min;
      report.rows.push_back(row);
    }

    for (CostVariant variant : variants) {
      PlannerConfig pcfg = cfg.planner;
      pcfg.cost = variant;
      LangevinConfig lcfg = cfg.langevin;
      lcfg.seed = hash_combine(cfg.langevin.seed, static_cast<uint64_t>(e));
      const OptimizeResult opt = optimize_batch(scene, ep.t_init, ep.t_goal, 1, ck.model, grasps,
                                                pcfg, lcfg, ccfg, cfg.threads);
      for (int ktop : cfg.eval.onestep_ktop) {
        const int effective_ktop = std::min(ktop, pcfg.batch_size);
        const BatchVerifyResult vr = verify_batch(scene, ep.t_init, ep.t_goal, opt.batch,
                                                  opt.costs, ck.model, grasps, ccfg.h,
                                                  effective_ktop);
        EpisodeRow row;
        row.episode = static_cast<int>(e);
        row.variant = variant_name(variant);
        row.ktop = ktop;
        row.threshold_success = vr.best_index.has_value();
        if (vr.best_index) {
          row.hard_success = hard_check_chain(
              scene, ep.t_init, ep.t_goal, opt.batch[static_cast<size_t>(*vr.best_index)].steps,
              grasps);
          row.n = 1;
        }
        row.oracle_min = ep.oracle_min;
        report.rows.push_back(row);
        auto& tally = tallies[{row.variant, ktop}];
        tally.hard += row.hard_success ? 1 : 0;
        tally.threshold += row.threshold_success ? 1 : 0;
      }
    }
  }

  const double denom = static_cast<double>(episodes.size());
  for (const auto& [key, tally] : tallies) {
    MetricsSummaryEntry entry;
    entry.variant = key.first;
    entry.ktop = key.second;
    entry.sv = tally.hard / denom;
    entry.st = tally.threshold / denom;
    entry.sh = tally.hard / denom;
    entry.el = 1.0;
    report.summary.push_back(entry);
  }

  write_metrics_csv(out_path(cfg, "onestep.csv"), report);
  json j;
  j["protocol"] = {{"episodes", cfg.eval.onestep_episodes},
                   {"ktop_grid", cfg.eval.onestep_ktop},
                   {"batch", cfg.planner.batch_size},
                   {"h", ccfg.h}};
  j["oracle"] = kOracleNote;
  j["summary"] = summary_json(report);
  std::ofstream out(out_path(cfg, "onestep_report.json"));
  out << j.dump(2) << "\n";
  return report;
}

MetricsReport cmd_eval_multistep(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const SyntheticScene scene = scene_for(cfg);
  const GraspSet grasps = load_run_grasps(cfg);
  const Checkpoint ck = load_run_checkpoint(cfg);
  ConnectivityConfig ccfg = cfg.connectivity;
  ccfg.h = resolve_threshold(cfg);

  const FeasibilityGrid grid(scene, grasps,
                             GridSpec{cfg.eval.grid_xy_step, cfg.eval.grid_theta_step},
                             cfg.threads);
  const auto episodes = sample_episodes(
      grid, cfg.episode_seed(), cfg.eval.multistep_episodes,
      [](std::optional<int> steps) { return steps.has_value() && *steps >= 1; },
      cfg.eval.sample_budget);

  fs::create_directories(fs::path(cfg.out_dir) / "plans");
  MetricsReport report;
  for (int ktop : cfg.eval.multistep_ktop) {
    int st = 0, sh = 0;
    double el = 0.0, et = 0.0;
    for (size_t e = 0; e < episodes.size(); ++e) {
      const Episode& ep = episodes[e];
      PlannerConfig pcfg = cfg.planner;
      pcfg.batch_size = cfg.eval.multistep_batch;
      pcfg.k_top = std::min(ktop, pcfg.batch_size);
      LangevinConfig lcfg = cfg.langevin;
      lcfg.seed = hash_combine(cfg.langevin.seed, hash_combine(static_cast<uint64_t>(ktop), e));
      const PlanResult result = plan(scene, ep.t_init, ep.t_goal, ck.model, grasps, pcfg, lcfg,
                                     ccfg, cfg.threads);

      EpisodeRow row;
      row.episode = static_cast<int>(e);
      row.variant = variant_name(pcfg.cost);
      row.ktop = ktop;
      row.threshold_success = result.status == PlanStatus::Success;
      row.n = result.n;
      row.oracle_min = ep.oracle_min;
      row.seconds = result.wall_time_s;
      if (row.threshold_success) {
        row.hard_success = hard_check_chain(scene, ep.t_init, ep.t_goal, result.sequence, grasps);
        st += 1;
        sh += row.hard_success ? 1 : 0;
        el += result.n;
        et += result.wall_time_s;
      }
      report.rows.push_back(row);

      std::ofstream pf(out_path(cfg, "plans/ep" + std::to_string(e) + "_k" +
                                          std::to_string(ktop) + ".json"));
      pf << plan_result_to_json(result) << "\n";
    }
    MetricsSummaryEntry entry;
    entry.variant = variant_name(cfg.planner.cost);
    entry.ktop = ktop;
    entry.st = st / static_cast<double>(episodes.size());
    entry.sh = sh / static_cast<double>(episodes.size());
    entry.sv = entry.sh;
    entry.el = st > 0 ? el / st : 0.0;
    entry.et = st > 0 ? et / st : 0.0;
    report.summary.push_back(entry);
  }

  write_metrics_csv(out_path(cfg, "multistep.csv"), report);
  json j;
  j["protocol"] = {{"episodes", cfg.eval.multistep_episodes},
                   {"ktop", cfg.eval.multistep_ktop},
                   {"batch", cfg.eval.multistep_batch},
                   {"n_max", cfg.planner.n_max},
                   {"h", ccfg.h}};
  j["oracle"] = kOracleNote;
  j["summary"] = summary_json(report);
  std::ofstream out(out_path(cfg, "multistep_report.json"));
  out << j.dump(2) << "\n";
  return report;
}

void cmd_ablate_sweep(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const SyntheticScene scene = scene_for(cfg);
  const GraspSet grasps = load_run_grasps(cfg);
  const Checkpoint ck = load_run_checkpoint(cfg);
  ConnectivityConfig ccfg = cfg.connectivity;
  ccfg.h = resolve_threshold(cfg);

  const FeasibilityGrid grid(scene, grasps,
                             GridSpec{cfg.eval.grid_xy_step, cfg.eval.grid_theta_step},
                             cfg.threads);
  const auto episodes = sample_episodes(
      grid, cfg.episode_seed(), 1,
      [](std::optional<int> steps) { return steps.has_value() && *steps == 1; },
      cfg.eval.sample_budget, /*same_placement=*/true);
  const Episode& ep = episodes.front();

  std::ofstream out(out_path(cfg, "ablate.csv"));
  out << "# " << kOracleNote << "\n";
  out << "# sweep: " << cfg.eval.ablate_steps << " steps from goal to init, placement "
      << ep.placement_init << "\n";
  out << "step,cost_variant,grasp_count,value,grad_norm,gt_shared_count_pair_a,"
         "gt_shared_count_pair_b,gt_shared_count_chain\n";
  out.precision(17);

  const int steps = cfg.eval.ablate_steps;
  // Shortest-arc yaw interpolation.
  double dtheta = wrap_angle(ep.xi_init.theta) - wrap_angle(ep.xi_goal.theta);
  if (dtheta > M_PI) dtheta -= 2.0 * M_PI;
  if (dtheta < -M_PI) dtheta += 2.0 * M_PI;

  const std::vector<CostVariant> variants{CostVariant::Full, CostVariant::Naive,
                                          CostVariant::Truncated};
  for (int subset : cfg.eval.ablate_subsets) {
    const GraspSet sub = grasps.prefix(std::min(subset, grasps.size()));
    for (int k = 0; k < steps; ++k) {
      const double s = steps > 1 ? static_cast<double>(k) / (steps - 1) : 0.0;
      PlanarParams xi;
      xi.x = ep.xi_goal.x + s * (ep.xi_init.x - ep.xi_goal.x);
      xi.y = ep.xi_goal.y + s * (ep.xi_init.y - ep.xi_goal.y);
      xi.theta = wrap_angle(ep.xi_goal.theta) + s * dtheta;
      SequenceCandidate cand;
      cand.steps.push_back({ep.placement_init, xi});

      const Pose mid = compose_intermediate_pose(scene.placement(ep.placement_init), xi);
      const auto gt_a = shared_grasps_ground_truth(scene, ep.t_init, mid, sub);
      const auto gt_b = shared_grasps_ground_truth(scene, mid, ep.t_goal, sub);
      const size_t gt_chain = std::min(gt_a.size(), gt_b.size());

      const EnergyTable table =
          build_energy_table(scene, ep.t_init, ep.t_goal, cand, ck.model, sub, true);
      for (CostVariant variant : variants) {
        const ChainEval eval = eval_chain(table, ccfg, variant, true);
        out << k << "," << variant_name(variant) << "," << sub.size() << "," << eval.cost << ","
            << eval.grad.front().norm() << "," << gt_a.size() << "," << gt_b.size() << ","
            << gt_chain << "\n";
      }
    }
  }
}

}  // namespace regrasp
