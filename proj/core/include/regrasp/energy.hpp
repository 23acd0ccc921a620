#pragma once

#include "regrasp/pose.hpp"
#include "regrasp/world.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace regrasp {

// Anything that scores a (pose, grasp) pair with a scalar energy and exposes
// the energy gradient w.r.t. the pose encoding. Lower energy means more
// feasible. Implementations must be pure so read-only sharing across workers
// is safe.
class EnergySource {
 public:
  virtual ~EnergySource() = default;

  // Number of grasp-encoding columns the source expects (9 or 10).
  virtual int grasp_dim() const = 0;

  // energies: one entry per grasp row. dpose, when non-null, receives the
  // per-grasp gradient of the energy w.r.t. the 9 pose-encoding entries.
  virtual void eval_batch(const PoseEncoding& pose,
                          const Eigen::Ref<const Eigen::MatrixXd>& grasp_encs,
                          Eigen::VectorXd& energies, Eigen::MatrixXd* dpose) const = 0;
};

double energy_forward(const EnergySource& src, const PoseEncoding& pose,
                      const Eigen::VectorXd& grasp_enc);
PoseEncoding energy_grad_pose(const EnergySource& src, const PoseEncoding& pose,
                              const Eigen::VectorXd& grasp_enc);

enum class Activation : uint8_t { Selu = 0, Identity = 1 };

// Feed-forward energy network: input = pose encoding (9) + grasp encoding
// (9 or 10), three hidden layers, scalar output. The identity activation
// exists for tests that need an exactly linear model.
class EnergyModel final : public EnergySource {
 public:
  EnergyModel() = default;
  EnergyModel(const std::vector<int>& hidden_widths, bool include_width, Activation activation,
              uint64_t init_seed);

  int grasp_dim() const override { return include_width_ ? 10 : 9; }
  int input_dim() const { return 9 + grasp_dim(); }
  bool include_width() const { return include_width_; }
  Activation activation() const { return activation_; }

  // dims()[0] = input, dims().back() = 1.
  std::vector<int> dims() const;
  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  void eval_batch(const PoseEncoding& pose, const Eigen::Ref<const Eigen::MatrixXd>& grasp_encs,
                  Eigen::VectorXd& energies, Eigen::MatrixXd* dpose) const override;

  // Full-input batched forward; rows of `inputs` are samples.
  Eigen::VectorXd forward_inputs(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const;

  bool parameters_finite() const;

 private:
  friend struct LossEvaluator;

  bool include_width_ = true;
  Activation activation_ = Activation::Selu;
  std::vector<Eigen::MatrixXd> weights_;  // (out x in) per layer
  std::vector<Eigen::VectorXd> biases_;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 30;
  int batch_size = 128;          // positives per batch
  double alpha_reg = 0.1;        // weight of the energy-magnitude regularizer
  double negative_ratio = 1.0;   // negatives drawn per positive
  double margin = 1.0;           // contrastive margin
  uint64_t seed = 1;
  bool include_width = true;
};

struct DatasetSplit {
  Eigen::MatrixXd inputs;          // n x input_dim
  std::vector<uint8_t> feasible;   // n
  std::vector<int> positives, negatives;
};

struct LabeledDataset {
  DatasetSplit train;
  DatasetSplit validation;
};

LabeledDataset encode_dataset(const std::vector<FeasibilityLabel>& train_labels,
                              const std::vector<FeasibilityLabel>& validation_labels,
                              const GraspSet& grasps, bool include_width);

struct LossBreakdown {
  double total = 0.0;
  double nll = 0.0;
  double contrastive = 0.0;
  double reg = 0.0;
};

struct ParamGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// L_total = L_nll + L_con + alpha_reg * L_reg over one batch. The batch must
// contain at least one positive and one negative sample.
LossBreakdown loss_total(const EnergyModel& model,
                         const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                         const std::vector<uint8_t>& feasible, double margin, double alpha_reg,
                         ParamGrads* grads);

struct TrainResult {
  EnergyModel model;
  double final_loss = 0.0;
  // Mean validation energy of infeasible minus feasible samples.
  double validation_separation = 0.0;
};

// Plain SGD with a fixed step; deterministic for a fixed config.
// Throws on divergence, naming the epoch.
TrainResult train(const EnergyModel& init, const LabeledDataset& dataset, const TrainConfig& cfg);

// Versioned binary checkpoint with a trailing CRC32. Round-trips exactly.
void checkpoint_save(const EnergyModel& model, uint64_t seed, const std::string& path);
struct Checkpoint {
  EnergyModel model;
  uint64_t seed = 0;
};
Checkpoint checkpoint_load(const std::string& path);

}  // namespace regrasp
