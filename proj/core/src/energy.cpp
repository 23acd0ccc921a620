#include "regrasp/energy.hpp"

#include "regrasp/random.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace regrasp {

namespace {

constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline double act_value(Activation a, double z) {
  if (a == Activation::Identity) return z;
  return z > 0.0 ? kSeluLambda * z : kSeluLambda * kSeluAlpha * std::expm1(z);
}

// Derivative from the activation input; lambda at the kink.
inline double act_deriv(Activation a, double z) {
  if (a == Activation::Identity) return 1.0;
  return z > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(z);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

double energy_forward(const EnergySource& src, const PoseEncoding& pose,
                      const Eigen::VectorXd& grasp_enc) {
  if (grasp_enc.size() != src.grasp_dim())
    throw std::invalid_argument("energy_forward: grasp encoding dimension mismatch");
  Eigen::VectorXd energies;
  src.eval_batch(pose, grasp_enc.transpose(), energies, nullptr);
  return energies(0);
}

PoseEncoding energy_grad_pose(const EnergySource& src, const PoseEncoding& pose,
                              const Eigen::VectorXd& grasp_enc) {
  if (grasp_enc.size() != src.grasp_dim())
    throw std::invalid_argument("energy_grad_pose: grasp encoding dimension mismatch");
  Eigen::VectorXd energies;
  Eigen::MatrixXd dpose;
  src.eval_batch(pose, grasp_enc.transpose(), energies, &dpose);
  return dpose.row(0).transpose();
}

EnergyModel::EnergyModel(const std::vector<int>& hidden_widths, bool include_width,
                         Activation activation, uint64_t init_seed)
    : include_width_(include_width), activation_(activation) {
  std::vector<int> dims;
  dims.push_back(9 + (include_width ? 10 : 9));
  for (int h : hidden_widths) {
    if (h < 1) throw std::invalid_argument("EnergyModel: hidden width must be >= 1");
    dims.push_back(h);
  }
  dims.push_back(1);

  std::mt19937_64 rng(init_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    // LeCun normal keeps SELU in its self-normalizing regime.
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = scale * normal(rng);
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(out));
  }
}

std::vector<int> EnergyModel::dims() const {
  std::vector<int> d;
  if (weights_.empty()) return d;
  d.push_back(static_cast<int>(weights_.front().cols()));
  for (const auto& w : weights_) d.push_back(static_cast<int>(w.rows()));
  return d;
}

void EnergyModel::eval_batch(const PoseEncoding& pose,
                             const Eigen::Ref<const Eigen::MatrixXd>& grasp_encs,
                             Eigen::VectorXd& energies, Eigen::MatrixXd* dpose) const {
  if (grasp_encs.cols() != grasp_dim())
    throw std::invalid_argument("EnergyModel: grasp encoding dimension mismatch");
  const Eigen::Index k = grasp_encs.rows();
  Eigen::MatrixXd x(k, input_dim());
  x.leftCols<9>() = pose.transpose().replicate(k, 1);
  x.rightCols(grasp_dim()) = grasp_encs;

  const size_t layers = weights_.size();
  std::vector<Eigen::MatrixXd> pre(layers);   // pre-activations
  Eigen::MatrixXd a = std::move(x);
  for (size_t l = 0; l < layers; ++l) {
    pre[l].noalias() = a * weights_[l].transpose();
    pre[l].rowwise() += biases_[l].transpose();
    if (l + 1 < layers) {
      a = pre[l].unaryExpr([this](double z) { return act_value(activation_, z); });
    }
  }
  energies = pre.back().col(0);

  if (dpose != nullptr) {
    // Backprop d energy / d input, then keep the pose block.
    Eigen::MatrixXd delta = Eigen::MatrixXd::Ones(k, 1);
    for (size_t l = layers; l-- > 0;) {
      Eigen::MatrixXd next(k, weights_[l].cols());
      next.noalias() = delta * weights_[l];
      if (l > 0) {
        next.array() *= pre[l - 1]
                            .unaryExpr([this](double z) { return act_deriv(activation_, z); })
                            .array();
      }
      delta = std::move(next);
    }
    *dpose = delta.leftCols<9>();
  }
}

Eigen::VectorXd EnergyModel::forward_inputs(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const {
  if (inputs.cols() != input_dim())
    throw std::invalid_argument("EnergyModel: input dimension mismatch");
  const size_t layers = weights_.size();
  Eigen::MatrixXd a = inputs;
  for (size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = a * weights_[l].transpose();
    z.rowwise() += biases_[l].transpose();
    if (l + 1 < layers)
      a = z.unaryExpr([this](double v) { return act_value(activation_, v); });
    else
      a = std::move(z);
  }
  return a.col(0);
}

bool EnergyModel::parameters_finite() const {
  for (const auto& w : weights_)
    if (!w.allFinite()) return false;
  for (const auto& b : biases_)
    if (!b.allFinite()) return false;
  return true;
}

LabeledDataset encode_dataset(const std::vector<FeasibilityLabel>& train_labels,
                              const std::vector<FeasibilityLabel>& validation_labels,
                              const GraspSet& grasps, bool include_width) {
  const int gdim = include_width ? 10 : 9;
  auto encode_split = [&](const std::vector<FeasibilityLabel>& labels) {
    DatasetSplit split;
    split.inputs.resize(static_cast<Eigen::Index>(labels.size()), 9 + gdim);
    split.feasible.resize(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
      const auto& label = labels[i];
      const Eigen::Index row = static_cast<Eigen::Index>(i);
      split.inputs.row(row).head<9>() = encode_pose(label.pose);
      split.inputs.row(row).tail(gdim) =
          grasps.encodings().row(label.grasp_id).head(gdim);
      split.feasible[i] = label.feasible ? 1 : 0;
      (label.feasible ? split.positives : split.negatives).push_back(static_cast<int>(i));
    }
    return split;
  };
  LabeledDataset ds;
  ds.train = encode_split(train_labels);
  ds.validation = encode_split(validation_labels);
  return ds;
}

struct LossEvaluator {
  // Forward with cached activations, upstream dL/dE, then parameter grads.
  static void param_grads(const EnergyModel& model,
                          const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                          const Eigen::VectorXd& denergy, ParamGrads& grads) {
    const size_t layers = model.weights_.size();
    std::vector<Eigen::MatrixXd> pre(layers);
    std::vector<Eigen::MatrixXd> act(layers + 1);
    act[0] = inputs;
    for (size_t l = 0; l < layers; ++l) {
      pre[l].noalias() = act[l] * model.weights_[l].transpose();
      pre[l].rowwise() += model.biases_[l].transpose();
      if (l + 1 < layers)
        act[l + 1] =
            pre[l].unaryExpr([&](double z) { return act_value(model.activation_, z); });
    }

    grads.weights.resize(layers);
    grads.biases.resize(layers);
    Eigen::MatrixXd delta = denergy;  // k x 1, dL/d output pre-activation
    for (size_t l = layers; l-- > 0;) {
      grads.weights[l].noalias() = delta.transpose() * act[l];
      grads.biases[l] = delta.colwise().sum().transpose();
      if (l > 0) {
        Eigen::MatrixXd next(delta.rows(), model.weights_[l].cols());
        next.noalias() = delta * model.weights_[l];
        next.array() *= pre[l - 1]
                            .unaryExpr([&](double z) { return act_deriv(model.activation_, z); })
                            .array();
        delta = std::move(next);
      }
    }
  }
};

LossBreakdown loss_total(const EnergyModel& model,
                         const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                         const std::vector<uint8_t>& feasible, double margin, double alpha_reg,
                         ParamGrads* grads) {
  const Eigen::Index n = inputs.rows();
  if (static_cast<Eigen::Index>(feasible.size()) != n)
    throw std::invalid_argument("loss_total: label count mismatch");
  std::vector<int> pos, neg;
  for (Eigen::Index i = 0; i < n; ++i) (feasible[static_cast<size_t>(i)] ? pos : neg).push_back(static_cast<int>(i));
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("loss_total: batch needs at least one positive and one negative");

  const Eigen::VectorXd energy = model.forward_inputs(inputs);
  Eigen::VectorXd denergy = Eigen::VectorXd::Zero(n);
  LossBreakdown loss;

  // L_nll: mean positive energy plus the in-batch log partition.
  const double zmax = (-energy).maxCoeff();
  const Eigen::ArrayXd shifted = (-energy.array() - zmax).exp();
  const double zsum = shifted.sum();
  const double log_partition = zmax + std::log(zsum);
  double pos_mean = 0.0;
  for (int i : pos) pos_mean += energy(i);
  pos_mean /= static_cast<double>(pos.size());
  loss.nll = pos_mean + log_partition;
  for (int i : pos) denergy(i) += 1.0 / static_cast<double>(pos.size());
  denergy.array() -= shifted / zsum;  // d log_partition / dE_i = -softmax(-E)_i

  // L_con: softplus(margin + E_pos - E_neg) over all positive/negative pairs.
  const double pair_count = static_cast<double>(pos.size()) * static_cast<double>(neg.size());
  for (int p : pos) {
    for (int q : neg) {
      const double arg = margin + energy(p) - energy(q);
      loss.contrastive += softplus(arg);
      const double s = sigmoid(arg);
      denergy(p) += s / pair_count;
      denergy(q) -= s / pair_count;
    }
  }
  loss.contrastive /= pair_count;

  // L_reg: mean squared energy.
  loss.reg = energy.squaredNorm() / static_cast<double>(n);
  denergy += (2.0 * alpha_reg / static_cast<double>(n)) * energy;

  loss.total = loss.nll + loss.contrastive + alpha_reg * loss.reg;
  if (grads != nullptr) LossEvaluator::param_grads(model, inputs, denergy, *grads);
  return loss;
}

TrainResult train(const EnergyModel& init, const LabeledDataset& dataset, const TrainConfig& cfg) {
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("train: learning rate must be >= 0");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  const auto& split = dataset.train;
  if (split.positives.empty() || split.negatives.empty())
    throw std::invalid_argument("train: training split needs both classes");
  if (dataset.validation.positives.empty() || dataset.validation.negatives.empty())
    throw std::invalid_argument("train: validation split needs both classes");

  TrainResult result;
  result.model = init;
  EnergyModel& model = result.model;
  const int neg_per_batch =
      std::max(1, static_cast<int>(std::lround(cfg.negative_ratio * cfg.batch_size)));

  std::vector<int> pos = split.positives;
  std::vector<int> neg = split.negatives;
  double last_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(hash_combine(cfg.seed, static_cast<uint64_t>(epoch)));
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);

    size_t neg_cursor = 0;
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < pos.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t pos_count = std::min(pos.size() - start, static_cast<size_t>(cfg.batch_size));
      const size_t total = pos_count + static_cast<size_t>(neg_per_batch);
      Eigen::MatrixXd inputs(static_cast<Eigen::Index>(total), split.inputs.cols());
      std::vector<uint8_t> labels(total);
      for (size_t i = 0; i < pos_count; ++i) {
        inputs.row(static_cast<Eigen::Index>(i)) = split.inputs.row(pos[start + i]);
        labels[i] = 1;
      }
      for (size_t i = 0; i < static_cast<size_t>(neg_per_batch); ++i) {
        inputs.row(static_cast<Eigen::Index>(pos_count + i)) =
            split.inputs.row(neg[neg_cursor % neg.size()]);
        labels[pos_count + i] = 0;
        ++neg_cursor;
      }

      ParamGrads grads;
      const LossBreakdown loss =
          loss_total(model, inputs, labels, cfg.margin, cfg.alpha_reg, &grads);
      if (!std::isfinite(loss.total))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      for (size_t l = 0; l < model.weights().size(); ++l) {
        model.weights()[l].noalias() -= cfg.learning_rate * grads.weights[l];
        model.biases()[l].noalias() -= cfg.learning_rate * grads.biases[l];
      }
      if (!model.parameters_finite())
        throw std::runtime_error("train: parameters diverged at epoch " + std::to_string(epoch));
      epoch_loss += loss.total;
      ++batches;
    }
    last_loss = batches > 0 ? epoch_loss / batches : 0.0;
  }
  result.final_loss = last_loss;

  const Eigen::VectorXd val_energy = model.forward_inputs(dataset.validation.inputs);
  double pos_mean = 0.0, neg_mean = 0.0;
  for (int i : dataset.validation.positives) pos_mean += val_energy(i);
  for (int i : dataset.validation.negatives) neg_mean += val_energy(i);
  pos_mean /= static_cast<double>(dataset.validation.positives.size());
  neg_mean /= static_cast<double>(dataset.validation.negatives.size());
  result.validation_separation = neg_mean - pos_mean;
  return result;
}

namespace {

constexpr char kMagic[4] = {'E', 'B', 'M', 'R'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& off) {
  if (off + sizeof(T) > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void checkpoint_save(const EnergyModel& model, uint64_t seed, const std::string& path) {
  if (!model.parameters_finite())
    throw std::runtime_error("checkpoint_save: model has non-finite parameters");
  const std::vector<int> dims = model.dims();
  if (dims.empty()) throw std::runtime_error("checkpoint_save: empty model");

  std::string buf;
  buf.append(kMagic, 4);
  put(buf, kVersion);
  put(buf, static_cast<uint32_t>(model.weights().size()));
  for (int d : dims) put(buf, static_cast<uint32_t>(d));
  put(buf, static_cast<uint8_t>(model.include_width() ? 1 : 0));
  put(buf, static_cast<uint8_t>(model.activation()));
  put(buf, static_cast<uint16_t>(0));
  put(buf, seed);
  for (size_t l = 0; l < model.weights().size(); ++l) {
    const Eigen::MatrixXd& w = model.weights()[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) put(buf, w(r, c));
    const Eigen::VectorXd& b = model.biases()[l];
    for (Eigen::Index r = 0; r < b.size(); ++r) put(buf, b(r));
  }
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  put(buf, crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint_save: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint_load: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 + sizeof(uint32_t) * 2 + sizeof(uint32_t))
    throw std::runtime_error("checkpoint_load: truncated file");

  const uint32_t stored_crc = [&] {
    uint32_t v;
    std::memcpy(&v, buf.data() + buf.size() - sizeof(uint32_t), sizeof(uint32_t));
    return v;
  }();
  const uint32_t crc = static_cast<uint32_t>(crc32(
      0L, reinterpret_cast<const Bytef*>(buf.data()),
      static_cast<uInt>(buf.size() - sizeof(uint32_t))));
  if (crc != stored_crc) throw std::runtime_error("checkpoint_load: CRC mismatch");

  size_t off = 0;
  char magic[4];
  std::memcpy(magic, buf.data(), 4);
  off = 4;
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint_load: bad magic bytes");
  const uint32_t version = take<uint32_t>(buf, off);
  if (version != kVersion)
    throw std::runtime_error("checkpoint_load: unsupported version " + std::to_string(version));
  const uint32_t layers = take<uint32_t>(buf, off);
  if (layers == 0 || layers > 64) throw std::runtime_error("checkpoint_load: bad layer count");
  std::vector<int> dims(layers + 1);
  for (auto& d : dims) {
    d = static_cast<int>(take<uint32_t>(buf, off));
    if (d < 1 || d > 1 << 20) throw std::runtime_error("checkpoint_load: bad layer dim");
  }
  const uint8_t include_width = take<uint8_t>(buf, off);
  const uint8_t activation = take<uint8_t>(buf, off);
  (void)take<uint16_t>(buf, off);
  const uint64_t seed = take<uint64_t>(buf, off);
  if (activation > 1) throw std::runtime_error("checkpoint_load: bad activation id");
  const int expected_input = 9 + (include_width ? 10 : 9);
  if (dims.front() != expected_input || dims.back() != 1)
    throw std::runtime_error("checkpoint_load: inconsistent dims");

  Checkpoint ck;
  ck.seed = seed;
  ck.model = EnergyModel(std::vector<int>(dims.begin() + 1, dims.end() - 1), include_width != 0,
                         static_cast<Activation>(activation), 0);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Eigen::MatrixXd w(dims[l + 1], dims[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = take<double>(buf, off);
    Eigen::VectorXd b(dims[l + 1]);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = take<double>(buf, off);
    ck.model.weights()[l] = std::move(w);
    ck.model.biases()[l] = std::move(b);
  }
  if (off + sizeof(uint32_t) != buf.size())
    throw std::runtime_error("checkpoint_load: trailing bytes");
  if (!ck.model.parameters_finite())
    throw std::runtime_error("checkpoint_load: non-finite parameters");
  return ck;
}

}  // namespace regrasp
