#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/embedding_io.hpp"

namespace emoprobe {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training diverges (non-finite loss).
class TrainingError : public ModelError {
 public:
  using ModelError::ModelError;
};

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// "128:64:32" -> {128, 64, 32}.
std::vector<std::size_t> parse_preset(std::string_view preset);
std::string preset_name(std::span<const std::size_t> layer_dims);

struct ProbingConfig {
  std::vector<std::size_t> layer_dims{64, 32};
  std::size_t heads = 8;
  std::size_t input_dim = 768;
  std::size_t classes = 32;
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t max_doc_length = 128;  // informational; the encoder truncates

  std::size_t depth() const { return layer_dims.size(); }
  /// Input width of layer i (0-based): d0 for the first layer.
  std::size_t layer_input_dim(std::size_t layer) const {
    return layer == 0 ? input_dim : layer_dims[layer - 1];
  }
  /// d_l * k, the width of the pooled feature vector.
  std::size_t pooled_dim() const { return layer_dims.back() * heads; }
  void validate() const;

  bool operator==(const ProbingConfig&) const = default;
};

/// Every trainable tensor of the probing network. Also used for gradients and
/// optimizer moments, which share the same shapes.
struct ProbingParameters {
  /// Indexed layer * heads + head; shape layer_input_dim(layer) x layer_dims[layer].
  std::vector<Eigen::MatrixXd> heads;
  Eigen::MatrixXd output_weight;  // pooled_dim x classes
  Eigen::VectorXd output_bias;    // classes

  static ProbingParameters zeros(const ProbingConfig& cfg);

  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  std::size_t size() const;
};

class ProbingNetwork {
 public:
  /// All-zero weights; see init_network for the random initialization.
  explicit ProbingNetwork(ProbingConfig cfg);

  const ProbingConfig& config() const { return cfg_; }
  ProbingParameters& params() { return params_; }
  const ProbingParameters& params() const { return params_; }

  Eigen::MatrixXd& head_weight(std::size_t layer, std::size_t head) {
    return params_.heads.at(layer * cfg_.heads + head);
  }
  const Eigen::MatrixXd& head_weight(std::size_t layer, std::size_t head) const {
    return params_.heads.at(layer * cfg_.heads + head);
  }
  Eigen::MatrixXd& output_weight() { return params_.output_weight; }
  const Eigen::MatrixXd& output_weight() const { return params_.output_weight; }
  Eigen::VectorXd& output_bias() { return params_.output_bias; }
  const Eigen::VectorXd& output_bias() const { return params_.output_bias; }

  std::size_t parameter_count() const { return params_.size(); }

 private:
  ProbingConfig cfg_;
  ProbingParameters params_;
};

/// Glorot-uniform head and output weights, zero output bias, seeded by cfg.seed.
ProbingNetwork init_network(const ProbingConfig& cfg);

struct ForwardTrace {
  /// e_ij, indexed layer * heads + head.
  std::vector<Eigen::VectorXd> activations;
  Eigen::VectorXd pooled;  // g_l, L2-normalized concatenation of the last layer
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
};

ForwardTrace forward(const ProbingNetwork& net, std::span<const double> e0);
ForwardTrace forward(const ProbingNetwork& net, std::span<const float> e0);

/// Row-wise forward pass over a batch (one document per row).
struct BatchForward {
  std::vector<Eigen::MatrixXd> activations;  // layer * heads + head; B x d_i
  Eigen::MatrixXd pooled_raw;                // B x pooled_dim, before normalization
  Eigen::VectorXd pooled_norm;               // floored L2 norms of pooled_raw rows
  Eigen::MatrixXd pooled;                    // g_l rows
  Eigen::MatrixXd logits;                    // B x classes
  Eigen::MatrixXd probabilities;
};

BatchForward forward_batch(const ProbingNetwork& net, const Eigen::MatrixXd& inputs);

/// Rows of the embedding matrix as doubles.
Eigen::MatrixXd to_matrix(const EmbeddingMatrix& m);
Eigen::MatrixXd to_matrix(const EmbeddingMatrix& m, std::span<const std::size_t> rows);

/// Mean softmax cross-entropy over the batch. When grad is non-null it receives
/// the gradient of that mean with respect to every parameter.
double loss_and_gradient(const ProbingNetwork& net, const Eigen::MatrixXd& inputs,
                         std::span<const std::size_t> labels, ProbingParameters* grad);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> dev_accuracy;
};

struct TrainResult {
  ProbingNetwork network;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
};

struct LabeledSet {
  const EmbeddingMatrix& embeddings;
  std::span<const std::size_t> labels;
};

/// Adam (0.9, 0.999, 1e-8) on mean cross-entropy with per-epoch seeded shuffling.
/// With a dev set, returns the snapshot of the epoch with the highest dev accuracy.
TrainResult train(const ProbingNetwork& initial, const LabeledSet& train_set,
                  const std::optional<LabeledSet>& dev = std::nullopt);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct Evaluation {
  double accuracy = 0.0;
  CountMatrix confusion;  // [gold][predicted]
  std::vector<std::size_t> predictions;
};

std::vector<std::size_t> predict(const ProbingNetwork& net, const EmbeddingMatrix& inputs);
Evaluation evaluate(const ProbingNetwork& net, const EmbeddingMatrix& inputs,
                    std::span<const std::size_t> labels);
Evaluation evaluate_predictions(std::span<const std::size_t> predictions,
                                std::span<const std::size_t> labels, std::size_t classes);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;  // flat index over ProbingParameters::blocks()
  std::size_t parameters_checked = 0;
};

/// Central finite differences against the analytic gradient for every parameter.
/// Relative error is |a - f| / max(|a|, |f|, 1e-12).
GradCheckReport grad_check(const ProbingNetwork& net, std::span<const double> e0,
                           std::size_t label, double epsilon = 1e-5);

}  // namespace emoprobe
