#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/dataset.hpp"
#include "emoprobe/probing_model.hpp"

namespace emoprobe {

/// One n x (d_i * k) matrix per probing layer: concat(e_i1 ... e_ik), unnormalized.
std::vector<Eigen::MatrixXd> extract_layer_features(const ProbingNetwork& net,
                                                    const EmbeddingMatrix& embeddings);

/// Multinomial logistic regression over one layer's features.
struct LayerProbe {
  std::size_t layer_index = 0;  // 1-based, as in l_1 .. l_L
  Eigen::MatrixXd weights;      // features x classes
  Eigen::VectorXd bias;         // classes

  std::vector<std::size_t> predict(const Eigen::MatrixXd& features) const;
};

struct ProbeTrainingOptions {
  double reg = 1e-3;
  double gradient_tolerance = 1e-5;  // stop when the max-abs gradient falls below
  std::size_t max_iterations = 5000;
};

struct ProbeTrainingReport {
  std::size_t iterations = 0;
  double final_gradient_norm = 0.0;  // infinity norm
  double final_objective = 0.0;
  bool converged = false;
};

/// Full-batch gradient descent on mean cross-entropy + reg * |W|^2 (bias unpenalized).
LayerProbe train_layer_probe(const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                             std::size_t classes, std::size_t layer_index,
                             const ProbeTrainingOptions& options = {},
                             ProbeTrainingReport* report = nullptr);

/// Percent confusion: P[g][p] = 100 * |gold g, predicted p| / |gold g|.
struct ConfusionTable {
  std::size_t layer_index = 0;
  Eigen::MatrixXd percent;
  std::vector<std::size_t> absent_classes;  // gold classes with no documents (zero rows)
};

ConfusionTable confusion_percent(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> gold, std::size_t classes,
                                 std::size_t layer_index);
ConfusionTable confusion_percent(const LayerProbe& probe, const Eigen::MatrixXd& features,
                                 std::span<const std::size_t> gold, std::size_t classes);

/// L(g, p) = P_j[g][p] - P_i[g][p] for the adjacent layers i < j.
double drift_L(const ConfusionTable& lower, const ConfusionTable& upper, std::size_t g,
               std::size_t p);
/// H(s, t) = L(s, t) - L(t, s).
double drift_H(const ConfusionTable& lower, const ConfusionTable& upper, std::size_t s,
               std::size_t t);

Eigen::MatrixXd drift_L_matrix(const ConfusionTable& lower, const ConfusionTable& upper);
Eigen::MatrixXd drift_H_matrix(const ConfusionTable& lower, const ConfusionTable& upper);

enum class EdgeKind { lower_pair, upper_pair, both };  // H12 only, H23 only, both

struct GraphEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  EdgeKind kind = EdgeKind::lower_pair;
  double score_lower = 0.0;  // H12(s, t)
  double score_upper = 0.0;  // H23(s, t)
};

struct EmotionGraph {
  std::vector<std::string> nodes;
  std::vector<GraphEdge> edges;  // sorted by (source, target)
  double threshold = 2.0;

  /// Graphviz text: dashed for H12-only, solid for H23-only, bold for both.
  std::string to_dot() const;
};

/// Edge s -> t when H(s, t) >= threshold in either matrix.
EmotionGraph build_emotion_graph(const Eigen::MatrixXd& h_lower, const Eigen::MatrixXd& h_upper,
                                 const LabelSpace& labels, double threshold = 2.0);

/// Matrix as TSV with an emotion-name header row and first column.
std::string matrix_tsv(const Eigen::MatrixXd& m, const LabelSpace& labels);

struct LayerAnalysisOptions {
  ProbeTrainingOptions probe;
  double threshold = 2.0;
};

struct LayerAnalysis {
  std::vector<ConfusionTable> tables;      // one per probing layer
  std::vector<Eigen::MatrixXd> drift_L;    // per adjacent pair (i, i+1)
  std::vector<Eigen::MatrixXd> drift_H;
  std::vector<double> probe_accuracy;      // dev accuracy per layer probe
  std::vector<ProbeTrainingReport> probe_reports;
  EmotionGraph graph;
};

/// Trains one probe per layer on the training features, tests on dev, and builds
/// the graph from the first two adjacent-pair H matrices (H23 is zero for 2 layers).
LayerAnalysis analyze_layers(const ProbingNetwork& net, const LabelSpace& labels,
                             const LabeledSet& train_set, const LabeledSet& dev_set,
                             const LayerAnalysisOptions& options = {});

}  // namespace emoprobe
