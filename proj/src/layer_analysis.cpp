#include "emoprobe/layer_analysis.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace emoprobe {

std::vector<Eigen::MatrixXd> extract_layer_features(const ProbingNetwork& net,
                                                    const EmbeddingMatrix& embeddings) {
  const auto& cfg = net.config();
  std::vector<Eigen::MatrixXd> out(cfg.depth());
  const auto n = static_cast<Eigen::Index>(embeddings.rows());
  for (std::size_t i = 0; i < cfg.depth(); ++i) {
    out[i].resize(n, static_cast<Eigen::Index>(cfg.layer_dims[i] * cfg.heads));
  }
  if (n == 0) return out;
  const BatchForward fw = forward_batch(net, to_matrix(embeddings));
  for (std::size_t i = 0; i < cfg.depth(); ++i) {
    const auto width = static_cast<Eigen::Index>(cfg.layer_dims[i]);
    for (std::size_t j = 0; j < cfg.heads; ++j) {
      out[i].middleCols(static_cast<Eigen::Index>(j) * width, width) =
          fw.activations[i * cfg.heads + j];
    }
  }
  return out;
}

std::vector<std::size_t> LayerProbe::predict(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd logits = features * weights;
  logits.rowwise() += bias.transpose();
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    out.push_back(static_cast<std::size_t>(best));
  }
  return out;
}

namespace {

// Largest eigenvalue of A^T A / n for A = [features | 1], by power iteration.
double gram_spectral_bound(const Eigen::MatrixXd& features) {
  const Eigen::Index d = features.cols() + 1;
  const double inv_n = 1.0 / static_cast<double>(features.rows());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d) / std::sqrt(static_cast<double>(d));
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd av = features * v.head(d - 1) + Eigen::VectorXd::Constant(features.rows(), v(d - 1));
    Eigen::VectorXd w(d);
    w.head(d - 1) = features.transpose() * av;
    w(d - 1) = av.sum();
    w *= inv_n;
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - lambda) <= 1e-9 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

LayerProbe train_layer_probe(const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                             std::size_t classes, std::size_t layer_index,
                             const ProbeTrainingOptions& options, ProbeTrainingReport* report) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ModelError("train_layer_probe: features and labels differ in length");
  }
  if (labels.empty()) throw ModelError("train_layer_probe: empty training set");
  if (!features.allFinite()) throw ModelError("train_layer_probe: non-finite features");
  for (std::size_t y : labels) {
    if (y >= classes) throw ModelError(fmt::format("train_layer_probe: label {} out of range", y));
  }
  const Eigen::Index n = features.rows();
  const auto m = static_cast<Eigen::Index>(classes);
  const double inv_n = 1.0 / static_cast<double>(n);

  LayerProbe probe;
  probe.layer_index = layer_index;
  probe.weights = Eigen::MatrixXd::Zero(features.cols(), m);
  probe.bias = Eigen::VectorXd::Zero(m);

  // Softmax cross-entropy curvature is bounded by half the Gram spectrum.
  const double lipschitz = 0.5 * gram_spectral_bound(features) + 2.0 * options.reg;
  const double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;

  Eigen::MatrixXd logits, probs, grad_w;
  Eigen::VectorXd grad_b;
  ProbeTrainingReport rep;
  for (std::size_t it = 0;; ++it) {
    logits.noalias() = features * probe.weights;
    logits.rowwise() += probe.bias.transpose();
    probs.resize(n, m);
    double loss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double mx = logits.row(r).maxCoeff();
      probs.row(r) = (logits.row(r).array() - mx).exp();
      const double z = probs.row(r).sum();
      probs.row(r) /= z;
      loss += mx + std::log(z) - logits(r, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]));
      probs(r, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)])) -= 1.0;
    }
    probs *= inv_n;
    grad_w.noalias() = features.transpose() * probs;
    grad_w += 2.0 * options.reg * probe.weights;
    grad_b = probs.colwise().sum().transpose();
    rep.final_objective = loss * inv_n + options.reg * probe.weights.squaredNorm();
    rep.final_gradient_norm = std::max(grad_w.cwiseAbs().maxCoeff(), grad_b.cwiseAbs().maxCoeff());
    rep.iterations = it;
    if (rep.final_gradient_norm < options.gradient_tolerance) {
      rep.converged = true;
      break;
    }
    if (it >= options.max_iterations) break;
    probe.weights -= step * grad_w;
    probe.bias -= step * grad_b;
  }
  if (report) *report = rep;
  return probe;
}

ConfusionTable confusion_percent(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> gold, std::size_t classes,
                                 std::size_t layer_index) {
  if (gold.empty()) throw ModelError("confusion_percent: empty evaluation set");
  if (predictions.size() != gold.size()) {
    throw ModelError("confusion_percent: predictions and gold differ in length");
  }
  const auto m = static_cast<Eigen::Index>(classes);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= classes || predictions[i] >= classes) {
      throw ModelError("confusion_percent: class index out of range");
    }
    counts(static_cast<Eigen::Index>(gold[i]), static_cast<Eigen::Index>(predictions[i])) += 1.0;
  }
  ConfusionTable table;
  table.layer_index = layer_index;
  table.percent = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index g = 0; g < m; ++g) {
    const double total = counts.row(g).sum();
    if (total == 0.0) {
      table.absent_classes.push_back(static_cast<std::size_t>(g));
      continue;
    }
    table.percent.row(g) = counts.row(g) * (100.0 / total);
  }
  return table;
}

ConfusionTable confusion_percent(const LayerProbe& probe, const Eigen::MatrixXd& features,
                                 std::span<const std::size_t> gold, std::size_t classes) {
  if (features.rows() == 0) throw ModelError("confusion_percent: empty evaluation set");
  return confusion_percent(probe.predict(features), gold, classes, probe.layer_index);
}

double drift_L(const ConfusionTable& lower, const ConfusionTable& upper, std::size_t g,
               std::size_t p) {
  const auto gi = static_cast<Eigen::Index>(g);
  const auto pi = static_cast<Eigen::Index>(p);
  return upper.percent(gi, pi) - lower.percent(gi, pi);
}

double drift_H(const ConfusionTable& lower, const ConfusionTable& upper, std::size_t s,
               std::size_t t) {
  return drift_L(lower, upper, s, t) - drift_L(lower, upper, t, s);
}

Eigen::MatrixXd drift_L_matrix(const ConfusionTable& lower, const ConfusionTable& upper) {
  if (lower.percent.rows() != upper.percent.rows()) {
    throw ModelError("drift: tables cover different label spaces");
  }
  return upper.percent - lower.percent;
}

Eigen::MatrixXd drift_H_matrix(const ConfusionTable& lower, const ConfusionTable& upper) {
  const Eigen::MatrixXd l = drift_L_matrix(lower, upper);
  return l - l.transpose();
}

EmotionGraph build_emotion_graph(const Eigen::MatrixXd& h_lower, const Eigen::MatrixXd& h_upper,
                                 const LabelSpace& labels, double threshold) {
  const auto m = static_cast<Eigen::Index>(labels.size());
  if (h_lower.rows() != m || h_lower.cols() != m || h_upper.rows() != m || h_upper.cols() != m) {
    throw ModelError("build_emotion_graph: H matrices must be m x m over the label space");
  }
  EmotionGraph graph;
  graph.nodes = labels.names();
  graph.threshold = threshold;
  for (Eigen::Index s = 0; s < m; ++s) {
    for (Eigen::Index t = 0; t < m; ++t) {
      if (s == t) continue;
      const bool lower = h_lower(s, t) >= threshold;
      const bool upper = h_upper(s, t) >= threshold;
      if (!lower && !upper) continue;
      GraphEdge e;
      e.source = static_cast<std::size_t>(s);
      e.target = static_cast<std::size_t>(t);
      e.kind = lower && upper ? EdgeKind::both : (lower ? EdgeKind::lower_pair : EdgeKind::upper_pair);
      e.score_lower = h_lower(s, t);
      e.score_upper = h_upper(s, t);
      graph.edges.push_back(e);
    }
  }
  return graph;
}

std::string EmotionGraph::to_dot() const {
  std::string out = "digraph emotions {\n";
  out += fmt::format("  // edge iff H >= {:.2f}; dashed: H12 only, solid: H23 only, bold: both\n",
                     threshold);
  out += "  node [shape=ellipse, fontname=\"Helvetica\"];\n";
  for (const auto& n : nodes) out += fmt::format("  \"{}\";\n", n);
  for (const auto& e : edges) {
    std::string_view style;
    switch (e.kind) {
      case EdgeKind::lower_pair: style = "style=dashed, penwidth=1"; break;
      case EdgeKind::upper_pair: style = "style=solid, penwidth=1"; break;
      case EdgeKind::both: style = "style=solid, penwidth=3"; break;
    }
    out += fmt::format("  \"{}\" -> \"{}\" [{}, label=\"{:.2f}/{:.2f}\"];\n", nodes[e.source],
                       nodes[e.target], style, e.score_lower, e.score_upper);
  }
  out += "}\n";
  return out;
}

std::string matrix_tsv(const Eigen::MatrixXd& m, const LabelSpace& labels) {
  std::string out = "emotion";
  for (const auto& n : labels.names()) out += "\t" + n;
  out += "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out += labels.name(static_cast<std::size_t>(r));
    for (Eigen::Index c = 0; c < m.cols(); ++c) out += fmt::format("\t{:.4f}", m(r, c));
    out += "\n";
  }
  return out;
}

LayerAnalysis analyze_layers(const ProbingNetwork& net, const LabelSpace& labels,
                             const LabeledSet& train_set, const LabeledSet& dev_set,
                             const LayerAnalysisOptions& options) {
  const auto& cfg = net.config();
  if (labels.size() != cfg.classes) {
    throw ModelError("analyze_layers: label space does not match the network");
  }
  if (dev_set.embeddings.rows() == 0) throw ModelError("analyze_layers: empty dev set");
  const auto train_features = extract_layer_features(net, train_set.embeddings);
  const auto dev_features = extract_layer_features(net, dev_set.embeddings);

  LayerAnalysis out;
  for (std::size_t i = 0; i < cfg.depth(); ++i) {
    ProbeTrainingReport rep;
    const LayerProbe probe = train_layer_probe(train_features[i], train_set.labels, cfg.classes,
                                               i + 1, options.probe, &rep);
    const auto preds = probe.predict(dev_features[i]);
    out.tables.push_back(confusion_percent(preds, dev_set.labels, cfg.classes, i + 1));
    out.probe_accuracy.push_back(evaluate_predictions(preds, dev_set.labels, cfg.classes).accuracy);
    out.probe_reports.push_back(rep);
  }
  for (std::size_t i = 0; i + 1 < out.tables.size(); ++i) {
    out.drift_L.push_back(drift_L_matrix(out.tables[i], out.tables[i + 1]));
    out.drift_H.push_back(drift_H_matrix(out.tables[i], out.tables[i + 1]));
  }
  const auto m = static_cast<Eigen::Index>(cfg.classes);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(m, m);
  const Eigen::MatrixXd& h_lower = out.drift_H.empty() ? zero : out.drift_H[0];
  const Eigen::MatrixXd& h_upper = out.drift_H.size() < 2 ? zero : out.drift_H[1];
  out.graph = build_emotion_graph(h_lower, h_upper, labels, options.threshold);
  return out;
}

}  // namespace emoprobe
