#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "emoprobe/layer_analysis.hpp"

using namespace emoprobe;

namespace {

ConfusionTable table_from(const Eigen::MatrixXd& percent, std::size_t layer = 1) {
  ConfusionTable t;
  t.layer_index = layer;
  t.percent = percent;
  return t;
}

struct Data {
  EmbeddingMatrix x;
  std::vector<std::size_t> y;
};

Data blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed,
           const char* prefix) {
  std::mt19937_64 crng(77), rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers) {
    for (auto& v : c) v = 2.0 * N(crng);
  }
  std::vector<std::string> ids;
  std::vector<float> data;
  Data out;
  for (std::size_t i = 0; i < per_class * classes; ++i) {
    const std::size_t c = i % classes;
    ids.push_back(prefix + std::to_string(i));
    out.y.push_back(c);
    for (std::size_t d = 0; d < dim; ++d) data.push_back(static_cast<float>(centers[c][d] + spread * N(rng)));
  }
  out.x = EmbeddingMatrix(ids, dim, data);
  return out;
}

// Gradient of mean cross-entropy + reg |W|^2, recomputed independently.
double objective_gradient_inf(const LayerProbe& p, const Eigen::MatrixXd& X, const std::vector<std::size_t>& y,
                              double reg) {
  const std::size_t m = static_cast<std::size_t>(p.bias.size());
  Eigen::MatrixXd gw = 2.0 * reg * p.weights;
  Eigen::VectorXd gb = Eigen::VectorXd::Zero(p.bias.size());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    std::vector<double> z(m);
    double mx = -INFINITY, sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      z[k] = p.bias[k];
      for (Eigen::Index f = 0; f < X.cols(); ++f) z[k] += X(r, f) * p.weights(f, k);
      mx = std::max(mx, z[k]);
    }
    for (auto& v : z) sum += (v = std::exp(v - mx));
    for (std::size_t k = 0; k < m; ++k) {
      const double d = (z[k] / sum - (k == y[r] ? 1.0 : 0.0)) / static_cast<double>(X.rows());
      gb[k] += d;
      for (Eigen::Index f = 0; f < X.cols(); ++f) gw(f, k) += d * X(r, f);
    }
  }
  return std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(Features, ShapesAndFinalLayerNormalization) {
  ProbingConfig cfg;
  cfg.layer_dims = {6, 4, 2};
  cfg.heads = 3;
  cfg.input_dim = 5;
  cfg.classes = 3;
  cfg.seed = 1;
  const ProbingNetwork net = init_network(cfg);
  const Data d = blobs(3, 3, 5, 1.0, 2, "x");
  const auto feats = extract_layer_features(net, d.x);
  ASSERT_EQ(feats.size(), 3u);
  EXPECT_EQ(feats[0].cols(), 18);
  EXPECT_EQ(feats[1].cols(), 12);
  EXPECT_EQ(feats[2].cols(), 6);
  for (std::size_t i = 0; i < d.x.rows(); ++i) {
    const auto trace = forward(net, d.x.row(i));
    const Eigen::VectorXd last = feats[2].row(static_cast<Eigen::Index>(i)).transpose();
    EXPECT_LE((last.normalized() - trace.pooled).cwiseAbs().maxCoeff(), 1e-12);
  }
  const std::size_t one[] = {0};
  EXPECT_EQ(extract_layer_features(net, d.x.select(one))[0].rows(), 1);
}

TEST(Features, HandComputedScalarNetwork) {
  ProbingConfig cfg;
  cfg.layer_dims = {1, 1};
  cfg.heads = 2;
  cfg.input_dim = 1;
  cfg.classes = 2;
  ProbingNetwork net(cfg);
  net.head_weight(0, 0)(0, 0) = 2.0;
  net.head_weight(0, 1)(0, 0) = -1.0;
  net.head_weight(1, 0)(0, 0) = 3.0;
  net.head_weight(1, 1)(0, 0) = 0.5;
  const EmbeddingMatrix x({"a", "b"}, 1, {1.0f, -2.0f});
  const auto f = extract_layer_features(net, x);
  Eigen::MatrixXd l1(2, 2), l2(2, 2);
  l1 << 2, -1, -4, 2;
  l2 << 6, -0.5, -12, 1;
  EXPECT_EQ(f[0], l1);
  EXPECT_EQ(f[1], l2);
}

TEST(Probe, SeparableTwoClassReachesFullAccuracy) {
  Eigen::MatrixXd X(8, 2);
  X << 1, 2, 2, 1, 3, 3, 2, 2, -1, -2, -2, -1, -3, -3, -2, -2;
  const std::vector<std::size_t> y{0, 0, 0, 0, 1, 1, 1, 1};
  ProbeTrainingReport rep;
  const LayerProbe p = train_layer_probe(X, y, 2, 1, {}, &rep);
  EXPECT_EQ(p.predict(X), y);
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(objective_gradient_inf(p, X, y, 1e-3), 1e-5);
}

TEST(Probe, StrongRegularizationGivesUniformPredictions) {
  const Data d = blobs(3, 10, 4, 0.5, 3, "r");
  Eigen::MatrixXd X(d.x.rows(), 4);
  for (std::size_t i = 0; i < d.x.rows(); ++i) {
    for (int c = 0; c < 4; ++c) X(static_cast<Eigen::Index>(i), c) = d.x.row(i)[c];
  }
  ProbeTrainingOptions opts;
  opts.reg = 1e6;
  const LayerProbe p = train_layer_probe(X, d.y, 3, 1, opts);
  EXPECT_LT(p.weights.cwiseAbs().maxCoeff(), 1e-5);
  // Balanced classes: the unpenalized bias also settles at equal logits.
  EXPECT_LT(p.bias.maxCoeff() - p.bias.minCoeff(), 1e-5);
}

TEST(Probe, StopsAtIterationCap) {
  const Data d = blobs(4, 10, 6, 3.0, 4, "c");
  Eigen::MatrixXd X(d.x.rows(), 6);
  for (std::size_t i = 0; i < d.x.rows(); ++i) {
    for (int c = 0; c < 6; ++c) X(static_cast<Eigen::Index>(i), c) = d.x.row(i)[c];
  }
  ProbeTrainingOptions opts;
  opts.max_iterations = 3;
  ProbeTrainingReport rep;
  train_layer_probe(X, d.y, 4, 2, opts, &rep);
  EXPECT_EQ(rep.iterations, 3u);
  EXPECT_FALSE(rep.converged);
}

TEST(Probe, FinalLayerProbeTracksTheNetwork) {
  const Data trn = blobs(4, 30, 12, 1.5, 5, "t");
  const Data dev = blobs(4, 30, 12, 1.5, 6, "d");
  ProbingConfig cfg;
  cfg.layer_dims = {8, 4};
  cfg.heads = 2;
  cfg.input_dim = 12;
  cfg.classes = 4;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.learning_rate = 5e-3;
  cfg.seed = 8;
  const auto result = train(init_network(cfg), {trn.x, trn.y}, LabeledSet{dev.x, dev.y});
  const double net_acc = evaluate(result.network, dev.x, dev.y).accuracy;
  const auto analysis = analyze_layers(result.network, LabelSpace::sorted({"a", "b", "c", "d"}),
                                       {trn.x, trn.y}, {dev.x, dev.y});
  ASSERT_EQ(analysis.probe_accuracy.size(), 2u);
  EXPECT_NEAR(analysis.probe_accuracy.back(), net_acc, 0.02);
}

TEST(Confusion, PerfectProbeIsDiagonalHundred) {
  const std::vector<std::size_t> g{0, 1, 2, 2, 1};
  const auto t = confusion_percent(g, g, 3, 1);
  EXPECT_EQ(t.percent, Eigen::MatrixXd(100.0 * Eigen::MatrixXd::Identity(3, 3)));
}

TEST(Confusion, HalfAndHalf) {
  const std::vector<std::size_t> gold{0, 0};
  const std::vector<std::size_t> pred{0, 1};
  const auto t = confusion_percent(pred, gold, 2, 1);
  EXPECT_DOUBLE_EQ(t.percent(0, 0), 50.0);
  EXPECT_DOUBLE_EQ(t.percent(0, 1), 50.0);
  EXPECT_EQ(t.absent_classes, std::vector<std::size_t>{1});
  EXPECT_TRUE(t.percent.row(1).isZero());
}

TEST(Confusion, EmptyDevSetIsAnError) {
  EXPECT_THROW(confusion_percent(std::vector<std::size_t>{}, std::vector<std::size_t>{}, 3, 1), ModelError);
  LayerProbe p;
  p.weights = Eigen::MatrixXd::Zero(2, 3);
  p.bias = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(confusion_percent(p, Eigen::MatrixXd(0, 2), std::vector<std::size_t>{}, 3), ModelError);
}

TEST(Drift, IdenticalTablesGiveZero) {
  Eigen::MatrixXd p(2, 2);
  p << 80, 20, 30, 70;
  const auto a = table_from(p), b = table_from(p, 2);
  EXPECT_TRUE(drift_L_matrix(a, b).isZero());
  EXPECT_TRUE(drift_H_matrix(a, b).isZero());
  EXPECT_EQ(drift_L(a, b, 0, 0), 0.0);
}

TEST(Drift, HandArithmetic) {
  Eigen::MatrixXd lo = Eigen::MatrixXd::Zero(2, 2), hi = Eigen::MatrixXd::Zero(2, 2);
  lo(0, 1) = 4;
  hi(0, 1) = 10;  // L(a, b) = 6
  lo(1, 0) = 2;
  hi(1, 0) = 3;   // L(b, a) = 1
  const auto a = table_from(lo), b = table_from(hi, 2);
  EXPECT_DOUBLE_EQ(drift_L(a, b, 0, 1), 6.0);
  EXPECT_DOUBLE_EQ(drift_L(a, b, 1, 0), 1.0);
  EXPECT_DOUBLE_EQ(drift_H(a, b, 0, 1), 5.0);
  EXPECT_DOUBLE_EQ(drift_H(a, b, 1, 0), -5.0);
  EXPECT_DOUBLE_EQ(drift_H_matrix(a, b)(0, 1), 5.0);
}

TEST(Graph, AllZeroHasNoEdges) {
  const auto labels = LabelSpace::sorted({"a", "b", "c"});
  const auto g = build_emotion_graph(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(3, 3), labels);
  EXPECT_TRUE(g.edges.empty());
  EXPECT_EQ(g.nodes.size(), 3u);
}

TEST(Graph, EdgeKindsAndThreshold) {
  const auto labels = LabelSpace::sorted({"angry", "furious", "sad", "lonely"});
  const auto ix = [&](const char* n) { return static_cast<Eigen::Index>(labels.index_of(n)); };
  Eigen::MatrixXd h12 = Eigen::MatrixXd::Zero(4, 4), h23 = Eigen::MatrixXd::Zero(4, 4);
  h12(ix("angry"), ix("furious")) = 3.0;
  h23(ix("angry"), ix("furious")) = 2.5;
  h12(ix("sad"), ix("lonely")) = 2.0;    // boundary is inclusive
  h23(ix("lonely"), ix("angry")) = 4.0;
  h12(ix("furious"), ix("sad")) = 1.99;  // just below
  const auto g = build_emotion_graph(h12, h23, labels, 2.0);
  std::map<std::pair<std::string, std::string>, EdgeKind> edges;
  for (const auto& e : g.edges) edges[{g.nodes[e.source], g.nodes[e.target]}] = e.kind;
  EXPECT_EQ(edges.size(), 3u);
  EXPECT_EQ((edges[{"angry", "furious"}]), EdgeKind::both);
  EXPECT_EQ((edges[{"sad", "lonely"}]), EdgeKind::lower_pair);
  EXPECT_EQ((edges[{"lonely", "angry"}]), EdgeKind::upper_pair);
  const std::string dot = g.to_dot();
  EXPECT_NE(dot.find("\"angry\" -> \"furious\" [style=solid, penwidth=3"), std::string::npos);
  EXPECT_NE(dot.find("\"sad\" -> \"lonely\" [style=dashed"), std::string::npos);
  EXPECT_NE(dot.find("\"lonely\" -> \"angry\" [style=solid, penwidth=1"), std::string::npos);
}

TEST(Graph, InvariantUnderLabelOrder) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> U(-5, 5);
  const std::vector<std::string> names{"a", "b", "c", "d", "e"};
  Eigen::MatrixXd h1(5, 5), h2(5, 5);
  for (int s = 0; s < 5; ++s) {
    for (int t = 0; t < 5; ++t) {
      h1(s, t) = U(rng);
      h2(s, t) = U(rng);
    }
  }
  const auto edge_set = [](const EmotionGraph& g) {
    std::set<std::tuple<std::string, std::string, EdgeKind>> out;
    for (const auto& e : g.edges) out.insert({g.nodes[e.source], g.nodes[e.target], e.kind});
    return out;
  };
  const auto base = edge_set(build_emotion_graph(h1, h2, LabelSpace::ordered(names)));
  std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<std::string> pnames;
  Eigen::MatrixXd p1(5, 5), p2(5, 5);
  for (int i = 0; i < 5; ++i) {
    pnames.push_back(names[perm[i]]);
    for (int j = 0; j < 5; ++j) {
      p1(i, j) = h1(perm[i], perm[j]);
      p2(i, j) = h2(perm[i], perm[j]);
    }
  }
  EXPECT_EQ(edge_set(build_emotion_graph(p1, p2, LabelSpace::ordered(pnames))), base);
}

TEST(Graph, ShapeMismatchRejected) {
  EXPECT_THROW(build_emotion_graph(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 3),
                                   LabelSpace::sorted({"a", "b", "c"})),
               ModelError);
}

TEST(Tables, MatrixTsv) {
  Eigen::MatrixXd m(2, 2);
  m << 1.5, -2, 0, 100;
  const std::string tsv = matrix_tsv(m, LabelSpace::sorted({"x", "y"}));
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "emotion\tx\ty");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 3);
}

TEST(Analysis, TwoLayerNetworkUsesOnlyTheLowerPair) {
  const Data trn = blobs(3, 10, 6, 1.0, 9, "t");
  const Data dev = blobs(3, 6, 6, 1.0, 10, "d");
  ProbingConfig cfg;
  cfg.layer_dims = {4, 3};
  cfg.heads = 2;
  cfg.input_dim = 6;
  cfg.classes = 3;
  cfg.seed = 2;
  const ProbingNetwork net = init_network(cfg);
  LayerAnalysisOptions opts;
  opts.threshold = 0.0;  // every positive H becomes an edge
  const auto a = analyze_layers(net, LabelSpace::sorted({"a", "b", "c"}), {trn.x, trn.y}, {dev.x, dev.y}, opts);
  ASSERT_EQ(a.tables.size(), 2u);
  ASSERT_EQ(a.drift_H.size(), 1u);
  EXPECT_EQ(a.tables[0].layer_index, 1u);
  EXPECT_EQ(a.tables[1].layer_index, 2u);
  for (const auto& e : a.graph.edges) EXPECT_NE(e.kind, EdgeKind::upper_pair);
  EXPECT_LE((a.drift_H[0] + a.drift_H[0].transpose()).cwiseAbs().maxCoeff(), 1e-9);
}
