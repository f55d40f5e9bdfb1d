#include "emoprobe/probing_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

namespace emoprobe {

namespace {

constexpr double kNormFloor = 1e-12;

void softmax_rows(const Eigen::MatrixXd& logits, Eigen::MatrixXd& probs) {
  probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    probs.row(r) = (logits.row(r).array() - mx).exp();
    probs.row(r) /= probs.row(r).sum();
  }
}

void check_labels(std::span<const std::size_t> labels, std::size_t classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw ModelError(fmt::format("label {} at row {} out of range for {} classes", labels[i], i,
                                   classes));
    }
  }
}

}  // namespace

std::vector<std::size_t> parse_preset(std::string_view preset) {
  std::vector<std::size_t> dims;
  std::size_t start = 0;
  while (start <= preset.size()) {
    std::size_t end = preset.find(':', start);
    if (end == std::string_view::npos) end = preset.size();
    const std::string_view part = preset.substr(start, end - start);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size() || v == 0) {
      throw ModelError(fmt::format("invalid layer preset '{}'", preset));
    }
    dims.push_back(v);
    start = end + 1;
  }
  return dims;
}

std::string preset_name(std::span<const std::size_t> layer_dims) {
  std::string out;
  for (std::size_t i = 0; i < layer_dims.size(); ++i) {
    if (i) out += ':';
    out += std::to_string(layer_dims[i]);
  }
  return out;
}

void ProbingConfig::validate() const {
  if (layer_dims.empty()) throw ModelError("config: at least one probing layer is required");
  if (std::find(layer_dims.begin(), layer_dims.end(), 0u) != layer_dims.end()) {
    throw ModelError("config: layer dimensions must be positive");
  }
  if (heads == 0) throw ModelError("config: heads must be positive");
  if (input_dim == 0) throw ModelError("config: input_dim must be positive");
  if (classes < 2) throw ModelError("config: at least 2 classes are required");
  if (batch_size == 0) throw ModelError("config: batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ModelError("config: learning_rate must be positive");
  }
}

ProbingParameters ProbingParameters::zeros(const ProbingConfig& cfg) {
  ProbingParameters p;
  for (std::size_t i = 0; i < cfg.depth(); ++i) {
    for (std::size_t j = 0; j < cfg.heads; ++j) {
      p.heads.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.layer_input_dim(i)),
                                              static_cast<Eigen::Index>(cfg.layer_dims[i])));
    }
  }
  p.output_weight = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.pooled_dim()),
                                          static_cast<Eigen::Index>(cfg.classes));
  p.output_bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.classes));
  return p;
}

std::vector<std::span<double>> ProbingParameters::blocks() {
  std::vector<std::span<double>> out;
  for (auto& h : heads) out.emplace_back(h.data(), static_cast<std::size_t>(h.size()));
  out.emplace_back(output_weight.data(), static_cast<std::size_t>(output_weight.size()));
  out.emplace_back(output_bias.data(), static_cast<std::size_t>(output_bias.size()));
  return out;
}

std::vector<std::span<const double>> ProbingParameters::blocks() const {
  auto mut = const_cast<ProbingParameters*>(this)->blocks();
  return {mut.begin(), mut.end()};
}

std::size_t ProbingParameters::size() const {
  std::size_t n = static_cast<std::size_t>(output_weight.size() + output_bias.size());
  for (const auto& h : heads) n += static_cast<std::size_t>(h.size());
  return n;
}

ProbingNetwork::ProbingNetwork(ProbingConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  params_ = ProbingParameters::zeros(cfg_);
}

ProbingNetwork init_network(const ProbingConfig& cfg) {
  ProbingNetwork net(cfg);
  std::mt19937_64 rng(cfg.seed);
  const auto glorot = [&rng](Eigen::MatrixXd& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
    }
  };
  for (auto& h : net.params().heads) glorot(h);
  glorot(net.output_weight());
  return net;
}

BatchForward forward_batch(const ProbingNetwork& net, const Eigen::MatrixXd& inputs) {
  const auto& cfg = net.config();
  if (static_cast<std::size_t>(inputs.cols()) != cfg.input_dim) {
    throw ModelError(fmt::format("input width {} does not match d0 = {}", inputs.cols(),
                                 cfg.input_dim));
  }
  const Eigen::Index batch = inputs.rows();
  const auto last = static_cast<Eigen::Index>(cfg.layer_dims.back());
  BatchForward out;
  out.activations.resize(cfg.depth() * cfg.heads);
  out.pooled_raw.resize(batch, static_cast<Eigen::Index>(cfg.pooled_dim()));
  for (std::size_t j = 0; j < cfg.heads; ++j) {
    for (std::size_t i = 0; i < cfg.depth(); ++i) {
      const Eigen::MatrixXd& prev = i == 0 ? inputs : out.activations[(i - 1) * cfg.heads + j];
      out.activations[i * cfg.heads + j].noalias() = prev * net.head_weight(i, j);
    }
    out.pooled_raw.middleCols(static_cast<Eigen::Index>(j) * last, last) =
        out.activations[(cfg.depth() - 1) * cfg.heads + j];
  }
  out.pooled_norm = out.pooled_raw.rowwise().norm().cwiseMax(kNormFloor);
  out.pooled = out.pooled_norm.cwiseInverse().asDiagonal() * out.pooled_raw;
  out.logits.noalias() = out.pooled * net.output_weight();
  out.logits.rowwise() += net.output_bias().transpose();
  softmax_rows(out.logits, out.probabilities);
  return out;
}

ForwardTrace forward(const ProbingNetwork& net, std::span<const double> e0) {
  if (e0.size() != net.config().input_dim) {
    throw ModelError(fmt::format("input length {} does not match d0 = {}", e0.size(),
                                 net.config().input_dim));
  }
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(e0.size()));
  for (std::size_t c = 0; c < e0.size(); ++c) x(0, static_cast<Eigen::Index>(c)) = e0[c];
  BatchForward b = forward_batch(net, x);
  ForwardTrace t;
  for (auto& a : b.activations) t.activations.emplace_back(a.row(0).transpose());
  t.pooled = b.pooled.row(0).transpose();
  t.logits = b.logits.row(0).transpose();
  t.probabilities = b.probabilities.row(0).transpose();
  return t;
}

ForwardTrace forward(const ProbingNetwork& net, std::span<const float> e0) {
  std::vector<double> wide(e0.begin(), e0.end());
  return forward(net, std::span<const double>(wide));
}

Eigen::MatrixXd to_matrix(const EmbeddingMatrix& m) {
  std::vector<std::size_t> rows(m.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return to_matrix(m, rows);
}

Eigen::MatrixXd to_matrix(const EmbeddingMatrix& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.dim()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = m.row(rows[r]);
    for (std::size_t c = 0; c < src.size(); ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = src[c];
    }
  }
  return out;
}

double loss_and_gradient(const ProbingNetwork& net, const Eigen::MatrixXd& inputs,
                         std::span<const std::size_t> labels, ProbingParameters* grad) {
  const auto& cfg = net.config();
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw ModelError("loss_and_gradient: inputs and labels differ in length");
  }
  if (labels.empty()) throw ModelError("loss_and_gradient: empty batch");
  check_labels(labels, cfg.classes);

  const BatchForward fw = forward_batch(net, inputs);
  const Eigen::Index batch = inputs.rows();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  double loss = 0.0;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]);
    const double mx = fw.logits.row(r).maxCoeff();
    const double lse = mx + std::log((fw.logits.row(r).array() - mx).exp().sum());
    loss += lse - fw.logits(r, y);
  }
  loss *= inv_batch;
  if (grad == nullptr) return loss;

  *grad = ProbingParameters::zeros(cfg);

  Eigen::MatrixXd d_logits = fw.probabilities;
  for (Eigen::Index r = 0; r < batch; ++r) {
    d_logits(r, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)])) -= 1.0;
  }
  d_logits *= inv_batch;

  grad->output_weight.noalias() = fw.pooled.transpose() * d_logits;
  grad->output_bias = d_logits.colwise().sum().transpose();
  const Eigen::MatrixXd d_pooled = d_logits * net.output_weight().transpose();

  // Back through g = z / max(|z|, floor).
  Eigen::MatrixXd d_raw(d_pooled.rows(), d_pooled.cols());
  for (Eigen::Index r = 0; r < batch; ++r) {
    const double n = fw.pooled_norm(r);
    if (fw.pooled_raw.row(r).norm() >= kNormFloor) {
      const double proj = fw.pooled.row(r).dot(d_pooled.row(r));
      d_raw.row(r) = (d_pooled.row(r) - proj * fw.pooled.row(r)) / n;
    } else {
      d_raw.row(r) = d_pooled.row(r) / n;
    }
  }

  const auto last = static_cast<Eigen::Index>(cfg.layer_dims.back());
  for (std::size_t j = 0; j < cfg.heads; ++j) {
    Eigen::MatrixXd d_act = d_raw.middleCols(static_cast<Eigen::Index>(j) * last, last);
    for (std::size_t i = cfg.depth(); i-- > 0;) {
      const Eigen::MatrixXd& prev = i == 0 ? inputs : fw.activations[(i - 1) * cfg.heads + j];
      grad->heads[i * cfg.heads + j].noalias() = prev.transpose() * d_act;
      if (i > 0) {
        Eigen::MatrixXd next = d_act * net.head_weight(i, j).transpose();
        d_act = std::move(next);
      }
    }
  }
  return loss;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

class Adam {
 public:
  Adam(const ProbingConfig& cfg, double lr)
      : m_(ProbingParameters::zeros(cfg)), v_(ProbingParameters::zeros(cfg)), lr_(lr) {}

  void step(ProbingParameters& params, const ProbingParameters& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    auto p = params.blocks();
    auto g = grad.blocks();
    auto m = m_.blocks();
    auto v = v_.blocks();
    for (std::size_t b = 0; b < p.size(); ++b) {
      for (std::size_t i = 0; i < p[b].size(); ++i) {
        m[b][i] = kBeta1 * m[b][i] + (1.0 - kBeta1) * g[b][i];
        v[b][i] = kBeta2 * v[b][i] + (1.0 - kBeta2) * g[b][i] * g[b][i];
        p[b][i] -= lr_ * (m[b][i] / c1) / (std::sqrt(v[b][i] / c2) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  ProbingParameters m_, v_;
  double lr_;
  std::uint64_t t_ = 0;
};

}  // namespace

TrainResult train(const ProbingNetwork& initial, const LabeledSet& train_set,
                  const std::optional<LabeledSet>& dev) {
  const auto& cfg = initial.config();
  const auto& x = train_set.embeddings;
  if (x.rows() != train_set.labels.size()) {
    throw ModelError("train: embeddings and labels differ in length");
  }
  if (x.rows() > 0 && x.dim() != cfg.input_dim) {
    throw ModelError(fmt::format("train: embedding dim {} != d0 {}", x.dim(), cfg.input_dim));
  }
  check_labels(train_set.labels, cfg.classes);
  if (dev) {
    if (dev->embeddings.rows() != dev->labels.size()) {
      throw ModelError("train: dev embeddings and labels differ in length");
    }
    check_labels(dev->labels, cfg.classes);
  }

  TrainResult result{initial, {}, 0};
  if (cfg.epochs == 0 || x.rows() == 0) return result;

  ProbingNetwork net = initial;
  Adam adam(cfg, cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFull);
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  ProbingParameters grad;
  std::vector<std::size_t> batch_labels;
  std::optional<double> best_dev;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      batch_labels.clear();
      for (std::size_t r : rows) batch_labels.push_back(train_set.labels[r]);
      const Eigen::MatrixXd inputs = to_matrix(x, rows);
      const double loss = loss_and_gradient(net, inputs, batch_labels, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError(fmt::format("non-finite loss at epoch {} batch {}", epoch, batch_no));
      }
      loss_sum += loss * static_cast<double>(rows.size());
      adam.step(net.params(), grad);
    }
    EpochMetrics metrics{epoch, loss_sum / static_cast<double>(order.size()), std::nullopt};
    if (dev && dev->embeddings.rows() > 0) {
      metrics.dev_accuracy = evaluate(net, dev->embeddings, dev->labels).accuracy;
      if (!best_dev || *metrics.dev_accuracy > *best_dev) {
        best_dev = metrics.dev_accuracy;
        result.network = net;
        result.best_epoch = epoch;
      }
    }
    result.history.push_back(metrics);
  }
  if (!best_dev) {
    result.network = std::move(net);
    result.best_epoch = cfg.epochs;
  }
  return result;
}

std::vector<std::size_t> predict(const ProbingNetwork& net, const EmbeddingMatrix& inputs) {
  std::vector<std::size_t> out;
  out.reserve(inputs.rows());
  constexpr std::size_t kChunk = 256;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < inputs.rows(); start += kChunk) {
    const std::size_t end = std::min(inputs.rows(), start + kChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const BatchForward fw = forward_batch(net, to_matrix(inputs, rows));
    for (Eigen::Index r = 0; r < fw.probabilities.rows(); ++r) {
      const Eigen::VectorXd p = fw.probabilities.row(r).transpose();
      out.push_back(argmax({p.data(), static_cast<std::size_t>(p.size())}));
    }
  }
  return out;
}

Evaluation evaluate_predictions(std::span<const std::size_t> predictions,
                                std::span<const std::size_t> labels, std::size_t classes) {
  if (labels.empty()) throw ModelError("evaluate: empty input");
  if (predictions.size() != labels.size()) {
    throw ModelError("evaluate: predictions and labels differ in length");
  }
  check_labels(labels, classes);
  check_labels(predictions, classes);
  Evaluation ev;
  ev.confusion = CountMatrix::Zero(static_cast<Eigen::Index>(classes),
                                   static_cast<Eigen::Index>(classes));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++ev.confusion(static_cast<Eigen::Index>(labels[i]), static_cast<Eigen::Index>(predictions[i]));
    if (labels[i] == predictions[i]) ++correct;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  ev.predictions.assign(predictions.begin(), predictions.end());
  return ev;
}

Evaluation evaluate(const ProbingNetwork& net, const EmbeddingMatrix& inputs,
                    std::span<const std::size_t> labels) {
  if (inputs.rows() == 0) throw ModelError("evaluate: empty input");
  if (inputs.rows() != labels.size()) {
    throw ModelError("evaluate: embeddings and labels differ in length");
  }
  const auto preds = predict(net, inputs);
  return evaluate_predictions(preds, labels, net.config().classes);
}

GradCheckReport grad_check(const ProbingNetwork& net, std::span<const double> e0,
                           std::size_t label, double epsilon) {
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(e0.size()));
  for (std::size_t c = 0; c < e0.size(); ++c) x(0, static_cast<Eigen::Index>(c)) = e0[c];
  const std::size_t labels[] = {label};

  ProbingParameters analytic;
  loss_and_gradient(net, x, labels, &analytic);

  ProbingNetwork probe = net;
  auto params = probe.params().blocks();
  const auto grads = std::as_const(analytic).blocks();
  GradCheckReport report;
  std::size_t flat = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i, ++flat) {
      const double saved = params[b][i];
      params[b][i] = saved + epsilon;
      const double up = loss_and_gradient(probe, x, labels, nullptr);
      params[b][i] = saved - epsilon;
      const double down = loss_and_gradient(probe, x, labels, nullptr);
      params[b][i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = grads[b][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = flat;
      }
    }
  }
  report.parameters_checked = flat;
  return report;
}

}  // namespace emoprobe
