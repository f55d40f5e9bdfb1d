#include "emoprobe/pad_regression.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "emoprobe/svg.hpp"

namespace emoprobe {

double PadTriple::operator[](std::size_t d) const {
  switch (d) {
    case 0: return pleasure;
    case 1: return arousal;
    case 2: return dominance;
  }
  throw PadError("PAD dimension out of range");
}

double& PadTriple::operator[](std::size_t d) {
  switch (d) {
    case 0: return pleasure;
    case 1: return arousal;
    case 2: return dominance;
  }
  throw PadError("PAD dimension out of range");
}

std::vector<std::string> empathetic_dialogue_emotions() {
  return {"afraid",      "angry",       "annoyed",   "anticipating", "anxious",     "apprehensive",
          "ashamed",     "caring",      "confident", "content",      "devastated",  "disappointed",
          "disgusted",   "embarrassed", "excited",   "faithful",     "furious",     "grateful",
          "guilty",      "hopeful",     "impressed", "jealous",      "joyful",      "lonely",
          "nostalgic",   "prepared",    "proud",     "sad",          "sentimental", "surprised",
          "terrified",   "trusting"};
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(trim(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start)));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

double parse_number(std::string_view cell, std::size_t line) {
  double v = 0.0;
  const char* first = cell.data();
  if (!cell.empty() && cell.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw PadError(fmt::format("line {}: '{}' is not a number", line, cell));
  }
  return v;
}

}  // namespace

KnownPadTable parse_known_pad(std::string_view content, std::span<const std::string> vocabulary) {
  KnownPadTable table;
  std::size_t start = 0, line_no = 0;
  bool header_seen = false;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = trim(content.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split_tabs(line);
    if (cells.size() != 4) {
      throw PadError(fmt::format("line {}: expected 4 tab-separated columns, got {}", line_no,
                                 cells.size()));
    }
    if (!header_seen) {
      header_seen = true;
      if (cells[0] == "emotion") continue;
    }
    const std::string name = normalize_label(cells[0]);
    if (!vocabulary.empty() &&
        std::find(vocabulary.begin(), vocabulary.end(), name) == vocabulary.end()) {
      throw PadError(fmt::format("line {}: unknown emotion '{}'", line_no, name));
    }
    KnownPad entry;
    for (std::size_t d = 0; d < 3; ++d) {
      const double v = parse_number(cells[d + 1], line_no);
      if (!(v >= -1.0 && v <= 1.0)) {
        throw PadError(fmt::format("line {}: {} value {} for '{}' outside [-1, 1]", line_no,
                                   kPadDimensions[d], v, name));
      }
      entry.values[d] = v;
      entry.raw[d] = std::string(cells[d + 1]);
    }
    if (!table.emplace(name, std::move(entry)).second) {
      throw PadError(fmt::format("line {}: duplicate emotion '{}'", line_no, name));
    }
  }
  return table;
}

KnownPadTable load_known_pad(const std::filesystem::path& path,
                             std::span<const std::string> vocabulary) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PadError(fmt::format("cannot open PAD file '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_known_pad(buf.str(), vocabulary);
}

KnownPadTable load_known_pad(const std::filesystem::path& path) {
  const auto vocab = empathetic_dialogue_emotions();
  return load_known_pad(path, vocab);
}

double PadRegressor::predict(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd h = (hidden_weight.transpose() * x + hidden_bias).cwiseMax(0.0);
  return std::tanh(h.dot(output_weight) + output_bias);
}

Eigen::VectorXd PadRegressor::predict(const Eigen::MatrixXd& rows) const {
  Eigen::MatrixXd h = rows * hidden_weight;
  h.rowwise() += hidden_bias.transpose();
  h = h.cwiseMax(0.0);
  return ((h * output_weight).array() + output_bias).tanh().matrix();
}

PadRegressor init_pad_regressor(std::size_t input_dim, const PadTrainingOptions& options,
                                std::uint64_t seed) {
  if (input_dim == 0 || options.hidden == 0) throw PadError("regressor dimensions must be positive");
  if (!(options.dropout >= 0.0 && options.dropout < 1.0)) throw PadError("dropout must be in [0, 1)");
  const auto in = static_cast<Eigen::Index>(input_dim);
  const auto hid = static_cast<Eigen::Index>(options.hidden);
  PadRegressor reg;
  std::mt19937_64 rng(seed);
  const double l1 = std::sqrt(6.0 / static_cast<double>(in + hid));
  std::uniform_real_distribution<double> d1(-l1, l1);
  reg.hidden_weight.resize(in, hid);
  for (Eigen::Index r = 0; r < in; ++r) {
    for (Eigen::Index c = 0; c < hid; ++c) reg.hidden_weight(r, c) = d1(rng);
  }
  reg.hidden_bias = Eigen::VectorXd::Zero(hid);
  const double l2 = std::sqrt(6.0 / static_cast<double>(hid + 1));
  std::uniform_real_distribution<double> d2(-l2, l2);
  reg.output_weight.resize(hid);
  for (Eigen::Index c = 0; c < hid; ++c) reg.output_weight(c) = d2(rng);
  reg.output_bias = 0.0;
  reg.dropout = options.dropout;
  return reg;
}

namespace {

struct AdamSlot {
  Eigen::ArrayXXd m, v;
  void init(Eigen::Index rows, Eigen::Index cols) {
    m = Eigen::ArrayXXd::Zero(rows, cols);
    v = Eigen::ArrayXXd::Zero(rows, cols);
  }
  template <typename Param, typename Grad>
  void step(Param& p, const Grad& g, double lr, double c1, double c2) {
    m = 0.9 * m + 0.1 * g.array();
    v = 0.999 * v + 0.001 * g.array().square();
    p.array() -= lr * (m / c1) / ((v / c2).sqrt() + 1e-8);
  }
};

}  // namespace

PadRegressor train_pad_regressor(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                 const PadTrainingOptions& options, std::uint64_t seed,
                                 RegressorReport* report) {
  if (inputs.rows() != targets.size() || inputs.rows() == 0) {
    throw PadError("train_pad_regressor: need matching, non-empty inputs and targets");
  }
  PadRegressor reg = init_pad_regressor(static_cast<std::size_t>(inputs.cols()), options, seed);
  const Eigen::Index n = inputs.rows();
  const Eigen::Index hid = reg.hidden_weight.cols();
  const double keep = 1.0 - options.dropout;

  AdamSlot s_w1, s_b1, s_w2, s_b2;
  s_w1.init(reg.hidden_weight.rows(), hid);
  s_b1.init(hid, 1);
  s_w2.init(hid, 1);
  s_b2.init(1, 1);
  std::mt19937_64 rng(seed ^ 0xD80F0A7ull);
  std::bernoulli_distribution keep_unit(keep);

  RegressorReport rep;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  Eigen::MatrixXd pre, h, mask(n, hid);
  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    pre = inputs * reg.hidden_weight;
    pre.rowwise() += reg.hidden_bias.transpose();
    h = pre.cwiseMax(0.0);
    if (options.dropout > 0.0) {
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < hid; ++c) mask(r, c) = keep_unit(rng) ? 1.0 / keep : 0.0;
      }
      h = h.cwiseProduct(mask);
    }
    const Eigen::VectorXd out = ((h * reg.output_weight).array() + reg.output_bias).tanh().matrix();
    const Eigen::VectorXd err = out - targets;
    const double loss = err.squaredNorm() / static_cast<double>(n);
    if (!std::isfinite(loss)) throw PadError(fmt::format("non-finite loss at epoch {}", epoch));
    rep.loss_history.push_back(loss);
    rep.epochs = epoch;

    const Eigen::VectorXd d_pre_out =
        (2.0 / static_cast<double>(n)) * err.cwiseProduct((1.0 - out.array().square()).matrix());
    const Eigen::VectorXd g_w2 = h.transpose() * d_pre_out;
    const double g_b2 = d_pre_out.sum();
    Eigen::MatrixXd d_h = d_pre_out * reg.output_weight.transpose();
    if (options.dropout > 0.0) d_h = d_h.cwiseProduct(mask);
    const Eigen::MatrixXd d_pre = d_h.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd g_w1 = inputs.transpose() * d_pre;
    const Eigen::VectorXd g_b1 = d_pre.colwise().sum().transpose();

    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(epoch));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(epoch));
    const double lr = options.learning_rate;
    s_w1.step(reg.hidden_weight, g_w1, lr, c1, c2);
    s_b1.step(reg.hidden_bias, g_b1, lr, c1, c2);
    s_w2.step(reg.output_weight, g_w2, lr, c1, c2);
    Eigen::Matrix<double, 1, 1> b2{reg.output_bias};
    s_b2.step(b2, Eigen::Matrix<double, 1, 1>{g_b2}, lr, c1, c2);
    reg.output_bias = b2(0);

    if (options.early_stopping) {
      if (loss < best - options.min_delta) {
        best = loss;
        stale = 0;
      } else if (++stale >= options.patience) {
        break;
      }
    }
  }
  rep.mse = (reg.predict(inputs) - targets).squaredNorm() / static_cast<double>(n);
  if (report) *report = std::move(rep);
  return reg;
}

PadModel train_pad_regressors(const std::vector<EmotionEmbedding>& embeddings,
                              const KnownPadTable& targets, const PadTrainingOptions& options,
                              PadTrainingReport* report) {
  if (targets.empty()) throw PadError("no known PAD values to train on");
  std::vector<const EmotionEmbedding*> rows;
  std::vector<std::string> missing;
  for (const auto& [name, _] : targets) {
    const auto it = std::find_if(embeddings.begin(), embeddings.end(),
                                 [&](const EmotionEmbedding& e) { return e.emotion == name; });
    if (it == embeddings.end()) {
      missing.push_back(name);
    } else {
      rows.push_back(&*it);
    }
  }
  if (!missing.empty()) {
    throw PadError(fmt::format("no embedding for PAD emotion(s): {}", fmt::join(missing, ", ")));
  }
  const auto dim = rows.front()->r.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->r.size() != dim) throw PadError("emotion embeddings differ in dimension");
    x.row(static_cast<Eigen::Index>(i)) = rows[i]->r.transpose();
  }
  PadModel model;
  PadTrainingReport rep;
  for (std::size_t d = 0; d < 3; ++d) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      y(static_cast<Eigen::Index>(i)) = targets.at(rows[i]->emotion).values[d];
    }
    const std::uint64_t seed = options.seed * 3 + d + 1;
    model.regressors[d] = train_pad_regressor(x, y, options, seed, &rep.dimensions[d]);
  }
  if (report) *report = std::move(rep);
  return model;
}

PadTriple predict_pad(const PadModel& model, const Eigen::VectorXd& r) {
  PadTriple t;
  for (std::size_t d = 0; d < 3; ++d) t[d] = model.regressors[d].predict(r);
  return t;
}

std::size_t PadTable::predicted_count() const {
  return static_cast<std::size_t>(std::count_if(
      rows.begin(), rows.end(), [](const PadRow& r) { return r.source == PadSource::predicted; }));
}

std::string PadTable::to_tsv() const {
  std::string out = "emotion\tpleasure\tarousal\tdominance\tsource\n";
  for (const auto& r : rows) {
    out += fmt::format("{}\t{}\t{}\t{}\t{}\n", r.emotion, r.cells[0], r.cells[1], r.cells[2],
                       r.source == PadSource::known ? "known" : "predicted");
  }
  return out;
}

std::string PadTable::to_3d_tsv() const {
  std::string out = "pleasure\tarousal\tdominance\n";
  for (const auto& r : rows) out += fmt::format("{}\t{}\t{}\n", r.cells[0], r.cells[1], r.cells[2]);
  return out;
}

std::string PadTable::scatter_svg() const {
  constexpr double kSize = 600.0, kMargin = 50.0, kSpan = kSize - 2 * kMargin;
  const auto px = [&](double v) { return kMargin + (v + 1.0) / 2.0 * kSpan; };
  const auto py = [&](double v) { return kMargin + (1.0 - (v + 1.0) / 2.0) * kSpan; };
  SvgDocument svg(kSize, kSize);
  svg.rect(0, 0, kSize, kSize, "#ffffff");
  svg.rect(kMargin, kMargin, kSpan, kSpan, "none", "#999999");
  svg.line(px(0.0), py(-1.0), px(0.0), py(1.0), "#cccccc");
  svg.line(px(-1.0), py(0.0), px(1.0), py(0.0), "#cccccc");
  svg.text(kSize / 2, kSize - 15.0, "pleasure", 13.0);
  svg.text(18.0, kSize / 2, "arousal", 13.0);
  for (double t : {-1.0, -0.5, 0.5, 1.0}) {
    svg.text(px(t), py(-1.0) + 16.0, fmt::format("{:.1f}", t), 10.0, "#666666");
    svg.text(px(-1.0) - 6.0, py(t) + 4.0, fmt::format("{:.1f}", t), 10.0, "#666666", "end");
  }
  for (const auto& r : rows) {
    const bool predicted = r.source == PadSource::predicted;
    const char* color = predicted ? "#c00000" : "#1f4e79";
    svg.circle(px(r.values.pleasure), py(r.values.arousal), 4.0, color);
    svg.text(px(r.values.pleasure) + 6.0, py(r.values.arousal) - 6.0, r.emotion, 11.0, color, "start");
  }
  return svg.str();
}

PadAugmentation augment_pad(const std::vector<EmotionEmbedding>& embeddings,
                            const KnownPadTable& known, const PadTrainingOptions& options) {
  PadAugmentation result;
  std::optional<PadModel> model;
  const bool any_missing = std::any_of(embeddings.begin(), embeddings.end(), [&](const auto& e) {
    return known.find(e.emotion) == known.end();
  });
  if (any_missing) model = train_pad_regressors(embeddings, known, options, &result.report);
  for (const auto& e : embeddings) {
    PadRow row;
    row.emotion = e.emotion;
    if (const auto it = known.find(e.emotion); it != known.end()) {
      row.values = it->second.values;
      row.cells = it->second.raw;
      row.source = PadSource::known;
    } else {
      row.values = predict_pad(*model, e.r);
      for (std::size_t d = 0; d < 3; ++d) row.cells[d] = fmt::format("{:.4f}", row.values[d]);
      row.source = PadSource::predicted;
    }
    result.table.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace emoprobe
