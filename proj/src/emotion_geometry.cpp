#include "emoprobe/emotion_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "emoprobe/svg.hpp"

namespace emoprobe {

namespace {
constexpr double kNormFloor = 1e-12;
}

Eigen::MatrixXd pooled_features(const ProbingNetwork& net, const EmbeddingMatrix& embeddings) {
  if (embeddings.rows() == 0) {
    return Eigen::MatrixXd(0, static_cast<Eigen::Index>(net.config().pooled_dim()));
  }
  return forward_batch(net, to_matrix(embeddings)).pooled;
}

EmotionEmbedding mean_embedding(std::string emotion, const Eigen::MatrixXd& pooled) {
  if (pooled.rows() == 0) {
    throw GeometryError(fmt::format("no documents for emotion '{}'", emotion));
  }
  EmotionEmbedding e;
  e.r = pooled.colwise().sum().transpose() / static_cast<double>(pooled.rows());
  e.support = static_cast<std::size_t>(pooled.rows());
  e.emotion = std::move(emotion);
  return e;
}

EmotionEmbedding mean_embedding(std::string emotion, const ProbingNetwork& net,
                                const EmbeddingMatrix& documents_of_emotion) {
  return mean_embedding(std::move(emotion), pooled_features(net, documents_of_emotion));
}

std::vector<EmotionEmbedding> emotion_embeddings(const ProbingNetwork& net,
                                                 const EmbeddingMatrix& embeddings,
                                                 std::span<const std::size_t> labels,
                                                 const LabelSpace& space) {
  if (labels.size() != embeddings.rows()) {
    throw GeometryError("emotion_embeddings: embeddings and labels differ in length");
  }
  const Eigen::MatrixXd g = pooled_features(net, embeddings);
  std::vector<std::vector<Eigen::Index>> rows(space.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= space.size()) throw GeometryError("emotion_embeddings: label out of range");
    rows[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<std::string> missing;
  for (std::size_t c = 0; c < space.size(); ++c) {
    if (rows[c].empty()) missing.push_back(space.name(c));
  }
  if (!missing.empty()) {
    throw GeometryError(fmt::format("no documents for emotion(s): {}", fmt::join(missing, ", ")));
  }
  std::vector<EmotionEmbedding> out;
  for (std::size_t c = 0; c < space.size(); ++c) {
    out.push_back(mean_embedding(space.name(c), g(rows[c], Eigen::all)));
  }
  return out;
}

Eigen::VectorXd blend(const Eigen::VectorXd& r_i, const Eigen::VectorXd& r_j, double w) {
  if (r_i.size() != r_j.size()) throw GeometryError("blend: dimension mismatch");
  return w * r_i + (1.0 - w) * r_j;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw GeometryError("cosine_similarity: dimension mismatch");
  return a.dot(b) / (std::max(a.norm(), kNormFloor) * std::max(b.norm(), kNormFloor));
}

std::vector<std::string> default_basic_emotions() {
  return {"angry", "anticipating", "afraid", "sad", "disgusted", "trusting", "joyful", "surprised"};
}

std::vector<std::string> default_wheel_order() {
  return {"joyful", "trusting", "afraid", "surprised", "sad", "disgusted", "angry", "anticipating"};
}

BasicSet::BasicSet(std::vector<EmotionEmbedding> members) : members_(std::move(members)) {
  if (members_.size() != 8) {
    throw GeometryError(fmt::format("basic set needs exactly 8 emotions, got {}", members_.size()));
  }
  std::set<std::string> names;
  for (const auto& m : members_) {
    if (!names.insert(m.emotion).second) {
      throw GeometryError(fmt::format("basic emotion '{}' listed twice", m.emotion));
    }
    if (m.r.size() != members_.front().r.size()) {
      throw GeometryError("basic embeddings differ in dimension");
    }
  }
}

BasicSet BasicSet::select(const std::vector<EmotionEmbedding>& all, const LabelSpace& space,
                          std::span<const std::string> names) {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    if (!space.contains(n)) throw GeometryError(fmt::format("basic emotion '{}' is not a label", n));
    idx.push_back(space.index_of(n));
  }
  std::sort(idx.begin(), idx.end());
  std::vector<EmotionEmbedding> members;
  for (std::size_t i : idx) {
    const auto it = std::find_if(all.begin(), all.end(),
                                 [&](const EmotionEmbedding& e) { return e.emotion == space.name(i); });
    if (it == all.end()) {
      throw GeometryError(fmt::format("no embedding for basic emotion '{}'", space.name(i)));
    }
    members.push_back(*it);
  }
  return BasicSet(std::move(members));
}

bool BasicSet::contains(std::string_view name) const {
  return std::any_of(members_.begin(), members_.end(),
                     [&](const EmotionEmbedding& e) { return e.emotion == name; });
}

std::vector<double> WeightGrid::values() const {
  if (!(step > 0.0) || step > 1.0) throw GeometryError("weight grid step must be in (0, 1]");
  const double denom = std::round(1.0 / step);
  if (std::abs(denom * step - 1.0) > 1e-9) {
    throw GeometryError(fmt::format("weight grid step {} does not divide 1", step));
  }
  const auto first = static_cast<long>(std::ceil(lo * denom - 1e-9));
  const auto last = static_cast<long>(std::floor(hi * denom + 1e-9));
  if (first > last || lo < 0.0 || hi > 1.0) throw GeometryError("empty weight grid");
  std::vector<double> out;
  for (long k = first; k <= last; ++k) out.push_back(static_cast<double>(k) / denom);
  return out;
}

WheelEntry find_basic_pair(const EmotionEmbedding& c, const BasicSet& basics,
                           const WeightGrid& grid, std::vector<std::string>* warnings) {
  if (basics.contains(c.emotion)) {
    throw GeometryError(fmt::format("'{}' is a basic emotion", c.emotion));
  }
  const auto& b = basics.members();
  if (c.r.size() != b.front().r.size()) throw GeometryError("find_basic_pair: dimension mismatch");
  if (c.r.norm() < kNormFloor) {
    throw GeometryError(fmt::format("embedding of '{}' has zero norm", c.emotion));
  }
  const auto weights = grid.values();
  bool found = false;
  WheelEntry best{c.emotion, {}, {}, 0.0, 0.0};
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = i + 1; j < b.size(); ++j) {
      for (double w : weights) {
        const Eigen::VectorXd mix = blend(b[i].r, b[j].r, w);
        if (mix.norm() < kNormFloor) {
          if (warnings) {
            warnings->push_back(fmt::format("{}: zero-norm blend of {} and {} at w={:.2f} skipped",
                                            c.emotion, b[i].emotion, b[j].emotion, w));
          }
          continue;
        }
        const double cos = cosine_similarity(mix, c.r);
        if (!found || cos > best.cos) {
          found = true;
          best.basic_i = b[i].emotion;
          best.basic_j = b[j].emotion;
          best.w = w;
          best.cos = cos;
        }
      }
    }
  }
  if (!found) throw GeometryError(fmt::format("no valid blend for '{}'", c.emotion));
  return best;
}

WheelEntry canonical_entry(WheelEntry e) {
  if (e.w < 0.5) {
    std::swap(e.basic_i, e.basic_j);
    e.w = std::round((1.0 - e.w) * 1e12) / 1e12;
  }
  return e;
}

Wheel build_wheel(const std::vector<EmotionEmbedding>& all, const LabelSpace& space,
                  std::span<const std::string> basic_names, const WheelOptions& options) {
  const BasicSet basics = BasicSet::select(all, space, basic_names);
  std::vector<const EmotionEmbedding*> complex;
  for (const auto& e : all) {
    if (!basics.contains(e.emotion)) complex.push_back(&e);
  }
  std::sort(complex.begin(), complex.end(),
            [](const auto* a, const auto* b) { return a->emotion < b->emotion; });
  Wheel wheel;
  for (const auto* c : complex) {
    WheelEntry e = find_basic_pair(*c, basics, options.grid, &wheel.warnings);
    if (options.canonical) e = canonical_entry(std::move(e));
    if (e.cos >= options.min_cos) {
      wheel.entries.push_back(std::move(e));
    } else {
      wheel.omitted.push_back(std::move(e));
    }
  }
  return wheel;
}

std::string wheel_tsv(const Wheel& wheel) {
  std::string out = "c\tb_i\tb_j\tw\tcos\n";
  for (const auto& e : wheel.entries) {
    out += fmt::format("{}\t{}\t{}\t{:.2f}\t{:.4f}\n", e.complex, e.basic_i, e.basic_j, e.w, e.cos);
  }
  return out;
}

std::string wheel_svg(const Wheel& wheel, std::span<const std::string> order) {
  std::vector<std::string> ring(order.begin(), order.end());
  for (const auto& e : wheel.entries) {
    for (const auto* name : {&e.basic_i, &e.basic_j}) {
      if (std::find(ring.begin(), ring.end(), *name) == ring.end()) ring.push_back(*name);
    }
  }
  constexpr double kSize = 640.0, kCenter = kSize / 2, kRadius = 240.0;
  std::map<std::string, std::pair<double, double>> pos;
  for (std::size_t k = 0; k < ring.size(); ++k) {
    const double theta = -std::numbers::pi / 2 +
                         2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(ring.size());
    pos[ring[k]] = {kCenter + kRadius * std::cos(theta), kCenter + kRadius * std::sin(theta)};
  }

  SvgDocument svg(kSize, kSize);
  svg.rect(0, 0, kSize, kSize, "#ffffff");
  svg.circle(kCenter, kCenter, kRadius, "none", "#bbbbbb", 1.0);
  std::set<std::pair<std::string, std::string>> chords;
  for (const auto& e : wheel.entries) chords.insert(std::minmax(e.basic_i, e.basic_j));
  for (const auto& [a, b] : chords) {
    svg.line(pos[a].first, pos[a].second, pos[b].first, pos[b].second, "#dddddd", 1.0, "4 3");
  }
  for (const auto& name : ring) {
    const auto [x, y] = pos[name];
    svg.circle(x, y, 10.0, "#1f4e79");
    const double lx = kCenter + (x - kCenter) * 1.12, ly = kCenter + (y - kCenter) * 1.12 + 4;
    svg.text(lx, ly, name, 14.0, "#1f4e79");
  }
  for (const auto& e : wheel.entries) {
    const auto [xi, yi] = pos[e.basic_i];
    const auto [xj, yj] = pos[e.basic_j];
    const double x = e.w * xi + (1.0 - e.w) * xj;
    const double y = e.w * yi + (1.0 - e.w) * yj;
    svg.circle(x, y, 2.0 + 10.0 * std::max(e.cos, 0.0), "#c0504d", "#ffffff", 0.5);
    svg.text(x, y - 6.0 - 10.0 * std::max(e.cos, 0.0), e.complex, 10.0, "#333333");
  }
  return svg.str();
}

}  // namespace emoprobe
