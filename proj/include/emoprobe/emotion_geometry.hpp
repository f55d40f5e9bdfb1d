#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/dataset.hpp"
#include "emoprobe/probing_model.hpp"

namespace emoprobe {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// r_e: mean of the normalized pooled vectors g over the documents labeled e.
struct EmotionEmbedding {
  std::string emotion;
  Eigen::VectorXd r;
  std::size_t support = 0;
};

/// Rows are g_l for every document (the normalized final-layer concatenation).
Eigen::MatrixXd pooled_features(const ProbingNetwork& net, const EmbeddingMatrix& embeddings);

/// Mean over the rows of `pooled` (one g vector per document of the emotion).
EmotionEmbedding mean_embedding(std::string emotion, const Eigen::MatrixXd& pooled);
EmotionEmbedding mean_embedding(std::string emotion, const ProbingNetwork& net,
                                const EmbeddingMatrix& documents_of_emotion);

/// One embedding per label, in label order. Throws listing every label without documents.
std::vector<EmotionEmbedding> emotion_embeddings(const ProbingNetwork& net,
                                                 const EmbeddingMatrix& embeddings,
                                                 std::span<const std::size_t> labels,
                                                 const LabelSpace& space);

/// w * r_i + (1 - w) * r_j.
Eigen::VectorXd blend(const Eigen::VectorXd& r_i, const Eigen::VectorXd& r_j, double w);

/// Cosine similarity with both norms floored at 1e-12.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

std::vector<std::string> default_basic_emotions();
/// Placement order of the basics around the wheel, clockwise from the top.
std::vector<std::string> default_wheel_order();

/// The eight anchor emotions, ordered by label index.
class BasicSet {
 public:
  explicit BasicSet(std::vector<EmotionEmbedding> members);
  /// Picks the named basics out of the per-label embeddings; orders them by label index.
  static BasicSet select(const std::vector<EmotionEmbedding>& all, const LabelSpace& space,
                         std::span<const std::string> names);

  const std::vector<EmotionEmbedding>& members() const { return members_; }
  bool contains(std::string_view name) const;

 private:
  std::vector<EmotionEmbedding> members_;
};

/// Blend weights lo..hi in steps of `step`; 1/step must be an integer.
struct WeightGrid {
  double step = 0.1;
  double lo = 0.1;
  double hi = 0.9;
  std::vector<double> values() const;
};

struct WheelEntry {
  std::string complex;
  std::string basic_i;
  std::string basic_j;
  double w = 0.0;    // weight on basic_i
  double cos = 0.0;
};

/// Exhaustive argmax of cos(blend(r_i, r_j, w), c) over pairs i < j (basic order)
/// and ascending w; the first strict maximum wins. Zero-norm blends are skipped
/// and reported through `warnings`.
WheelEntry find_basic_pair(const EmotionEmbedding& c, const BasicSet& basics,
                           const WeightGrid& grid = {}, std::vector<std::string>* warnings = nullptr);

/// Swaps the pair when w < 0.5 so the dominant basic comes first.
WheelEntry canonical_entry(WheelEntry e);

struct Wheel {
  std::vector<WheelEntry> entries;   // cos >= min_cos, sorted by complex name
  std::vector<WheelEntry> omitted;   // cos < min_cos
  std::vector<std::string> warnings;
};

struct WheelOptions {
  double min_cos = 0.1;
  WeightGrid grid;
  bool canonical = false;
};

/// Searches every non-basic emotion against the basic set.
Wheel build_wheel(const std::vector<EmotionEmbedding>& all, const LabelSpace& space,
                  std::span<const std::string> basic_names, const WheelOptions& options = {});

/// Columns c, b_i, b_j, w, cos.
std::string wheel_tsv(const Wheel& wheel);

/// Basics equally spaced on a circle in `order`; each complex emotion on the
/// chord between its pair, nearer the basic with the larger weight; dot radius
/// proportional to cos.
std::string wheel_svg(const Wheel& wheel, std::span<const std::string> order);

}  // namespace emoprobe
