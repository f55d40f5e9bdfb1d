#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/emotion_geometry.hpp"

namespace emoprobe {

class PadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pleasure, arousal, dominance; each in [-1, 1].
struct PadTriple {
  double pleasure = 0.0;
  double arousal = 0.0;
  double dominance = 0.0;

  double operator[](std::size_t d) const;
  double& operator[](std::size_t d);
};

inline constexpr std::array<std::string_view, 3> kPadDimensions{"pleasure", "arousal", "dominance"};

/// The 32 emotion labels of the Empathetic Dialogues corpus.
std::vector<std::string> empathetic_dialogue_emotions();

struct KnownPad {
  PadTriple values;
  std::array<std::string, 3> raw;  // cells exactly as they appeared in the file
};

using KnownPadTable = std::map<std::string, KnownPad>;

/// TSV `emotion pleasure arousal dominance`. Names outside `vocabulary` are rejected
/// (pass an empty vocabulary to accept any name).
KnownPadTable parse_known_pad(std::string_view content, std::span<const std::string> vocabulary);
KnownPadTable load_known_pad(const std::filesystem::path& path,
                             std::span<const std::string> vocabulary);
KnownPadTable load_known_pad(const std::filesystem::path& path);

struct PadTrainingOptions {
  std::size_t hidden = 128;
  double dropout = 0.3;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 5000;
  bool early_stopping = true;
  std::size_t patience = 50;
  double min_delta = 1e-5;
  std::uint64_t seed = 0;
};

/// input -> ReLU(128) -> dropout -> tanh scalar.
struct PadRegressor {
  Eigen::MatrixXd hidden_weight;  // input x hidden
  Eigen::VectorXd hidden_bias;
  Eigen::VectorXd output_weight;  // hidden
  double output_bias = 0.0;
  double dropout = 0.3;

  /// Inference: dropout off.
  double predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& rows) const;
};

PadRegressor init_pad_regressor(std::size_t input_dim, const PadTrainingOptions& options,
                                std::uint64_t seed);

struct RegressorReport {
  std::size_t epochs = 0;
  double mse = 0.0;                  // eval-mode MSE on the training rows after training
  std::vector<double> loss_history;  // training-mode MSE per epoch (before the update)
};

/// Full-batch Adam on MSE; inverted dropout on the hidden layer; early stopping
/// when the training loss fails to improve by min_delta for `patience` epochs.
PadRegressor train_pad_regressor(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                 const PadTrainingOptions& options, std::uint64_t seed,
                                 RegressorReport* report = nullptr);

struct PadModel {
  std::array<PadRegressor, 3> regressors;
};

struct PadTrainingReport {
  std::array<RegressorReport, 3> dimensions;
};

/// One regressor per PAD dimension over the embeddings of the emotions in `targets`.
PadModel train_pad_regressors(const std::vector<EmotionEmbedding>& embeddings,
                              const KnownPadTable& targets, const PadTrainingOptions& options = {},
                              PadTrainingReport* report = nullptr);

PadTriple predict_pad(const PadModel& model, const Eigen::VectorXd& r);

enum class PadSource { known, predicted };

struct PadRow {
  std::string emotion;
  PadTriple values;
  PadSource source = PadSource::known;
  std::array<std::string, 3> cells;  // formatted output cells
};

struct PadTable {
  std::vector<PadRow> rows;  // embedding order

  std::size_t predicted_count() const;
  /// `emotion pleasure arousal dominance source`.
  std::string to_tsv() const;
  /// Three columns for external 3D plotting, rows in table order.
  std::string to_3d_tsv() const;
  /// Pleasure (x) against arousal (y); predicted emotions labeled in red.
  std::string scatter_svg() const;
};

struct PadAugmentation {
  PadTable table;
  PadTrainingReport report;
};

/// Known rows keep their file values verbatim; the rest are predicted. When every
/// emotion is known no regressor is trained.
PadAugmentation augment_pad(const std::vector<EmotionEmbedding>& embeddings,
                            const KnownPadTable& known, const PadTrainingOptions& options = {});

}  // namespace emoprobe
