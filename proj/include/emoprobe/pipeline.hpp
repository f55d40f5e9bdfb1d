#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emoprobe/dataset.hpp"
#include "emoprobe/embedding_io.hpp"
#include "emoprobe/emotion_geometry.hpp"
#include "emoprobe/layer_analysis.hpp"
#include "emoprobe/model_io.hpp"
#include "emoprobe/pad_regression.hpp"
#include "emoprobe/pipeline_config.hpp"

namespace emoprobe {

/// Class index of every embedding row, looked up through the corpus by document id.
std::vector<std::size_t> aligned_labels(const EmbeddingMatrix& embeddings,
                                        const SplitCorpus& corpus, const LabelSpace& labels);

/// Per-split count and mean (+-std) whitespace-token length, one line per non-empty split.
std::string stats_report(const SplitCorpus& corpus);

/// "58.2 (±0.5)" from fractions in [0, 1].
std::string format_accuracy(double mean, double std);

/// Population mean and standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

struct RunResult {
  std::uint64_t seed = 0;
  TrainResult training;
  double dev_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

struct TrainingSummary {
  std::vector<RunResult> runs;
  std::size_t best_run = 0;  // highest dev accuracy; first on ties
  double dev_mean = 0.0, dev_std = 0.0;
  std::optional<double> test_mean, test_std;

  /// One row per (run, epoch).
  std::string metrics_tsv() const;
  std::string summary() const;
};

/// Trains `runs` networks with seeds seed, seed + 1, ...; dev selects checkpoints.
TrainingSummary train_runs(const ProbingConfig& base, std::size_t runs, std::uint64_t seed,
                           const LabeledSet& train_set, const LabeledSet& dev_set,
                           const std::optional<LabeledSet>& test_set = std::nullopt);

/// Reads `path` when set, otherwise hash-encodes the split.
EmbeddingMatrix resolve_embeddings(const std::filesystem::path& path, const SplitCorpus& corpus,
                                   Split split, std::size_t dim, std::uint64_t seed);

/// Bundled 22-emotion PAD table used when no file is configured.
std::filesystem::path default_pad_path();

struct ReportFile {
  std::string name;
  std::uint64_t bytes = 0;
  std::uint32_t crc = 0;
};

/// Writes the full artifact set (model, metrics, layer tables + DOT graph, wheel
/// TSV/SVG, PAD TSV/SVG/3D data, config) into cfg.output_dir, then MANIFEST.tsv
/// with the CRC-32 of every file. Progress goes to `log` when non-null.
std::vector<ReportFile> full_report(const PipelineConfig& cfg, std::ostream* log = nullptr);

/// Synthetic corpus over the 32 Empathetic Dialogues labels: each emotion draws
/// from its own small vocabulary, so hashed embeddings cluster by label.
SplitCorpus synthetic_corpus(std::size_t trn_per_class, std::size_t dev_per_class,
                             std::size_t tst_per_class, std::uint64_t seed);

void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace emoprobe
