#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "emoprobe/pad_regression.hpp"
#include "emoprobe/probing_model.hpp"

namespace emoprobe {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a reproducible end-to-end run needs. Stored as flat `key = value`
/// lines (a TOML subset: quoted strings, numbers, booleans, `#` comments).
struct PipelineConfig {
  std::filesystem::path corpus;
  // Empty embedding paths fall back to hash_encode over the corpus split.
  std::filesystem::path trn_embeddings;
  std::filesystem::path dev_embeddings;
  std::filesystem::path tst_embeddings;
  std::filesystem::path output_dir;  // not serialized
  std::filesystem::path pad_known;   // empty: the bundled 22-emotion table
  std::size_t encode_dim = 768;

  ProbingConfig probing;  // input_dim and classes are filled from the data
  std::size_t runs = 1;
  std::uint64_t seed = 0;

  double threshold = 2.0;
  double probe_reg = 1e-3;
  std::size_t probe_max_iterations = 5000;

  double min_cos = 0.1;
  double weight_step = 0.1;
  bool canonical_wheel = false;
  std::vector<std::string> basics;       // empty: default basic set
  std::vector<std::string> wheel_order;  // empty: default order

  PadTrainingOptions pad;

  void validate() const;
  /// Canonical text form; relative paths are written as stored.
  std::string to_text() const;
};

/// Defaults for the end-to-end report: the 3-layer 128:64:32, k = 8 layout.
PipelineConfig default_report_config();

/// Keys absent from `text` keep the values already in `base`.
PipelineConfig parse_pipeline_config(std::string_view text, PipelineConfig base = default_report_config());
/// Relative paths in the file are resolved against the file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

}  // namespace emoprobe
