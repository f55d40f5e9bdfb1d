#include "emoprobe/model_io.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace emoprobe {

namespace {

constexpr std::string_view kMagic = "PRB1";

std::uint32_t to_u32(std::size_t v, std::string_view what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(FormatErrc::invalid, fmt::format("{} too large for PRB1", what));
  }
  return static_cast<std::uint32_t>(v);
}

void write_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
  }
}

void read_matrix(ByteReader& r, Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = r.f32();
      if (!std::isfinite(v)) throw FormatError(FormatErrc::non_finite, "non-finite weight");
      m(i, c) = v;
    }
  }
}

}  // namespace

std::vector<std::uint8_t> encode_prb1(const ProbingModel& model) {
  const auto& cfg = model.network.config();
  if (model.labels.size() != cfg.classes) {
    throw FormatError(FormatErrc::invalid, fmt::format("{} labels for {} classes",
                                                       model.labels.size(), cfg.classes));
  }
  ByteWriter w;
  w.magic(kMagic);
  w.u32(kPrb1Version);
  w.u32(to_u32(cfg.depth(), "depth"));
  for (std::size_t d : cfg.layer_dims) w.u32(to_u32(d, "layer dim"));
  w.u32(to_u32(cfg.heads, "heads"));
  w.u32(to_u32(cfg.input_dim, "input_dim"));
  w.u32(to_u32(cfg.classes, "classes"));
  w.f64(cfg.learning_rate);
  w.u32(to_u32(cfg.batch_size, "batch_size"));
  w.u32(to_u32(cfg.epochs, "epochs"));
  w.u64(cfg.seed);
  w.u32(to_u32(cfg.max_doc_length, "max_doc_length"));
  w.u32(to_u32(model.labels.size(), "label count"));
  for (const auto& name : model.labels.names()) w.short_string(name);
  for (const auto& h : model.network.params().heads) write_matrix(w, h);
  write_matrix(w, model.network.output_weight());
  for (Eigen::Index i = 0; i < model.network.output_bias().size(); ++i) {
    w.f32(static_cast<float>(model.network.output_bias()(i)));
  }
  w.crc_trailer();
  return w.take();
}

ProbingModel decode_prb1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || r.magic(kMagic.size()) != kMagic) {
    throw FormatError(FormatErrc::bad_magic, "not a PRB1 file");
  }
  const std::uint32_t version = r.u32();
  if (version != kPrb1Version) {
    throw FormatError(FormatErrc::bad_version, fmt::format("unsupported PRB1 version {}", version));
  }
  // Validate the CRC before trusting any size field.
  verify_crc_trailer(bytes);

  ProbingConfig cfg;
  const std::uint32_t depth = r.u32();
  if (depth == 0 || depth > 64) throw FormatError(FormatErrc::bad_dimension, "bad layer count");
  cfg.layer_dims.clear();
  for (std::uint32_t i = 0; i < depth; ++i) cfg.layer_dims.push_back(r.u32());
  cfg.heads = r.u32();
  cfg.input_dim = r.u32();
  cfg.classes = r.u32();
  cfg.learning_rate = r.f64();
  cfg.batch_size = r.u32();
  cfg.epochs = r.u32();
  cfg.seed = r.u64();
  cfg.max_doc_length = r.u32();
  try {
    cfg.validate();
  } catch (const ModelError& e) {
    throw FormatError(FormatErrc::bad_dimension, e.what());
  }
  const std::uint32_t n_labels = r.u32();
  if (n_labels != cfg.classes) {
    throw FormatError(FormatErrc::invalid, fmt::format("{} labels for {} classes", n_labels,
                                                       cfg.classes));
  }
  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < n_labels; ++i) names.push_back(r.short_string());

  std::uint64_t weights = 0;
  for (std::size_t i = 0; i < cfg.depth(); ++i) {
    weights += static_cast<std::uint64_t>(cfg.layer_input_dim(i)) * cfg.layer_dims[i] * cfg.heads;
  }
  weights += static_cast<std::uint64_t>(cfg.pooled_dim() + 1) * cfg.classes;
  if (weights * 4 + 4 != r.remaining()) {
    throw FormatError(FormatErrc::truncated,
                      fmt::format("expected {} weight bytes, found {}", weights * 4,
                                  r.remaining() - 4));
  }
  ProbingNetwork net(cfg);
  for (auto& h : net.params().heads) read_matrix(r, h);
  read_matrix(r, net.output_weight());
  for (Eigen::Index i = 0; i < net.output_bias().size(); ++i) net.output_bias()(i) = r.f32();
  return ProbingModel{std::move(net), LabelSpace::ordered(std::move(names))};
}

void save_model(const ProbingModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_prb1(model));
}

ProbingModel load_model(const std::filesystem::path& path) {
  return decode_prb1(read_file_bytes(path));
}

}  // namespace emoprobe
