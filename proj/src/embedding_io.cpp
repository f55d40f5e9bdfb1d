#include "emoprobe/embedding_io.hpp"

#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "emoprobe/utf8.hpp"

namespace emoprobe {

namespace {

constexpr std::string_view kMagic = "EMB1";

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t hash_gram(std::span<const char32_t> gram, std::uint64_t seed) {
  // FNV-1a over the UTF-8 bytes of the gram, then mixed with the seed.
  std::string bytes;
  for (char32_t cp : gram) utf8::append(bytes, cp);
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return splitmix64(h ^ splitmix64(seed));
}

void check_ids(const std::vector<std::string>& ids) {
  std::set<std::string_view> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw FormatError(FormatErrc::duplicate_id, fmt::format("duplicate id '{}'", id));
    }
  }
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> doc_ids, std::size_t dim,
                                 std::vector<float> data)
    : doc_ids_(std::move(doc_ids)), dim_(dim), data_(std::move(data)) {
  if (dim_ == 0) throw FormatError(FormatErrc::bad_dimension, "dimension must be positive");
  if (data_.size() != doc_ids_.size() * dim_) {
    throw FormatError(FormatErrc::invalid,
                      fmt::format("{} values for {} x {} matrix", data_.size(), doc_ids_.size(), dim_));
  }
  check_ids(doc_ids_);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw FormatError(FormatErrc::non_finite,
                        fmt::format("row '{}' has a non-finite value", doc_ids_[i / dim_]));
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::select(std::span<const std::size_t> rows) const {
  std::vector<std::string> ids;
  std::vector<float> data;
  ids.reserve(rows.size());
  data.reserve(rows.size() * dim_);
  for (std::size_t r : rows) {
    ids.push_back(doc_ids_.at(r));
    const auto src = row(r);
    data.insert(data.end(), src.begin(), src.end());
  }
  return EmbeddingMatrix(std::move(ids), dim_, std::move(data));
}

std::vector<std::uint8_t> encode_emb1(const EmbeddingMatrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.dim() > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(FormatErrc::invalid, "matrix too large for EMB1");
  }
  ByteWriter w;
  w.magic(kMagic);
  w.u32(kEmb1Version);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.dim()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    w.short_string(m.doc_ids()[i]);
    for (float v : m.row(i)) w.f32(v);
  }
  w.crc_trailer();
  return w.take();
}

EmbeddingMatrix decode_emb1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || r.magic(kMagic.size()) != kMagic) {
    throw FormatError(FormatErrc::bad_magic, "not an EMB1 file");
  }
  const std::uint32_t version = r.u32();
  if (version != kEmb1Version) {
    throw FormatError(FormatErrc::bad_version, fmt::format("unsupported EMB1 version {}", version));
  }
  const std::uint32_t n = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim == 0) throw FormatError(FormatErrc::bad_dimension, "dimension must be positive");
  // Each record needs at least 2 + 4*dim bytes; reject impossible counts before allocating.
  if (static_cast<std::uint64_t>(n) * (2 + 4ull * dim) > r.remaining()) {
    throw FormatError(FormatErrc::truncated, fmt::format("payload too short for {} rows", n));
  }
  std::vector<std::string> ids;
  std::vector<float> data;
  ids.reserve(n);
  data.reserve(static_cast<std::size_t>(n) * dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    ids.push_back(r.short_string());
    for (std::uint32_t j = 0; j < dim; ++j) data.push_back(r.f32());
  }
  const std::size_t payload_end = r.position();
  const std::uint32_t stored = r.u32();
  if (r.remaining() != 0) {
    throw FormatError(FormatErrc::invalid, fmt::format("{} trailing bytes", r.remaining()));
  }
  const std::uint32_t actual = crc32(bytes.first(payload_end));
  if (stored != actual) {
    throw FormatError(FormatErrc::bad_crc,
                      fmt::format("stored {:08x}, computed {:08x}", stored, actual));
  }
  return EmbeddingMatrix(std::move(ids), dim, std::move(data));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  return decode_emb1(read_file_bytes(path));
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  write_file_bytes(path, encode_emb1(m));
}

EmbeddingMatrix hash_encode(std::span<const DocumentRecord> docs, std::size_t dim,
                            std::uint64_t seed) {
  if (dim < 8) throw FormatError(FormatErrc::bad_dimension, "hash_encode needs dim >= 8");
  std::vector<std::string> ids;
  std::vector<float> data(docs.size() * dim, 0.0f);
  std::vector<double> acc(dim);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    ids.push_back(docs[d].id);
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto cps = utf8::lowered_code_points(docs[d].text);
    const std::size_t n = 3;
    const auto add = [&](std::span<const char32_t> gram) {
      const std::uint64_t h = hash_gram(gram, seed);
      acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
    };
    if (cps.size() < n) {
      add(cps);
    } else {
      for (std::size_t i = 0; i + n <= cps.size(); ++i) add(std::span(cps).subspan(i, n));
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      // Every gram cancelled out; fall back to a single whole-text bucket.
      const std::uint64_t h = hash_gram(cps, seed ^ 0x5EEDull);
      acc[h % dim] = 1.0;
      norm = 1.0;
    }
    for (std::size_t j = 0; j < dim; ++j) data[d * dim + j] = static_cast<float>(acc[j] / norm);
  }
  return EmbeddingMatrix(std::move(ids), dim, std::move(data));
}

}  // namespace emoprobe
