#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emoprobe/binary_io.hpp"
#include "emoprobe/dataset.hpp"

namespace emoprobe {

/// n documents x dim row-major float matrix keyed by document id.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  /// Validates: |doc_ids| * dim == |data|, dim > 0, unique ids, finite values.
  EmbeddingMatrix(std::vector<std::string> doc_ids, std::size_t dim, std::vector<float> data);

  std::size_t rows() const { return doc_ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  /// Row subset in the given order.
  EmbeddingMatrix select(std::span<const std::size_t> rows) const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::vector<std::string> doc_ids_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

inline constexpr std::uint32_t kEmb1Version = 1;

std::vector<std::uint8_t> encode_emb1(const EmbeddingMatrix& m);
EmbeddingMatrix decode_emb1(std::span<const std::uint8_t> bytes);

EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

/// Deterministic fallback encoder: L2-normalized signed-hash bag of lowercased
/// character 3-grams. Requires dim >= 8.
EmbeddingMatrix hash_encode(std::span<const DocumentRecord> docs, std::size_t dim,
                            std::uint64_t seed);

}  // namespace emoprobe
