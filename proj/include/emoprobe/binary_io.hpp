#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emoprobe {

enum class FormatErrc {
  io,
  bad_magic,
  bad_version,
  bad_dimension,
  truncated,
  duplicate_id,
  bad_crc,
  non_finite,
  invalid,
};

std::string_view errc_name(FormatErrc code);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what);
  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

/// Standard CRC-32 (IEEE 802.3 polynomial), as produced by zlib.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Little-endian byte sink.
class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(std::string_view m);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  /// u16 length prefix followed by the raw bytes.
  void short_string(std::string_view s);
  /// Appends the CRC-32 of everything written so far.
  void crc_trailer();

  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Little-endian byte source; throws FormatError(truncated) on short reads.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::string magic(std::size_t n);
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string short_string();

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n);

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Checks the trailing CRC-32 and returns the payload that precedes it.
std::span<const std::uint8_t> verify_crc_trailer(std::span<const std::uint8_t> file);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace emoprobe
