#include "emoprobe/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <zlib.h>

namespace emoprobe {

static_assert(std::endian::native == std::endian::little, "EMB1/PRB1 I/O assumes a little-endian host");

std::string_view errc_name(FormatErrc code) {
  switch (code) {
    case FormatErrc::io: return "Io";
    case FormatErrc::bad_magic: return "BadMagic";
    case FormatErrc::bad_version: return "BadVersion";
    case FormatErrc::bad_dimension: return "BadDimension";
    case FormatErrc::truncated: return "Truncated";
    case FormatErrc::duplicate_id: return "DuplicateId";
    case FormatErrc::bad_crc: return "BadCrc";
    case FormatErrc::non_finite: return "NonFinite";
    case FormatErrc::invalid: return "Invalid";
  }
  return "Unknown";
}

FormatError::FormatError(FormatErrc code, const std::string& what)
    : std::runtime_error(fmt::format("{}: {}", errc_name(code), what)), code_(code) {}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& buf, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> b) {
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

}  // namespace

void ByteWriter::magic(std::string_view m) { buf_.insert(buf_.end(), m.begin(), m.end()); }
void ByteWriter::u16(std::uint16_t v) { put(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { put(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put(buf_, v); }
void ByteWriter::f32(float v) { put(buf_, v); }
void ByteWriter::f64(double v) { put(buf_, v); }

void ByteWriter::short_string(std::string_view s) {
  if (s.size() > 0xFFFF) throw FormatError(FormatErrc::invalid, "string longer than 65535 bytes");
  u16(static_cast<std::uint16_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::crc_trailer() { u32(crc32(buf_)); }

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  if (remaining() < n) {
    throw FormatError(FormatErrc::truncated,
                      fmt::format("need {} bytes at offset {}, {} left", n, pos_, remaining()));
  }
  auto out = bytes_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::magic(std::size_t n) {
  auto b = take(n);
  return {b.begin(), b.end()};
}

std::uint16_t ByteReader::u16() { return get<std::uint16_t>(take(2)); }
std::uint32_t ByteReader::u32() { return get<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::u64() { return get<std::uint64_t>(take(8)); }
float ByteReader::f32() { return get<float>(take(4)); }
double ByteReader::f64() { return get<double>(take(8)); }

std::string ByteReader::short_string() {
  const std::uint16_t n = u16();
  auto b = take(n);
  return {b.begin(), b.end()};
}

std::span<const std::uint8_t> verify_crc_trailer(std::span<const std::uint8_t> file) {
  if (file.size() < 4) throw FormatError(FormatErrc::truncated, "file shorter than CRC trailer");
  const auto payload = file.first(file.size() - 4);
  const auto stored = get<std::uint32_t>(file.last(4));
  const auto actual = crc32(payload);
  if (stored != actual) {
    throw FormatError(FormatErrc::bad_crc,
                      fmt::format("stored {:08x}, computed {:08x}", stored, actual));
  }
  return payload;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io, fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::io, fmt::format("write failed for '{}'", path.string()));
}

}  // namespace emoprobe
