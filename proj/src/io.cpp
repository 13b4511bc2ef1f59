#include "uaplab/io.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace uaplab::io {

void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed (" + std::to_string(n) + " bytes)");
}

void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n)
    throw FormatError("truncated input: wanted " + std::to_string(n) + " bytes, got " +
                      std::to_string(is.gcount()));
}

namespace {

template <class T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  write_bytes(os, buf, sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  read_bytes(is, buf, sizeof(T));
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

} // namespace

void write_u16(std::ostream& os, uint16_t v) { write_le<uint16_t>(os, v); }
void write_u32(std::ostream& os, uint32_t v) { write_le<uint32_t>(os, v); }
void write_u64(std::ostream& os, uint64_t v) { write_le<uint64_t>(os, v); }
void write_i32(std::ostream& os, int32_t v) { write_le<int32_t>(os, v); }

void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

uint16_t read_u16(std::istream& is) { return read_le<uint16_t>(is); }
uint32_t read_u32(std::istream& is) { return read_le<uint32_t>(is); }
uint64_t read_u64(std::istream& is) { return read_le<uint64_t>(is); }
int32_t read_i32(std::istream& is) { return read_le<int32_t>(is); }

float read_f32(std::istream& is) {
  uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_f32_array(std::ostream& os, const float* p, size_t n) {
  // Hosts here are little-endian; keep the per-element path simple and portable.
  for (size_t i = 0; i < n; ++i) write_f32(os, p[i]);
}

void read_f32_array(std::istream& is, float* p, size_t n) {
  for (size_t i = 0; i < n; ++i) p[i] = read_f32(is);
}

void write_i32_array(std::ostream& os, const int32_t* p, size_t n) {
  for (size_t i = 0; i < n; ++i) write_i32(os, p[i]);
}

void read_i32_array(std::istream& is, int32_t* p, size_t n) {
  for (size_t i = 0; i < n; ++i) p[i] = read_i32(is);
}

void write_magic(std::ostream& os, const char magic[4]) { write_bytes(os, magic, 4); }

void expect_magic(std::istream& is, const char magic[4], const std::string& what) {
  char got[4];
  read_bytes(is, got, 4);
  if (std::memcmp(got, magic, 4) != 0)
    throw FormatError(what + ": bad magic '" + std::string(got, 4) + "', expected '" +
                      std::string(magic, 4) + "'");
}

void write_json_block(std::ostream& os, const nlohmann::json& j) {
  std::string text = j.dump();
  if (text.size() > 0xffffffffULL) throw IoError("json block too large");
  write_u32(os, static_cast<uint32_t>(text.size()));
  write_bytes(os, text.data(), text.size());
}

nlohmann::json read_json_block(std::istream& is, const std::string& what) {
  uint32_t len = read_u32(is);
  if (len > (64u << 20)) throw FormatError(what + ": implausible json block length " + std::to_string(len));
  std::string text(len, '\0');
  read_bytes(is, text.data(), len);
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError(what + ": header is not valid json");
  return j;
}

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64_file(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  f.seekg(0, std::ios::end);
  auto end = f.tellg();
  if (end < 0) throw IoError("cannot stat " + path);
  f.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(static_cast<size_t>(end));
  if (!bytes.empty()) read_bytes(f, bytes.data(), bytes.size());
  return bytes;
}

} // namespace uaplab::io
