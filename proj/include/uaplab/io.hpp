#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "uaplab/errors.hpp"

namespace uaplab::io {

// Little-endian binary primitives shared by the UAPD / UAPM / UAPF formats.
// All multi-byte values are written LSB first regardless of host order.

void write_bytes(std::ostream& os, const void* p, size_t n);
void read_bytes(std::istream& is, void* p, size_t n);

void write_u16(std::ostream& os, uint16_t v);
void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_i32(std::ostream& os, int32_t v);
void write_f32(std::ostream& os, float v);

uint16_t read_u16(std::istream& is);
uint32_t read_u32(std::istream& is);
uint64_t read_u64(std::istream& is);
int32_t read_i32(std::istream& is);
float read_f32(std::istream& is);

void write_f32_array(std::ostream& os, const float* p, size_t n);
void read_f32_array(std::istream& is, float* p, size_t n);
void write_i32_array(std::ostream& os, const int32_t* p, size_t n);
void read_i32_array(std::istream& is, int32_t* p, size_t n);

// 4-byte magic tag.
void write_magic(std::ostream& os, const char magic[4]);
void expect_magic(std::istream& is, const char magic[4], const std::string& what);

// u32 length prefix + UTF-8 JSON text.
void write_json_block(std::ostream& os, const nlohmann::json& j);
nlohmann::json read_json_block(std::istream& is, const std::string& what);

// FNV-1a 64-bit checksum, used for provenance hashes and golden fixtures.
uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

std::vector<unsigned char> read_file_bytes(const std::string& path);

} // namespace uaplab::io
