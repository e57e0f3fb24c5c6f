#include "coherence/io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "coherence/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace coherence::io {

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> chunk(1 << 16);
  while (in) {
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, chunk.data(), static_cast<size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

namespace {

template <typename T>
void write_raw(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(T)), ErrorCode::kParse,
          "unexpected end of binary stream");
  return value;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t value) { write_raw(out, value); }
void write_u64(std::ostream& out, std::uint64_t value) { write_raw(out, value); }
void write_f64(std::ostream& out, double value) { write_raw(out, value); }
std::uint32_t read_u32(std::istream& in) { return read_raw<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_raw<std::uint64_t>(in); }
double read_f64(std::istream& in) { return read_raw<double>(in); }

template <typename T>
void write_block(std::ostream& out, std::span<const T> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
void read_block(std::istream& in, std::span<T> values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size_bytes()));
  require(in.gcount() == static_cast<std::streamsize>(values.size_bytes()), ErrorCode::kParse,
          "truncated binary block");
}

template void write_block<double>(std::ostream&, std::span<const double>);
template void write_block<std::uint32_t>(std::ostream&, std::span<const std::uint32_t>);
template void write_block<std::uint64_t>(std::ostream&, std::span<const std::uint64_t>);
template void read_block<double>(std::istream&, std::span<double>);
template void read_block<std::uint32_t>(std::istream&, std::span<std::uint32_t>);
template void read_block<std::uint64_t>(std::istream&, std::span<std::uint64_t>);

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos
                                                                      : comma - start);
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? std::string()
                                               : cell.substr(first, last - first + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_double(const std::string& cell, double& value) {
  if (cell.empty()) return false;
  // strtod rather than from_chars: it accepts "nan", "inf", "+1.0".
  char* end = nullptr;
  value = std::strtod(cell.c_str(), &end);
  return end == cell.c_str() + cell.size();
}

}  // namespace coherence::io
