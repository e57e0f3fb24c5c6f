#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace coherence::io {

/// Shortest decimal text that round-trips a double exactly.
std::string format_double(double value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Lowercase hex SHA-256 digest of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Little-endian binary helpers. The host is assumed little-endian
// (checked at compile time in io.cpp).
void write_u32(std::ostream& out, std::uint32_t value);
void write_u64(std::ostream& out, std::uint64_t value);
void write_f64(std::ostream& out, double value);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

template <typename T>
void write_block(std::ostream& out, std::span<const T> values);
template <typename T>
void read_block(std::istream& in, std::span<T> values);

/// Splits one CSV line on commas; trims surrounding blanks of each cell.
std::vector<std::string> split_csv_line(const std::string& line);

/// Parses a whole cell as a double (accepts nan/inf spellings).
bool parse_double(const std::string& cell, double& value);

}  // namespace coherence::io
