#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace baycann::io {

// Header plus rows of raw cells. Cells never contain commas or quotes in any
// file this project reads or writes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws std::invalid_argument if absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Shortest round-trippable decimal form, identical across runs.
std::string format_double(double value);

std::vector<std::string> split(std::string_view line, char sep = ',');

double parse_double(std::string_view cell);

void write_text(const std::filesystem::path& path, std::string_view content);

std::string read_text(const std::filesystem::path& path);

// FNV-1a over raw bytes; stable across platforms and standard libraries.
std::uint64_t fnv1a64(std::string_view bytes);

std::string hex64(std::uint64_t value);

}  // namespace baycann::io
