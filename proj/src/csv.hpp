#pragma once

// Minimal CSV reading shared by the loaders. Fields are comma separated,
// no quoting, surrounding whitespace is ignored.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fairpart::csv {

struct Table {
  std::vector<std::string> header;
  /// Data rows with their 1-based line numbers in the file.
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

Table read(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line);

/// Strict decimal parse of a whole field; throws ParseError naming `what`.
double parse_double(const std::string& field, std::string_view what);

}  // namespace fairpart::csv
