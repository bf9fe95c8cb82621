#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace agsysid {

/// Decimal with 17 significant digits; round-trips every finite double.
std::string format_real(double v);
double parse_real(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

/// Write to path via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace agsysid
