#pragma once
// Shared text formatting and file helpers. Every numeric artifact is written
// with fixed 9-digit precision so reruns are byte-comparable.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kgp {

std::string fixed9(double v);

std::string join_fixed9(std::span<const double> values, char sep);

std::vector<std::string_view> split(std::string_view s, char sep);

std::string_view trim(std::string_view s);

// Strict numeric parsing; throws kgp::Error naming `what` on malformed input.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace kgp
