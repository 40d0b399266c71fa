#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clens {

inline constexpr std::string_view kVersion = "0.1.0";

/// Reads a whole file. Missing paths raise MissingFile, other failures IoFailure.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Shortest round-trip decimal form; "nan" / "inf" / "-inf" for non-finite.
std::string format_number(double value);
std::string format_optional(const std::optional<double>& value);

std::string hex64(std::uint64_t value);

/// "# clens <version> config=<hash>" — first line of every text artifact.
std::string provenance_line(std::string_view config_hash);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Splits into lines, dropping '\r', blank lines and '#' comment lines.
std::vector<std::string> data_lines(std::string_view text);

double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_uint(std::string_view text, std::string_view what);

}  // namespace clens
