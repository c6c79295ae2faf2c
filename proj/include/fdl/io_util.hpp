#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace fdl {

/// Writes bytes to `path` via a temporary file in the same directory followed
/// by an atomic rename, so reruns never leave a half-written output behind.
void atomic_write_bytes(const std::filesystem::path& path, std::string_view bytes);

/// Reads a whole file; throws IoError if it cannot be opened or read.
std::string read_bytes(const std::filesystem::path& path);

/// Canonical double formatting for CSV/logs: %.17g, round-trip exact.
std::string fmt_double(double v);

}  // namespace fdl
