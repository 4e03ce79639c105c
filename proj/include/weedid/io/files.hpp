#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace weedid::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to `<path>.tmp` and renames over `path`, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace weedid::io
