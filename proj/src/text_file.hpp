#pragma once

#include <filesystem>
#include <string>

namespace sqlicl::detail {

// Whole file as bytes. Throws Error(kIo) naming the path.
std::string read_text_file(const std::filesystem::path& file);

// Writes through a sibling temp file and renames, so readers never see a
// partial file. Throws Error(kIo).
void write_file_atomic(const std::filesystem::path& file, const std::string& bytes);

}  // namespace sqlicl::detail
