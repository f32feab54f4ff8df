#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace zoomprop::io {

std::string read_text(const std::filesystem::path& path);
// Writes to a sibling temporary and renames over the target.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace zoomprop::io
