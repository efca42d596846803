#pragma once

#include <filesystem>
#include <string>

namespace mlrtl {

// Throws Error(FileNotFound) or Error(Io).
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace mlrtl
