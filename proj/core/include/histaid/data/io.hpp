#pragma once

#include <string>
#include <string_view>

namespace histaid::data {

// Whole-file read; throws Error when the file cannot be opened.
std::string read_file(const std::string& path);
// Writes to "<path>.tmp" then renames over `path`, so readers never observe a
// partial file. Parent directories are created.
void write_file_atomic(const std::string& path, std::string_view bytes);

}  // namespace histaid::data
