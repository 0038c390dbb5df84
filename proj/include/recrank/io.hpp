#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <istream>
#include <memory>
#include <string>
#include <string_view>

#include "recrank/types.hpp"

namespace recrank::io {

class IoError : public Error {
 public:
  using Error::Error;
};

// Opens a file for reading; gzip input (by magic bytes) is decompressed
// transparently.
std::unique_ptr<std::istream> open_input(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames, so readers never observe a
// partial file.
void write_file(const std::filesystem::path& path, std::string_view contents);

std::string file_sha256(const std::filesystem::path& path);

// Runs body(i) for i in [0, n) on up to `jobs` threads. Work is claimed from a
// shared counter; callers write results into slot i so output order never
// depends on scheduling.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace recrank::io
