#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <ios>

namespace leafwood {

/// Writes through a sibling temp file and renames it over `path`, so readers
/// never observe a half-written file.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ofstream&)>& writer,
                      std::ios::openmode mode = std::ios::out);

}  // namespace leafwood
