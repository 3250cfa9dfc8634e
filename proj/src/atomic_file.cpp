#include "leafwood/atomic_file.hpp"

#include <system_error>

#include "leafwood/errors.hpp"

namespace leafwood {

void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ofstream&)>& writer,
                      std::ios::openmode mode) {
  auto tmp = path;
  tmp += ".tmp";
  auto discard = [&] {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
  };
  {
    std::ofstream out(tmp, mode | std::ios::out | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    try {
      writer(out);
    } catch (...) {
      out.close();
      discard();
      throw;
    }
    out.flush();
    if (!out) {
      out.close();
      discard();
      throw IoError("write failed: " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    discard();
    throw IoError("cannot replace " + path.string() + ": " + ec.message());
  }
}

}  // namespace leafwood
