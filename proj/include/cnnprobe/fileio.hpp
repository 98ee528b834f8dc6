#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cnnprobe {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::string& path);

// Writes to a sibling temp file and renames it over path, so readers never
// see a partially written file.
void write_file_atomic(const std::string& path, const Bytes& bytes);
void write_file_atomic(const std::string& path, const std::string& text);

// Collects several output files and publishes them together: every file is
// first written to a temp name, and only when all temp writes succeed are
// they renamed into place. A failed commit removes the temp files.
class OutputBatch {
 public:
  void add(std::string path, Bytes bytes);
  void add(std::string path, const std::string& text);
  std::size_t size() const { return files_.size(); }
  const std::vector<std::pair<std::string, Bytes>>& files() const { return files_; }
  void commit();

 private:
  std::vector<std::pair<std::string, Bytes>> files_;
};

}  // namespace cnnprobe
