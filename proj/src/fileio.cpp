#include "cnnprobe/fileio.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <system_error>

#include <unistd.h>

#include "cnnprobe/error.hpp"

namespace cnnprobe {

namespace fs = std::filesystem;

namespace {

std::string temp_name(const std::string& path) {
  static std::atomic<unsigned> counter{0};
  return path + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
}

void write_raw(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kOpen, "cannot create '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError(IoError::Kind::kOpen, "write to '" + path + "' failed");
}

}  // namespace

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::kOpen, "cannot open '" + path + "'");
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  Bytes bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError(IoError::Kind::kOpen, "read of '" + path + "' failed");
  return bytes;
}

void write_file_atomic(const std::string& path, const Bytes& bytes) {
  OutputBatch batch;
  batch.add(path, bytes);
  batch.commit();
}

void write_file_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, Bytes(text.begin(), text.end()));
}

void OutputBatch::add(std::string path, Bytes bytes) {
  files_.emplace_back(std::move(path), std::move(bytes));
}

void OutputBatch::add(std::string path, const std::string& text) {
  files_.emplace_back(std::move(path), Bytes(text.begin(), text.end()));
}

void OutputBatch::commit() {
  std::vector<std::string> temps;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& t : temps) fs::remove(t, ec);
  };
  try {
    for (const auto& [path, bytes] : files_) {
      temps.push_back(temp_name(path));
      write_raw(temps.back(), bytes);
    }
    for (std::size_t i = 0; i < files_.size(); ++i) {
      std::error_code ec;
      fs::rename(temps[i], files_[i].first, ec);
      if (ec) {
        throw IoError(IoError::Kind::kOpen, "cannot rename into '" + files_[i].first + "': " + ec.message());
      }
    }
  } catch (...) {
    cleanup();
    throw;
  }
  files_.clear();
}

}  // namespace cnnprobe
