#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace headprobe {

// Single-file tensor container in the safetensors layout:
//   u64 little-endian header length | JSON header | raw tensor bytes
// The header maps tensor name -> {dtype, shape, data_offsets} plus an
// optional "__metadata__" string map.

struct TensorEntry {
  std::string dtype;
  std::vector<std::size_t> shape;
  std::uint64_t begin = 0;  // relative to the start of the data section
  std::uint64_t end = 0;

  std::size_t element_count() const;
};

class TensorFileReader {
 public:
  /// Throws LoadError if the file is missing or the header is malformed.
  explicit TensorFileReader(const std::filesystem::path& path);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const TensorEntry& entry(const std::string& name) const;
  const std::map<std::string, TensorEntry>& entries() const { return entries_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  /// Reads a float32 tensor. Throws LoadError naming the tensor when it is
  /// absent or not F32.
  std::vector<float> read_f32(const std::string& name) const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::uint64_t data_start_ = 0;
  std::uint64_t file_size_ = 0;
  std::map<std::string, TensorEntry> entries_;
  std::map<std::string, std::string> metadata_;
  mutable std::ifstream stream_;
};

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  const float* data = nullptr;  // element_count(shape) floats
};

/// Writes float32 tensors in the order given.
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                       const std::map<std::string, std::string>& metadata = {});

}  // namespace headprobe
