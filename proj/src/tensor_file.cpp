#include "headprobe/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <functional>
#include <numeric>

#include <nlohmann/json.hpp>

#include "headprobe/error.hpp"

namespace headprobe {

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");

std::size_t TensorEntry::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

TensorFileReader::TensorFileReader(const std::filesystem::path& path)
    : path_(path), stream_(path, std::ios::binary) {
  if (!stream_) throw LoadError("cannot open weights file " + path.string());
  file_size_ = std::filesystem::file_size(path);

  std::uint64_t header_len = 0;
  if (file_size_ < 8 || !stream_.read(reinterpret_cast<char*>(&header_len), 8)) {
    throw LoadError(path.string() + ": truncated header");
  }
  if (header_len > file_size_ - 8) throw LoadError(path.string() + ": header length exceeds file");
  std::string header(header_len, '\0');
  stream_.read(header.data(), static_cast<std::streamsize>(header_len));
  data_start_ = 8 + header_len;

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path.string() + ": malformed header: " + e.what());
  }
  if (!j.is_object()) throw LoadError(path.string() + ": header is not a JSON object");

  for (const auto& [name, value] : j.items()) {
    if (name == "__metadata__") {
      for (const auto& [k, v] : value.items()) {
        metadata_[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      continue;
    }
    try {
      TensorEntry e;
      e.dtype = value.at("dtype").get<std::string>();
      e.shape = value.at("shape").get<std::vector<std::size_t>>();
      const auto offsets = value.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2 || offsets[0] > offsets[1] ||
          data_start_ + offsets[1] > file_size_) {
        throw LoadError(path.string() + ": tensor " + name + " has invalid data_offsets");
      }
      e.begin = offsets[0];
      e.end = offsets[1];
      entries_.emplace(name, std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw LoadError(path.string() + ": tensor " + name + ": " + ex.what());
    }
  }
}

const TensorEntry& TensorFileReader::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LoadError(path_.string() + ": missing tensor " + name);
  return it->second;
}

std::vector<float> TensorFileReader::read_f32(const std::string& name) const {
  const TensorEntry& e = entry(name);
  if (e.dtype != "F32") {
    throw LoadError(path_.string() + ": tensor " + name + " has dtype " + e.dtype +
                    ", expected F32");
  }
  const std::size_t count = e.element_count();
  if (e.end - e.begin != count * sizeof(float)) {
    throw LoadError(path_.string() + ": tensor " + name + " byte size does not match its shape");
  }
  std::vector<float> values(count);
  stream_.clear();
  stream_.seekg(static_cast<std::streamoff>(data_start_ + e.begin));
  if (!stream_.read(reinterpret_cast<char*>(values.data()),
                    static_cast<std::streamsize>(count * sizeof(float)))) {
    throw LoadError(path_.string() + ": short read for tensor " + name);
  }
  return values;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                       const std::map<std::string, std::string>& metadata) {
  nlohmann::ordered_json header = nlohmann::ordered_json::object();
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    const std::size_t count =
        std::accumulate(t.shape.begin(), t.shape.end(), std::size_t{1}, std::multiplies<>());
    const std::uint64_t bytes = count * sizeof(float);
    header[t.name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  while ((8 + text.size()) % 8 != 0) text.push_back(' ');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  const std::uint64_t header_len = text.size();
  out.write(reinterpret_cast<const char*>(&header_len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) {
    const std::size_t count =
        std::accumulate(t.shape.begin(), t.shape.end(), std::size_t{1}, std::multiplies<>());
    out.write(reinterpret_cast<const char*>(t.data), static_cast<std::streamsize>(count * sizeof(float)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace headprobe
