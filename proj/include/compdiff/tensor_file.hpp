#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace compdiff {

// On-disk layout (all integers and floats little-endian):
//   "CDIF" | u32 version | u32 tensor_count |
//   per tensor: u32 name_len | name bytes (UTF-8) | u32 rank | u32 dims[rank] | f32 data[prod(dims)]
inline constexpr std::uint32_t kTensorFileVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

class TensorTable {
 public:
  void put(std::string name, std::vector<std::uint32_t> dims, std::vector<float> data);
  const NamedTensor& get(std::string_view name) const;
  const NamedTensor* find(std::string_view name) const;
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  bool operator==(const TensorTable&) const = default;

 private:
  std::vector<NamedTensor> tensors_;
};

void save_tensor_table(const TensorTable& table, const std::filesystem::path& path);
TensorTable load_tensor_table(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_tensor_table(const TensorTable& table,
                                              std::uint32_t version = kTensorFileVersion);
TensorTable decode_tensor_table(const std::vector<std::uint8_t>& bytes);

}  // namespace compdiff
