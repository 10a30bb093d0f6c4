#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cnnsplit/model_spec.hpp"
#include "cnnsplit/tensor.hpp"

namespace cnnsplit {

/// Named tensors of one model, ordered by name.
class WeightStore {
 public:
  void set(const std::string& name, Tensor t) { entries_[name] = std::move(t); }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<std::string, Tensor>& entries() const noexcept { return entries_; }

  bool operator==(const WeightStore&) const = default;

 private:
  std::map<std::string, Tensor> entries_;
};

// CNSP layout, little-endian:
//   "CNSP" u32 version=1 u32 count
//   per tensor: u16 name_len, name bytes, u8 ndim, ndim x u32 dims, f32 data
inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> save_weights(const WeightStore& store);
WeightStore load_weights(const std::vector<std::uint8_t>& bytes);
void save_weights_file(const WeightStore& store, const std::string& path);
WeightStore load_weights_file(const std::string& path);

/// Checks that every tensor the spec needs is present with the right shape.
void validate_weights(const ModelSpec& spec, const WeightStore& store);

/// FNV-1a over the serialized container.
std::uint64_t fingerprint(const WeightStore& store);
std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::string to_hex(std::uint64_t v);

}  // namespace cnnsplit
