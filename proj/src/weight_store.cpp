#include "cnnsplit/weight_store.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "cnnsplit/binary_io.hpp"
#include "cnnsplit/error.hpp"

namespace cnnsplit {

const Tensor& WeightStore::get(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ShapeError("weight store has no tensor '" + name + "'");
  return it->second;
}

Tensor& WeightStore::get(const std::string& name) {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ShapeError("weight store has no tensor '" + name + "'");
  return it->second;
}

std::vector<std::uint8_t> save_weights(const WeightStore& store) {
  detail::ByteWriter w;
  w.raw("CNSP", 4);
  w.u32(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.entries()) {
    if (name.size() > 0xFFFF) throw Error("tensor name too long: " + name.substr(0, 32));
    if (t.rank() > 0xFF) throw Error("tensor rank too large: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) w.f32(v);
  }
  return std::move(w.bytes());
}

WeightStore load_weights(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "weight container");
  if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "CNSP") {
    throw FormatError(FormatError::Kind::bad_magic, "weight container: bad magic");
  }
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    throw FormatError(FormatError::Kind::version_mismatch,
                      "weight container: version mismatch (file " + std::to_string(version) +
                          ", expected " + std::to_string(kWeightFormatVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  WeightStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name = r.str(len);
    const std::uint8_t ndim = r.u8();
    std::vector<int> dims(ndim);
    std::size_t n = 1;
    for (auto& d : dims) {
      const std::uint32_t v = r.u32();
      if (v == 0 || v > 0x7FFFFFFF) {
        throw FormatError(FormatError::Kind::invalid, "weight container: bad dim in '" + name + "'");
      }
      d = static_cast<int>(v);
      n *= v;
    }
    r.need(n * 4);
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    if (store.contains(name)) {
      throw FormatError(FormatError::Kind::invalid, "weight container: duplicate tensor '" + name + "'");
    }
    store.set(name, Tensor(std::move(dims), std::move(data)));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::invalid, "weight container: trailing bytes");
  }
  return store;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to '" + path + "'");
}

void save_weights_file(const WeightStore& store, const std::string& path) {
  write_file_bytes(path, save_weights(store));
}

WeightStore load_weights_file(const std::string& path) {
  try {
    return load_weights(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path + ": " + e.what());
  }
}

void validate_weights(const ModelSpec& spec, const WeightStore& store) {
  const ShapeInfo info = infer_shapes(spec);
  auto expect = [&](const std::string& name, const std::vector<int>& dims) {
    const Tensor& t = store.get(name);
    if (t.dims() != dims) {
      throw ShapeError("tensor '" + name + "' has dims " + dims_to_string(t.dims()) +
                       ", spec expects " + dims_to_string(dims));
    }
  };
  std::size_t expected = 0;
  for (std::size_t i = 0; i < info.conv_output.size(); ++i) {
    const LayerDesc& l = spec.layers[info.conv_layer_index[i]];
    const int idx = static_cast<int>(i);
    expect(conv_kernels_name(idx), {l.out, info.conv_input[i].c, l.kernel, l.kernel});
    expect(conv_bias_name(idx), {l.out});
    expected += 2;
  }
  for (std::size_t i = 0; i < info.fc_output.size(); ++i) {
    const int idx = static_cast<int>(i);
    expect(fc_weights_name(idx), {info.fc_output[i], info.fc_input[i]});
    expect(fc_bias_name(idx), {info.fc_output[i]});
    expected += 2;
  }
  if (store.size() != expected) {
    throw ShapeError("weight store has " + std::to_string(store.size()) + " tensors, spec expects " +
                     std::to_string(expected));
  }
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fingerprint(const WeightStore& store) {
  const auto bytes = save_weights(store);
  return fnv1a(bytes.data(), bytes.size());
}

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace cnnsplit
