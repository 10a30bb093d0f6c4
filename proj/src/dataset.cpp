#include "cnnsplit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cnnsplit/binary_io.hpp"
#include "cnnsplit/error.hpp"
#include "cnnsplit/weight_store.hpp"

namespace cnnsplit {

Tensor LabeledDataset::image(std::size_t i) const {
  const auto s = image_span(i);
  return Tensor({shape.c, shape.h, shape.w}, std::vector<float>(s.begin(), s.end()));
}

std::vector<std::size_t> LabeledDataset::indices_of(int class_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == class_id) out.push_back(i);
  }
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.shape = shape;
  out.num_classes = num_classes;
  out.labels.reserve(indices.size());
  out.pixels.reserve(indices.size() * image_size());
  for (std::size_t i : indices) {
    const auto s = image_span(i);
    out.pixels.insert(out.pixels.end(), s.begin(), s.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

LabeledDataset LabeledDataset::restricted_to(std::span<const int> classes) const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), labels[i]) != classes.end()) keep.push_back(i);
  }
  return subset(keep);
}

std::vector<std::uint8_t> save_dataset(const LabeledDataset& ds) {
  detail::ByteWriter w;
  w.raw("CNDS", 4);
  w.u32(static_cast<std::uint32_t>(ds.count()));
  w.u32(static_cast<std::uint32_t>(ds.shape.c));
  w.u32(static_cast<std::uint32_t>(ds.shape.h));
  w.u32(static_cast<std::uint32_t>(ds.shape.w));
  w.u32(static_cast<std::uint32_t>(ds.num_classes));
  for (float v : ds.pixels) w.f32(v);
  for (int l : ds.labels) w.u32(static_cast<std::uint32_t>(l));
  return std::move(w.bytes());
}

LabeledDataset load_dataset(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "CNDS") {
    throw FormatError(FormatError::Kind::bad_magic, "dataset container: bad magic");
  }
  detail::ByteReader r(bytes, "dataset container");
  r.str(4);
  const std::uint32_t count = r.u32();
  LabeledDataset ds;
  ds.shape.c = static_cast<int>(r.u32());
  ds.shape.h = static_cast<int>(r.u32());
  ds.shape.w = static_cast<int>(r.u32());
  ds.num_classes = static_cast<int>(r.u32());
  if (ds.shape.c <= 0 || ds.shape.h <= 0 || ds.shape.w <= 0 || ds.num_classes <= 0) {
    throw FormatError(FormatError::Kind::invalid, "dataset container: header has zero dims");
  }
  const std::size_t n = static_cast<std::size_t>(count) * ds.image_size();
  r.need(n * 4 + static_cast<std::size_t>(count) * 4);
  ds.pixels.resize(n);
  for (auto& v : ds.pixels) v = r.f32();
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t l = r.u32();
    if (l >= static_cast<std::uint32_t>(ds.num_classes)) {
      throw FormatError(FormatError::Kind::invalid,
                        "dataset container: label " + std::to_string(l) + " of sample " +
                            std::to_string(i) + " outside [0," + std::to_string(ds.num_classes) + ")");
    }
    ds.labels[i] = static_cast<int>(l);
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::invalid, "dataset container: trailing bytes");
  }
  return ds;
}

void save_dataset_file(const LabeledDataset& ds, const std::string& path) {
  write_file_bytes(path, save_dataset(ds));
}

LabeledDataset load_dataset_file(const std::string& path) {
  try {
    return load_dataset(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path + ": " + e.what());
  }
}

namespace {

struct Canvas {
  int size;
  std::vector<float> px;
  explicit Canvas(int s) : size(s), px(static_cast<std::size_t>(s) * s, 0.0f) {}
  void set(int y, int x, float v) {
    if (y < 0 || x < 0 || y >= size || x >= size) return;
    float& p = px[static_cast<std::size_t>(y) * size + x];
    p = std::max(p, v);
  }
};

void draw_glyph(Canvas& c, int cls, int cy, int cx, int r, float ink) {
  switch (cls) {
    case 0:  // horizontal bar
      for (int x = cx - r; x <= cx + r; ++x) c.set(cy, x, ink);
      break;
    case 1:  // vertical bar
      for (int y = cy - r; y <= cy + r; ++y) c.set(y, cx, ink);
      break;
    case 2:  // box outline
      for (int d = -r; d <= r; ++d) {
        c.set(cy - r, cx + d, ink);
        c.set(cy + r, cx + d, ink);
        c.set(cy + d, cx - r, ink);
        c.set(cy + d, cx + r, ink);
      }
      break;
    case 3:  // plus
      for (int d = -r; d <= r; ++d) {
        c.set(cy, cx + d, ink);
        c.set(cy + d, cx, ink);
      }
      break;
    case 4:  // X
      for (int d = -r; d <= r; ++d) {
        c.set(cy + d, cx + d, ink);
        c.set(cy + d, cx - d, ink);
      }
      break;
    case 5:  // ring
      for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
          const double dist = std::sqrt(double(y * y + x * x));
          if (std::abs(dist - r) < 0.6) c.set(cy + y, cx + x, ink);
        }
      }
      break;
    case 6:  // filled dot
      for (int y = -1; y <= 1; ++y) {
        for (int x = -1; x <= 1; ++x) c.set(cy + y, cx + x, ink);
      }
      break;
    default:  // two horizontal bars
      for (int x = cx - r; x <= cx + r; ++x) {
        c.set(cy - r, x, ink);
        c.set(cy + r, x, ink);
      }
      break;
  }
}

}  // namespace

LabeledDataset make_shape_dataset(const ShapeTaskConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.num_classes > kShapeTaskMaxClasses) {
    throw ConfigError("shape task supports 1.." + std::to_string(kShapeTaskMaxClasses) + " classes");
  }
  if (cfg.size < 8) throw ConfigError("shape task images must be at least 8x8");
  if (cfg.per_class < 0) throw ConfigError("shape task per_class must be non-negative");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::normal_distribution<float> gauss(0.0f, 1.0f);

  LabeledDataset ds;
  ds.shape = Shape3{1, cfg.size, cfg.size};
  ds.num_classes = cfg.num_classes;
  const int margin = 3;
  for (int i = 0; i < cfg.per_class; ++i) {
    for (int cls = 0; cls < cfg.num_classes; ++cls) {
      Canvas canvas(cfg.size);
      const int r = 2 + static_cast<int>(unit(rng) * 2.0f);  // 2 or 3
      std::uniform_int_distribution<int> pos(margin, cfg.size - 1 - margin);
      const int cy = pos(rng);
      const int cx = pos(rng);
      const float ink = 0.6f + 0.4f * unit(rng);
      draw_glyph(canvas, cls, cy, cx, r, ink);
      for (float& p : canvas.px) {
        p = std::clamp(p + cfg.noise * gauss(rng), 0.0f, 1.0f);
      }
      ds.pixels.insert(ds.pixels.end(), canvas.px.begin(), canvas.px.end());
      ds.labels.push_back(cls);
    }
  }
  return ds;
}

}  // namespace cnnsplit
