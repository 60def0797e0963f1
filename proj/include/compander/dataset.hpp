#ifndef COMPANDER_DATASET_HPP
#define COMPANDER_DATASET_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compander/rng.hpp"
#include "compander/tensor.hpp"

namespace compander {

/// In-memory labeled dataset: flat sample-major values plus labels.
struct Dataset {
  Shape sample_shape;
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t n_classes = 10;

  std::size_t size() const { return labels.size(); }

  std::size_t sample_size() const {
    std::size_t s = 1;
    for (auto d : sample_shape) s *= d;
    return s;
  }

  const double* sample(std::size_t i) const { return values.data() + i * sample_size(); }
};

/// Batch tensor of shape {idx.size(), ...sample_shape_override} (the
/// override lets an MLP consume image data flattened).
inline Tensor<double> make_batch(const Dataset& ds, std::span<const std::size_t> idx,
                                 const Shape& sample_shape_override = {}) {
  const Shape& ss = sample_shape_override.empty() ? ds.sample_shape : sample_shape_override;
  std::size_t per = 1;
  for (auto d : ss) per *= d;
  if (per != ds.sample_size())
    throw std::invalid_argument("make_batch: sample shape " + shape_str(ss) + " has " +
                                std::to_string(per) + " values, dataset samples have " +
                                std::to_string(ds.sample_size()));
  Shape shape{idx.size()};
  shape.insert(shape.end(), ss.begin(), ss.end());
  Tensor<double> out(shape);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= ds.size())
      throw std::out_of_range("make_batch: index " + std::to_string(idx[r]));
    const double* src = ds.sample(idx[r]);
    std::copy(src, src + per, out.data() + r * per);
  }
  return out;
}

inline std::vector<std::size_t> batch_labels(const Dataset& ds,
                                             std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds.labels.at(i));
  return out;
}

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off,
                               const std::string& path) {
  if (off + 4 > b.size()) throw std::runtime_error(path + ": truncated header");
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace detail

/// IDX pair loader: big-endian magic 0x803 for images, 0x801 for
/// labels, byte pixels scaled to [0,1]. subset_size samples are drawn
/// without replacement from the (seed, SUBSET) stream; subset_size >=
/// N keeps the whole set in that stream's shuffled order.
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              std::size_t subset_size, std::uint64_t seed) {
  auto img = detail::read_file_bytes(images_path);
  auto lab = detail::read_file_bytes(labels_path);

  if (detail::read_be32(img, 0, images_path) != 0x00000803u)
    throw std::runtime_error(images_path + ": bad magic, expected 0x00000803");
  std::size_t n = detail::read_be32(img, 4, images_path);
  std::size_t rows = detail::read_be32(img, 8, images_path);
  std::size_t cols = detail::read_be32(img, 12, images_path);
  if (img.size() != 16 + n * rows * cols)
    throw std::runtime_error(images_path + ": truncated, expected " +
                             std::to_string(16 + n * rows * cols) + " bytes, got " +
                             std::to_string(img.size()));

  if (detail::read_be32(lab, 0, labels_path) != 0x00000801u)
    throw std::runtime_error(labels_path + ": bad magic, expected 0x00000801");
  std::size_t nl = detail::read_be32(lab, 4, labels_path);
  if (lab.size() != 8 + nl) throw std::runtime_error(labels_path + ": truncated");
  if (nl != n)
    throw std::runtime_error(labels_path + ": " + std::to_string(nl) + " labels for " +
                             std::to_string(n) + " images");
  for (std::size_t i = 0; i < n; ++i)
    if (lab[8 + i] > 9)
      throw std::runtime_error(labels_path + ": label " + std::to_string(int(lab[8 + i])) +
                               " out of range at sample " + std::to_string(i));

  StreamRng rng(seed, StreamRng::kSubset);
  auto pick = rng.sample_indices(n, subset_size);

  Dataset ds;
  ds.sample_shape = {1, rows, cols};
  ds.n_classes = 10;
  std::size_t per = rows * cols;
  ds.values.resize(pick.size() * per);
  ds.labels.resize(pick.size());
  for (std::size_t r = 0; r < pick.size(); ++r) {
    std::size_t src = pick[r];
    for (std::size_t p = 0; p < per; ++p)
      ds.values[r * per + p] = double(img[16 + src * per + p]) / 255.0;
    ds.labels[r] = lab[8 + src];
  }
  return ds;
}

struct CifarNorm {
  std::array<double, 3> mean{0.4914, 0.4822, 0.4465};
  std::array<double, 3> stddev{0.2470, 0.2435, 0.2616};
};

/// CIFAR-10 binary batches: 3073-byte records, label byte then
/// channel-planar pixels, normalized per channel.
inline Dataset load_cifar10_bin(const std::vector<std::string>& paths, std::size_t subset_size,
                                std::uint64_t seed, const CifarNorm& norm = {}) {
  constexpr std::size_t kRecord = 3073;
  constexpr std::size_t kPlane = 1024;
  std::vector<std::uint8_t> raw;
  for (const auto& path : paths) {
    auto b = detail::read_file_bytes(path);
    if (b.size() % kRecord != 0)
      throw std::runtime_error(path + ": size " + std::to_string(b.size()) +
                               " not a multiple of 3073");
    raw.insert(raw.end(), b.begin(), b.end());
  }
  std::size_t n = raw.size() / kRecord;
  if (n == 0) throw std::runtime_error("cifar10: no records");
  for (std::size_t i = 0; i < n; ++i)
    if (raw[i * kRecord] > 9)
      throw std::runtime_error("cifar10: label " + std::to_string(int(raw[i * kRecord])) +
                               " out of range at record " + std::to_string(i));

  StreamRng rng(seed, StreamRng::kSubset);
  auto pick = rng.sample_indices(n, subset_size);

  Dataset ds;
  ds.sample_shape = {3, 32, 32};
  ds.n_classes = 10;
  ds.values.resize(pick.size() * 3 * kPlane);
  ds.labels.resize(pick.size());
  for (std::size_t r = 0; r < pick.size(); ++r) {
    const std::uint8_t* rec = raw.data() + pick[r] * kRecord;
    ds.labels[r] = rec[0];
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < kPlane; ++p)
        ds.values[(r * 3 + c) * kPlane + p] =
            (double(rec[1 + c * kPlane + p]) / 255.0 - norm.mean[c]) / norm.stddev[c];
  }
  return ds;
}

struct SynthSpec {
  std::size_t classes = 2;
  std::size_t per_class = 100;
  std::size_t dim = 2;
  double separation = 4.0;
};

/// Unit-variance Gaussian blobs with centers separation/2 from the
/// origin at evenly spaced angles in the first two dimensions.
inline Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.classes < 1 || spec.per_class < 1 || spec.dim < 1)
    throw std::invalid_argument("synth_dataset: classes, per_class, dim must be >= 1");
  Dataset ds;
  ds.sample_shape = {spec.dim};
  ds.n_classes = spec.classes;
  std::size_t n = spec.classes * spec.per_class;
  ds.values.resize(n * spec.dim);
  ds.labels.resize(n);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    StreamRng rng(seed, StreamRng::kSynth, c);
    double theta = 2.0 * std::numbers::pi * double(c) / double(spec.classes);
    std::vector<double> center(spec.dim, 0.0);
    center[0] = 0.5 * spec.separation * std::cos(theta);
    if (spec.dim > 1) center[1] = 0.5 * spec.separation * std::sin(theta);
    for (std::size_t s = 0; s < spec.per_class; ++s, ++row) {
      for (std::size_t d = 0; d < spec.dim; ++d)
        ds.values[row * spec.dim + d] = center[d] + rng.normal();
      ds.labels[row] = c;
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  StreamRng shuf(seed, StreamRng::kSynth, spec.classes);
  shuf.shuffle(order.begin(), order.end());
  Dataset out;
  out.sample_shape = ds.sample_shape;
  out.n_classes = ds.n_classes;
  out.values.resize(ds.values.size());
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    out.labels[r] = ds.labels[order[r]];
    std::copy(ds.sample(order[r]), ds.sample(order[r]) + spec.dim,
              out.values.begin() + r * spec.dim);
  }
  return out;
}

namespace detail {

// 5x7 digit glyphs, one bit per cell, row-major top to bottom.
inline constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigitGlyphs{{
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
}};

inline double glyph_at(std::size_t digit, double u, double v) {
  // bilinear over cell centers; outside the 5x7 box is background
  double cu = u - 0.5, cv = v - 0.5;
  auto cell = [&](long col, long row) -> double {
    if (col < 0 || col >= 5 || row < 0 || row >= 7) return 0.0;
    return (kDigitGlyphs[digit][std::size_t(row)] >> (4 - col)) & 1u ? 1.0 : 0.0;
  };
  long c0 = long(std::floor(cu)), r0 = long(std::floor(cv));
  double fu = cu - double(c0), fv = cv - double(r0);
  double top = cell(c0, r0) * (1 - fu) + cell(c0 + 1, r0) * fu;
  double bot = cell(c0, r0 + 1) * (1 - fu) + cell(c0 + 1, r0 + 1) * fu;
  return top * (1 - fv) + bot * fv;
}

}  // namespace detail

/// Renders one 28x28 glyph image with a seeded affine jitter (shift,
/// scale, rotation), stroke intensity, and pixel noise. Deterministic
/// in (seed, index); the digit is index mod 10.
inline void render_glyph(std::uint64_t seed, std::size_t index, std::uint8_t* out28x28,
                         std::size_t* label) {
  StreamRng rng(seed, StreamRng::kSynth, index);
  std::size_t digit = index % 10;
  double angle = rng.uniform(-0.26, 0.26);
  double scale = rng.uniform(0.85, 1.15);
  double tx = rng.uniform(-2.5, 2.5);
  double ty = rng.uniform(-2.5, 2.5);
  double stroke = rng.uniform(0.7, 1.0);
  double ca = std::cos(angle), sa = std::sin(angle);
  // glyph cells are 2.8px in the output; glyph center maps to image center
  const double cell = 2.8;
  for (std::size_t y = 0; y < 28; ++y) {
    for (std::size_t x = 0; x < 28; ++x) {
      double px = (double(x) + 0.5 - 14.0 - tx) / scale;
      double py = (double(y) + 0.5 - 14.0 - ty) / scale;
      double gx = (ca * px + sa * py) / cell + 2.5;
      double gy = (-sa * px + ca * py) / cell + 3.5;
      double val = stroke * detail::glyph_at(digit, gx, gy) + rng.normal(0.0, 0.08);
      val = std::min(std::max(val, 0.0), 1.0);
      out28x28[y * 28 + x] = std::uint8_t(std::lround(val * 255.0));
    }
  }
  *label = digit;
}

/// Writes a rendered-glyph dataset as an IDX image/label file pair so
/// the loaders and CLI exercise the real on-disk format.
inline void write_glyph_idx(const std::string& images_path, const std::string& labels_path,
                            std::size_t count, std::uint64_t seed) {
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot write " + images_path);
  if (!lab) throw std::runtime_error("cannot write " + labels_path);
  auto be32 = [](std::ofstream& os, std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16), std::uint8_t(v >> 8),
                         std::uint8_t(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  be32(img, 0x00000803u);
  be32(img, std::uint32_t(count));
  be32(img, 28);
  be32(img, 28);
  be32(lab, 0x00000801u);
  be32(lab, std::uint32_t(count));
  std::vector<std::uint8_t> pixels(784);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t label = 0;
    render_glyph(seed, i, pixels.data(), &label);
    img.write(reinterpret_cast<const char*>(pixels.data()), 784);
    char lb = char(label);
    lab.write(&lb, 1);
  }
}

}  // namespace compander

#endif  // COMPANDER_DATASET_HPP
