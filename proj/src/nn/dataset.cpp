#include "gpca/nn/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace gpca::nn {

namespace {

constexpr char kMagic[8] = {'G', 'P', 'C', 'A', '-', 'D', 'S', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DatasetError(path + ": truncated header");
  }
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 | std::uint32_t{b[3]} << 24;
}

// float32 and u16 payloads are written byte by byte so the file is
// little-endian on any host.
void put_f32(std::ofstream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::array<const char*, kSyntheticClasses> kClassNames = {
    "disc", "ring", "square_outline", "filled_square", "horizontal_stripes",
    "vertical_stripes", "diagonal_stripes", "plus", "cross", "checkerboard"};

using Image = std::array<double, kSyntheticSide * kSyntheticSide>;

void draw(int label, std::mt19937_64& rng, double noise, Image& img) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double side = kSyntheticSide;
  const double cx = uni(9.0, side - 9.0);
  const double cy = uni(9.0, side - 9.0);
  const double size = uni(5.0, 8.5);
  const double thick = uni(1.2, 2.2);
  const double period = uni(3.0, 6.0);
  const double phase = uni(0.0, 2.0 * 3.141592653589793);
  const double contrast = uni(0.5, 1.0);
  const double slope_x = uni(-0.4, 0.4) / side;
  const double slope_y = uni(-0.4, 0.4) / side;
  const double angle = label == 6 ? (unit(rng) < 0.5 ? 0.785398 : -0.785398) : 0.0;
  std::normal_distribution<double> gauss(0.0, noise);

  for (int r = 0; r < kSyntheticSide; ++r) {
    for (int c = 0; c < kSyntheticSide; ++c) {
      const double dx = c - cx;
      const double dy = r - cy;
      const double radius = std::sqrt(dx * dx + dy * dy);
      const double box = std::max(std::abs(dx), std::abs(dy));
      const bool in_patch = radius <= size + 2.0;
      double on = 0.0;
      switch (label) {
        case 0: on = radius <= size; break;
        case 1: on = std::abs(radius - size) <= thick; break;
        case 2: on = std::abs(box - size) <= thick; break;
        case 3: on = box <= size; break;
        case 4: on = in_patch && std::sin(2 * 3.141592653589793 * dy / period + phase) > 0; break;
        case 5: on = in_patch && std::sin(2 * 3.141592653589793 * dx / period + phase) > 0; break;
        case 6: {
          const double u = dx * std::cos(angle) + dy * std::sin(angle);
          on = in_patch && std::sin(2 * 3.141592653589793 * u / period + phase) > 0;
          break;
        }
        case 7: on = box <= size && (std::abs(dx) <= thick || std::abs(dy) <= thick); break;
        case 8: on = box <= size && (std::abs(dx - dy) <= thick * 1.41 || std::abs(dx + dy) <= thick * 1.41); break;
        case 9: {
          const int qx = static_cast<int>(std::floor((dx + 64.0) / (period * 0.8)));
          const int qy = static_cast<int>(std::floor((dy + 64.0) / (period * 0.8)));
          on = in_patch && ((qx + qy) % 2 == 0);
          break;
        }
        default: break;
      }
      const double background = 0.3 + slope_x * dx + slope_y * dy;
      img[static_cast<std::size_t>(r * kSyntheticSide + c)] = background + contrast * on + gauss(rng);
    }
  }
}

Dataset generate(std::uint64_t seed, std::uint64_t stream, int per_class, double noise) {
  Dataset d;
  d.channels = 1;
  d.height = kSyntheticSide;
  d.width = kSyntheticSide;
  d.num_classes = kSyntheticClasses;
  const std::size_t n = static_cast<std::size_t>(per_class) * kSyntheticClasses;
  d.pixels.resize(n * d.image_size());
  d.labels.resize(n);
  Image img;
  // Classes interleaved so any prefix is roughly balanced.
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % kSyntheticClasses);
    std::mt19937_64 rng(splitmix(splitmix(seed) ^ splitmix(stream * 0x100000001ULL + i)));
    draw(label, rng, noise, img);
    std::copy(img.begin(), img.end(), d.pixels.begin() + static_cast<std::ptrdiff_t>(i * d.image_size()));
    d.labels[i] = static_cast<std::uint16_t>(label);
  }
  normalize_unit_range(d);
  return d;
}

}  // namespace

void Dataset::validate() const {
  if (channels == 0 || height == 0 || width == 0 || num_classes == 0) {
    throw DatasetError("dataset dimensions must be positive");
  }
  if (pixels.size() != labels.size() * image_size()) {
    throw DatasetError("dataset pixel count does not match N*C*H*W");
  }
  for (std::uint16_t l : labels) {
    if (l >= num_classes) {
      throw DatasetError("dataset label out of range");
    }
  }
  for (float p : pixels) {
    if (!std::isfinite(p)) {
      throw DatasetError("dataset contains non-finite pixels");
    }
  }
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DatasetError("cannot open dataset file: " + path);
  }
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw DatasetError(path + ": missing GPCA-DS1 header");
  }
  Dataset d;
  const std::uint32_t n = get_u32(in, path);
  d.channels = get_u32(in, path);
  d.height = get_u32(in, path);
  d.width = get_u32(in, path);
  d.num_classes = get_u32(in, path);
  d.pixels.resize(std::size_t{n} * d.image_size());
  d.labels.resize(n);
  for (float& p : d.pixels) {
    const std::uint32_t bits = get_u32(in, path);
    std::memcpy(&p, &bits, 4);
  }
  for (std::uint16_t& l : d.labels) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) {
      throw DatasetError(path + ": truncated labels");
    }
    l = static_cast<std::uint16_t>(b[0] | b[1] << 8);
  }
  d.validate();
  return d;
}

void write_dataset(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DatasetError("cannot write dataset file: " + path);
  }
  out.write(kMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u32(out, data.channels);
  put_u32(out, data.height);
  put_u32(out, data.width);
  put_u32(out, data.num_classes);
  for (float p : data.pixels) {
    put_f32(out, p);
  }
  for (std::uint16_t l : data.labels) {
    const unsigned char b[2] = {static_cast<unsigned char>(l), static_cast<unsigned char>(l >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
  }
}

void normalize_unit_range(Dataset& data) {
  const std::size_t plane = std::size_t{data.height} * data.width;
  for (std::size_t start = 0; start < data.pixels.size(); start += plane) {
    const auto first = data.pixels.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = first + static_cast<std::ptrdiff_t>(plane);
    const auto [lo, hi] = std::minmax_element(first, last);
    const float low = *lo;
    const float range = *hi - low;
    for (auto it = first; it != last; ++it) {
      *it = range > 0.0f ? (*it - low) / range : 0.0f;
    }
  }
}

Split make_synthetic(std::uint64_t seed, int train_per_class, int test_per_class, double noise) {
  if (train_per_class < 1 || test_per_class < 0) {
    throw DatasetError("synthetic dataset needs at least one training sample per class");
  }
  return {generate(seed, 1, train_per_class, noise), generate(seed, 2, test_per_class, noise)};
}

const char* synthetic_class_name(int label) {
  if (label < 0 || label >= kSyntheticClasses) {
    throw DatasetError("synthetic class label out of range");
  }
  return kClassNames[static_cast<std::size_t>(label)];
}

}  // namespace gpca::nn
