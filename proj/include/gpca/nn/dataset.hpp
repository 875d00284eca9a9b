#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gpca::nn {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Images stored sample-major as C x H x W float32 planes.
struct Dataset {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t num_classes = 0;
  std::vector<float> pixels;
  std::vector<std::uint16_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return std::size_t{channels} * height * width; }
  const float* image(std::size_t i) const { return pixels.data() + i * image_size(); }
  void validate() const;
};

struct Split {
  Dataset train;
  Dataset test;
};

/// "GPCA-DS1" followed by little-endian u32 N, C, H, W, num_classes, then
/// N*C*H*W float32 pixels and N u16 labels.
Dataset read_dataset(const std::string& path);
void write_dataset(const Dataset& data, const std::string& path);

/// Rescales every channel plane of every image to [0, 1]; constant planes become 0.
void normalize_unit_range(Dataset& data);

inline constexpr int kSyntheticClasses = 10;
inline constexpr int kSyntheticSide = 28;

/// Procedural 10-class, 1 x 28 x 28 shape and texture set. Each class has a
/// fixed template family; position, scale, frequency, contrast and pixel noise
/// vary per sample. Train and test samples come from disjoint seed streams.
Split make_synthetic(std::uint64_t seed, int train_per_class, int test_per_class, double noise = 0.25);

const char* synthetic_class_name(int label);

}  // namespace gpca::nn
