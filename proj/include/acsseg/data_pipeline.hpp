#pragma once

// Resizing, augmentation, cropping, batching and the synthetic blob dataset.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "acsseg/data_model.hpp"
#include "acsseg/tensor.hpp"

namespace acsseg {

// splitmix64-based combination of seed components.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);
// FNV-1a of the id, mixed with the global seed and epoch.
std::uint64_t sample_seed(std::uint64_t global_seed, const std::string& id, std::uint64_t epoch);

// Image bilinear (half-pixel centres), mask nearest. Target must be >= 8x8.
Sample resize_pair(const Sample& sample, std::size_t height, std::size_t width);

struct AugmentSpec {
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double rotation_max_deg = 30.0;
  double zoom_lo = 0.85;
  double zoom_hi = 1.25;
  double shift_max_frac = 0.1;

  static AugmentSpec identity() { return {0.0, 0.0, 0.0, 1.0, 1.0, 0.0}; }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// One concrete geometric transform. Flips are applied first; rotation
// (counter-clockwise on screen for positive angles) and zoom are about the
// image centre; shifts are fractions of width/height.
struct AffineParams {
  bool hflip = false;
  bool vflip = false;
  double angle_deg = 0.0;
  double zoom = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;

  bool is_flip_only() const { return angle_deg == 0.0 && zoom == 1.0 && shift_x == 0.0 && shift_y == 0.0; }
};

AffineParams sample_affine(const AugmentSpec& spec, std::uint64_t seed);
// Image bilinear, mask nearest, both with reflect padding.
Sample apply_affine(const Sample& sample, const AffineParams& params);
Sample augment(const Sample& sample, const AugmentSpec& spec, std::uint64_t seed);

struct CropWindow {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

CropWindow random_crop_window(std::size_t height, std::size_t width, std::size_t crop_h, std::size_t crop_w,
                              std::uint64_t seed);
Sample crop(const Sample& sample, const CropWindow& window);
Sample random_crop(const Sample& sample, std::size_t crop_h, std::size_t crop_w, std::uint64_t seed);

struct Batch {
  std::vector<std::string> ids;
  Tensor<float> images;  // N x 3 x H x W
  Tensor<float> masks;   // N x 1 x H x W, values 0 / 1

  std::size_t size() const { return ids.size(); }
};

Batch make_batch(const std::vector<Sample>& samples);

struct SynthSpec {
  std::size_t count = 16;
  std::size_t height = 96;
  std::size_t width = 96;
  std::size_t blob_min = 1;
  std::size_t blob_max = 3;
  double area_lo = 0.05;
  double area_hi = 0.2;
  double noise_sigma = 0.03;
  std::uint64_t seed = 7;

  // Throws ConfigError when a field is invalid or the area range cannot be
  // met on the requested size.
  void validate() const;
};

// Samples are named "synth_0000", "synth_0001", ...
std::vector<Sample> synth_generate(const SynthSpec& spec);

// Writes samples in the <root>/images, <root>/masks layout plus manifest.csv
// (all entries in the given split).
DatasetManifest write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples,
                              Split split = Split::Train);

}  // namespace acsseg
