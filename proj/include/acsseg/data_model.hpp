#pragma once

// Images, masks, samples and dataset manifests.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace acsseg {

// 3 x H x W, channel-major, values in [0, 1].
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  static ImageTensor zeros(std::size_t height, std::size_t width);
  float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
  // Throws DataError on wrong size or values outside [0, 1].
  void validate() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// H x W, values exactly 0 or 1.
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  static BinaryMask zeros(std::size_t height, std::size_t width);
  std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t foreground() const;
  void validate() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct Sample {
  std::string id;
  ImageTensor image;
  BinaryMask mask;

  // Throws DataError if image and mask sizes differ or either is invalid.
  void validate() const;
  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path mask;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  Split split = Split::Train;
  std::vector<ManifestEntry> entries;
};

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

// Deterministic shuffle under `seed`, floor-sized val/test, remainder to train.
// Returned in the order {train, val, test}.
std::array<DatasetManifest, 3> split_dataset(const std::vector<ManifestEntry>& entries, SplitFractions fractions,
                                             std::uint64_t seed, const std::filesystem::path& root = {});

// Pairs <root>/images/<stem>.{png,jpg,jpeg} with <root>/masks/<stem>.png,
// sorted by stem. Throws DataError on unpaired images or an empty root.
DatasetManifest load_manifest(const std::filesystem::path& root);

// manifest.csv with columns id,image_path,mask_path,split (paths relative to root).
void write_manifest_csv(const std::filesystem::path& file, const std::vector<DatasetManifest>& splits);
std::vector<DatasetManifest> read_manifest_csv(const std::filesystem::path& file);

ImageTensor read_image(const std::filesystem::path& file);
// 8-bit grayscale; > 127 is foreground.
BinaryMask read_mask(const std::filesystem::path& file);
Sample load_sample(const ManifestEntry& entry);

void write_image(const std::filesystem::path& file, const ImageTensor& image);
// 0 / 255 grayscale PNG.
void write_mask(const std::filesystem::path& file, const BinaryMask& mask);
// 8-bit grayscale from values in [0, 1], each pixel round(255 * v).
void write_gray(const std::filesystem::path& file, std::size_t height, std::size_t width,
                const std::vector<float>& values);

}  // namespace acsseg
