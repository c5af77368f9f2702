#include "acsseg/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "acsseg/errors.hpp"

namespace fs = std::filesystem;

namespace acsseg {

ImageTensor ImageTensor::zeros(std::size_t height, std::size_t width) {
  return {height, width, std::vector<float>(3 * height * width, 0.0f)};
}

void ImageTensor::validate() const {
  if (values.size() != 3 * height * width) throw DataError("image tensor size does not match 3x" +
                                                           std::to_string(height) + "x" + std::to_string(width));
  for (float v : values) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("image value outside [0,1]");
  }
}

BinaryMask BinaryMask::zeros(std::size_t height, std::size_t width) {
  return {height, width, std::vector<std::uint8_t>(height * width, 0)};
}

std::size_t BinaryMask::foreground() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

void BinaryMask::validate() const {
  if (values.size() != height * width) throw DataError("mask size does not match its dimensions");
  for (auto v : values) {
    if (v > 1) throw DataError("mask value is not binary");
  }
}

void Sample::validate() const {
  image.validate();
  mask.validate();
  if (image.height != mask.height || image.width != mask.width) {
    throw DataError("sample '" + id + "': image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                    " and mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) + " differ");
  }
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + s + "'");
}

std::array<DatasetManifest, 3> split_dataset(const std::vector<ManifestEntry>& entries, SplitFractions fractions,
                                             std::uint64_t seed, const fs::path& root) {
  if (entries.empty()) throw DataError("split_dataset: empty entry list");
  if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0 ||
      std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  std::vector<ManifestEntry> shuffled = entries;
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  const auto n = static_cast<double>(shuffled.size());
  const auto n_val = static_cast<std::size_t>(std::floor(n * fractions.val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * fractions.test + 1e-9));
  const std::size_t n_train = shuffled.size() - n_val - n_test;

  std::array<DatasetManifest, 3> out{DatasetManifest{root, Split::Train, {}}, DatasetManifest{root, Split::Val, {}},
                                     DatasetManifest{root, Split::Test, {}}};
  auto it = shuffled.begin();
  out[0].entries.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  out[1].entries.assign(it, it + static_cast<std::ptrdiff_t>(n_val));
  it += static_cast<std::ptrdiff_t>(n_val);
  out[2].entries.assign(it, shuffled.end());
  return out;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root) {
  const fs::path images = root / "images";
  const fs::path masks = root / "masks";
  if (!fs::is_directory(images)) throw DataError("missing directory " + images.string());
  if (!fs::is_directory(masks)) throw DataError("missing directory " + masks.string());

  std::map<std::string, fs::path> by_stem;
  for (const auto& e : fs::directory_iterator(images)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = lower(e.path().extension().string());
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
    const std::string stem = e.path().stem().string();
    if (!by_stem.emplace(stem, e.path()).second) throw DataError("duplicate image stem '" + stem + "'");
  }
  if (by_stem.empty()) throw DataError("no samples found in " + root.string());

  DatasetManifest manifest{root, Split::Train, {}};
  for (const auto& [stem, image] : by_stem) {
    const fs::path mask = masks / (stem + ".png");
    if (!fs::is_regular_file(mask)) throw DataError("missing mask for image '" + stem + "'");
    manifest.entries.push_back({stem, image, mask});
  }
  return manifest;
}

void write_manifest_csv(const fs::path& file, const std::vector<DatasetManifest>& splits) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << "id,image_path,mask_path,split\n";
  for (const auto& m : splits) {
    for (const auto& e : m.entries) {
      out << e.id << ',' << fs::relative(e.image, m.root).generic_string() << ','
          << fs::relative(e.mask, m.root).generic_string() << ',' << to_string(m.split) << '\n';
    }
  }
  if (!out) throw DataError("write failed for " + file.string());
}

std::vector<DatasetManifest> read_manifest_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read " + file.string());
  const fs::path root = file.parent_path();
  std::vector<DatasetManifest> out{{root, Split::Train, {}}, {root, Split::Val, {}}, {root, Split::Test, {}}};
  std::string line;
  std::getline(in, line);
  if (line.rfind("id,image_path,mask_path,split", 0) != 0) throw DataError("bad manifest header in " + file.string());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(col);
    if (cols.size() != 4) throw DataError("manifest line " + std::to_string(lineno) + ": expected 4 columns");
    const Split split = split_from_string(cols[3]);
    out[static_cast<std::size_t>(split)].entries.push_back({cols[0], root / cols[1], root / cols[2]});
  }
  return out;
}

ImageTensor read_image(const fs::path& file) {
  const cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image " + file.string());
  if (bgr.depth() != CV_8U) throw DataError("image is not 8-bit: " + file.string());
  ImageTensor img = ImageTensor::zeros(static_cast<std::size_t>(bgr.rows), static_cast<std::size_t>(bgr.cols));
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = row[x][2 - c] / 255.0f;
      }
    }
  }
  return img;
}

BinaryMask read_mask(const fs::path& file) {
  const cv::Mat gray = cv::imread(file.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw DataError("cannot decode mask " + file.string());
  if (gray.depth() != CV_8U) throw DataError("mask is not 8-bit: " + file.string());
  BinaryMask mask = BinaryMask::zeros(static_cast<std::size_t>(gray.rows), static_cast<std::size_t>(gray.cols));
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = row[x] > 127;
  }
  return mask;
}

Sample load_sample(const ManifestEntry& entry) {
  Sample s{entry.id, read_image(entry.image), read_mask(entry.mask)};
  s.validate();
  return s;
}

namespace {

void write_png(const fs::path& file, const cv::Mat& m) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  if (!cv::imwrite(file.string(), m)) throw DataError("cannot write " + file.string());
}

}  // namespace

void write_image(const fs::path& file, const ImageTensor& image) {
  cv::Mat bgr(static_cast<int>(image.height), static_cast<int>(image.width), CV_8UC3);
  for (int y = 0; y < bgr.rows; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = image.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  write_png(file, bgr);
}

void write_mask(const fs::path& file, const BinaryMask& mask) {
  cv::Mat gray(static_cast<int>(mask.height), static_cast<int>(mask.width), CV_8UC1);
  for (std::size_t i = 0; i < mask.values.size(); ++i) gray.data[i] = mask.values[i] ? 255 : 0;
  write_png(file, gray);
}

void write_gray(const fs::path& file, std::size_t height, std::size_t width, const std::vector<float>& values) {
  if (values.size() != height * width) throw std::invalid_argument("write_gray: size mismatch");
  cv::Mat gray(static_cast<int>(height), static_cast<int>(width), CV_8UC1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    gray.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0f, 1.0f) * 255.0f));
  }
  write_png(file, gray);
}

}  // namespace acsseg
