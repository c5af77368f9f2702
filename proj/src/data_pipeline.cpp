#include "acsseg/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "acsseg/errors.hpp"
#include "acsseg/kernels.hpp"

namespace fs = std::filesystem;

namespace acsseg {

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (std::uint64_t p : parts) {
    std::uint64_t z = h + p + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    h = z ^ (z >> 31);
  }
  return h;
}

std::uint64_t sample_seed(std::uint64_t global_seed, const std::string& id, std::uint64_t epoch) {
  std::uint64_t fnv = 0xcbf29ce484222325ull;
  for (unsigned char c : id) {
    fnv ^= c;
    fnv *= 0x100000001b3ull;
  }
  return mix_seed({global_seed, fnv, epoch});
}

Sample resize_pair(const Sample& sample, std::size_t height, std::size_t width) {
  if (height < 8 || width < 8) {
    throw std::invalid_argument("resize target " + std::to_string(height) + "x" + std::to_string(width) +
                                " is degenerate");
  }
  Sample out{sample.id, ImageTensor::zeros(height, width), BinaryMask::zeros(height, width)};
  kernels::bilinear_resize(sample.image.values.data(), 3, sample.image.height, sample.image.width, height, width,
                           out.image.values.data());
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(y * sample.mask.height / height, sample.mask.height - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(x * sample.mask.width / width, sample.mask.width - 1);
      out.mask.at(y, x) = sample.mask.at(sy, sx);
    }
  }
  return out;
}

void AugmentSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augment.") + name + " must lie in [0,1]");
  };
  prob(hflip_prob, "hflip_prob");
  prob(vflip_prob, "vflip_prob");
  if (!(rotation_max_deg >= 0.0) || !std::isfinite(rotation_max_deg)) {
    throw ConfigError("augment.rotation_max_deg must be finite and >= 0");
  }
  if (!(zoom_lo > 0.0 && zoom_lo <= 1.0 && zoom_hi >= 1.0 && std::isfinite(zoom_hi))) {
    throw ConfigError("augment.zoom range must satisfy 0 < lo <= 1 <= hi");
  }
  if (!(shift_max_frac >= 0.0 && shift_max_frac < 0.5)) throw ConfigError("augment.shift_max_frac must lie in [0,0.5)");
}

AffineParams sample_affine(const AugmentSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AffineParams p;
  p.hflip = unit(rng) < spec.hflip_prob;
  p.vflip = unit(rng) < spec.vflip_prob;
  const double a = unit(rng);
  const double z = unit(rng);
  const double sx = unit(rng);
  const double sy = unit(rng);
  if (spec.rotation_max_deg > 0.0) p.angle_deg = (2.0 * a - 1.0) * spec.rotation_max_deg;
  if (spec.zoom_hi > spec.zoom_lo) p.zoom = spec.zoom_lo + z * (spec.zoom_hi - spec.zoom_lo);
  if (spec.shift_max_frac > 0.0) {
    p.shift_x = (2.0 * sx - 1.0) * spec.shift_max_frac;
    p.shift_y = (2.0 * sy - 1.0) * spec.shift_max_frac;
  }
  return p;
}

namespace {

cv::Mat image_to_mat(const ImageTensor& img) {
  cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), CV_32FC3);
  for (std::size_t y = 0; y < img.height; ++y) {
    auto* row = m.ptr<cv::Vec3f>(static_cast<int>(y));
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) row[x][static_cast<int>(c)] = img.at(c, y, x);
  }
  return m;
}

ImageTensor mat_to_image(const cv::Mat& m) {
  ImageTensor img = ImageTensor::zeros(static_cast<std::size_t>(m.rows), static_cast<std::size_t>(m.cols));
  for (std::size_t y = 0; y < img.height; ++y) {
    const auto* row = m.ptr<cv::Vec3f>(static_cast<int>(y));
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(row[x][static_cast<int>(c)], 0.0f, 1.0f);
  }
  return img;
}

cv::Mat mask_to_mat(const BinaryMask& mask) {
  cv::Mat m(static_cast<int>(mask.height), static_cast<int>(mask.width), CV_8UC1);
  std::copy(mask.values.begin(), mask.values.end(), m.data);
  return m;
}

BinaryMask mat_to_mask(const cv::Mat& m) {
  BinaryMask mask = BinaryMask::zeros(static_cast<std::size_t>(m.rows), static_cast<std::size_t>(m.cols));
  const cv::Mat c = m.isContinuous() ? m : m.clone();
  for (std::size_t i = 0; i < mask.values.size(); ++i) mask.values[i] = c.data[i] ? 1 : 0;
  return mask;
}

}  // namespace

Sample apply_affine(const Sample& sample, const AffineParams& params) {
  cv::Mat img = image_to_mat(sample.image);
  cv::Mat mask = mask_to_mat(sample.mask);
  const int flip_code = params.hflip && params.vflip ? -1 : (params.hflip ? 1 : 0);
  if (params.hflip || params.vflip) {
    cv::flip(img, img, flip_code);
    cv::flip(mask, mask, flip_code);
  }
  if (!params.is_flip_only()) {
    const cv::Point2f centre(static_cast<float>(img.cols - 1) / 2.0f, static_cast<float>(img.rows - 1) / 2.0f);
    cv::Mat m = cv::getRotationMatrix2D(centre, params.angle_deg, params.zoom);
    m.at<double>(0, 2) += params.shift_x * img.cols;
    m.at<double>(1, 2) += params.shift_y * img.rows;
    cv::Mat warped_img, warped_mask;
    cv::warpAffine(img, warped_img, m, img.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    cv::warpAffine(mask, warped_mask, m, mask.size(), cv::INTER_NEAREST, cv::BORDER_REFLECT_101);
    img = warped_img;
    mask = warped_mask;
  }
  return {sample.id, mat_to_image(img), mat_to_mask(mask)};
}

Sample augment(const Sample& sample, const AugmentSpec& spec, std::uint64_t seed) {
  return apply_affine(sample, sample_affine(spec, seed));
}

CropWindow random_crop_window(std::size_t height, std::size_t width, std::size_t crop_h, std::size_t crop_w,
                              std::uint64_t seed) {
  if (crop_h == 0 || crop_w == 0 || crop_h > height || crop_w > width) {
    throw std::invalid_argument("crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                                " does not fit sample " + std::to_string(height) + "x" + std::to_string(width));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> top(0, height - crop_h);
  std::uniform_int_distribution<std::size_t> left(0, width - crop_w);
  const std::size_t t = top(rng);
  return {t, left(rng), crop_h, crop_w};
}

Sample crop(const Sample& sample, const CropWindow& w) {
  if (w.top + w.height > sample.image.height || w.left + w.width > sample.image.width) {
    throw std::invalid_argument("crop window exceeds sample");
  }
  Sample out{sample.id, ImageTensor::zeros(w.height, w.width), BinaryMask::zeros(w.height, w.width)};
  for (std::size_t y = 0; y < w.height; ++y) {
    for (std::size_t x = 0; x < w.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.image.at(c, y, x) = sample.image.at(c, w.top + y, w.left + x);
      out.mask.at(y, x) = sample.mask.at(w.top + y, w.left + x);
    }
  }
  return out;
}

Sample random_crop(const Sample& sample, std::size_t crop_h, std::size_t crop_w, std::uint64_t seed) {
  return crop(sample, random_crop_window(sample.image.height, sample.image.width, crop_h, crop_w, seed));
}

Batch make_batch(const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("make_batch: no samples");
  const std::size_t h = samples[0].image.height;
  const std::size_t w = samples[0].image.width;
  Batch b;
  b.images = Tensor<float>({samples.size(), 3, h, w});
  b.masks = Tensor<float>({samples.size(), 1, h, w});
  float* img = b.images.data();
  float* msk = b.masks.data();
  for (const Sample& s : samples) {
    if (s.image.height != h || s.image.width != w || s.mask.height != h || s.mask.width != w) {
      throw std::invalid_argument("make_batch: heterogeneous sample sizes");
    }
    b.ids.push_back(s.id);
    img = std::copy(s.image.values.begin(), s.image.values.end(), img);
    for (auto v : s.mask.values) *msk++ = static_cast<float>(v);
  }
  return b;
}

void SynthSpec::validate() const {
  if (count == 0) throw ConfigError("synth.count must be >= 1");
  if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("synth size must be positive and divisible by 32");
  }
  if (blob_min < 1 || blob_max < blob_min) throw ConfigError("synth blob count range must satisfy 1 <= min <= max");
  if (!(area_lo > 0.0 && area_lo < area_hi && area_hi < 1.0)) {
    throw ConfigError("synth area range must satisfy 0 < lo < hi < 1");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("synth noise_sigma must be >= 0");
  const double pixels = static_cast<double>(height * width);
  if (std::ceil(area_lo * pixels) + 4 > std::floor(area_hi * pixels)) {
    throw ConfigError("synth area range is infeasible for the requested size");
  }
}

namespace {

struct Blob {
  double cx, cy, radius, aspect, cos_t, sin_t;
};

// Squared normalized radius of (x, y) for blob b at scale s.
double blob_r2(const Blob& b, double s, double x, double y) {
  const double dx = x - b.cx;
  const double dy = y - b.cy;
  const double u = (dx * b.cos_t + dy * b.sin_t) / (s * b.radius);
  const double v = (-dx * b.sin_t + dy * b.cos_t) / (s * b.radius * b.aspect);
  return u * u + v * v;
}

std::size_t union_area(const std::vector<Blob>& blobs, double s, std::size_t h, std::size_t w) {
  std::size_t n = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (const Blob& b : blobs) {
        if (blob_r2(b, s, static_cast<double>(x), static_cast<double>(y)) <= 1.0) {
          ++n;
          break;
        }
      }
    }
  }
  return n;
}

Sample synth_one(const SynthSpec& spec, std::size_t index) {
  std::mt19937_64 rng(mix_seed({spec.seed, index}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  const double pixels = static_cast<double>(h * w);
  const auto min_fg = static_cast<std::size_t>(std::ceil(spec.area_lo * pixels));
  const auto max_fg = static_cast<std::size_t>(std::floor(spec.area_hi * pixels));

  std::vector<Blob> blobs;
  double scale = 0.0;
  bool ok = false;
  for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
    std::uniform_int_distribution<std::size_t> count(spec.blob_min, spec.blob_max);
    blobs.assign(count(rng), Blob{});
    for (Blob& b : blobs) {
      b.cx = (0.2 + 0.6 * unit(rng)) * static_cast<double>(w);
      b.cy = (0.2 + 0.6 * unit(rng)) * static_cast<double>(h);
      b.radius = 0.6 + 0.4 * unit(rng);
      b.aspect = 0.55 + 0.45 * unit(rng);
      const double theta = std::numbers::pi * unit(rng);
      b.cos_t = std::cos(theta);
      b.sin_t = std::sin(theta);
    }
    const double frac = spec.area_lo + (0.15 + 0.7 * unit(rng)) * (spec.area_hi - spec.area_lo);
    const auto target = static_cast<std::size_t>(std::llround(frac * pixels));
    double lo = 0.0;
    double hi = static_cast<double>(std::max(h, w));
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      (union_area(blobs, mid, h, w) < target ? lo : hi) = mid;
    }
    scale = hi;
    const std::size_t area = union_area(blobs, scale, h, w);
    ok = area >= min_fg && area <= max_fg;
  }
  if (!ok) throw ConfigError("synth: could not place blobs within the requested area range");

  // Background tissue colour with low-frequency texture and pixel noise.
  const double base[3] = {0.55 + 0.1 * (unit(rng) - 0.5), 0.32 + 0.08 * (unit(rng) - 0.5),
                          0.26 + 0.08 * (unit(rng) - 0.5)};
  const double contrast[3] = {0.28, 0.2, 0.1};
  double fx[2], fy[2], phase[2];
  for (int k = 0; k < 2; ++k) {
    fx[k] = 1.0 + 3.0 * unit(rng);
    fy[k] = 1.0 + 3.0 * unit(rng);
    phase[k] = 2.0 * std::numbers::pi * unit(rng);
  }
  std::normal_distribution<double> noise(0.0, 1.0);

  std::ostringstream id;
  id << "synth_" << std::setw(4) << std::setfill('0') << index;
  Sample s{id.str(), ImageTensor::zeros(h, w), BinaryMask::zeros(h, w)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double profile = 0.0;
      bool inside = false;
      for (const Blob& b : blobs) {
        const double r2 = blob_r2(b, scale, static_cast<double>(x), static_cast<double>(y));
        if (r2 <= 1.0) {
          inside = true;
          profile = std::max(profile, 1.0 - 0.5 * r2);
        }
      }
      s.mask.at(y, x) = inside ? 1 : 0;
      const double u = static_cast<double>(x) / static_cast<double>(w);
      const double v = static_cast<double>(y) / static_cast<double>(h);
      const double texture = 0.05 * std::sin(2.0 * std::numbers::pi * (fx[0] * u + fy[0] * v) + phase[0]) +
                             0.03 * std::sin(2.0 * std::numbers::pi * (fx[1] * u - fy[1] * v) + phase[1]);
      for (std::size_t c = 0; c < 3; ++c) {
        const double value = base[c] + texture + contrast[c] * profile + spec.noise_sigma * noise(rng);
        s.image.at(c, y, x) = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  }
  return s;
}

}  // namespace

std::vector<Sample> synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(synth_one(spec, i));
  return out;
}

DatasetManifest write_dataset(const fs::path& root, const std::vector<Sample>& samples, Split split) {
  DatasetManifest manifest{root, split, {}};
  for (const Sample& s : samples) {
    const fs::path image = root / "images" / (s.id + ".png");
    const fs::path mask = root / "masks" / (s.id + ".png");
    write_image(image, s.image);
    write_mask(mask, s.mask);
    manifest.entries.push_back({s.id, image, mask});
  }
  write_manifest_csv(root / "manifest.csv", {manifest});
  return manifest;
}

}  // namespace acsseg
