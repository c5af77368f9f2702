#pragma once

// SGD with momentum, the poly schedule driver, checkpoints and the training loop.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "acsseg/config.hpp"
#include "acsseg/decoder_net.hpp"
#include "acsseg/metrics.hpp"
#include "acsseg/objectives.hpp"
#include "acsseg/schedule.hpp"

namespace acsseg {

// Classical momentum with weight decay folded into the gradient:
//   g' = g + wd * w (decay-enabled parameters only); v = m v + g'; w -= lr v.
template <typename T>
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  // Throws NumericalError naming the first parameter with a non-finite gradient
  // before touching any state.
  void step(const std::vector<nn::ParamRef<T>>& params, double lr);

  const std::map<std::string, Tensor<T>>& velocities() const noexcept { return velocity_; }
  std::map<std::string, Tensor<T>>& velocities() noexcept { return velocity_; }
  double momentum() const noexcept { return momentum_; }
  double weight_decay() const noexcept { return weight_decay_; }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, Tensor<T>> velocity_;
};

struct CheckpointMeta {
  std::uint64_t epoch = 0;
  double best_val_dice = 0.0;
  std::array<std::uint8_t, 32> config_hash{};

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

inline constexpr std::size_t kCheckpointTrailerBytes = 48;
inline const std::string kVelocityPrefix = "optim.velocity.";

void save_checkpoint(const std::filesystem::path& path, const AcsNet<float>& model,
                     const SgdOptimizer<float>* optimizer, const CheckpointMeta& meta);

// Restores parameters, buffers and (if given) velocities. Throws ArchiveError
// "corrupt archive: ..." for damaged files and "inventory mismatch: ..." when
// the checkpoint does not belong to this model.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, AcsNet<float>& model,
                               SgdOptimizer<float>* optimizer = nullptr);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Provides samples already resized to the configured input size.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual Sample get(std::size_t index) const = 0;
};

class InMemorySource : public SampleSource {
 public:
  explicit InMemorySource(std::vector<Sample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  Sample get(std::size_t index) const override { return samples_.at(index); }

 private:
  std::vector<Sample> samples_;
};

// Decodes and resizes from disk on each access.
class ManifestSource : public SampleSource {
 public:
  ManifestSource(std::vector<ManifestEntry> entries, std::size_t height, std::size_t width)
      : entries_(std::move(entries)), height_(height), width_(width) {}
  std::size_t size() const override { return entries_.size(); }
  Sample get(std::size_t index) const override;

 private:
  std::vector<ManifestEntry> entries_;
  std::size_t height_, width_;
};

struct IterationRecord {
  std::size_t epoch = 0;
  std::size_t iter = 0;
  double lr = 0.0;
  LossBreakdown loss;
  std::optional<double> val_dice;
};

struct RunLog {
  std::vector<IterationRecord> iterations;
  std::vector<double> val_dice;  // one per completed epoch
};

struct TrainOptions {
  // When empty nothing is written to disk.
  std::filesystem::path out_dir;
  bool strict_determinism = true;
  std::size_t workers = 1;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::unique_ptr<AcsNet<float>> model;
  SgdOptimizer<float> optimizer{0.9, 0.0005};
  RunLog log;
  double best_val_dice = 0.0;
  std::size_t epochs = 0;
};

// Per-image mean dice of `model` on `data` (inference mode, no augmentation).
double mean_dice(AcsNet<float>& model, const SampleSource& data, double threshold);

// Runs the schedule for cfg.schedule.n_epoch epochs or until cfg.max_iters
// iterations, validating after every epoch. An empty validation source falls
// back to the training source. Throws NumericalError on a non-finite loss
// (after writing abort.ckpt when out_dir is set).
TrainResult train(const ExperimentConfig& cfg, const SampleSource& train_data, const SampleSource& val_data,
                  const TrainOptions& opts = {});

std::string train_log_header();
std::string train_log_row(const IterationRecord& r);

}  // namespace acsseg
