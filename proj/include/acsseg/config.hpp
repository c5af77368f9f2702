#pragma once

// Experiment configuration: a sectioned INI file
//
//   [model]     encoder, ablation, norm, lca_threshold
//   [data]      input_resize = HxW, crop = HxW, split = train,val,test
//   [augment]   hflip_prob, vflip_prob, rotation_max_deg, zoom_range = lo,hi, shift_max_frac
//   [optimizer] momentum, weight_decay
//   [schedule]  init_lr, power, nEpoch
//   [loss]      bce_weight, dice_weight, smooth, scale_weights = s5,s4,s3,s2,s1
//   [train]     batch_size, seed, max_iters (0 = no cap)
//   [eval]      threshold
//
// Missing keys keep their defaults; unknown sections or keys are errors.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "acsseg/data_model.hpp"
#include "acsseg/data_pipeline.hpp"
#include "acsseg/decoder_net.hpp"
#include "acsseg/objectives.hpp"
#include "acsseg/schedule.hpp"

namespace acsseg {

struct ExperimentConfig {
  EncoderVariant encoder = EncoderVariant::Tiny;
  Ablation ablation = Ablation::Full;
  nn::NormKind norm = nn::NormKind::Batch;
  double lca_threshold = 0.5;

  std::size_t resize_h = 288, resize_w = 384;
  std::size_t crop_h = 224, crop_w = 224;
  SplitFractions split;

  AugmentSpec augment;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  PolySchedule schedule;
  LossConfig loss;

  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  std::size_t max_iters = 0;
  double eval_threshold = 0.5;

  ModelConfig model() const;
};

// Every violated invariant, each naming its field. Empty when valid.
std::vector<std::string> config_violations(const ExperimentConfig& cfg);
// Returns cfg unchanged when valid; otherwise throws ConfigError listing all violations.
const ExperimentConfig& validate_config(const ExperimentConfig& cfg);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);
// "section.key=value".
void apply_override(ExperimentConfig& cfg, const std::string& assignment);
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Complete snapshot with every key; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);
void save_config(const std::filesystem::path& file, const ExperimentConfig& cfg);
// SHA-256 of serialize_config(cfg).
std::array<std::uint8_t, 32> config_hash(const ExperimentConfig& cfg);
std::string to_hex(const std::array<std::uint8_t, 32>& digest);

std::string to_string(nn::NormKind k);

}  // namespace acsseg
