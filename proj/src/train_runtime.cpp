#include "acsseg/train_runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "acsseg/archive.hpp"
#include "acsseg/data_pipeline.hpp"
#include "acsseg/errors.hpp"
#include "acsseg/state.hpp"

namespace fs = std::filesystem;

namespace acsseg {

double poly_lr(const PolySchedule& s, std::size_t epoch) {
  if (epoch > s.n_epoch) {
    throw std::out_of_range("poly_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(s.n_epoch) + "]");
  }
  const double frac = static_cast<double>(epoch) / static_cast<double>(s.n_epoch);
  return s.init_lr * std::pow(1.0 - frac, s.power);
}

template <typename T>
void SgdOptimizer<T>::step(const std::vector<nn::ParamRef<T>>& params, double lr) {
  for (const auto& p : params) {
    if (!p.var->has_grad()) continue;
    for (const T g : p.var->grad().span()) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericalError("non-finite gradient in " + p.name);
    }
  }
  const T m = static_cast<T>(momentum_);
  const T step = static_cast<T>(lr);
  for (const auto& p : params) {
    Tensor<T>& w = p.var->mutable_value();
    auto [it, inserted] = velocity_.try_emplace(p.name, w.shape());
    Tensor<T>& v = it->second;
    if (v.shape() != w.shape()) throw std::invalid_argument("velocity shape mismatch for " + p.name);
    const T wd = p.decay ? static_cast<T>(weight_decay_) : T(0);
    const bool has_grad = p.var->has_grad();
    const T* g = has_grad ? p.var->grad().data() : nullptr;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const T gi = (has_grad ? g[i] : T(0)) + wd * w[i];
      v[i] = m * v[i] + gi;
      w[i] -= step * v[i];
    }
  }
}

template class SgdOptimizer<float>;
template class SgdOptimizer<double>;

namespace {

template <typename V>
void put_le(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

template <typename V>
V get_le(const char* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ParsedCheckpoint {
  TensorArchive archive;
  CheckpointMeta meta;
};

ParsedCheckpoint parse_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kCheckpointTrailerBytes + 16) throw ArchiveError("corrupt archive: file too short");
  const std::size_t body = bytes.size() - kCheckpointTrailerBytes;
  std::istringstream in(bytes.substr(0, body));
  ParsedCheckpoint out;
  out.archive = read_archive(in);
  if (static_cast<std::size_t>(in.tellg()) != body) throw ArchiveError("corrupt archive: trailing bytes");
  const char* t = bytes.data() + body;
  out.meta.epoch = get_le<std::uint64_t>(t);
  out.meta.best_val_dice = get_le<double>(t + 8);
  std::memcpy(out.meta.config_hash.data(), t + 16, 32);
  return out;
}

}  // namespace

void save_checkpoint(const fs::path& path, const AcsNet<float>& model, const SgdOptimizer<float>* optimizer,
                     const CheckpointMeta& meta) {
  TensorArchive archive = export_state(model);
  if (optimizer != nullptr) {
    for (const auto& [name, v] : optimizer->velocities()) archive.add(kVelocityPrefix + name, v.shape(), v.storage());
  }
  std::ostringstream body;
  write_archive(body, archive);
  std::string bytes = body.str();
  put_le(bytes, meta.epoch);
  put_le(bytes, meta.best_val_dice);
  bytes.append(reinterpret_cast<const char*>(meta.config_hash.data()), 32);

  // Write to a sibling file and rename so a crash never leaves a torn checkpoint.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) { return parse_checkpoint(path).meta; }

CheckpointMeta load_checkpoint(const fs::path& path, AcsNet<float>& model, SgdOptimizer<float>* optimizer) {
  ParsedCheckpoint ck = parse_checkpoint(path);
  TensorArchive model_part;
  std::map<std::string, const NamedTensor*> velocity;
  for (const auto& e : ck.archive.entries()) {
    if (e.name.rfind(kVelocityPrefix, 0) == 0) {
      velocity.emplace(e.name.substr(kVelocityPrefix.size()), &e);
    } else {
      model_part.add(e.name, e.shape, e.values);
    }
  }
  // A checkpoint must match the model exactly; check before touching any state.
  const InventoryDiff diff = diff_inventory(model, model_part);
  if (!diff.compatible() || !diff.unexpected.empty()) throw ArchiveError(diff.describe(true));
  import_state(model, model_part);
  if (optimizer != nullptr) {
    auto& v = optimizer->velocities();
    v.clear();
    for (const auto& p : model.parameters()) {
      const auto it = velocity.find(p.name);
      if (it == velocity.end()) continue;
      if (it->second->shape != p.var->shape()) throw ArchiveError("shape mismatch for velocity of '" + p.name + "'");
      v.emplace(p.name, Tensor<float>(it->second->shape, it->second->values));
    }
  }
  return ck.meta;
}

Sample ManifestSource::get(std::size_t index) const {
  return resize_pair(load_sample(entries_.at(index)), height_, width_);
}

double mean_dice(AcsNet<float>& model, const SampleSource& data, double threshold) {
  if (data.size() == 0) throw DataError("mean_dice: no samples");
  const bool was_training = model.training();
  model.set_training(false);
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample s = data.get(i);
    sum += metrics_from_counts(confusion(predict_mask(model, s.image, threshold), s.mask)).dice;
  }
  model.set_training(was_training);
  return sum / static_cast<double>(data.size());
}

std::string train_log_header() {
  std::string h = "epoch,iter,lr,total";
  for (const char* kind : {"bce", "dice"})
    for (int s = 5; s >= 1; --s) h += std::string(",") + kind + "_s" + std::to_string(s);
  return h + ",val_dice";
}

std::string train_log_row(const IterationRecord& r) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::string row = std::to_string(r.epoch) + "," + std::to_string(r.iter) + "," + num(r.lr) + "," + num(r.loss.total);
  for (const auto& s : r.loss.per_scale) row += "," + num(s.bce);
  for (const auto& s : r.loss.per_scale) row += "," + num(s.dice);
  row += ",";
  if (r.val_dice) row += num(*r.val_dice);
  return row;
}

namespace {

Sample prepare_sample(const ExperimentConfig& cfg, const SampleSource& data, std::size_t index, std::size_t epoch) {
  Sample s = data.get(index);
  const std::uint64_t seed = sample_seed(cfg.seed, s.id, epoch);
  s = augment(s, cfg.augment, seed);
  if (cfg.crop_h != s.image.height || cfg.crop_w != s.image.width) {
    s = random_crop(s, cfg.crop_h, cfg.crop_w, mix_seed({seed, 1}));
  }
  return s;
}

std::vector<Sample> prepare_batch(const ExperimentConfig& cfg, const SampleSource& data,
                                  const std::vector<std::size_t>& indices, std::size_t epoch, std::size_t workers) {
  std::vector<Sample> out(indices.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = prepare_sample(cfg, data, indices[i], epoch);
    return out;
  }
  // Each sample's seed depends only on (seed, id, epoch), so completion order
  // does not affect the result.
  std::vector<std::future<void>> jobs;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < std::min(workers, indices.size()); ++w) {
    jobs.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < indices.size(); i = next++) out[i] = prepare_sample(cfg, data, indices[i], epoch);
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, const SampleSource& train_data, const SampleSource& val_data,
                  const TrainOptions& opts) {
  validate_config(cfg);
  if (train_data.size() == 0) throw DataError("training set is empty");
  const SampleSource& val = val_data.size() > 0 ? val_data : train_data;
  const bool write = !opts.out_dir.empty();
  const auto hash = config_hash(cfg);

  TrainResult result;
  result.model = build_model<float>(cfg.model(), cfg.seed);
  result.optimizer = SgdOptimizer<float>(cfg.momentum, cfg.weight_decay);
  AcsNet<float>& model = *result.model;

  std::ofstream log_file;
  if (write) {
    fs::create_directories(opts.out_dir);
    save_config(opts.out_dir / "config.resolved.cfg", cfg);
    log_file.open(opts.out_dir / "train_log.csv");
    if (!log_file) throw std::runtime_error("cannot write " + (opts.out_dir / "train_log.csv").string());
    log_file << train_log_header() << '\n';
  }
  const std::size_t workers = opts.strict_determinism ? 1 : std::max<std::size_t>(1, opts.workers);

  std::size_t iteration = 0;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < cfg.schedule.n_epoch && !stop; ++epoch) {
    const double lr = poly_lr(cfg.schedule, epoch);
    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed({cfg.seed, epoch, 0x5348}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const std::size_t first_record = result.log.iterations.size();
    model.set_training(true);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + cfg.batch_size)));
      const Batch batch = make_batch(prepare_batch(cfg, train_data, idx, epoch, workers));

      model.zero_grad();
      const auto preds = model.forward(Var<float>(batch.images));
      const LossResult<float> loss = deep_supervised_loss(preds, batch.masks, cfg.loss);
      if (!std::isfinite(loss.breakdown.total)) {
        if (write) save_checkpoint(opts.out_dir / "abort.ckpt", model, &result.optimizer, {epoch, result.best_val_dice, hash});
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " iteration " +
                             std::to_string(iteration));
      }
      backward(loss.total);
      try {
        result.optimizer.step(model.parameters(), lr);
      } catch (const NumericalError&) {
        if (write) save_checkpoint(opts.out_dir / "abort.ckpt", model, &result.optimizer, {epoch, result.best_val_dice, hash});
        throw;
      }

      result.log.iterations.push_back({epoch, iteration, lr, loss.breakdown, std::nullopt});
      if (opts.progress != nullptr) {
        *opts.progress << "epoch " << epoch << " iter " << iteration << " lr " << lr << " loss "
                       << loss.breakdown.total << '\n';
      }
      ++iteration;
      if (cfg.max_iters > 0 && iteration >= cfg.max_iters) {
        stop = true;
        break;
      }
    }

    const double dice = mean_dice(model, val, cfg.eval_threshold);
    result.log.val_dice.push_back(dice);
    result.log.iterations.back().val_dice = dice;
    result.epochs = epoch + 1;
    const bool best = result.log.val_dice.size() == 1 || dice > result.best_val_dice;
    if (best) result.best_val_dice = dice;
    if (opts.progress != nullptr) *opts.progress << "epoch " << epoch << " val_dice " << dice << '\n';
    if (write) {
      for (std::size_t r = first_record; r < result.log.iterations.size(); ++r) {
        log_file << train_log_row(result.log.iterations[r]) << '\n';
      }
      log_file.flush();
      const CheckpointMeta meta{result.epochs, result.best_val_dice, hash};
      save_checkpoint(opts.out_dir / "last.ckpt", model, &result.optimizer, meta);
      if (best) save_checkpoint(opts.out_dir / "best.ckpt", model, &result.optimizer, meta);
    }
  }
  return result;
}

}  // namespace acsseg
