#include "acsseg/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "acsseg/errors.hpp"

namespace acsseg {

std::string to_string(nn::NormKind k) { return k == nn::NormKind::Batch ? "batch" : "group"; }

ModelConfig ExperimentConfig::model() const {
  ModelConfig m = ModelConfig::make(encoder, ablation, norm);
  m.lca_threshold = lca_threshold;
  return m;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) out.push_back(trim(part));
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(d)) throw ConfigError(key + ": expected a real number, got '" + v + "'");
  return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] != '-') n = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return n;
}

std::vector<double> parse_reals(const std::string& key, const std::string& v, std::size_t count) {
  const auto parts = split_list(v, ',');
  if (parts.size() != count) {
    throw ConfigError(key + ": expected " + std::to_string(count) + " comma-separated values, got '" + v + "'");
  }
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(parse_real(key, p));
  return out;
}

void parse_size(const std::string& key, const std::string& v, std::size_t& h, std::size_t& w) {
  const auto x = v.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError(key + ": expected HxW, got '" + v + "'");
  h = parse_uint(key, trim(v.substr(0, x)));
  w = parse_uint(key, trim(v.substr(x + 1)));
}

std::string real_str(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, d);
    if (std::stod(shorter) == d) return shorter;
  }
  return buf;
}

std::string reals_str(const double* v, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? "," : "") + real_str(v[i]);
  return out;
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"model.encoder",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.encoder = encoder_variant_from_string(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("model.encoder: ") + e.what());
         }
       },
       [](const ExperimentConfig& c) { return to_string(c.encoder); }},
      {"model.ablation",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.ablation = ablation_from_string(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("model.ablation: ") + e.what());
         }
       },
       [](const ExperimentConfig& c) { return to_string(c.ablation); }},
      {"model.norm",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "batch") c.norm = nn::NormKind::Batch;
         else if (v == "group") c.norm = nn::NormKind::Group;
         else throw ConfigError("model.norm: expected batch or group, got '" + v + "'");
       },
       [](const ExperimentConfig& c) { return to_string(c.norm); }},
      {"model.lca_threshold", [](ExperimentConfig& c, const std::string& v) { c.lca_threshold = parse_real("model.lca_threshold", v); },
       [](const ExperimentConfig& c) { return real_str(c.lca_threshold); }},

      {"data.input_resize", [](ExperimentConfig& c, const std::string& v) { parse_size("data.input_resize", v, c.resize_h, c.resize_w); },
       [](const ExperimentConfig& c) { return std::to_string(c.resize_h) + "x" + std::to_string(c.resize_w); }},
      {"data.crop", [](ExperimentConfig& c, const std::string& v) { parse_size("data.crop", v, c.crop_h, c.crop_w); },
       [](const ExperimentConfig& c) { return std::to_string(c.crop_h) + "x" + std::to_string(c.crop_w); }},
      {"data.split",
       [](ExperimentConfig& c, const std::string& v) {
         const auto f = parse_reals("data.split", v, 3);
         c.split = {f[0], f[1], f[2]};
       },
       [](const ExperimentConfig& c) {
         const double f[3] = {c.split.train, c.split.val, c.split.test};
         return reals_str(f, 3);
       }},

      {"augment.hflip_prob", [](ExperimentConfig& c, const std::string& v) { c.augment.hflip_prob = parse_real("augment.hflip_prob", v); },
       [](const ExperimentConfig& c) { return real_str(c.augment.hflip_prob); }},
      {"augment.vflip_prob", [](ExperimentConfig& c, const std::string& v) { c.augment.vflip_prob = parse_real("augment.vflip_prob", v); },
       [](const ExperimentConfig& c) { return real_str(c.augment.vflip_prob); }},
      {"augment.rotation_max_deg",
       [](ExperimentConfig& c, const std::string& v) { c.augment.rotation_max_deg = parse_real("augment.rotation_max_deg", v); },
       [](const ExperimentConfig& c) { return real_str(c.augment.rotation_max_deg); }},
      {"augment.zoom_range",
       [](ExperimentConfig& c, const std::string& v) {
         const auto z = parse_reals("augment.zoom_range", v, 2);
         c.augment.zoom_lo = z[0];
         c.augment.zoom_hi = z[1];
       },
       [](const ExperimentConfig& c) {
         const double z[2] = {c.augment.zoom_lo, c.augment.zoom_hi};
         return reals_str(z, 2);
       }},
      {"augment.shift_max_frac",
       [](ExperimentConfig& c, const std::string& v) { c.augment.shift_max_frac = parse_real("augment.shift_max_frac", v); },
       [](const ExperimentConfig& c) { return real_str(c.augment.shift_max_frac); }},

      {"optimizer.momentum", [](ExperimentConfig& c, const std::string& v) { c.momentum = parse_real("optimizer.momentum", v); },
       [](const ExperimentConfig& c) { return real_str(c.momentum); }},
      {"optimizer.weight_decay",
       [](ExperimentConfig& c, const std::string& v) { c.weight_decay = parse_real("optimizer.weight_decay", v); },
       [](const ExperimentConfig& c) { return real_str(c.weight_decay); }},

      {"schedule.init_lr", [](ExperimentConfig& c, const std::string& v) { c.schedule.init_lr = parse_real("schedule.init_lr", v); },
       [](const ExperimentConfig& c) { return real_str(c.schedule.init_lr); }},
      {"schedule.power", [](ExperimentConfig& c, const std::string& v) { c.schedule.power = parse_real("schedule.power", v); },
       [](const ExperimentConfig& c) { return real_str(c.schedule.power); }},
      {"schedule.nEpoch", [](ExperimentConfig& c, const std::string& v) { c.schedule.n_epoch = parse_uint("schedule.nEpoch", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.schedule.n_epoch); }},

      {"loss.bce_weight", [](ExperimentConfig& c, const std::string& v) { c.loss.bce_weight = parse_real("loss.bce_weight", v); },
       [](const ExperimentConfig& c) { return real_str(c.loss.bce_weight); }},
      {"loss.dice_weight", [](ExperimentConfig& c, const std::string& v) { c.loss.dice_weight = parse_real("loss.dice_weight", v); },
       [](const ExperimentConfig& c) { return real_str(c.loss.dice_weight); }},
      {"loss.smooth", [](ExperimentConfig& c, const std::string& v) { c.loss.smooth = parse_real("loss.smooth", v); },
       [](const ExperimentConfig& c) { return real_str(c.loss.smooth); }},
      {"loss.scale_weights",
       [](ExperimentConfig& c, const std::string& v) {
         const auto w = parse_reals("loss.scale_weights", v, 5);
         std::copy(w.begin(), w.end(), c.loss.scale_weights.begin());
       },
       [](const ExperimentConfig& c) { return reals_str(c.loss.scale_weights.data(), 5); }},

      {"train.batch_size", [](ExperimentConfig& c, const std::string& v) { c.batch_size = parse_uint("train.batch_size", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.batch_size); }},
      {"train.seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_uint("train.seed", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      {"train.max_iters", [](ExperimentConfig& c, const std::string& v) { c.max_iters = parse_uint("train.max_iters", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.max_iters); }},

      {"eval.threshold", [](ExperimentConfig& c, const std::string& v) { c.eval_threshold = parse_real("eval.threshold", v); },
       [](const ExperimentConfig& c) { return real_str(c.eval_threshold); }},
  };
  return table;
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(cfg, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  set_config_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config syntax error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set_config_value(cfg, section + "." + key, value.data());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : keys()) {
    const std::string name = k.name;
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += name.substr(dot + 1) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

void save_config(const std::filesystem::path& file, const ExperimentConfig& cfg) {
  std::ofstream out(file);
  out << serialize_config(cfg);
  if (!out) throw ConfigError("cannot write config " + file.string());
}

std::array<std::uint8_t, 32> config_hash(const ExperimentConfig& cfg) {
  const std::string text = serialize_config(cfg);
  std::array<std::uint8_t, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32) {
    throw std::runtime_error("SHA-256 failed");
  }
  return digest;
}

std::string to_hex(const std::array<std::uint8_t, 32>& digest) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (auto b : digest) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

std::vector<std::string> config_violations(const ExperimentConfig& cfg) {
  std::vector<std::string> v;
  if (cfg.crop_h == 0 || cfg.crop_w == 0 || cfg.crop_h % 32 != 0 || cfg.crop_w % 32 != 0) {
    v.push_back("data.crop: crop not divisible by 32");
  }
  if (cfg.crop_h > cfg.resize_h || cfg.crop_w > cfg.resize_w) v.push_back("data.crop: crop larger than input_resize");
  if (cfg.resize_h == 0 || cfg.resize_w == 0 || cfg.resize_h % 32 != 0 || cfg.resize_w % 32 != 0) {
    v.push_back("data.input_resize: input_resize not divisible by 32");
  }
  if (cfg.batch_size < 1) v.push_back("train.batch_size: batch_size must be >= 1");
  if (!(cfg.eval_threshold > 0.0 && cfg.eval_threshold < 1.0)) v.push_back("eval.threshold: threshold out of (0,1)");
  if (!(cfg.lca_threshold > 0.0 && cfg.lca_threshold < 1.0)) {
    v.push_back("model.lca_threshold: threshold out of (0,1)");
  }
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) v.push_back("optimizer.momentum: momentum out of [0,1)");
  if (!(cfg.weight_decay >= 0.0)) v.push_back("optimizer.weight_decay: weight_decay must be >= 0");
  if (!(cfg.schedule.init_lr > 0.0)) v.push_back("schedule.init_lr: init_lr must be > 0");
  if (!(cfg.schedule.power > 0.0)) v.push_back("schedule.power: power must be > 0");
  if (cfg.schedule.n_epoch < 1) v.push_back("schedule.nEpoch: nEpoch must be >= 1");
  const SplitFractions& s = cfg.split;
  if (s.train < 0 || s.val < 0 || s.test < 0 || std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
    v.push_back("data.split: fractions must be non-negative and sum to 1");
  }
  for (const auto& check : std::vector<std::function<void()>>{[&] { cfg.loss.validate(); },
                                                              [&] { cfg.augment.validate(); }}) {
    try {
      check();
    } catch (const ConfigError& e) {
      v.push_back(std::string(e.what()));
    }
  }
  return v;
}

const ExperimentConfig& validate_config(const ExperimentConfig& cfg) {
  const auto v = config_violations(cfg);
  if (!v.empty()) {
    std::string msg;
    for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
    throw ConfigError(msg);
  }
  return cfg;
}

}  // namespace acsseg
