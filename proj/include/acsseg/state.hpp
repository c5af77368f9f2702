#pragma once

// Moving module state (parameters and buffers) in and out of a TensorArchive.

#include <algorithm>
#include <string>
#include <vector>

#include "acsseg/archive.hpp"
#include "acsseg/errors.hpp"
#include "acsseg/nn.hpp"

namespace acsseg {

struct ImportReport {
  // Archive entries under the prefix that the module does not own.
  std::vector<std::string> unexpected;
};

template <typename T>
TensorArchive export_state(const nn::Module<T>& module, const std::string& prefix = "") {
  TensorArchive archive;
  auto put = [&](const std::string& name, const Tensor<T>& t) {
    std::vector<float> values(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) values[i] = static_cast<float>(t[i]);
    archive.add(prefix + name, t.shape(), std::move(values));
  };
  // Canonical order: sorted by name, parameters and buffers interleaved.
  std::vector<std::pair<std::string, const Tensor<T>*>> all;
  for (const auto& p : module.parameters()) all.emplace_back(p.name, &p.var->value());
  for (const auto& b : module.buffers()) all.emplace_back(b.name, b.tensor);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [name, tensor] : all) put(name, *tensor);
  return archive;
}

struct InventoryDiff {
  std::vector<std::string> missing;
  // "'name': archive has [..], model expects [..]"
  std::vector<std::string> mismatched;
  // Archive entries under the prefix that the module does not own.
  std::vector<std::string> unexpected;

  bool compatible() const { return missing.empty() && mismatched.empty(); }
  // "inventory mismatch: ..." naming every problem; unexpected entries are
  // included only when `with_unexpected` is set.
  std::string describe(bool with_unexpected) const {
    std::string msg = "inventory mismatch:";
    auto list = [&](const std::string& what, const std::vector<std::string>& names) {
      if (names.empty()) return;
      msg += " " + what + " " + std::to_string(names.size()) + " tensor(s): ";
      for (std::size_t i = 0; i < names.size(); ++i) msg += (i ? ", " : "") + names[i];
      msg += ";";
    };
    list("missing", missing);
    if (!mismatched.empty()) {
      msg += " shape mismatch for";
      for (std::size_t i = 0; i < mismatched.size(); ++i) msg += (i ? ", " : " ") + mismatched[i];
      msg += ";";
    }
    if (with_unexpected) list("unexpected", unexpected);
    msg.pop_back();
    return msg;
  }
};

template <typename T>
InventoryDiff diff_inventory(const nn::Module<T>& module, const TensorArchive& archive, const std::string& prefix = "") {
  std::vector<std::pair<std::string, const Tensor<T>*>> targets;
  for (const auto& p : module.parameters()) targets.emplace_back(p.name, &p.var->value());
  for (const auto& b : module.buffers()) targets.emplace_back(b.name, b.tensor);

  InventoryDiff diff;
  for (const auto& [name, tensor] : targets) {
    const NamedTensor* entry = archive.find(prefix + name);
    if (entry == nullptr) {
      diff.missing.push_back(name);
    } else if (entry->shape != tensor->shape()) {
      diff.mismatched.push_back("'" + name + "': archive has " + shape_str(entry->shape) + ", model expects " +
                                shape_str(tensor->shape()));
    }
  }
  for (const auto& entry : archive.entries()) {
    if (entry.name.rfind(prefix, 0) != 0) continue;
    const std::string local = entry.name.substr(prefix.size());
    bool owned = false;
    for (const auto& [name, tensor] : targets) owned = owned || name == local;
    if (!owned) diff.unexpected.push_back(local);
  }
  return diff;
}

// Loads every parameter and buffer of `module` from entries named
// prefix + <inventory name>. Validates the whole inventory before writing
// anything; throws ArchiveError naming every missing or mis-shaped tensor.
template <typename T>
ImportReport import_state(nn::Module<T>& module, const TensorArchive& archive, const std::string& prefix = "") {
  const InventoryDiff diff = diff_inventory(module, archive, prefix);
  if (!diff.compatible()) throw ArchiveError(diff.describe(false));

  auto load = [&](const std::string& name, Tensor<T>& tensor) {
    const NamedTensor* entry = archive.find(prefix + name);
    for (std::size_t i = 0; i < tensor.numel(); ++i) tensor[i] = static_cast<T>(entry->values[i]);
  };
  for (const auto& p : module.parameters()) load(p.name, p.var->mutable_value());
  for (const auto& b : module.buffers()) load(b.name, *b.tensor);
  return {diff.unexpected};
}

}  // namespace acsseg
