#pragma once

// NamedTensorArchive: portable named-tensor container.
//
// Layout (all integers little-endian):
//   "NTAR" | version u32 | entry count u64 |
//   per entry: name length u32 | name bytes (UTF-8) | dtype u8 (0 = f32) |
//              rank u8 | dims u64 x rank | values, row-major.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "acsseg/tensor.hpp"

namespace acsseg {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

class TensorArchive {
 public:
  void add(std::string name, Shape shape, std::vector<float> values);
  const NamedTensor* find(const std::string& name) const;
  const std::vector<NamedTensor>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  friend bool operator==(const TensorArchive&, const TensorArchive&) = default;

 private:
  std::vector<NamedTensor> entries_;
};

void write_archive(std::ostream& out, const TensorArchive& archive);

// Throws ArchiveError ("corrupt archive: ...") on bad magic, version, or truncation.
TensorArchive read_archive(std::istream& in);

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace acsseg
