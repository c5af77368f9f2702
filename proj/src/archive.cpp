#include "acsseg/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "acsseg/errors.hpp"

namespace acsseg {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

constexpr char kMagic[4] = {'N', 'T', 'A', 'R'};
constexpr std::uint8_t kDtypeF32 = 0;
// Sanity bounds against garbage headers.
constexpr std::uint32_t kMaxNameLength = 1u << 16;
constexpr std::uint8_t kMaxRank = 8;
constexpr std::size_t kReadChunk = 1u << 20;

template <typename U>
void put(std::ostream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U get(std::istream& in, const char* what) {
  U value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(U))) {
    throw ArchiveError(std::string("corrupt archive: truncated while reading ") + what);
  }
  return value;
}

}  // namespace

void TensorArchive::add(std::string name, Shape shape, std::vector<float> values) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("archive entry '" + name + "': value count does not match shape");
  }
  entries_.push_back({std::move(name), std::move(shape), std::move(values)});
}

const NamedTensor* TensorArchive::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

void write_archive(std::ostream& out, const TensorArchive& archive) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint64_t>(out, archive.size());
  for (const auto& e : archive.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint8_t>(out, kDtypeF32);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  }
}

TensorArchive read_archive(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ArchiveError("corrupt archive: bad magic");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kArchiveVersion) {
    throw ArchiveError("corrupt archive: unsupported version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(in, "entry count");
  TensorArchive archive;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, "name length");
    if (name_len > kMaxNameLength) throw ArchiveError("corrupt archive: implausible name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ArchiveError("corrupt archive: truncated name");
    const auto dtype = get<std::uint8_t>(in, "dtype");
    if (dtype != kDtypeF32) {
      throw ArchiveError("corrupt archive: unsupported dtype " + std::to_string(dtype) + " for '" + name + "'");
    }
    const auto rank = get<std::uint8_t>(in, "rank");
    if (rank > kMaxRank) throw ArchiveError("corrupt archive: implausible rank for '" + name + "'");
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = get<std::uint64_t>(in, "dims");
      if (d != 0 && numel > std::numeric_limits<std::uint32_t>::max() / d) {
        throw ArchiveError("corrupt archive: implausible size for '" + name + "'");
      }
      numel *= d;
    }
    // Grow in bounded chunks so a corrupt size cannot trigger a huge allocation.
    std::vector<float> values;
    while (values.size() < numel) {
      const std::size_t have = values.size();
      const std::size_t take = std::min<std::size_t>(numel - have, kReadChunk);
      values.resize(have + take);
      if (!in.read(reinterpret_cast<char*>(values.data() + have), static_cast<std::streamsize>(take * sizeof(float)))) {
        throw ArchiveError("corrupt archive: truncated values for '" + name + "'");
      }
    }
    archive.add(std::move(name), std::move(shape), std::move(values));
  }
  return archive;
}

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_archive(out, archive);
  if (!out.flush()) throw std::runtime_error("failed writing " + path.string());
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open archive " + path.string());
  return read_archive(in);
}

}  // namespace acsseg
