#ifndef TEMPBAL_WEIGHT_STORE_HPP_
#define TEMPBAL_WEIGHT_STORE_HPP_

// Framework-independent weight snapshots and the ".wsnp" container.
//
// Layout (all integers little-endian):
//   "WSNP" | u32 version=1 | u32 epoch | u32 layer_count
//   per layer: u32 name_len | name (UTF-8) | u32 ndims (2 or 4)
//              | u64 dim[ndims] | f64 value[product(dims)] (row-major)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tempbal/error.hpp"

namespace tempbal {

struct LayerTensor {
  std::string name;
  // (rows, cols) for dense, (out, in, kh, kw) for conv.
  std::vector<std::uint64_t> dims;
  std::vector<double> values;

  bool is_conv() const { return dims.size() == 4; }

  std::uint64_t element_count() const {
    std::uint64_t p = 1;
    for (auto d : dims) p *= d;
    return p;
  }

  friend bool operator==(const LayerTensor&, const LayerTensor&) = default;
};

struct WeightSnapshot {
  std::uint32_t epoch = 0;
  std::vector<LayerTensor> layers;

  const LayerTensor* find(std::string_view name) const {
    for (const auto& l : layers)
      if (l.name == name) return &l;
    return nullptr;
  }

  friend bool operator==(const WeightSnapshot&, const WeightSnapshot&) = default;
};

inline constexpr std::array<char, 4> kSnapshotMagic = {'W', 'S', 'N', 'P'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

class SnapshotError : public DataError {
 public:
  enum class Kind { kBadMagic, kBadVersion, kTruncated, kStructure, kBadName, kIo };

  // layer < 0 means the error is in the file header.
  SnapshotError(Kind kind, long layer, std::uint64_t offset, const std::string& what)
      : DataError(what), kind_(kind), layer_(layer), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  long layer() const noexcept { return layer_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  long layer_;
  std::uint64_t offset_;
};

namespace detail {

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    unsigned char c = p[i];
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t j = 1; j < len; ++j) {
      if ((p[i + j] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (p[i + j] & 0x3F);
    }
    // Overlong encodings, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      return false;
    i += len;
  }
  return true;
}

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  void raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_)
      throw SnapshotError(SnapshotError::Kind::kIo, -1, offset_,
                          "write failed at byte offset " + std::to_string(offset_));
    offset_ += n;
  }

  template <class U>
  void le(U v) {
    std::array<unsigned char, sizeof(U)> b;
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b.data(), b.size());
  }

  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

  std::uint64_t offset() const { return offset_; }

 private:
  std::ostream& out_;
  std::uint64_t offset_ = 0;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  bool raw(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    offset_ += static_cast<std::uint64_t>(in_.gcount());
    return static_cast<std::size_t>(in_.gcount()) == n;
  }

  template <class U>
  bool le(U& v) {
    std::array<unsigned char, sizeof(U)> b;
    if (!raw(b.data(), b.size())) return false;
    v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return true;
  }

  bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace detail

// Checks every snapshot invariant; throws SnapshotError(kStructure/kBadName).
inline void validate(const WeightSnapshot& s) {
  using K = SnapshotError::Kind;
  if (s.layers.empty()) throw SnapshotError(K::kStructure, -1, 0, "snapshot has no layers");
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const auto& l = s.layers[i];
    const long li = static_cast<long>(i);
    const std::string at = "layer " + std::to_string(i);
    if (l.name.empty()) throw SnapshotError(K::kBadName, li, 0, at + ": empty name");
    if (!detail::valid_utf8(l.name)) throw SnapshotError(K::kBadName, li, 0, at + ": name is not UTF-8");
    if (!seen.insert(l.name).second)
      throw SnapshotError(K::kBadName, li, 0, at + ": duplicate name '" + l.name + "'");
    if (l.dims.size() != 2 && l.dims.size() != 4)
      throw SnapshotError(K::kStructure, li, 0, at + ": ndims must be 2 or 4");
    for (auto d : l.dims)
      if (d == 0) throw SnapshotError(K::kStructure, li, 0, at + ": zero dimension");
    if (l.element_count() != l.values.size())
      throw SnapshotError(K::kStructure, li, 0,
                          at + ": dims product " + std::to_string(l.element_count()) +
                              " != value count " + std::to_string(l.values.size()));
  }
}

// Returns the number of bytes written.
inline std::uint64_t write_snapshot(const WeightSnapshot& s, std::ostream& out) {
  validate(s);
  detail::ByteWriter w(out);
  w.raw(kSnapshotMagic.data(), kSnapshotMagic.size());
  w.le<std::uint32_t>(kSnapshotVersion);
  w.le<std::uint32_t>(s.epoch);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(s.layers.size()));
  for (const auto& l : s.layers) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(l.name.size()));
    w.raw(l.name.data(), l.name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(l.dims.size()));
    for (auto d : l.dims) w.le<std::uint64_t>(d);
    for (double v : l.values) w.f64(v);
  }
  return w.offset();
}

inline WeightSnapshot read_snapshot(std::istream& in) {
  using K = SnapshotError::Kind;
  detail::ByteReader r(in);
  auto fail = [&](K kind, long layer, const std::string& msg) -> SnapshotError {
    return SnapshotError(kind, layer, r.offset(), msg + " (byte offset " + std::to_string(r.offset()) + ")");
  };
  auto truncated = [&](long layer) {
    return layer < 0 ? fail(K::kTruncated, layer, "truncated in header")
                     : fail(K::kTruncated, layer, "truncated at layer " + std::to_string(layer));
  };

  std::array<char, 4> magic{};
  if (!r.raw(magic.data(), magic.size()) || magic != kSnapshotMagic)
    throw fail(K::kBadMagic, -1, "bad magic: not a WSNP snapshot");
  std::uint32_t version = 0, epoch = 0, count = 0;
  if (!r.le(version)) throw truncated(-1);
  if (version != kSnapshotVersion)
    throw fail(K::kBadVersion, -1, "unsupported snapshot version " + std::to_string(version));
  if (!r.le(epoch) || !r.le(count)) throw truncated(-1);
  if (count == 0) throw fail(K::kStructure, -1, "snapshot has no layers");

  WeightSnapshot s;
  s.epoch = epoch;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const long li = static_cast<long>(i);
    const std::string at = "layer " + std::to_string(i);
    LayerTensor l;
    std::uint32_t name_len = 0;
    if (!r.le(name_len)) throw truncated(li);
    if (name_len == 0) throw fail(K::kBadName, li, at + ": empty name");
    // Grow in bounded chunks so a corrupt length cannot force a huge allocation.
    constexpr std::size_t kChunk = 1 << 16;
    while (l.name.size() < name_len) {
      std::size_t n = std::min<std::size_t>(kChunk, name_len - l.name.size());
      std::size_t old = l.name.size();
      l.name.resize(old + n);
      if (!r.raw(l.name.data() + old, n)) throw truncated(li);
    }
    if (!detail::valid_utf8(l.name)) throw fail(K::kBadName, li, at + ": name is not UTF-8");
    if (!seen.insert(l.name).second) throw fail(K::kBadName, li, at + ": duplicate name '" + l.name + "'");

    std::uint32_t ndims = 0;
    if (!r.le(ndims)) throw truncated(li);
    if (ndims != 2 && ndims != 4)
      throw fail(K::kStructure, li, at + ": ndims " + std::to_string(ndims) + " (expected 2 or 4)");
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      std::uint64_t dim = 0;
      if (!r.le(dim)) throw truncated(li);
      if (dim == 0) throw fail(K::kStructure, li, at + ": zero dimension");
      if (total > std::numeric_limits<std::uint64_t>::max() / 8 / dim)
        throw fail(K::kStructure, li, at + ": dims product overflows");
      total *= dim;
      l.dims.push_back(dim);
    }
    while (l.values.size() < total) {
      std::size_t n = std::min<std::uint64_t>(kChunk, total - l.values.size());
      std::size_t old = l.values.size();
      l.values.resize(old + n);
      for (std::size_t j = old; j < old + n; ++j) {
        std::uint64_t bits = 0;
        if (!r.le(bits)) throw truncated(li);
        l.values[j] = std::bit_cast<double>(bits);
      }
    }
    s.layers.push_back(std::move(l));
  }
  if (!r.at_eof())
    throw fail(K::kStructure, static_cast<long>(count) - 1,
               "payload longer than declared dims (value count mismatch after layer " +
                   std::to_string(count - 1) + ")");
  return s;
}

inline void save_snapshot(const WeightSnapshot& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw SnapshotError(SnapshotError::Kind::kIo, -1, 0, "cannot open '" + path + "' for writing");
  write_snapshot(s, out);
  out.flush();
  if (!out) throw SnapshotError(SnapshotError::Kind::kIo, -1, 0, "flush failed for '" + path + "'");
}

inline WeightSnapshot load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError(SnapshotError::Kind::kIo, -1, 0, "cannot open '" + path + "'");
  return read_snapshot(in);
}

}  // namespace tempbal

#endif  // TEMPBAL_WEIGHT_STORE_HPP_
