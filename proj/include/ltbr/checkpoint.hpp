#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ltbr/tensor.hpp"

namespace ltbr {

// Container format: "LTBR" magic, u32 version, u32 entry count, then per entry
// a length-prefixed name, u32 rank, u64 dims and the little-endian f64
// payload; a length-prefixed UTF-8 key/value metadata block closes the file.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<CheckpointEntry> entries;
  std::vector<std::pair<std::string, std::string>> metadata;

  void add(const std::string& name, const Tensor& t) {
    if (find(name)) fail(Err::InvalidArgument, "duplicate checkpoint entry '" + name + "'");
    entries.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  }

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  Tensor tensor(const std::string& name) const {
    const CheckpointEntry* e = find(name);
    if (!e) fail(Err::CorruptEntry, "checkpoint is missing entry '" + name + "'");
    return Tensor(e->shape, e->data);
  }

  void set_meta(const std::string& k, const std::string& v) {
    for (auto& kv : metadata)
      if (kv.first == k) {
        kv.second = v;
        return;
      }
    metadata.emplace_back(k, v);
  }

  std::optional<std::string> meta(const std::string& k) const {
    for (const auto& kv : metadata)
      if (kv.first == k) return kv.second;
    return std::nullopt;
  }

  std::string meta_or_fail(const std::string& k) const {
    auto v = meta(k);
    if (!v) fail(Err::CorruptEntry, "checkpoint is missing metadata key '" + k + "'");
    return *v;
  }
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_f64(std::vector<unsigned char>& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

inline void put_str(std::vector<unsigned char>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class ByteReader {
 public:
  ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  std::size_t remaining() const { return n_ - at_; }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p_[at_ + i]) << (8 * i);
    at_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p_[at_ + i]) << (8 * i);
    at_ += 8;
    return v;
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  std::string str(std::uint32_t len, const char* what) {
    need(len, what);
    std::string s(reinterpret_cast<const char*>(p_ + at_), len);
    at_ += len;
    return s;
  }

  void need(std::size_t bytes, const char* what) const {
    if (remaining() < bytes)
      fail(Err::TruncatedFile, std::string("file ends while reading ") + what);
  }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t at_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& cp) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'L', 'T', 'B', 'R'});
  detail::put_u32(out, Checkpoint::kVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(cp.entries.size()));
  for (const auto& e : cp.entries) {
    detail::put_str(out, e.name);
    detail::put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) detail::put_u64(out, d);
    for (double v : e.data) detail::put_f64(out, v);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(cp.metadata.size()));
  for (const auto& [k, v] : cp.metadata) {
    detail::put_str(out, k);
    detail::put_str(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes.data(), bytes.size());
  r.need(4, "magic");
  std::string magic = r.str(4, "magic");
  if (magic != "LTBR") fail(Err::BadMagic, "not a checkpoint file (magic '" + magic + "')");
  std::uint32_t version = r.u32("version");
  if (version != Checkpoint::kVersion)
    fail(Err::VersionUnsupported, "checkpoint version " + std::to_string(version) +
                                      ", supported version is " +
                                      std::to_string(Checkpoint::kVersion));
  Checkpoint cp;
  std::uint32_t count = r.u32("entry count");
  constexpr std::size_t kMaxRank = 8;
  constexpr std::uint64_t kMaxElems = 1ull << 30;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint32_t name_len = r.u32("entry name length");
    if (name_len > r.remaining())
      fail(Err::CorruptEntry, "entry name length exceeds file size");
    CheckpointEntry entry;
    entry.name = r.str(name_len, "entry name");
    std::uint32_t rank = r.u32("entry rank");
    if (rank > kMaxRank) fail(Err::CorruptEntry, "entry rank " + std::to_string(rank));
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint64_t dim = r.u64("entry dim");
      if (dim > kMaxElems || numel > kMaxElems / std::max<std::uint64_t>(dim, 1))
        fail(Err::CorruptEntry, "entry '" + entry.name + "' claims an absurd element count");
      entry.shape.push_back(static_cast<std::size_t>(dim));
      numel *= std::max<std::uint64_t>(dim, 1);
      if (dim == 0) numel = 0;
    }
    std::uint64_t payload = shape_numel(entry.shape);
    r.need(payload * 8, "entry payload");
    entry.data.resize(payload);
    for (auto& v : entry.data) v = r.f64("entry payload");
    if (cp.find(entry.name))
      fail(Err::CorruptEntry, "duplicate entry name '" + entry.name + "'");
    cp.entries.push_back(std::move(entry));
  }
  std::uint32_t meta_count = r.u32("metadata count");
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::uint32_t klen = r.u32("metadata key length");
    if (klen > r.remaining()) fail(Err::CorruptEntry, "metadata key length exceeds file size");
    std::string k = r.str(klen, "metadata key");
    std::uint32_t vlen = r.u32("metadata value length");
    if (vlen > r.remaining()) fail(Err::CorruptEntry, "metadata value length exceeds file size");
    cp.metadata.emplace_back(std::move(k), r.str(vlen, "metadata value"));
  }
  return cp;
}

// Writes to a temp file in the target directory, then renames into place.
inline void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  namespace fs = std::filesystem;
  std::vector<unsigned char> bytes = encode_checkpoint(cp);
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Err::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out.good()) fail(Err::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(Err::IoError, "cannot move checkpoint into place at " + path);
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::IoError, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ltbr
