#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ltbr/rng.hpp"
#include "ltbr/tensor.hpp"

namespace ltbr {

struct LabeledVectorDataset {
  Tensor vectors;              // [n x dim], detached values
  std::vector<int> labels;     // size n
  std::vector<double> params;  // optional per-sample curve parameter; empty or size n
  int domain = 0;

  std::size_t size() const { return vectors.rank() == 2 ? vectors.shape()[0] : 0; }
  std::size_t dim() const { return vectors.rank() == 2 ? vectors.shape()[1] : 0; }

  void validate() const {
    if (vectors.rank() != 2) fail(Err::ShapeMismatch, "dataset vectors must be rank-2");
    if (labels.size() != size()) fail(Err::LengthMismatch, "dataset labels size != rows");
    if (!params.empty() && params.size() != size())
      fail(Err::LengthMismatch, "dataset params size != rows");
  }

  int num_classes() const {
    int mx = -1;
    for (int l : labels) mx = std::max(mx, l);
    return mx + 1;
  }

  // Rows [lo, hi) as a detached tensor.
  Tensor rows(std::size_t lo, std::size_t hi) const {
    if (lo > hi || hi > size()) fail(Err::DomainError, "row range out of bounds");
    std::vector<double> d((hi - lo) * dim());
    std::copy_n(vectors.raw() + lo * dim(), d.size(), d.data());
    return Tensor(Shape{hi - lo, dim()}, std::move(d));
  }

  Tensor gather(const std::vector<std::size_t>& idx) const {
    std::vector<double> d(idx.size() * dim());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= size()) fail(Err::DomainError, "gather index out of range");
      std::copy_n(vectors.raw() + idx[i] * dim(), dim(), d.data() + i * dim());
    }
    return Tensor(Shape{idx.size(), dim()}, std::move(d));
  }
};

// ---- synthetic two-domain 2-D arcs ----

struct EllipseSpec {
  double cx = 0, cy = 0;   // center
  double ax = 1, ay = 1;   // semi-axes
  double rot = 0;          // rotation, radians
};

struct SyntheticConfig {
  int samples_per_class = 500;
  double noise = 0.05;
  std::uint64_t seed = 0;
  double arc_span = 0.75 * std::numbers::pi;  // parameter range per arc
  std::vector<EllipseSpec> domain1, domain2;  // one spec per class, same count

  // Two concentric circular arcs per domain, classes split by radius, and
  // domain 2 rotated a quarter turn with a slightly shifted center. The
  // domains overlap heavily in the plane while the classes within a domain
  // stay apart, so transfer cannot be read off the raw coordinates alone.
  static SyntheticConfig defaults() {
    SyntheticConfig c;
    const double pi = std::numbers::pi;
    const double phase1 = 10.0 * pi / 9;
    c.domain1 = {{-0.05, 0.0, 2.0, 2.0, 0.0}, {-0.05, 0.0, 1.45, 1.45, phase1}};
    c.domain2 = {{0.05, 0.0, 2.0, 2.0, pi / 2}, {0.05, 0.0, 1.45, 1.45, phase1 + pi / 2}};
    return c;
  }

  void validate() const {
    if (domain1.empty() || domain1.size() != domain2.size())
      fail(Err::InvalidArgument, "synthetic config needs matching per-class specs");
    if (samples_per_class <= 0) fail(Err::InvalidArgument, "samples_per_class must be positive");
    if (noise < 0) fail(Err::InvalidArgument, "noise must be non-negative");
  }
};

// Point on the arc at parameter u in [0, 1).
inline std::array<double, 2> arc_point(const EllipseSpec& e, double u, double arc_span) {
  double phi = u * arc_span;
  double lx = e.ax * std::cos(phi), ly = e.ay * std::sin(phi);
  double cr = std::cos(e.rot), sr = std::sin(e.rot);
  return {e.cx + cr * lx - sr * ly, e.cy + sr * lx + cr * ly};
}

// Two aligned datasets: row i of each domain shares class and arc parameter.
inline std::pair<LabeledVectorDataset, LabeledVectorDataset> gen_synthetic_domains(
    const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::size_t classes = cfg.domain1.size();
  std::size_t n = classes * static_cast<std::size_t>(cfg.samples_per_class);
  LabeledVectorDataset d1, d2;
  std::vector<double> v1(n * 2), v2(n * 2);
  d1.labels.resize(n);
  d2.labels.resize(n);
  d1.params.resize(n);
  d2.params.resize(n);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (int s = 0; s < cfg.samples_per_class; ++s, ++row) {
      double u = rng.uniform();
      auto p1 = arc_point(cfg.domain1[c], u, cfg.arc_span);
      auto p2 = arc_point(cfg.domain2[c], u, cfg.arc_span);
      v1[row * 2] = p1[0] + cfg.noise * rng.normal();
      v1[row * 2 + 1] = p1[1] + cfg.noise * rng.normal();
      v2[row * 2] = p2[0] + cfg.noise * rng.normal();
      v2[row * 2 + 1] = p2[1] + cfg.noise * rng.normal();
      d1.labels[row] = d2.labels[row] = static_cast<int>(c);
      d1.params[row] = d2.params[row] = u;
    }
  }
  d1.vectors = Tensor(Shape{n, 2}, std::move(v1));
  d2.vectors = Tensor(Shape{n, 2}, std::move(v2));
  d1.domain = 1;
  d2.domain = 2;
  return {std::move(d1), std::move(d2)};
}

// ---- IDX image/label files ----

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    fail(Err::TruncatedFile, std::string("unexpected end of file reading ") + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace detail

// Loads IDX-format images (magic 0x00000803) and labels (magic 0x00000801).
// Pixels are scaled to [0, 1]. `limit` 0 means all rows.
inline LabeledVectorDataset load_idx(const std::string& images_path,
                                     const std::string& labels_path, std::size_t limit = 0) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) fail(Err::IoError, "cannot open " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) fail(Err::IoError, "cannot open " + labels_path);

  std::uint32_t magic_i = detail::read_u32_be(imgs, "image magic");
  if (magic_i != 0x00000803u)
    fail(Err::BadMagic, "image file magic " + std::to_string(magic_i) + " != 2051");
  std::uint32_t n_i = detail::read_u32_be(imgs, "image count");
  std::uint32_t rows = detail::read_u32_be(imgs, "image rows");
  std::uint32_t cols = detail::read_u32_be(imgs, "image cols");

  std::uint32_t magic_l = detail::read_u32_be(labs, "label magic");
  if (magic_l != 0x00000801u)
    fail(Err::BadMagic, "label file magic " + std::to_string(magic_l) + " != 2049");
  std::uint32_t n_l = detail::read_u32_be(labs, "label count");
  if (n_i != n_l)
    fail(Err::CountMismatch, "image count " + std::to_string(n_i) + " != label count " +
                                 std::to_string(n_l));

  std::size_t n = n_i;
  if (limit > 0) n = std::min<std::size_t>(n, limit);
  std::size_t dim = static_cast<std::size_t>(rows) * cols;

  std::vector<unsigned char> pix(n * dim);
  if (!imgs.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size())))
    fail(Err::TruncatedFile, "image file shorter than header promises");
  std::vector<unsigned char> lab(n);
  if (!labs.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size())))
    fail(Err::TruncatedFile, "label file shorter than header promises");

  LabeledVectorDataset ds;
  std::vector<double> v(n * dim);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(pix[i]) / 255.0;
  ds.vectors = Tensor(Shape{n, dim}, std::move(v));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(lab[i]);
  return ds;
}

// ---- class correspondence between domains ----

enum class MappingKind { Identity, DigitToFashion };

// Fixed bijection from source classes to target classes.
class ClassMapping {
 public:
  static ClassMapping make(MappingKind kind) {
    ClassMapping m;
    m.kind_ = kind;
    if (kind == MappingKind::DigitToFashion) {
      m.table_.resize(10);
      for (int i = 0; i < 10; ++i) m.table_[i] = i;  // order-preserving pairing
    }
    return m;
  }

  static ClassMapping parse(const std::string& name) {
    if (name == "identity") return make(MappingKind::Identity);
    if (name == "digit_to_fashion") return make(MappingKind::DigitToFashion);
    fail(Err::UnknownKind, "unknown class mapping '" + name + "'");
  }

  MappingKind kind() const { return kind_; }

  const char* name() const {
    return kind_ == MappingKind::Identity ? "identity" : "digit_to_fashion";
  }

  int apply(int cls) const {
    if (kind_ == MappingKind::Identity) {
      if (cls < 0) fail(Err::LabelOutOfRange, "negative class");
      return cls;
    }
    if (cls < 0 || static_cast<std::size_t>(cls) >= table_.size())
      fail(Err::LabelOutOfRange, "class " + std::to_string(cls) + " outside mapping table");
    return table_[static_cast<std::size_t>(cls)];
  }

 private:
  MappingKind kind_ = MappingKind::Identity;
  std::vector<int> table_;
};

// ---- batch index streams ----

// With-replacement uniform batches; successive next() calls are a fixed
// deterministic stream for a given seed.
class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
      : n_(dataset_size), batch_(batch_size), rng_(seed) {
    if (n_ == 0) fail(Err::EmptyDataset, "sampler over an empty dataset");
    if (batch_ == 0) fail(Err::InvalidArgument, "batch size must be positive");
    if (batch_ > n_)
      fail(Err::BatchTooLarge, "batch " + std::to_string(batch_) + " > dataset " +
                                   std::to_string(n_));
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> idx(batch_);
    for (auto& i : idx) i = rng_.index(n_);
    return idx;
  }

 private:
  std::size_t n_, batch_;
  Rng rng_;
};

// Epoch-style passes: a fresh shuffle of all indices, sliced into batches
// (last batch may be short).
class EpochShuffler {
 public:
  EpochShuffler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
      : n_(dataset_size), batch_(batch_size), rng_(seed) {
    if (n_ == 0) fail(Err::EmptyDataset, "shuffler over an empty dataset");
    if (batch_ == 0) fail(Err::InvalidArgument, "batch size must be positive");
  }

  std::vector<std::vector<std::size_t>> epoch() {
    std::vector<std::size_t> order(n_);
    for (std::size_t i = 0; i < n_; ++i) order[i] = i;
    rng_.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t at = 0; at < n_; at += batch_) {
      std::size_t hi = std::min(n_, at + batch_);
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                           order.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    return batches;
  }

 private:
  std::size_t n_, batch_;
  Rng rng_;
};

// ---- CSV round trip (header: domain,class,param,x0,x1,...) ----

inline void write_dataset_csv(const LabeledVectorDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) fail(Err::IoError, "cannot write " + path);
  out << "domain,class,param";
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",x" << j;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.domain << ',' << ds.labels[i] << ',';
    std::snprintf(buf, sizeof buf, "%.17g", ds.params.empty() ? 0.0 : ds.params[i]);
    out << buf;
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.vectors.at(i, j));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out.good()) fail(Err::IoError, "write failed for " + path);
}

inline LabeledVectorDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::IoError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(Err::TruncatedFile, path + " is empty");
  if (line.rfind("domain,class,param", 0) != 0)
    fail(Err::CorruptEntry, path + " does not start with the dataset header");
  std::size_t dim = 0;
  for (char ch : line)
    if (ch == ',') ++dim;
  dim -= 2;  // columns after domain,class,param
  LabeledVectorDataset ds;
  std::vector<double> vals;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    auto next_cell = [&]() {
      if (!std::getline(ls, cell, ','))
        fail(Err::CorruptEntry, path + ": short row " + std::to_string(rows + 2));
      return cell;
    };
    ds.domain = std::stoi(next_cell());
    ds.labels.push_back(std::stoi(next_cell()));
    ds.params.push_back(std::stod(next_cell()));
    for (std::size_t j = 0; j < dim; ++j) vals.push_back(std::stod(next_cell()));
    ++rows;
  }
  if (rows == 0) fail(Err::EmptyDataset, path + " has no data rows");
  ds.vectors = Tensor(Shape{rows, dim}, std::move(vals));
  ds.validate();
  return ds;
}

}  // namespace ltbr
