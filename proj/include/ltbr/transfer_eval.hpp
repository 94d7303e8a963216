#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ltbr/base_models.hpp"
#include "ltbr/bridge.hpp"
#include "ltbr/datasets.hpp"
#include "ltbr/rng.hpp"
#include "ltbr/tensor.hpp"

namespace ltbr {

// ---- transfer chains (posterior means end to end) ----

inline Tensor transfer_latents(const BridgingVae& m, const Tensor& z, int from, int to) {
  return bridge_decode(m, bridge_embed(m, z, from), to);
}

inline Tensor transfer_data(const BetaVae& src_vae, const BridgingVae& m, const BetaVae& dst_vae,
                            const Tensor& x, int from, int to) {
  return vae_decode(dst_vae, transfer_latents(m, vae_encode(src_vae, x).mu, from, to));
}

// Fraction of source rows whose transferred vector the target-side classifier
// assigns to the source row's class.
inline double transfer_accuracy(const BridgingVae& m, const LatentBank& src, int from, int to,
                                const DataClassifier& dst_clf) {
  src.validate();
  std::vector<int> pred = classifier_predict(dst_clf, transfer_latents(m, src.vectors, from, to));
  return accuracy(pred, src.labels);
}

// Same measurement through full data space: encode with the source model,
// translate, decode with the target model, classify, compare against the
// class-mapped source labels.
inline double transfer_accuracy_data(const BetaVae& src_vae, const BridgingVae& m,
                                     const BetaVae& dst_vae, const LabeledVectorDataset& src_ds,
                                     const ClassMapping& mapping, const DataClassifier& dst_clf,
                                     int from, int to) {
  src_ds.validate();
  if (src_ds.size() == 0) fail(Err::EmptyDataset, "transfer over an empty dataset");
  Tensor out = transfer_data(src_vae, m, dst_vae, src_ds.vectors, from, to);
  std::vector<int> pred = classifier_predict(dst_clf, out);
  std::vector<int> expected;
  expected.reserve(src_ds.labels.size());
  for (int l : src_ds.labels) expected.push_back(mapping.apply(l));
  return accuracy(pred, expected);
}

inline double mean_sq_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) fail(Err::ShapeMismatch, "mean_sq_error shape mismatch");
  if (a.size() == 0) fail(Err::EmptyDataset, "mean_sq_error of nothing");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a.raw()[i] - b.raw()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

// ---- symmetric eigensolver (cyclic Jacobi) ----

struct EighResult {
  std::vector<double> values;  // ascending
  Tensor vectors;              // [d x d], column j pairs with values[j]
};

// Repeated Givens rotations zero the off-diagonal; converges quadratically
// for symmetric input.
inline EighResult jacobi_eigh(const Tensor& m) {
  if (m.rank() != 2 || m.shape()[0] != m.shape()[1])
    fail(Err::ShapeMismatch, "eigensolver needs a square matrix");
  std::size_t d = m.shape()[0];
  if (d == 0) fail(Err::InvalidArgument, "eigensolver needs a non-empty matrix");
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      if (std::abs(m.at(i, j) - m.at(j, i)) > 1e-9 * std::max(1.0, std::abs(m.at(i, j))))
        fail(Err::InvalidArgument, "eigensolver needs a symmetric matrix");

  std::vector<double> a(m.raw(), m.raw() + m.size());
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * d + j]; };
  auto V = [&](std::size_t i, std::size_t j) -> double& { return v[i * d + j]; };

  double fro = 0;
  for (double x : a) fro += x * x;
  fro = std::sqrt(fro);
  const double stop = std::max(1e-300, 1e-14 * fro);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += A(p, q) * A(p, q);
    if (std::sqrt(2 * off) <= stop) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        double apq = A(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        double theta = (A(q, q) - A(p, p)) / (2 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        double c = 1.0 / std::sqrt(t * t + 1);
        double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return A(x, x) < A(y, y); });
  EighResult out;
  out.values.resize(d);
  std::vector<double> vec(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    out.values[j] = A(order[j], order[j]);
    for (std::size_t i = 0; i < d; ++i) vec[i * d + j] = V(i, order[j]);
  }
  out.vectors = Tensor({d, d}, std::move(vec));
  return out;
}

// ---- Frechet distance between Gaussian fits of two row sets ----

inline Tensor mean_rows(const Tensor& t) {
  if (t.rank() != 2) fail(Err::ShapeMismatch, "mean_rows needs [n x d]");
  std::size_t n = t.shape()[0], d = t.shape()[1];
  if (n == 0) fail(Err::EmptyDataset, "mean of no rows");
  std::vector<double> mu(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += t.at(i, j);
  for (double& x : mu) x /= static_cast<double>(n);
  return Tensor({d}, std::move(mu));
}

// Unbiased sample covariance, 1/(n-1).
inline Tensor covariance_rows(const Tensor& t) {
  if (t.rank() != 2) fail(Err::ShapeMismatch, "covariance_rows needs [n x d]");
  std::size_t n = t.shape()[0], d = t.shape()[1];
  if (n < 2) fail(Err::InvalidArgument, "covariance needs at least 2 rows");
  Tensor mu = mean_rows(t);
  std::vector<double> c(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double dj = t.at(i, j) - mu.at(j);
      for (std::size_t k = j; k < d; ++k) c[j * d + k] += dj * (t.at(i, k) - mu.at(k));
    }
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = j; k < d; ++k) {
      c[j * d + k] /= static_cast<double>(n - 1);
      c[k * d + j] = c[j * d + k];
    }
  return Tensor({d, d}, std::move(c));
}

namespace detail {

// V diag(sqrt(max(lambda, 0))) V^T
inline Tensor matrix_sqrt_psd(const Tensor& m) {
  EighResult e = jacobi_eigh(m);
  std::size_t d = m.shape()[0];
  std::vector<double> out(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double s = std::sqrt(std::max(0.0, e.values[j]));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k)
        out[i * d + k] += s * e.vectors.at(i, j) * e.vectors.at(k, j);
  }
  return Tensor({d, d}, std::move(out));
}

inline Tensor mat_mul_sq(const Tensor& a, const Tensor& b) {
  std::size_t d = a.shape()[0];
  std::vector<double> out(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double aik = a.at(i, k);
      if (aik == 0) continue;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += aik * b.at(k, j);
    }
  return Tensor({d, d}, std::move(out));
}

}  // namespace detail

// Squared distance between the Gaussians (mu_a, cov_a) and (mu_b, cov_b):
// |mu_a - mu_b|^2 + tr(cov_a) + tr(cov_b) - 2 tr((cov_a^1/2 cov_b cov_a^1/2)^1/2).
inline double frechet_from_moments(const Tensor& mu_a, const Tensor& cov_a, const Tensor& mu_b,
                                   const Tensor& cov_b) {
  if (mu_a.rank() != 1 || mu_b.rank() != 1 || mu_a.shape() != mu_b.shape())
    fail(Err::ShapeMismatch, "moment means must be equal-length vectors");
  std::size_t d = mu_a.shape()[0];
  if (cov_a.shape() != (Shape{d, d}) || cov_b.shape() != (Shape{d, d}))
    fail(Err::ShapeMismatch, "moment covariances must be [d x d]");
  double dmu = 0;
  for (std::size_t i = 0; i < d; ++i) {
    double diff = mu_a.at(i) - mu_b.at(i);
    dmu += diff * diff;
  }
  double tra = 0, trb = 0;
  for (std::size_t i = 0; i < d; ++i) {
    tra += cov_a.at(i, i);
    trb += cov_b.at(i, i);
  }
  Tensor ra = detail::matrix_sqrt_psd(cov_a);
  Tensor inner = detail::mat_mul_sq(detail::mat_mul_sq(ra, cov_b), ra);
  // inner is symmetric up to rounding; symmetrize before the eigensolve
  std::size_t dd = inner.shape()[0];
  std::vector<double> sym(dd * dd);
  for (std::size_t i = 0; i < dd; ++i)
    for (std::size_t j = 0; j < dd; ++j) sym[i * dd + j] = 0.5 * (inner.at(i, j) + inner.at(j, i));
  EighResult e = jacobi_eigh(Tensor({dd, dd}, std::move(sym)));
  double tr_geo = 0;
  for (double l : e.values) tr_geo += std::sqrt(std::max(0.0, l));
  return std::max(0.0, dmu + tra + trb - 2 * tr_geo);
}

// Gaussian fits of two row sets. Sample covariance is rank-deficient when a
// set has fewer than dim+1 rows; both covariances then get a 1e-6 ridge and
// `regularized` (when given) reports it.
inline double frechet_distance2(const Tensor& rows_a, const Tensor& rows_b,
                                bool* regularized = nullptr) {
  if (rows_a.rank() != 2 || rows_b.rank() != 2)
    fail(Err::ShapeMismatch, "frechet_distance2 needs [n x d] row sets");
  if (rows_a.shape()[1] != rows_b.shape()[1])
    fail(Err::ShapeMismatch, "frechet_distance2: row sets disagree on dimension");
  std::size_t d = rows_a.shape()[1];
  Tensor ca = covariance_rows(rows_a);
  Tensor cb = covariance_rows(rows_b);
  bool ridge = rows_a.shape()[0] <= d || rows_b.shape()[0] <= d;
  if (regularized) *regularized = ridge;
  if (ridge) {
    std::vector<double> da(ca.raw(), ca.raw() + ca.size()), db(cb.raw(), cb.raw() + cb.size());
    for (std::size_t i = 0; i < d; ++i) {
      da[i * d + i] += 1e-6;
      db[i * d + i] += 1e-6;
    }
    ca = Tensor({d, d}, std::move(da));
    cb = Tensor({d, d}, std::move(db));
  }
  return frechet_from_moments(mean_rows(rows_a), ca, mean_rows(rows_b), cb);
}

inline double frechet_distance(const Tensor& rows_a, const Tensor& rows_b,
                               bool* regularized = nullptr) {
  return std::sqrt(frechet_distance2(rows_a, rows_b, regularized));
}

// ---- interpolation ----

// Great-circle interpolation; collapses to linear blending when the vectors
// are nearly collinear.
inline Tensor slerp(const Tensor& a, const Tensor& b, double t) {
  if (a.rank() != 1 || a.shape() != b.shape())
    fail(Err::ShapeMismatch, "slerp needs equal-length vectors");
  double na = 0, nb = 0, dot = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a.at(i) * a.at(i);
    nb += b.at(i) * b.at(i);
    dot += a.at(i) * b.at(i);
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na == 0 || nb == 0) fail(Err::ZeroVector, "slerp endpoint has zero norm");
  double cosw = std::min(1.0, std::max(-1.0, dot / (na * nb)));
  double w = std::acos(cosw);
  double sw = std::sin(w);
  std::vector<double> out(a.size());
  if (sw < 1e-6) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1 - t) * a.at(i) + t * b.at(i);
  } else {
    double fa = std::sin((1 - t) * w) / sw;
    double fb = std::sin(t * w) / sw;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fa * a.at(i) + fb * b.at(i);
  }
  return Tensor(a.shape(), std::move(out));
}

// Paths between two source latents, viewed in the target latent space:
// row 0 interpolates in the source space and translates every waypoint,
// row 1 interpolates in the shared space and decodes,
// row 2 translates only the endpoints and interpolates in the target space.
// All rows agree at t = 0 and t = 1 by construction.
struct InterpolationResult {
  std::vector<double> ts;
  std::array<Tensor, 3> rows;  // each [steps x target_latent]
};

inline InterpolationResult interpolation_sweep(const BridgingVae& m, const Tensor& za,
                                               const Tensor& zb, int from, int to,
                                               std::size_t num_steps) {
  if (za.rank() != 1 || za.shape() != zb.shape())
    fail(Err::ShapeMismatch, "interpolation endpoints must be equal-length vectors");
  if (num_steps < 2) fail(Err::InvalidArgument, "interpolation needs at least 2 steps");
  std::size_t d = za.shape()[0];
  InterpolationResult out;
  out.ts.resize(num_steps);
  for (std::size_t i = 0; i < num_steps; ++i)
    out.ts[i] = static_cast<double>(i) / static_cast<double>(num_steps - 1);

  auto stack = [](const std::vector<Tensor>& rows) {
    std::size_t k = rows.size(), w = rows[0].size();
    std::vector<double> d2(k * w);
    for (std::size_t i = 0; i < k; ++i) std::copy_n(rows[i].raw(), w, d2.data() + i * w);
    return Tensor({k, w}, std::move(d2));
  };

  std::vector<Tensor> src_path;
  for (double t : out.ts) src_path.push_back(slerp(za, zb, t));
  out.rows[0] = transfer_latents(m, stack(src_path), from, to);

  Tensor ends = stack({za, zb});
  Tensor emb = bridge_embed(m, ends, from);
  Tensor ha({emb.shape()[1]}, std::vector<double>(emb.raw(), emb.raw() + emb.shape()[1]));
  Tensor hb({emb.shape()[1]},
            std::vector<double>(emb.raw() + emb.shape()[1], emb.raw() + 2 * emb.shape()[1]));
  std::vector<Tensor> shared_path;
  for (double t : out.ts) shared_path.push_back(slerp(ha, hb, t));
  out.rows[1] = bridge_decode(m, stack(shared_path), to);

  Tensor tends = transfer_latents(m, ends, from, to);
  Tensor ta({d}, std::vector<double>(tends.raw(), tends.raw() + d));
  Tensor tb({d}, std::vector<double>(tends.raw() + d, tends.raw() + 2 * d));
  std::vector<Tensor> dst_path;
  for (double t : out.ts) dst_path.push_back(slerp(ta, tb, t));
  out.rows[2] = stack(dst_path);
  return out;
}

// ---- sweeps ----

struct AblationOutcome {
  std::string name;
  BridgeTrainConfig config;
  BridgeTrainResult result;
  double score = 0.0;  // NaN when the run aborted
};

// Trains every standard variant with a seed derived per variant index and
// scores each finished model with the supplied metric.
inline std::vector<AblationOutcome> ablation_sweep(
    const LatentBank& b1, const LatentBank& b2, const BridgeTrainConfig& cfg,
    const std::function<double(const BridgingVae&)>& eval_fn) {
  if (!eval_fn) fail(Err::InvalidArgument, "ablation_sweep needs a scoring callback");
  std::vector<AblationOutcome> out;
  auto variants = ablation_variants(cfg);
  for (std::size_t i = 0; i < variants.size(); ++i) {
    AblationOutcome o;
    o.name = variants[i].first;
    o.config = variants[i].second;
    Rng rng(derive_seed(cfg.seed, i));
    o.result = train_bridge(b1, b2, o.config, rng);
    o.score = o.result.aborted ? std::nan("") : eval_fn(o.result.model);
    out.push_back(std::move(o));
  }
  return out;
}

struct EfficiencyPoint {
  int labels_per_class = 0;
  BridgeTrainResult result;
  double score = 0.0;  // NaN when the run aborted
};

// Label-budget curve: one training run per requested per-class label count.
// Counts must be strictly ascending, with -1 (fully labeled) ranking as
// infinity, so it may only appear last.
inline std::vector<EfficiencyPoint> data_efficiency_sweep(
    const LatentBank& b1, const LatentBank& b2, const BridgeTrainConfig& cfg,
    const std::vector<int>& counts, const std::function<double(const BridgingVae&)>& eval_fn) {
  if (!eval_fn) fail(Err::InvalidArgument, "data_efficiency_sweep needs a scoring callback");
  if (counts.empty()) fail(Err::InvalidArgument, "label sweep needs at least one count");
  auto rank = [](int c) {
    return c < 0 ? std::numeric_limits<long long>::max() : static_cast<long long>(c);
  };
  for (std::size_t i = 1; i < counts.size(); ++i)
    if (rank(counts[i]) <= rank(counts[i - 1]))
      fail(Err::InvalidArgument, "label sweep counts must be strictly ascending");
  std::vector<EfficiencyPoint> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    EfficiencyPoint p;
    p.labels_per_class = counts[i];
    BridgeTrainConfig c = cfg;
    c.labels_per_class = counts[i];
    Rng rng(derive_seed(cfg.seed, 1000 + i));
    p.result = train_bridge(b1, b2, c, rng);
    p.score = p.result.aborted ? std::nan("") : eval_fn(p.result.model);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ltbr
