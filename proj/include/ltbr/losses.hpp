#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ltbr/nn.hpp"
#include "ltbr/rng.hpp"
#include "ltbr/tensor.hpp"

namespace ltbr {

struct LossWeights {
  double beta_kl = 0.05;
  double beta_swd = 1.0;
  double beta_cls = 0.05;
  double sigma_likelihood = 1.0;

  void validate() const {
    if (beta_kl < 0 || beta_swd < 0 || beta_cls < 0)
      fail(Err::InvalidArgument, "loss weights must be non-negative");
    if (!(sigma_likelihood > 0))
      fail(Err::NonPositiveSigma, "likelihood sigma must be positive");
  }

  bool operator==(const LossWeights&) const = default;
};

// Mean over the batch of ||t - r||^2 / (2 sigma^2).
inline Tensor gaussian_recon_loss(const Tensor& target, const Tensor& recon, double sigma) {
  if (!(sigma > 0)) fail(Err::NonPositiveSigma, "recon loss: sigma must be positive");
  if (target.rank() != 2 || target.shape() != recon.shape())
    fail(Err::ShapeMismatch, "recon loss: target " + shape_str(target.shape()) + " vs recon " +
                                 shape_str(recon.shape()));
  Tensor per_row = sum(square(sub(target, recon)), 1);
  return scale(mean(per_row), 1.0 / (2.0 * sigma * sigma));
}

// KL( N(mu, diag(sigma^2)) || N(0, I) ), mean over the batch:
// 0.5 * sum_d (mu^2 + sigma^2 - 1 - 2 ln sigma).
inline Tensor kl_diag_gaussian(const Tensor& mu, const Tensor& sigma) {
  if (mu.rank() != 2 || mu.shape() != sigma.shape())
    fail(Err::ShapeMismatch, "kl: mu " + shape_str(mu.shape()) + " vs sigma " +
                                 shape_str(sigma.shape()));
  for (double s : sigma.data())
    if (!(s > 0)) fail(Err::NonPositiveSigma, "kl: sigma must be strictly positive");
  Tensor t = add(square(mu), square(sigma));
  t = sub(t, Tensor::full(mu.shape(), 1.0));
  t = sub(t, scale(ltbr::log(sigma), 2.0));
  return scale(mean(sum(t, 1)), 0.5);
}

// Squared 2-Wasserstein distance between two equal-size 1-D samples:
// monotone pairing of sorted values, mean of squared gaps.
inline Tensor wasserstein_1d_sq(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size())
    fail(Err::ShapeMismatch, "wasserstein_1d_sq needs two equal-length rank-1 tensors");
  if (a.size() == 0) fail(Err::EmptyDataset, "wasserstein_1d_sq on empty samples");
  Tensor sa = sort_ascending_with_permutation(a).values;
  Tensor sb = sort_ascending_with_permutation(b).values;
  return mean(square(sub(sa, sb)));
}

// Fixed set of unit-norm projection directions.
class ProjectionSet {
 public:
  ProjectionSet(std::size_t num, std::size_t dim, std::uint64_t seed) : seed_(seed) {
    if (num == 0 || dim == 0) fail(Err::InvalidArgument, "projection set needs num, dim >= 1");
    Rng rng(seed);
    std::vector<double> rows(num * dim);
    for (std::size_t i = 0; i < num; ++i) {
      double norm2 = 0.0;
      do {
        norm2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          double v = rng.normal();
          rows[i * dim + j] = v;
          norm2 += v * v;
        }
      } while (norm2 < 1e-18);
      double inv = 1.0 / std::sqrt(norm2);
      for (std::size_t j = 0; j < dim; ++j) rows[i * dim + j] *= inv;
    }
    rows_ = Tensor(Shape{num, dim}, std::move(rows));
  }

  // Explicit directions (tests). Rows must be unit norm.
  static ProjectionSet from_rows(Tensor rows) {
    if (rows.rank() != 2) fail(Err::ShapeMismatch, "projection rows must be rank-2");
    std::size_t num = rows.shape()[0], dim = rows.shape()[1];
    for (std::size_t i = 0; i < num; ++i) {
      double n2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) n2 += rows.at(i, j) * rows.at(i, j);
      if (std::fabs(n2 - 1.0) > 1e-9)
        fail(Err::ZeroVector, "projection row " + std::to_string(i) + " is not unit norm");
    }
    ProjectionSet p;
    p.rows_ = std::move(rows);
    return p;
  }

  const Tensor& rows() const { return rows_; }
  std::size_t count() const { return rows_.shape()[0]; }
  std::size_t dim() const { return rows_.shape()[1]; }
  std::uint64_t seed() const { return seed_; }

  // Direction i as a [dim x 1] column.
  Tensor direction(std::size_t i) const {
    if (i >= count()) fail(Err::AxisOutOfRange, "projection index out of range");
    std::vector<double> col(dim());
    for (std::size_t j = 0; j < dim(); ++j) col[j] = rows_.at(i, j);
    return Tensor(Shape{dim(), 1}, std::move(col));
  }

 private:
  ProjectionSet() = default;
  Tensor rows_;
  std::uint64_t seed_ = 0;
};

// Sliced Wasserstein: mean over projections of the 1-D squared distance
// between the projected batches.
inline Tensor swd(const Tensor& batch_a, const Tensor& batch_b, const ProjectionSet& proj) {
  if (batch_a.rank() != 2 || batch_b.rank() != 2)
    fail(Err::ShapeMismatch, "swd needs rank-2 batches");
  if (batch_a.shape()[0] != batch_b.shape()[0])
    fail(Err::ShapeMismatch, "swd needs equal batch sizes");
  if (batch_a.shape()[1] != batch_b.shape()[1] || batch_a.shape()[1] != proj.dim())
    fail(Err::ShapeMismatch, "swd: batches and projections disagree on dimension");
  if (batch_a.shape()[0] == 0) fail(Err::EmptyDataset, "swd on empty batches");
  std::size_t n = batch_a.shape()[0];
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < proj.count(); ++i) {
    Tensor dir = proj.direction(i);
    Tensor pa = reshape(matmul(batch_a, dir), {n});
    Tensor pb = reshape(matmul(batch_b, dir), {n});
    acc = add(acc, wasserstein_1d_sq(pa, pb));
  }
  return scale(acc, 1.0 / static_cast<double>(proj.count()));
}

// Softmax cross-entropy over logits with a 0/1 row mask, averaged over the
// masked rows. All-zero mask gives loss 0 with zero gradient. Fused forward
// and backward keep the log-sum-exp numerically stable.
inline Tensor masked_softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                           const std::vector<double>& mask) {
  if (logits.rank() != 2) fail(Err::ShapeMismatch, "cross entropy needs rank-2 logits");
  std::size_t n = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != n) fail(Err::LengthMismatch, "cross entropy: labels size != batch");
  if (mask.size() != n) fail(Err::LengthMismatch, "cross entropy: mask size != batch");
  if (classes == 0) fail(Err::ShapeMismatch, "cross entropy: zero classes");
  double msum = 0.0;
  for (double m : mask) {
    if (m != 0.0 && m != 1.0) fail(Err::InvalidArgument, "mask entries must be 0 or 1");
    msum += m;
  }
  std::vector<double> probs(n * classes);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      fail(Err::LabelOutOfRange, "label " + std::to_string(y) + " with " +
                                     std::to_string(classes) + " classes");
    const double* row = logits.raw() + i * classes;
    double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    double lse = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) probs[i * classes + c] = std::exp(row[c] - mx) / z;
    if (mask[i] != 0.0) total += lse - row[static_cast<std::size_t>(y)];
  }
  double value = msum > 0.0 ? total / msum : 0.0;
  Tensor out = Tensor::scalar(value);
  Tape* tp = Tape::active();
  if (!detail::tracked(logits, tp)) return out;
  int pl = logits.node_id();
  std::vector<int> labels_c = labels;
  std::vector<double> mask_c = mask;
  tp->attach(out, "softmax_xent",
             [pl, probs = std::move(probs), labels_c = std::move(labels_c),
              mask_c = std::move(mask_c), n, classes, msum](const std::vector<double>& g,
                                                            GradientMap& gm) {
               if (msum <= 0.0) return;
               auto& b = gm.buffer(pl);
               double s = g[0] / msum;
               for (std::size_t i = 0; i < n; ++i) {
                 if (mask_c[i] == 0.0) continue;
                 for (std::size_t c = 0; c < classes; ++c) {
                   double ind = (static_cast<std::size_t>(labels_c[i]) == c) ? 1.0 : 0.0;
                   b[i * classes + c] += s * (probs[i * classes + c] - ind);
                 }
               }
             });
  return out;
}

// Cross-entropy of a linear classifier on z; unmasked form uses all rows.
inline Tensor linear_classifier_loss(const Tensor& z, const LinearLayer& clf,
                                     const std::vector<int>& labels,
                                     const std::vector<double>& mask) {
  return masked_softmax_cross_entropy(linear_forward(clf, z), labels, mask);
}

inline Tensor linear_classifier_loss(const Tensor& z, const LinearLayer& clf,
                                     const std::vector<int>& labels) {
  return linear_classifier_loss(z, clf, labels, std::vector<double>(labels.size(), 1.0));
}

// Per-domain ELBO under a spherical Gaussian likelihood.
inline Tensor elbo_loss(const Tensor& target, const Tensor& recon, const Tensor& mu,
                        const Tensor& sigma, double beta_kl, double sigma_likelihood) {
  return add(gaussian_recon_loss(target, recon, sigma_likelihood),
             scale(kl_diag_gaussian(mu, sigma), beta_kl));
}

// Full objective: elbo1 + elbo2 + beta_swd * swd + beta_cls * (cls1 + cls2).
inline Tensor total_bridge_loss(const Tensor& elbo1, const Tensor& elbo2, const Tensor& swd_term,
                                const Tensor& cls1, const Tensor& cls2, const LossWeights& w) {
  w.validate();
  for (const Tensor* t : {&elbo1, &elbo2, &swd_term, &cls1, &cls2})
    if (t->size() != 1) fail(Err::NotScalar, "total loss needs scalar components");
  Tensor total = add(add(elbo1, elbo2), scale(swd_term, w.beta_swd));
  total = add(total, scale(add(cls1, cls2), w.beta_cls));
  if (!total.all_finite()) fail(Err::NonFiniteLoss, "total loss is not finite");
  return total;
}

// ---- detached helpers for evaluation ----

inline Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) fail(Err::ShapeMismatch, "softmax_rows needs rank-2 logits");
  std::size_t n = logits.shape()[0], c = logits.shape()[1];
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.raw() + i * c;
    double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = std::exp(row[j] - mx) / z;
  }
  return Tensor(logits.shape(), std::move(out));
}

inline std::vector<int> argmax_rows(const Tensor& m) {
  if (m.rank() != 2) fail(Err::ShapeMismatch, "argmax_rows needs a rank-2 tensor");
  std::size_t n = m.shape()[0], c = m.shape()[1];
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = m.raw() + i * c;
    out[i] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

}  // namespace ltbr
