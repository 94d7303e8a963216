#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "ltbr/datasets.hpp"
#include "ltbr/losses.hpp"
#include "ltbr/nn.hpp"
#include "ltbr/rng.hpp"
#include "ltbr/tensor.hpp"

namespace ltbr {

// ---- variational autoencoder over raw data vectors ----

struct BetaVae {
  MlpStack enc_trunk;       // data -> hidden, relu head
  LinearLayer mu_head;      // hidden -> latent
  LinearLayer sigma_head;   // hidden -> latent, sigmoid applied in encode
  MlpStack decoder;         // latent -> data, affine head
  int latent_dim = 0;
  double beta = 1.0;
  double x_sigma = 0.1;

  std::size_t data_dim() const { return enc_trunk.in_dim(); }
};

struct BaseVaeConfig {
  int latent_dim = 100;
  std::vector<std::size_t> hidden{1024, 1024, 1024};
  int epochs = 100;
  int batch_size = 512;
  double lr = 0.001;
  double beta = 1.0;
  double x_sigma = 0.1;
};

inline BetaVae init_beta_vae(std::size_t data_dim, const BaseVaeConfig& cfg, Rng& rng) {
  if (cfg.latent_dim <= 0) fail(Err::InvalidArgument, "latent_dim must be positive");
  BetaVae m;
  std::vector<std::size_t> enc{data_dim};
  enc.insert(enc.end(), cfg.hidden.begin(), cfg.hidden.end());
  m.enc_trunk = init_mlp(enc, Head::Relu, rng);
  std::size_t h = m.enc_trunk.out_dim();
  m.mu_head = init_linear(h, static_cast<std::size_t>(cfg.latent_dim), rng);
  m.sigma_head = init_linear(h, static_cast<std::size_t>(cfg.latent_dim), rng);
  std::vector<std::size_t> dec{static_cast<std::size_t>(cfg.latent_dim)};
  dec.insert(dec.end(), cfg.hidden.rbegin(), cfg.hidden.rend());
  dec.push_back(data_dim);
  m.decoder = init_mlp(dec, Head::Affine, rng);
  m.latent_dim = cfg.latent_dim;
  m.beta = cfg.beta;
  m.x_sigma = cfg.x_sigma;
  return m;
}

inline ParamRefs vae_params(BetaVae& m) {
  ParamRefs refs;
  collect_params(m.enc_trunk, "enc.trunk", refs);
  collect_params(m.mu_head, "enc.mu", refs);
  collect_params(m.sigma_head, "enc.sigma", refs);
  collect_params(m.decoder, "dec", refs);
  return refs;
}

struct GaussianParams {
  Tensor mu;     // [n x latent]
  Tensor sigma;  // [n x latent], in (0,1) via sigmoid head
};

inline GaussianParams vae_encode(const BetaVae& m, const Tensor& x) {
  Tensor h = mlp_forward(m.enc_trunk, x);
  return {linear_forward(m.mu_head, h), sigmoid(linear_forward(m.sigma_head, h))};
}

// z = mu + sigma (*) eps with eps ~ N(0, I).
inline Tensor reparameterize(const Tensor& mu, const Tensor& sigma, Rng& rng) {
  if (mu.shape() != sigma.shape()) fail(Err::ShapeMismatch, "reparameterize: mu vs sigma shapes");
  for (double s : sigma.data())
    if (!(s > 0)) fail(Err::NonPositiveSigma, "reparameterize: sigma must be positive");
  Tensor eps(mu.shape(), rng.normals(mu.size()));
  return add(mu, mul(sigma, eps));
}

inline Tensor vae_decode(const BetaVae& m, const Tensor& z) { return mlp_forward(m.decoder, z); }

struct EpochStats {
  int epoch = 0;
  double loss = 0, recon = 0, kl = 0;
};

struct BaseVaeTrainResult {
  BetaVae model;
  std::vector<EpochStats> trace;
  bool aborted = false;
  std::string abort_reason;
};

// Epoch passes with a fresh shuffle each epoch; loss is the Gaussian
// reconstruction term plus beta-weighted KL to the unit prior. A non-finite
// loss stops training before the poisoned update and returns the last good
// parameters with `aborted` set.
inline BaseVaeTrainResult train_base_vae(const LabeledVectorDataset& ds, const BaseVaeConfig& cfg,
                                         Rng& rng) {
  ds.validate();
  if (ds.size() == 0) fail(Err::EmptyDataset, "train_base_vae: empty dataset");
  BaseVaeTrainResult out;
  out.model = init_beta_vae(ds.dim(), cfg, rng);
  if (cfg.epochs <= 0) return out;
  ParamRefs refs = vae_params(out.model);
  std::vector<Tensor*> params;
  for (auto& [name, p] : refs) params.push_back(p);
  AdamState adam(AdamConfig{.lr = cfg.lr}, params);
  EpochShuffler shuffler(ds.size(), static_cast<std::size_t>(cfg.batch_size), rng.next_u64());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double esum = 0, rsum = 0, ksum = 0;
    std::size_t batches = 0;
    for (const auto& idx : shuffler.epoch()) {
      Tensor x = ds.gather(idx);
      double lv, rv, kv;
      {
        Tape tape;
        for (Tensor* p : params) tape.watch(*p);
        Tensor loss, recon, kl;
        try {
          GaussianParams q = vae_encode(out.model, x);
          Tensor z = reparameterize(q.mu, q.sigma, rng);
          Tensor xhat = vae_decode(out.model, z);
          recon = gaussian_recon_loss(x, xhat, out.model.x_sigma);
          kl = kl_diag_gaussian(q.mu, q.sigma);
          loss = add(recon, scale(kl, out.model.beta));
        } catch (const Error& e) {
          // a sigma head saturated to exactly zero: the run has diverged
          if (e.kind() != Err::NonPositiveSigma) throw;
          out.aborted = true;
          out.abort_reason = std::string("sigma underflow at epoch ") + std::to_string(epoch) +
                             " batch " + std::to_string(batches);
          return out;
        }
        lv = loss.item();
        rv = recon.item();
        kv = kl.item();
        if (!std::isfinite(lv)) {
          out.aborted = true;
          out.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(batches);
          out.trace.push_back({epoch, lv, rv, kv});
          return out;
        }
        GradientMap g = tape.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (Tensor* p : params) grads.push_back(g.grad(*p));
        try {
          adam.step(params, grads);
        } catch (const Error& e) {
          if (e.kind() != Err::NonFiniteGradient) throw;
          out.aborted = true;
          out.abort_reason = "non-finite gradient at epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(batches);
          out.trace.push_back({epoch, lv, rv, kv});
          return out;
        }
      }
      esum += lv;
      rsum += rv;
      ksum += kv;
      ++batches;
    }
    double inv = 1.0 / static_cast<double>(batches);
    out.trace.push_back({epoch, esum * inv, rsum * inv, ksum * inv});
  }
  return out;
}

// ---- feedforward classifier over data vectors ----

struct DataClassifier {
  MlpStack trunk;    // relu head; penultimate features feed distribution scores
  LinearLayer head;  // features -> class logits
  int num_classes = 0;

  std::size_t data_dim() const { return trunk.in_dim(); }
  std::size_t feature_dim() const { return trunk.out_dim(); }
};

struct ClassifierConfig {
  std::vector<std::size_t> hidden{256, 256, 256, 256};
  int epochs = 100;
  int batch_size = 256;
  double lr = 0.001;
  double holdout_fraction = 0.1;
};

inline DataClassifier init_classifier(std::size_t data_dim, int num_classes,
                                      const ClassifierConfig& cfg, Rng& rng) {
  if (num_classes < 2) fail(Err::InvalidArgument, "classifier needs at least 2 classes");
  DataClassifier c;
  std::vector<std::size_t> dims{data_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  c.trunk = init_mlp(dims, Head::Relu, rng);
  c.head = init_linear(c.trunk.out_dim(), static_cast<std::size_t>(num_classes), rng);
  c.num_classes = num_classes;
  return c;
}

inline ParamRefs classifier_params(DataClassifier& c) {
  ParamRefs refs;
  collect_params(c.trunk, "trunk", refs);
  collect_params(c.head, "head", refs);
  return refs;
}

inline Tensor classifier_features(const DataClassifier& c, const Tensor& x) {
  return mlp_forward(c.trunk, x);
}

inline Tensor classifier_logits(const DataClassifier& c, const Tensor& x) {
  return linear_forward(c.head, classifier_features(c, x));
}

inline std::vector<int> classifier_predict(const DataClassifier& c, const Tensor& x) {
  return argmax_rows(classifier_logits(c, x));
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) fail(Err::LengthMismatch, "accuracy: size mismatch");
  if (pred.empty()) fail(Err::EmptyDataset, "accuracy of nothing");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += (pred[i] == truth[i]);
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct ClassifierTrainResult {
  DataClassifier model;  // parameters of the best holdout epoch
  std::vector<double> holdout_accuracy;  // per epoch
  int best_epoch = -1;
  double best_accuracy = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

// Trains with a seeded random holdout split and keeps the parameters from the
// epoch with the highest holdout accuracy (earliest epoch wins ties).
inline ClassifierTrainResult train_data_classifier(const LabeledVectorDataset& ds,
                                                   const ClassifierConfig& cfg, Rng& rng) {
  ds.validate();
  if (ds.size() == 0) fail(Err::EmptyDataset, "train_data_classifier: empty dataset");
  int classes = ds.num_classes();
  if (classes < 2) fail(Err::InvalidArgument, "dataset has fewer than 2 classes");
  std::size_t hold = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(ds.size()) + 0.5);
  if (hold == 0 || hold >= ds.size())
    fail(Err::EmptyHoldout, "holdout fraction " + std::to_string(cfg.holdout_fraction) +
                                " leaves no usable split for " + std::to_string(ds.size()) +
                                " rows");
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::size_t> hold_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(hold));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(hold), order.end());

  Tensor hold_x = ds.gather(hold_idx);
  std::vector<int> hold_y;
  for (auto i : hold_idx) hold_y.push_back(ds.labels[i]);

  ClassifierTrainResult out;
  out.model = init_classifier(ds.dim(), classes, cfg, rng);
  ParamRefs refs = classifier_params(out.model);
  std::vector<Tensor*> params;
  for (auto& [name, p] : refs) params.push_back(p);
  AdamState adam(AdamConfig{.lr = cfg.lr}, params);
  EpochShuffler shuffler(train_idx.size(), static_cast<std::size_t>(cfg.batch_size), rng.next_u64());

  std::vector<Tensor> best_params;
  for (Tensor* p : params) best_params.push_back(*p);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& rel : shuffler.epoch()) {
      std::vector<std::size_t> idx;
      idx.reserve(rel.size());
      for (auto r : rel) idx.push_back(train_idx[r]);
      Tensor x = ds.gather(idx);
      std::vector<int> y;
      y.reserve(idx.size());
      for (auto i : idx) y.push_back(ds.labels[i]);
      Tape tape;
      for (Tensor* p : params) tape.watch(*p);
      Tensor loss = masked_softmax_cross_entropy(classifier_logits(out.model, x), y,
                                                 std::vector<double>(y.size(), 1.0));
      double lv = loss.item();
      if (!std::isfinite(lv)) {
        out.aborted = true;
        out.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best_params[k];
        return out;
      }
      GradientMap g = tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (Tensor* p : params) grads.push_back(g.grad(*p));
      try {
        adam.step(params, grads);
      } catch (const Error& e) {
        if (e.kind() != Err::NonFiniteGradient) throw;
        out.aborted = true;
        out.abort_reason = "non-finite gradient at epoch " + std::to_string(epoch);
        for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best_params[k];
        return out;
      }
    }
    double acc = accuracy(classifier_predict(out.model, hold_x), hold_y);
    out.holdout_accuracy.push_back(acc);
    if (acc > out.best_accuracy || out.best_epoch < 0) {
      out.best_accuracy = acc;
      out.best_epoch = epoch;
      for (std::size_t k = 0; k < params.size(); ++k) best_params[k] = *params[k];
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best_params[k];
  return out;
}

// ---- latent banks ----

enum class BankProvenance { EncodedFromData, PriorRejectionSampled, RawVectors };

inline const char* provenance_name(BankProvenance p) {
  switch (p) {
    case BankProvenance::EncodedFromData: return "encoded_from_data";
    case BankProvenance::PriorRejectionSampled: return "prior_rejection_sampled";
    case BankProvenance::RawVectors: return "raw_vectors";
  }
  return "?";
}

inline BankProvenance provenance_from_name(const std::string& s) {
  if (s == "encoded_from_data") return BankProvenance::EncodedFromData;
  if (s == "prior_rejection_sampled") return BankProvenance::PriorRejectionSampled;
  if (s == "raw_vectors") return BankProvenance::RawVectors;
  fail(Err::UnknownKind, "unknown bank provenance '" + s + "'");
}

// Labeled latent vectors used to train the translation layer.
struct LatentBank {
  Tensor vectors;  // [n x latent_dim]
  std::vector<int> labels;
  int num_classes = 0;
  BankProvenance provenance = BankProvenance::RawVectors;

  std::size_t size() const { return vectors.rank() == 2 ? vectors.shape()[0] : 0; }
  std::size_t dim() const { return vectors.rank() == 2 ? vectors.shape()[1] : 0; }

  void validate() const {
    if (vectors.rank() != 2) fail(Err::ShapeMismatch, "bank vectors must be rank-2");
    if (labels.size() != size()) fail(Err::LengthMismatch, "bank labels size != rows");
    if (size() == 0) fail(Err::EmptyBank, "bank has no vectors");
    for (int l : labels)
      if (l < 0 || l >= num_classes) fail(Err::LabelOutOfRange, "bank label outside class range");
  }

  Tensor gather(const std::vector<std::size_t>& idx) const {
    std::vector<double> d(idx.size() * dim());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= size()) fail(Err::DomainError, "bank gather index out of range");
      std::copy_n(vectors.raw() + idx[i] * dim(), dim(), d.data() + i * dim());
    }
    return Tensor(Shape{idx.size(), dim()}, std::move(d));
  }
};

// One posterior sample per dataset row, dataset order preserved.
inline LatentBank build_latent_bank_encoded(const BetaVae& m, const LabeledVectorDataset& ds,
                                            Rng& rng) {
  ds.validate();
  if (ds.size() == 0) fail(Err::EmptyDataset, "cannot encode an empty dataset");
  LatentBank bank;
  GaussianParams q = vae_encode(m, ds.vectors);
  bank.vectors = reparameterize(q.mu, q.sigma, rng);
  bank.labels = ds.labels;
  bank.num_classes = ds.num_classes();
  bank.provenance = BankProvenance::EncodedFromData;
  bank.validate();
  return bank;
}

// Dataset rows used directly as latent vectors (for settings where the
// "latent space" is the data space itself).
inline LatentBank bank_from_dataset(const LabeledVectorDataset& ds) {
  ds.validate();
  if (ds.size() == 0) fail(Err::EmptyDataset, "cannot bank an empty dataset");
  LatentBank bank;
  bank.vectors = ds.vectors.detached();
  bank.labels = ds.labels;
  bank.num_classes = ds.num_classes();
  bank.provenance = BankProvenance::RawVectors;
  bank.validate();
  return bank;
}

struct RejectionReport {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::vector<std::size_t> per_class_accepted;
  std::vector<std::size_t> per_class_candidates;  // argmax == class
  double acceptance_rate() const {
    return attempts ? static_cast<double>(accepted) / static_cast<double>(attempts) : 0.0;
  }
};

// Draws prior samples, decodes them, and keeps the ones the classifier calls
// confidently (max softmax >= threshold) until every class meets its quota.
// Gives up after 1000x the total quota and reports per-class rates.
inline LatentBank build_latent_bank_rejection(const BetaVae& decoder_model,
                                              const DataClassifier& clf, double threshold,
                                              std::size_t per_class_quota, Rng& rng,
                                              RejectionReport* report = nullptr) {
  if (per_class_quota == 0) fail(Err::InvalidArgument, "per-class quota must be positive");
  if (threshold < 0.0 || threshold > 1.0)
    fail(Err::InvalidArgument, "confidence threshold must lie in [0, 1]");
  int classes = clf.num_classes;
  std::size_t latent = static_cast<std::size_t>(decoder_model.latent_dim);
  std::size_t total_quota = per_class_quota * static_cast<std::size_t>(classes);
  std::size_t cap = 1000 * total_quota;

  RejectionReport rep;
  rep.per_class_accepted.assign(static_cast<std::size_t>(classes), 0);
  rep.per_class_candidates.assign(static_cast<std::size_t>(classes), 0);

  std::vector<double> kept;
  std::vector<int> kept_labels;
  kept.reserve(total_quota * latent);

  const std::size_t kDraw = 256;
  std::size_t filled = 0;
  while (filled < static_cast<std::size_t>(classes) && rep.attempts < cap) {
    std::size_t draw = std::min(kDraw, cap - rep.attempts);
    Tensor z(Shape{draw, latent}, rng.normals(draw * latent));
    Tensor x = vae_decode(decoder_model, z);
    Tensor probs = softmax_rows(classifier_logits(clf, x));
    for (std::size_t i = 0; i < draw; ++i) {
      ++rep.attempts;
      const double* row = probs.raw() + i * static_cast<std::size_t>(classes);
      int cls = 0;
      double conf = row[0];
      for (int c = 1; c < classes; ++c)
        if (row[c] > conf) {
          conf = row[c];
          cls = c;
        }
      ++rep.per_class_candidates[static_cast<std::size_t>(cls)];
      auto& got = rep.per_class_accepted[static_cast<std::size_t>(cls)];
      if (conf >= threshold && got < per_class_quota) {
        ++got;
        ++rep.accepted;
        kept.insert(kept.end(), z.raw() + i * latent, z.raw() + (i + 1) * latent);
        kept_labels.push_back(cls);
        if (got == per_class_quota) ++filled;
        if (filled == static_cast<std::size_t>(classes)) break;
      }
    }
  }
  if (report) *report = rep;
  if (filled < static_cast<std::size_t>(classes)) {
    std::string rates;
    for (int c = 0; c < classes; ++c) {
      double r = rep.per_class_candidates[static_cast<std::size_t>(c)]
                     ? static_cast<double>(rep.per_class_accepted[static_cast<std::size_t>(c)]) /
                           static_cast<double>(rep.per_class_candidates[static_cast<std::size_t>(c)])
                     : 0.0;
      rates += (c ? ", " : "") + std::to_string(c) + ": " + std::to_string(r);
    }
    fail(Err::QuotaUnreachable, "rejection sampling exhausted " + std::to_string(rep.attempts) +
                                    " attempts; per-class acceptance {" + rates + "}");
  }
  LatentBank bank;
  bank.vectors = Tensor(Shape{kept_labels.size(), latent}, std::move(kept));
  bank.labels = std::move(kept_labels);
  bank.num_classes = classes;
  bank.provenance = BankProvenance::PriorRejectionSampled;
  bank.validate();
  return bank;
}

}  // namespace ltbr
