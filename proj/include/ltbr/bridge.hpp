#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "ltbr/base_models.hpp"
#include "ltbr/datasets.hpp"
#include "ltbr/losses.hpp"
#include "ltbr/nn.hpp"
#include "ltbr/rng.hpp"
#include "ltbr/tensor.hpp"

namespace ltbr {

inline constexpr int kNumDomains = 2;

// Translation layer between two latent spaces: a conditional autoencoder over
// latent vectors, with the source domain appended as a one-hot indicator.
// Gated mixing heads produce the shared-space posterior and the output, and a
// linear probe over the shared space carries the class signal.
struct BridgingVae {
  MlpStack enc_trunk;          // [latent + 2] -> hidden, relu head
  GatedMixingLayer mu_head;    // hidden -> shared
  GatedMixingLayer sigma_head; // hidden -> shared, sigmoid applied in encode
  MlpStack dec_trunk;          // [shared + 2] -> hidden, relu head
  GatedMixingLayer out_head;   // hidden -> latent
  LinearLayer classifier;      // shared -> classes
  int latent_dim = 0;
  int shared_dim = 0;
  int num_classes = 0;
  bool conditional = true;
};

struct BridgeTrainConfig {
  int shared_dim = 100;
  std::vector<std::size_t> hidden{1024, 1024};
  LossWeights weights;
  int num_projections = 50;
  int batch_size = 128;
  int total_steps = 5000;
  int labels_per_class = -1;  // -1: every bank row labeled
  bool conditional = true;
  double lr = 0.001;
  std::uint64_t seed = 0;

  void validate() const {
    weights.validate();
    if (shared_dim <= 0) fail(Err::ConfigError, "shared_dim must be positive");
    if (hidden.empty()) fail(Err::ConfigError, "bridge needs at least one hidden layer");
    if (num_projections <= 0) fail(Err::ConfigError, "num_projections must be positive");
    if (batch_size <= 0) fail(Err::ConfigError, "batch_size must be positive");
    if (total_steps < 0) fail(Err::ConfigError, "total_steps must be non-negative");
    if (lr <= 0) fail(Err::ConfigError, "lr must be positive");
  }

  bool operator==(const BridgeTrainConfig&) const = default;
};

inline BridgingVae init_bridge(std::size_t latent_dim, int num_classes,
                               const BridgeTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (num_classes < 2) fail(Err::InvalidArgument, "bridge needs at least 2 classes");
  BridgingVae m;
  std::vector<std::size_t> enc{latent_dim + kNumDomains};
  enc.insert(enc.end(), cfg.hidden.begin(), cfg.hidden.end());
  m.enc_trunk = init_mlp(enc, Head::Relu, rng);
  std::size_t h = m.enc_trunk.out_dim();
  std::size_t shared = static_cast<std::size_t>(cfg.shared_dim);
  m.mu_head = init_gml(h, shared, rng);
  m.sigma_head = init_gml(h, shared, rng);
  std::vector<std::size_t> dec{shared + kNumDomains};
  dec.insert(dec.end(), cfg.hidden.rbegin(), cfg.hidden.rend());
  m.dec_trunk = init_mlp(dec, Head::Relu, rng);
  m.out_head = init_gml(m.dec_trunk.out_dim(), latent_dim, rng);
  m.classifier = init_linear(shared, static_cast<std::size_t>(num_classes), rng);
  m.latent_dim = static_cast<int>(latent_dim);
  m.shared_dim = cfg.shared_dim;
  m.num_classes = num_classes;
  m.conditional = cfg.conditional;
  return m;
}

inline ParamRefs bridge_params(BridgingVae& m) {
  ParamRefs refs;
  collect_params(m.enc_trunk, "enc.trunk", refs);
  collect_params(m.mu_head, "enc.mu", refs);
  collect_params(m.sigma_head, "enc.sigma", refs);
  collect_params(m.dec_trunk, "dec.trunk", refs);
  collect_params(m.out_head, "dec.out", refs);
  collect_params(m.classifier, "cls", refs);
  return refs;
}

// Appends the domain indicator column block. Unconditional models receive
// zeros so the network shapes stay identical across the conditioning ablation.
inline Tensor append_domain(const Tensor& z, int domain, bool conditional) {
  if (z.rank() != 2) fail(Err::ShapeMismatch, "append_domain expects [n x d]");
  if (domain < 0 || domain >= kNumDomains) fail(Err::BadDomain, "domain must be 0 or 1");
  std::size_t n = z.shape()[0];
  std::vector<double> c(n * kNumDomains, 0.0);
  if (conditional)
    for (std::size_t i = 0; i < n; ++i) c[i * kNumDomains + static_cast<std::size_t>(domain)] = 1.0;
  return concat(z, Tensor({n, static_cast<std::size_t>(kNumDomains)}, std::move(c)), 1);
}

inline GaussianParams bridge_encode(const BridgingVae& m, const Tensor& z, int domain) {
  Tensor h = mlp_forward(m.enc_trunk, append_domain(z, domain, m.conditional));
  return {gml_forward(m.mu_head, h), sigmoid(gml_forward(m.sigma_head, h))};
}

// Deterministic shared-space embedding (posterior mean).
inline Tensor bridge_embed(const BridgingVae& m, const Tensor& z, int domain) {
  return bridge_encode(m, z, domain).mu;
}

inline Tensor bridge_decode(const BridgingVae& m, const Tensor& zp, int domain) {
  Tensor h = mlp_forward(m.dec_trunk, append_domain(zp, domain, m.conditional));
  return gml_forward(m.out_head, h);
}

inline Tensor bridge_classify(const BridgingVae& m, const Tensor& zp) {
  return linear_forward(m.classifier, zp);
}

// 0/1 row mask marking which bank rows keep their labels. k < 0 labels all
// rows; otherwise a seeded draw keeps k rows per class (fewer if the class is
// smaller) and masks the rest.
inline std::vector<double> make_label_mask(const std::vector<int>& labels, int num_classes,
                                           int labels_per_class, Rng& rng) {
  if (labels_per_class < 0) return std::vector<double>(labels.size(), 1.0);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int l = labels[i];
    if (l < 0 || l >= num_classes) fail(Err::LabelOutOfRange, "mask label outside class range");
    by_class[static_cast<std::size_t>(l)].push_back(i);
  }
  std::vector<double> mask(labels.size(), 0.0);
  for (auto& idx : by_class) {
    rng.shuffle(idx);
    std::size_t keep = std::min(idx.size(), static_cast<std::size_t>(labels_per_class));
    for (std::size_t j = 0; j < keep; ++j) mask[idx[j]] = 1.0;
  }
  return mask;
}

struct BridgeStepStats {
  int step = 0;
  double elbo1 = 0, elbo2 = 0, swd = 0, cls1 = 0, cls2 = 0, total = 0;
};

struct BridgeTrainResult {
  BridgingVae model;
  std::vector<BridgeStepStats> trace;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline std::vector<int> gather_labels(const std::vector<int>& labels,
                                      const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

inline std::vector<double> gather_mask(const std::vector<double>& mask,
                                       const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(mask[i]);
  return out;
}

}  // namespace detail

// Joint step over both banks: each side autoencodes its own latents through
// the shared space (ELBO), sliced transport cost pulls the two shared-space
// batches together, and the linear probe pushes same-class rows to the same
// region. Draw order per step is frozen: projection seed, batch 1, batch 2,
// posterior noise 1, posterior noise 2.
inline BridgeTrainResult train_bridge(const LatentBank& bank1, const LatentBank& bank2,
                                      const BridgeTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  bank1.validate();
  bank2.validate();
  if (bank1.dim() != bank2.dim())
    fail(Err::ShapeMismatch, "banks disagree on latent dim: " + std::to_string(bank1.dim()) +
                                 " vs " + std::to_string(bank2.dim()));
  if (bank1.num_classes != bank2.num_classes)
    fail(Err::ConfigError, "banks disagree on class count");

  BridgeTrainResult out;
  out.model = init_bridge(bank1.dim(), bank1.num_classes, cfg, rng);

  std::vector<double> mask1 = make_label_mask(bank1.labels, bank1.num_classes,
                                              cfg.labels_per_class, rng);
  std::vector<double> mask2 = make_label_mask(bank2.labels, bank2.num_classes,
                                              cfg.labels_per_class, rng);
  MinibatchSampler sampler1(bank1.size(), static_cast<std::size_t>(cfg.batch_size),
                            rng.next_u64());
  MinibatchSampler sampler2(bank2.size(), static_cast<std::size_t>(cfg.batch_size),
                            rng.next_u64());

  ParamRefs refs = bridge_params(out.model);
  std::vector<Tensor*> params;
  for (auto& [name, p] : refs) params.push_back(p);
  AdamState adam(AdamConfig{.lr = cfg.lr}, params);
  out.trace.reserve(static_cast<std::size_t>(cfg.total_steps));

  for (int step = 0; step < cfg.total_steps; ++step) {
    ProjectionSet omega(static_cast<std::size_t>(cfg.num_projections),
                        static_cast<std::size_t>(cfg.shared_dim), rng.next_u64());
    std::vector<std::size_t> idx1 = sampler1.next();
    std::vector<std::size_t> idx2 = sampler2.next();
    Tensor z1 = bank1.gather(idx1);
    Tensor z2 = bank2.gather(idx2);

    BridgeStepStats st;
    st.step = step;
    {
      Tape tape;
      for (Tensor* p : params) tape.watch(*p);
      Tensor loss;
      try {
        GaussianParams q1 = bridge_encode(out.model, z1, 0);
        Tensor zp1 = reparameterize(q1.mu, q1.sigma, rng);
        GaussianParams q2 = bridge_encode(out.model, z2, 1);
        Tensor zp2 = reparameterize(q2.mu, q2.sigma, rng);
        Tensor r1 = bridge_decode(out.model, zp1, 0);
        Tensor r2 = bridge_decode(out.model, zp2, 1);
        Tensor e1 = elbo_loss(z1, r1, q1.mu, q1.sigma, cfg.weights.beta_kl,
                              cfg.weights.sigma_likelihood);
        Tensor e2 = elbo_loss(z2, r2, q2.mu, q2.sigma, cfg.weights.beta_kl,
                              cfg.weights.sigma_likelihood);
        Tensor w = swd(zp1, zp2, omega);
        Tensor c1 = masked_softmax_cross_entropy(bridge_classify(out.model, zp1),
                                                 detail::gather_labels(bank1.labels, idx1),
                                                 detail::gather_mask(mask1, idx1));
        Tensor c2 = masked_softmax_cross_entropy(bridge_classify(out.model, zp2),
                                                 detail::gather_labels(bank2.labels, idx2),
                                                 detail::gather_mask(mask2, idx2));
        st.elbo1 = e1.item();
        st.elbo2 = e2.item();
        st.swd = w.item();
        st.cls1 = c1.item();
        st.cls2 = c2.item();
        loss = total_bridge_loss(e1, e2, w, c1, c2, cfg.weights);
      } catch (const Error& e) {
        if (e.kind() == Err::NonPositiveSigma) {
          out.aborted = true;
          out.abort_reason = "sigma underflow at step " + std::to_string(step);
          return out;
        }
        if (e.kind() == Err::NonFiniteLoss) {
          out.aborted = true;
          out.abort_reason = "non-finite loss at step " + std::to_string(step);
          return out;
        }
        throw;
      }
      st.total = loss.item();
      GradientMap g = tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      for (Tensor* p : params) grads.push_back(g.grad(*p));
      try {
        adam.step(params, grads);
      } catch (const Error& e) {
        if (e.kind() != Err::NonFiniteGradient) throw;
        out.aborted = true;
        out.abort_reason = "non-finite gradient at step " + std::to_string(step);
        return out;
      }
    }
    out.trace.push_back(st);
  }
  return out;
}

// Configurations for the standard comparison set, most capable first. The
// input configuration is returned under the name "full".
inline std::vector<std::pair<std::string, BridgeTrainConfig>> ablation_variants(
    const BridgeTrainConfig& cfg) {
  BridgeTrainConfig no_cls = cfg;
  no_cls.weights.beta_cls = 0.0;
  BridgeTrainConfig no_align = no_cls;
  no_align.weights.beta_swd = 0.0;
  BridgeTrainConfig uncond = cfg;
  uncond.conditional = false;
  return {{"full", cfg}, {"no_classifier", no_cls}, {"no_alignment", no_align},
          {"unconditional", uncond}};
}

inline void write_metrics_csv(const std::string& path, const std::vector<BridgeStepStats>& trace) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(Err::IoError, "cannot open '" + path + "' for writing");
  std::fprintf(f, "step,elbo1,elbo2,swd,cls1,cls2,total\n");
  for (const auto& s : trace)
    std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.step, s.elbo1, s.elbo2, s.swd,
                 s.cls1, s.cls2, s.total);
  if (std::fclose(f) != 0) fail(Err::IoError, "failed to finish writing '" + path + "'");
}

}  // namespace ltbr
