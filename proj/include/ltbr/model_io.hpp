#pragma once

#include <string>
#include <vector>

#include "ltbr/base_models.hpp"
#include "ltbr/bridge.hpp"
#include "ltbr/checkpoint.hpp"
#include "ltbr/tensor.hpp"

namespace ltbr {

namespace detail {

inline void require_model_tag(const Checkpoint& cp, const std::string& want) {
  std::string got = cp.meta_or_fail("model");
  if (got != want)
    fail(Err::UnknownKind, "checkpoint holds a '" + got + "' model, expected '" + want + "'");
}

inline void add_params(Checkpoint& cp, const ParamRefs& refs) {
  for (const auto& [name, p] : refs) cp.add(name, *p);
}

// Rebuilds an affine stack from consecutively numbered layer entries.
inline MlpStack read_mlp(const Checkpoint& cp, const std::string& prefix, Head head) {
  MlpStack s;
  s.head = head;
  for (std::size_t i = 0;; ++i) {
    std::string base = prefix + ".l" + std::to_string(i);
    if (!cp.find(base + ".weight")) break;
    s.layers.push_back({cp.tensor(base + ".weight"), cp.tensor(base + ".bias")});
  }
  if (s.layers.empty()) fail(Err::CorruptEntry, "checkpoint has no layers under '" + prefix + "'");
  return s;
}

inline LinearLayer read_linear(const Checkpoint& cp, const std::string& prefix) {
  return {cp.tensor(prefix + ".weight"), cp.tensor(prefix + ".bias")};
}

inline GatedMixingLayer read_gml(const Checkpoint& cp, const std::string& prefix) {
  return {read_linear(cp, prefix + ".gate"), read_linear(cp, prefix + ".transform"),
          read_linear(cp, prefix + ".passthrough")};
}

inline int meta_int(const Checkpoint& cp, const std::string& k) {
  try {
    return std::stoi(cp.meta_or_fail(k));
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(Err::CorruptEntry, "metadata key '" + k + "' is not an integer");
  }
}

inline double meta_double(const Checkpoint& cp, const std::string& k) {
  try {
    return std::stod(cp.meta_or_fail(k));
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(Err::CorruptEntry, "metadata key '" + k + "' is not a number");
  }
}

}  // namespace detail

// ---- variational autoencoder ----

inline void save_beta_vae(const std::string& path, const BetaVae& m) {
  BetaVae copy = m;  // tensors share storage, so this is cheap
  Checkpoint cp;
  detail::add_params(cp, vae_params(copy));
  cp.set_meta("model", "beta_vae");
  cp.set_meta("latent_dim", std::to_string(m.latent_dim));
  cp.set_meta("beta", std::to_string(m.beta));
  cp.set_meta("x_sigma", std::to_string(m.x_sigma));
  save_checkpoint(path, cp);
}

inline BetaVae load_beta_vae(const std::string& path) {
  Checkpoint cp = load_checkpoint(path);
  detail::require_model_tag(cp, "beta_vae");
  BetaVae m;
  m.enc_trunk = detail::read_mlp(cp, "enc.trunk", Head::Relu);
  m.mu_head = detail::read_linear(cp, "enc.mu");
  m.sigma_head = detail::read_linear(cp, "enc.sigma");
  m.decoder = detail::read_mlp(cp, "dec", Head::Affine);
  m.latent_dim = detail::meta_int(cp, "latent_dim");
  m.beta = detail::meta_double(cp, "beta");
  m.x_sigma = detail::meta_double(cp, "x_sigma");
  if (m.latent_dim <= 0 || static_cast<std::size_t>(m.latent_dim) != m.mu_head.out_dim())
    fail(Err::CorruptEntry, "latent_dim metadata disagrees with the stored head shapes");
  return m;
}

// ---- classifier ----

inline void save_classifier(const std::string& path, const DataClassifier& c) {
  DataClassifier copy = c;
  Checkpoint cp;
  detail::add_params(cp, classifier_params(copy));
  cp.set_meta("model", "classifier");
  cp.set_meta("num_classes", std::to_string(c.num_classes));
  save_checkpoint(path, cp);
}

inline DataClassifier load_classifier(const std::string& path) {
  Checkpoint cp = load_checkpoint(path);
  detail::require_model_tag(cp, "classifier");
  DataClassifier c;
  c.trunk = detail::read_mlp(cp, "trunk", Head::Relu);
  c.head = detail::read_linear(cp, "head");
  c.num_classes = detail::meta_int(cp, "num_classes");
  if (c.num_classes < 2 || static_cast<std::size_t>(c.num_classes) != c.head.out_dim())
    fail(Err::CorruptEntry, "num_classes metadata disagrees with the stored head shape");
  return c;
}

// ---- translation layer ----

inline void save_bridge(const std::string& path, const BridgingVae& m) {
  BridgingVae copy = m;
  Checkpoint cp;
  detail::add_params(cp, bridge_params(copy));
  cp.set_meta("model", "bridge");
  cp.set_meta("latent_dim", std::to_string(m.latent_dim));
  cp.set_meta("shared_dim", std::to_string(m.shared_dim));
  cp.set_meta("num_classes", std::to_string(m.num_classes));
  cp.set_meta("conditional", m.conditional ? "1" : "0");
  save_checkpoint(path, cp);
}

inline BridgingVae load_bridge(const std::string& path) {
  Checkpoint cp = load_checkpoint(path);
  detail::require_model_tag(cp, "bridge");
  BridgingVae m;
  m.enc_trunk = detail::read_mlp(cp, "enc.trunk", Head::Relu);
  m.mu_head = detail::read_gml(cp, "enc.mu");
  m.sigma_head = detail::read_gml(cp, "enc.sigma");
  m.dec_trunk = detail::read_mlp(cp, "dec.trunk", Head::Relu);
  m.out_head = detail::read_gml(cp, "dec.out");
  m.classifier = detail::read_linear(cp, "cls");
  m.latent_dim = detail::meta_int(cp, "latent_dim");
  m.shared_dim = detail::meta_int(cp, "shared_dim");
  m.num_classes = detail::meta_int(cp, "num_classes");
  std::string cond = cp.meta_or_fail("conditional");
  if (cond != "0" && cond != "1")
    fail(Err::CorruptEntry, "conditional metadata must be 0 or 1");
  m.conditional = cond == "1";
  if (m.latent_dim <= 0 || static_cast<std::size_t>(m.latent_dim) != m.out_head.out_dim())
    fail(Err::CorruptEntry, "latent_dim metadata disagrees with the stored head shapes");
  if (m.shared_dim <= 0 || static_cast<std::size_t>(m.shared_dim) != m.mu_head.out_dim())
    fail(Err::CorruptEntry, "shared_dim metadata disagrees with the stored head shapes");
  if (m.num_classes < 2 || static_cast<std::size_t>(m.num_classes) != m.classifier.out_dim())
    fail(Err::CorruptEntry, "num_classes metadata disagrees with the stored probe shape");
  return m;
}

// ---- latent bank ----

inline void save_latent_bank(const std::string& path, const LatentBank& b) {
  b.validate();
  Checkpoint cp;
  cp.add("vectors", b.vectors);
  std::vector<double> labels(b.labels.begin(), b.labels.end());
  std::size_t n = labels.size();
  cp.add("labels", Tensor({n}, std::move(labels)));
  cp.set_meta("model", "latent_bank");
  cp.set_meta("num_classes", std::to_string(b.num_classes));
  cp.set_meta("provenance", provenance_name(b.provenance));
  save_checkpoint(path, cp);
}

inline LatentBank load_latent_bank(const std::string& path) {
  Checkpoint cp = load_checkpoint(path);
  detail::require_model_tag(cp, "latent_bank");
  LatentBank b;
  b.vectors = cp.tensor("vectors");
  Tensor labels = cp.tensor("labels");
  if (labels.rank() != 1) fail(Err::CorruptEntry, "bank labels entry must be rank-1");
  b.labels.reserve(labels.size());
  for (double v : labels.data()) {
    int l = static_cast<int>(v);
    if (static_cast<double>(l) != v) fail(Err::CorruptEntry, "bank label is not an integer");
    b.labels.push_back(l);
  }
  b.num_classes = detail::meta_int(cp, "num_classes");
  b.provenance = provenance_from_name(cp.meta_or_fail("provenance"));
  b.validate();
  return b;
}

}  // namespace ltbr
