#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ltbr/rng.hpp"
#include "ltbr/tensor.hpp"

namespace ltbr {

struct LinearLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.shape()[0]; }
  std::size_t out_dim() const { return weight.shape()[1]; }
};

// Xavier-uniform weights, zero bias.
inline LinearLayer init_linear(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) fail(Err::InvalidArgument, "linear layer needs positive dims");
  double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return LinearLayer{Tensor(Shape{in, out}, std::move(w)), Tensor::zeros({out})};
}

// x [n x in] -> x*W + b [n x out]
inline Tensor linear_forward(const LinearLayer& l, const Tensor& x) {
  if (x.rank() != 2 || x.shape()[1] != l.in_dim())
    fail(Err::ShapeMismatch, "linear layer expects [n," + std::to_string(l.in_dim()) +
                                 "], got " + shape_str(x.shape()));
  return add(matmul(x, l.weight), l.bias);
}

enum class Head { Affine, AffineSigmoid, Relu };

inline const char* head_name(Head h) {
  switch (h) {
    case Head::Affine: return "affine";
    case Head::AffineSigmoid: return "affine_sigmoid";
    case Head::Relu: return "relu";
  }
  return "?";
}

inline Head head_from_name(const std::string& s) {
  if (s == "affine") return Head::Affine;
  if (s == "affine_sigmoid") return Head::AffineSigmoid;
  if (s == "relu") return Head::Relu;
  fail(Err::UnknownKind, "unknown stack head '" + s + "'");
}

// Fully connected stack: relu between layers, configurable final activation.
struct MlpStack {
  std::vector<LinearLayer> layers;
  Head head = Head::Affine;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
};

// dims is the full chain {in, h1, ..., out}.
inline MlpStack init_mlp(const std::vector<std::size_t>& dims, Head head, Rng& rng) {
  if (dims.size() < 2) fail(Err::InvalidArgument, "mlp needs at least one layer");
  MlpStack s;
  s.head = head;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    s.layers.push_back(init_linear(dims[i], dims[i + 1], rng));
  return s;
}

inline Tensor mlp_forward(const MlpStack& s, const Tensor& x) {
  if (s.layers.empty()) fail(Err::InvalidArgument, "empty mlp");
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < s.layers.size(); ++i) h = relu(linear_forward(s.layers[i], h));
  h = linear_forward(s.layers.back(), h);
  switch (s.head) {
    case Head::Affine: return h;
    case Head::AffineSigmoid: return sigmoid(h);
    case Head::Relu: return relu(h);
  }
  return h;
}

// Gated mixing: out = g (*) transform(h) + (1-g) (*) passthrough(h) with
// g = sigmoid(gate(h)). All three maps are learned affine layers; the gate
// bias starts at zero so mixing begins balanced.
struct GatedMixingLayer {
  LinearLayer gate, transform, passthrough;

  std::size_t in_dim() const { return gate.in_dim(); }
  std::size_t out_dim() const { return gate.out_dim(); }
};

inline GatedMixingLayer init_gml(std::size_t in, std::size_t out, Rng& rng) {
  GatedMixingLayer g;
  g.gate = init_linear(in, out, rng);
  g.transform = init_linear(in, out, rng);
  g.passthrough = init_linear(in, out, rng);
  return g;
}

inline Tensor gml_forward(const GatedMixingLayer& g, const Tensor& h) {
  Tensor gate = sigmoid(linear_forward(g.gate, h));
  Tensor t = linear_forward(g.transform, h);
  Tensor p = linear_forward(g.passthrough, h);
  Tensor ones = Tensor::full(gate.shape(), 1.0);
  return add(mul(gate, t), mul(sub(ones, gate), p));
}

// ---- parameter enumeration (stable order, used by trainers and persistence) ----

using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

inline void collect_params(LinearLayer& l, const std::string& prefix, ParamRefs& out) {
  out.emplace_back(prefix + ".weight", &l.weight);
  out.emplace_back(prefix + ".bias", &l.bias);
}

inline void collect_params(MlpStack& s, const std::string& prefix, ParamRefs& out) {
  for (std::size_t i = 0; i < s.layers.size(); ++i)
    collect_params(s.layers[i], prefix + ".l" + std::to_string(i), out);
}

inline void collect_params(GatedMixingLayer& g, const std::string& prefix, ParamRefs& out) {
  collect_params(g.gate, prefix + ".gate", out);
  collect_params(g.transform, prefix + ".transform", out);
  collect_params(g.passthrough, prefix + ".passthrough", out);
}

// ---- Adam ----

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment state per parameter tensor, with bias correction.
class AdamState {
 public:
  AdamState(AdamConfig cfg, const std::vector<Tensor*>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // One update over all parameters; `grads` aligns with `params`.
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      fail(Err::LengthMismatch, "adam: param/grad count does not match state");
    for (std::size_t k = 0; k < grads.size(); ++k) {
      if (grads[k].shape() != params[k]->shape())
        fail(Err::ShapeMismatch, "adam: grad shape differs from param shape");
      if (!grads[k].all_finite()) fail(Err::NonFiniteGradient, "adam: non-finite gradient");
    }
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& m = m_[k];
      auto& v = v_[k];
      const double* g = grads[k].raw();
      std::vector<double> next(params[k]->data().begin(), params[k]->data().end());
      for (std::size_t i = 0; i < next.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        next[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
      *params[k] = Tensor(params[k]->shape(), std::move(next));
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace ltbr
