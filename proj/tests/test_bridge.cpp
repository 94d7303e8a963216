#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ltbr/bridge.hpp"
#include "ltbr/gradcheck.hpp"
#include "testutil.hpp"

using namespace ltbr;
using testutil::random_tensor;
using testutil::tensors_equal;

namespace {

BridgeTrainConfig tiny_cfg() {
  BridgeTrainConfig cfg;
  cfg.shared_dim = 2;
  cfg.hidden = {32};
  cfg.num_projections = 10;
  cfg.batch_size = 32;
  cfg.total_steps = 40;
  cfg.lr = 0.005;
  return cfg;
}

std::pair<LatentBank, LatentBank> synthetic_banks(std::size_t per_class, std::uint64_t seed) {
  SyntheticConfig sc = SyntheticConfig::defaults();
  sc.samples_per_class = per_class;
  sc.seed = seed;
  auto [d1, d2] = gen_synthetic_domains(sc);
  return {bank_from_dataset(d1), bank_from_dataset(d2)};
}

bool bridge_params_equal(BridgingVae& a, BridgingVae& b) {
  ParamRefs ra = bridge_params(a), rb = bridge_params(b);
  if (ra.size() != rb.size()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (ra[i].first != rb[i].first || !tensors_equal(*ra[i].second, *rb[i].second)) return false;
  return true;
}

}  // namespace

TEST(Bridge, InitShapesAndParamNames) {
  Rng rng(1);
  BridgeTrainConfig cfg = tiny_cfg();
  BridgingVae m = init_bridge(5, 3, cfg, rng);
  EXPECT_EQ(m.enc_trunk.in_dim(), 5u + 2u);
  EXPECT_EQ(m.mu_head.in_dim(), 32u);
  EXPECT_EQ(m.mu_head.out_dim(), 2u);
  EXPECT_EQ(m.sigma_head.out_dim(), 2u);
  EXPECT_EQ(m.dec_trunk.in_dim(), 2u + 2u);
  EXPECT_EQ(m.out_head.out_dim(), 5u);
  EXPECT_EQ(m.classifier.in_dim(), 2u);
  EXPECT_EQ(m.classifier.out_dim(), 3u);
  ParamRefs refs = bridge_params(m);
  // trunks 2 layers total... enc 1 + dec 1, three GML heads of 3 affine maps,
  // linear classifier
  EXPECT_EQ(refs.size(), 2u + 2u + 3u * 6u + 2u);
  EXPECT_EQ(refs[0].first, "enc.trunk.l0.weight");
  EXPECT_EQ(refs.back().first, "cls.bias");
  EXPECT_THROW(init_bridge(5, 1, cfg, rng), Error);
}

TEST(Bridge, AppendDomainLaysOutIndicator) {
  Tensor z({2, 2}, {1, 2, 3, 4});
  Tensor a = append_domain(z, 0, true);
  EXPECT_EQ(a.shape(), (Shape{2, 4}));
  EXPECT_TRUE(tensors_equal(a, Tensor({2, 4}, {1, 2, 1, 0, 3, 4, 1, 0})));
  Tensor b = append_domain(z, 1, true);
  EXPECT_TRUE(tensors_equal(b, Tensor({2, 4}, {1, 2, 0, 1, 3, 4, 0, 1})));
  Tensor c = append_domain(z, 1, false);
  EXPECT_TRUE(tensors_equal(c, Tensor({2, 4}, {1, 2, 0, 0, 3, 4, 0, 0})));
  EXPECT_THROW(append_domain(z, 2, true), Error);
  EXPECT_THROW(append_domain(Tensor({2}, {1, 2}), 0, true), Error);
}

TEST(Bridge, EncodeDecodeShapesAndSigmaRange) {
  Rng rng(2);
  BridgingVae m = init_bridge(3, 2, tiny_cfg(), rng);
  Tensor z = random_tensor({6, 3}, rng);
  GaussianParams q = bridge_encode(m, z, 0);
  EXPECT_EQ(q.mu.shape(), (Shape{6, 2}));
  EXPECT_EQ(q.sigma.shape(), (Shape{6, 2}));
  for (double s : q.sigma.data()) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
  EXPECT_TRUE(tensors_equal(bridge_embed(m, z, 0), q.mu));
  Tensor r = bridge_decode(m, q.mu, 0);
  EXPECT_EQ(r.shape(), (Shape{6, 3}));
  EXPECT_EQ(bridge_classify(m, q.mu).shape(), (Shape{6, 2}));
}

TEST(Bridge, ConditioningFlagControlsDomainSensitivity) {
  Rng rng(3);
  BridgeTrainConfig cfg = tiny_cfg();
  Tensor z = random_tensor({4, 3}, rng);

  BridgingVae cond = init_bridge(3, 2, cfg, rng);
  GaussianParams qa = bridge_encode(cond, z, 0);
  GaussianParams qb = bridge_encode(cond, z, 1);
  EXPECT_FALSE(tensors_equal(qa.mu, qb.mu));

  cfg.conditional = false;
  Rng rng2(3);
  BridgingVae uncond = init_bridge(3, 2, cfg, rng2);
  GaussianParams ua = bridge_encode(uncond, z, 0);
  GaussianParams ub = bridge_encode(uncond, z, 1);
  EXPECT_TRUE(tensors_equal(ua.mu, ub.mu));
  EXPECT_TRUE(tensors_equal(ua.sigma, ub.sigma));
  EXPECT_TRUE(tensors_equal(bridge_decode(uncond, ua.mu, 0), bridge_decode(uncond, ua.mu, 1)));
}

TEST(Bridge, LabelMaskSelection) {
  std::vector<int> labels{0, 0, 0, 1, 1, 2};
  Rng r1(7);
  std::vector<double> all = make_label_mask(labels, 3, -1, r1);
  EXPECT_EQ(all, std::vector<double>(6, 1.0));

  Rng r2(7);
  std::vector<double> two = make_label_mask(labels, 3, 2, r2);
  double c0 = two[0] + two[1] + two[2];
  double c1 = two[3] + two[4];
  double c2 = two[5];
  EXPECT_DOUBLE_EQ(c0, 2.0);  // capped at k
  EXPECT_DOUBLE_EQ(c1, 2.0);  // whole class fits
  EXPECT_DOUBLE_EQ(c2, 1.0);  // class smaller than k
  for (double v : two) EXPECT_TRUE(v == 0.0 || v == 1.0);

  Rng r3(7);
  EXPECT_EQ(make_label_mask(labels, 3, 2, r3), two);  // seeded draw repeats

  Rng r4(8);
  std::vector<double> zero = make_label_mask(labels, 3, 0, r4);
  EXPECT_EQ(zero, std::vector<double>(6, 0.0));

  Rng r5(9);
  EXPECT_THROW(make_label_mask({0, 3}, 3, 1, r5), Error);
}

// Full-graph gradient oracle: one complete training objective (both ELBOs,
// sliced transport, both masked probes) differentiated with respect to a
// parameter in the deepest head, checked against central differences.
TEST(Bridge, FullObjectiveGradientMatchesFiniteDifferences) {
  Rng rng(11);
  BridgeTrainConfig cfg;
  cfg.shared_dim = 2;
  cfg.hidden = {4};
  cfg.num_projections = 4;
  BridgingVae m = init_bridge(3, 2, cfg, rng);

  Tensor z1 = random_tensor({5, 3}, rng);
  Tensor z2 = random_tensor({5, 3}, rng);
  std::vector<int> y1{0, 1, 0, 1, 0};
  std::vector<int> y2{1, 1, 0, 0, 1};
  std::vector<double> m1{1, 1, 0, 1, 1};
  std::vector<double> m2{1, 0, 1, 1, 1};
  Tensor eps1(Shape{5, 2}, rng.normals(10));
  Tensor eps2(Shape{5, 2}, rng.normals(10));
  ProjectionSet omega(4, 2, 99);
  LossWeights w;
  w.beta_kl = 0.07;
  w.beta_swd = 1.3;
  w.beta_cls = 0.21;

  auto objective = [&](const BridgingVae& model) {
    GaussianParams q1 = bridge_encode(model, z1, 0);
    GaussianParams q2 = bridge_encode(model, z2, 1);
    Tensor zp1 = add(q1.mu, mul(q1.sigma, eps1));
    Tensor zp2 = add(q2.mu, mul(q2.sigma, eps2));
    Tensor e1 = elbo_loss(z1, bridge_decode(model, zp1, 0), q1.mu, q1.sigma, w.beta_kl,
                          w.sigma_likelihood);
    Tensor e2 = elbo_loss(z2, bridge_decode(model, zp2, 1), q2.mu, q2.sigma, w.beta_kl,
                          w.sigma_likelihood);
    Tensor sw = swd(zp1, zp2, omega);
    Tensor c1 = masked_softmax_cross_entropy(bridge_classify(model, zp1), y1, m1);
    Tensor c2 = masked_softmax_cross_entropy(bridge_classify(model, zp2), y2, m2);
    return total_bridge_loss(e1, e2, sw, c1, c2, w);
  };

  // probe one tensor inside each distinct block of the network
  std::vector<std::pair<std::string, Tensor*>> targets;
  targets.push_back({"enc.trunk.l0.weight", &m.enc_trunk.layers[0].weight});
  targets.push_back({"enc.mu.gate.weight", &m.mu_head.gate.weight});
  targets.push_back({"enc.sigma.transform.weight", &m.sigma_head.transform.weight});
  targets.push_back({"dec.trunk.l0.bias", &m.dec_trunk.layers[0].bias});
  targets.push_back({"dec.out.passthrough.weight", &m.out_head.passthrough.weight});
  targets.push_back({"cls.weight", &m.classifier.weight});

  for (auto& [name, slot] : targets) {
    Tensor original = *slot;
    auto f = [&](const Tensor& x) {
      *slot = x;
      Tensor loss = objective(m);
      *slot = original;
      return loss;
    };
    GradCheckReport rep = finite_difference_check(f, original);
    EXPECT_TRUE(rep.pass) << name << ": rel err " << rep.max_rel_err << " at coord "
                          << rep.worst_coord << " (ad " << rep.autodiff_at_worst << ", fd "
                          << rep.numeric_at_worst << ")";
  }
}

TEST(Bridge, TrainingReducesObjectiveDeterministically) {
  auto [b1, b2] = synthetic_banks(60, 21);
  BridgeTrainConfig cfg = tiny_cfg();
  cfg.total_steps = 300;
  Rng r1(22);
  BridgeTrainResult a = train_bridge(b1, b2, cfg, r1);
  ASSERT_FALSE(a.aborted) << a.abort_reason;
  ASSERT_EQ(a.trace.size(), 300u);
  auto mean_total = [&](std::size_t lo, std::size_t hi) {
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += a.trace[i].total;
    return s / static_cast<double>(hi - lo);
  };
  EXPECT_LT(mean_total(280, 300), mean_total(0, 20));
  for (const auto& st : a.trace) {
    EXPECT_TRUE(std::isfinite(st.total));
    EXPECT_GE(st.swd, 0.0);
    EXPECT_GE(st.cls1, 0.0);
    EXPECT_GE(st.cls2, 0.0);
  }

  cfg.total_steps = 40;
  Rng r2(22), r3(22);
  BridgeTrainResult x = train_bridge(b1, b2, cfg, r2);
  BridgeTrainResult y = train_bridge(b1, b2, cfg, r3);
  EXPECT_TRUE(bridge_params_equal(x.model, y.model));
  for (std::size_t i = 0; i < x.trace.size(); ++i) {
    EXPECT_EQ(x.trace[i].total, y.trace[i].total);
    EXPECT_EQ(x.trace[i].swd, y.trace[i].swd);
  }
}

TEST(Bridge, TrainGuardsAndZeroSteps) {
  auto [b1, b2] = synthetic_banks(20, 31);
  BridgeTrainConfig cfg = tiny_cfg();
  cfg.total_steps = 0;
  Rng rng(32);
  BridgeTrainResult res = train_bridge(b1, b2, cfg, rng);
  EXPECT_TRUE(res.trace.empty());
  EXPECT_FALSE(res.aborted);

  LatentBank wide = b2;
  wide.vectors = Tensor::zeros({b2.size(), 5});
  Rng r2(33);
  EXPECT_THROW(train_bridge(b1, wide, cfg, r2), Error);

  LatentBank fewer = b2;
  fewer.num_classes = 3;
  for (auto& l : fewer.labels) l = std::min(l, 2);
  Rng r3(34);
  try {
    train_bridge(b1, fewer, cfg, r3);
    FAIL() << "class mismatch accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Err::ConfigError);
  }

  cfg.total_steps = 5;
  cfg.lr = 1e80;
  Rng r4(35);
  BridgeTrainResult blown = train_bridge(b1, b2, cfg, r4);
  EXPECT_TRUE(blown.aborted);
  EXPECT_FALSE(blown.abort_reason.empty());
  EXPECT_LT(blown.trace.size(), 5u);
}

TEST(Bridge, AblationVariantSet) {
  BridgeTrainConfig cfg = tiny_cfg();
  cfg.weights.beta_swd = 1.5;
  cfg.weights.beta_cls = 0.3;
  auto vars = ablation_variants(cfg);
  ASSERT_EQ(vars.size(), 4u);
  EXPECT_EQ(vars[0].first, "full");
  EXPECT_TRUE(vars[0].second == cfg);
  EXPECT_EQ(vars[1].first, "no_classifier");
  EXPECT_DOUBLE_EQ(vars[1].second.weights.beta_cls, 0.0);
  EXPECT_DOUBLE_EQ(vars[1].second.weights.beta_swd, 1.5);
  EXPECT_EQ(vars[2].first, "no_alignment");
  EXPECT_DOUBLE_EQ(vars[2].second.weights.beta_swd, 0.0);
  EXPECT_DOUBLE_EQ(vars[2].second.weights.beta_cls, 0.0);
  EXPECT_EQ(vars[3].first, "unconditional");
  EXPECT_FALSE(vars[3].second.conditional);
  EXPECT_TRUE(vars[3].second.weights == cfg.weights);
  EXPECT_TRUE(vars[1].second.conditional);
}

TEST(Bridge, MetricsCsvGoldenBytes) {
  std::string path = testutil::temp_dir() + "/ltbr_metrics_test.csv";
  std::vector<BridgeStepStats> trace{{0, 1.5, 2.25, 0.125, 3.0, 4.0, 10.875},
                                     {1, 0.5, 0.25, 0.0625, 1.0, 2.0, 3.875}};
  write_metrics_csv(path, trace);
  std::ifstream in(path, std::ios::binary);
  std::string got((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(got,
            "step,elbo1,elbo2,swd,cls1,cls2,total\n"
            "0,1.5,2.25,0.125,3,4,10.875\n"
            "1,0.5,0.25,0.0625,1,2,3.875\n");
  std::remove(path.c_str());
  EXPECT_THROW(write_metrics_csv("/nonexistent-dir/x.csv", trace), Error);
}
