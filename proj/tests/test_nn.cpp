#include <gtest/gtest.h>

#include <cmath>

#include "ltbr/gradcheck.hpp"
#include "ltbr/nn.hpp"
#include "testutil.hpp"

using namespace ltbr;
using testutil::random_tensor;
using testutil::tensors_equal;

TEST(Linear, InitIsDeterministicAndBounded) {
  Rng r1(42), r2(42), r3(43);
  LinearLayer a = init_linear(6, 4, r1);
  LinearLayer b = init_linear(6, 4, r2);
  LinearLayer c = init_linear(6, 4, r3);
  EXPECT_TRUE(tensors_equal(a.weight, b.weight));
  EXPECT_FALSE(tensors_equal(a.weight, c.weight));
  double bound = std::sqrt(6.0 / (6 + 4));
  for (double w : a.weight.data()) {
    EXPECT_LE(std::fabs(w), bound);
  }
  for (double v : a.bias.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Linear, ForwardMatchesHandComputation) {
  LinearLayer l{Tensor({3, 2}, {1, 0, 0, 1, 1, 1}), Tensor::row({1, -1})};
  Tensor x({1, 3}, {1, 2, 3});
  Tensor y = linear_forward(l, x);
  EXPECT_TRUE(tensors_equal(y, Tensor({1, 2}, {5, 4})));
  EXPECT_THROW(linear_forward(l, Tensor({1, 2}, {1, 2})), Error);
}

TEST(Mlp, HeadVariants) {
  Rng rng(7);
  Tensor x = random_tensor({4, 3}, rng);
  MlpStack affine = init_mlp({3, 5, 2}, Head::Affine, rng);
  MlpStack sig = affine;
  sig.head = Head::AffineSigmoid;
  MlpStack rl = affine;
  rl.head = Head::Relu;

  Tensor ya = mlp_forward(affine, x);
  Tensor ys = mlp_forward(sig, x);
  Tensor yr = mlp_forward(rl, x);
  for (std::size_t i = 0; i < ya.size(); ++i) {
    double a = ya.at(i);
    EXPECT_GT(ys.at(i), 0.0);
    EXPECT_LT(ys.at(i), 1.0);
    EXPECT_NEAR(ys.at(i), 1.0 / (1.0 + std::exp(-a)), 1e-12);
    EXPECT_DOUBLE_EQ(yr.at(i), a > 0 ? a : 0.0);
  }
}

TEST(Mlp, SingleLayerEqualsLinear) {
  Rng rng(9);
  MlpStack s = init_mlp({4, 3}, Head::Affine, rng);
  Tensor x = random_tensor({2, 4}, rng);
  EXPECT_TRUE(tensors_equal(mlp_forward(s, x), linear_forward(s.layers[0], x), 1e-15));
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  Rng rng(21);
  MlpStack s = init_mlp({3, 6, 2}, Head::AffineSigmoid, rng);
  Tensor x = random_tensor({4, 3}, rng);

  GradCheckReport rx = finite_difference_check(
      [&](const Tensor& t) { return sum(square(mlp_forward(s, t))); }, x);
  EXPECT_TRUE(rx.pass) << "input grad, max rel err " << rx.max_rel_err;

  for (std::size_t li = 0; li < s.layers.size(); ++li) {
    GradCheckReport rw = finite_difference_check(
        [&, li](const Tensor& w) {
          MlpStack s2 = s;
          s2.layers[li].weight = w;
          return sum(square(mlp_forward(s2, x)));
        },
        s.layers[li].weight);
    EXPECT_TRUE(rw.pass) << "layer " << li << " weight, max rel err " << rw.max_rel_err;
    GradCheckReport rb = finite_difference_check(
        [&, li](const Tensor& b) {
          MlpStack s2 = s;
          s2.layers[li].bias = b;
          return sum(square(mlp_forward(s2, x)));
        },
        s.layers[li].bias);
    EXPECT_TRUE(rb.pass) << "layer " << li << " bias, max rel err " << rb.max_rel_err;
  }
}

TEST(Gml, BalancedGateAveragesBranches) {
  Rng rng(31);
  GatedMixingLayer g = init_gml(3, 2, rng);
  g.gate.weight = Tensor::zeros({3, 2});  // gate stays exactly 0.5
  Tensor h = random_tensor({4, 3}, rng);
  Tensor t = linear_forward(g.transform, h);
  Tensor p = linear_forward(g.passthrough, h);
  Tensor out = gml_forward(g, h);
  for (std::size_t i = 0; i < out.size(); ++i)
    EXPECT_NEAR(out.at(i), 0.5 * (t.at(i) + p.at(i)), 1e-12);
}

TEST(Gml, SaturatedGateSelectsBranch) {
  Rng rng(33);
  GatedMixingLayer g = init_gml(3, 2, rng);
  g.gate.weight = Tensor::zeros({3, 2});
  Tensor h = random_tensor({4, 3}, rng);
  Tensor t = linear_forward(g.transform, h);
  Tensor p = linear_forward(g.passthrough, h);

  g.gate.bias = Tensor::full({2}, 20.0);
  Tensor out_t = gml_forward(g, h);
  for (std::size_t i = 0; i < out_t.size(); ++i) EXPECT_NEAR(out_t.at(i), t.at(i), 1e-8);

  g.gate.bias = Tensor::full({2}, -20.0);
  Tensor out_p = gml_forward(g, h);
  for (std::size_t i = 0; i < out_p.size(); ++i) EXPECT_NEAR(out_p.at(i), p.at(i), 1e-8);
}

TEST(Gml, OutputStaysBetweenBranches) {
  Rng rng(35);
  GatedMixingLayer g = init_gml(5, 4, rng);
  Tensor h = random_tensor({8, 5}, rng);
  Tensor t = linear_forward(g.transform, h);
  Tensor p = linear_forward(g.passthrough, h);
  Tensor out = gml_forward(g, h);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double lo = std::min(t.at(i), p.at(i)), hi = std::max(t.at(i), p.at(i));
    EXPECT_GE(out.at(i), lo - 1e-12);
    EXPECT_LE(out.at(i), hi + 1e-12);
  }
}

TEST(Gml, GradientsMatchFiniteDifferences) {
  Rng rng(37);
  GatedMixingLayer g = init_gml(3, 2, rng);
  Tensor h = random_tensor({4, 3}, rng);
  GradCheckReport rh = finite_difference_check(
      [&](const Tensor& t) { return sum(square(gml_forward(g, t))); }, h);
  EXPECT_TRUE(rh.pass) << rh.max_rel_err;
  for (auto* layer : {&g.gate, &g.transform, &g.passthrough}) {
    GradCheckReport rw = finite_difference_check(
        [&](const Tensor& w) {
          GatedMixingLayer g2 = g;
          if (layer == &g.gate) g2.gate.weight = w;
          if (layer == &g.transform) g2.transform.weight = w;
          if (layer == &g.passthrough) g2.passthrough.weight = w;
          return sum(square(gml_forward(g2, h)));
        },
        layer->weight);
    EXPECT_TRUE(rw.pass) << rw.max_rel_err;
  }
}

TEST(Params, CollectionOrderIsStable) {
  Rng rng(41);
  MlpStack s = init_mlp({3, 4, 2}, Head::Affine, rng);
  ParamRefs refs;
  collect_params(s, "enc", refs);
  ASSERT_EQ(refs.size(), 4u);
  EXPECT_EQ(refs[0].first, "enc.l0.weight");
  EXPECT_EQ(refs[1].first, "enc.l0.bias");
  EXPECT_EQ(refs[2].first, "enc.l1.weight");
  EXPECT_EQ(refs[3].first, "enc.l1.bias");

  GatedMixingLayer g = init_gml(2, 2, rng);
  ParamRefs grefs;
  collect_params(g, "head", grefs);
  ASSERT_EQ(grefs.size(), 6u);
  EXPECT_EQ(grefs[0].first, "head.gate.weight");
  EXPECT_EQ(grefs[5].first, "head.passthrough.bias");
}

TEST(Adam, TwoStepsMatchClosedForm) {
  // Constant gradient g: after bias correction mhat = g and vhat = g^2 on
  // every step, so each update is exactly lr * g / (|g| + eps).
  AdamConfig cfg;
  Tensor p = Tensor::row({1.0, -2.0});
  Tensor g = Tensor::row({0.5, -0.25});
  std::vector<Tensor*> params{&p};
  AdamState st(cfg, params);
  st.step(params, {g});
  st.step(params, {g});
  for (std::size_t i = 0; i < p.size(); ++i) {
    double gi = g.at(i);
    double delta = cfg.lr * gi / (std::fabs(gi) + cfg.epsilon);
    double expected = (i == 0 ? 1.0 : -2.0) - 2.0 * delta;
    EXPECT_NEAR(p.at(i), expected, 1e-15);
  }
  EXPECT_EQ(st.step_count(), 2);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor p = Tensor::row({1.0, 2.0});
  std::vector<Tensor*> params{&p};
  AdamState st(AdamConfig{}, params);
  st.step(params, {Tensor::zeros({2})});
  EXPECT_TRUE(tensors_equal(p, Tensor::row({1.0, 2.0})));
  EXPECT_EQ(st.step_count(), 1);
}

TEST(Adam, RejectsNonFiniteAndMismatchedGrads) {
  Tensor p = Tensor::row({1.0});
  std::vector<Tensor*> params{&p};
  AdamState st(AdamConfig{}, params);
  try {
    st.step(params, {Tensor::row({std::nan("")})});
    FAIL() << "non-finite gradient accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Err::NonFiniteGradient);
  }
  EXPECT_THROW(st.step(params, {Tensor::row({1.0, 2.0})}), Error);
  EXPECT_THROW(st.step(params, {}), Error);
}

TEST(Adam, DecreasesSimpleQuadratic)
{
  // minimize f(p) = |p|^2 from p0; a few hundred steps must shrink it
  Rng rng(51);
  Tensor p = random_tensor({4}, rng);
  double f0 = 0.0;
  for (double v : p.data()) f0 += v * v;
  std::vector<Tensor*> params{&p};
  AdamState st(AdamConfig{.lr = 0.05}, params);
  for (int it = 0; it < 300; ++it) {
    Tape tape;
    tape.watch(p);
    Tensor loss = sum(square(p));
    GradientMap g = tape.backward(loss);
    st.step(params, {g.grad(p)});
  }
  double f1 = 0.0;
  for (double v : p.data()) f1 += v * v;
  EXPECT_LT(f1, 0.01 * f0);
}
