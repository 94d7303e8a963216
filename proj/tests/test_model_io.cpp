#include <gtest/gtest.h>

#include <cstdio>

#include "ltbr/model_io.hpp"
#include "ltbr/transfer_eval.hpp"
#include "testutil.hpp"

using namespace ltbr;
using testutil::random_tensor;
using testutil::tensors_equal;

namespace {

struct PathGuard {
  std::string path;
  explicit PathGuard(const std::string& name) : path(testutil::temp_dir() + "/" + name) {}
  ~PathGuard() { std::remove(path.c_str()); }
};

}  // namespace

TEST(ModelIo, BetaVaeRoundTrip) {
  PathGuard pg("ltbr_vae_io.ckpt");
  Rng rng(1);
  BaseVaeConfig cfg;
  cfg.latent_dim = 3;
  cfg.hidden = {8, 5};
  cfg.beta = 0.25;
  cfg.x_sigma = 0.05;
  BetaVae m = init_beta_vae(4, cfg, rng);
  save_beta_vae(pg.path, m);
  BetaVae r = load_beta_vae(pg.path);

  EXPECT_EQ(r.latent_dim, 3);
  EXPECT_DOUBLE_EQ(r.beta, 0.25);
  EXPECT_DOUBLE_EQ(r.x_sigma, 0.05);
  ParamRefs ra = vae_params(m), rb = vae_params(r);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i)
    EXPECT_TRUE(tensors_equal(*ra[i].second, *rb[i].second)) << ra[i].first;

  Rng rng2(2);
  Tensor x = random_tensor({5, 4}, rng2);
  GaussianParams qa = vae_encode(m, x);
  GaussianParams qb = vae_encode(r, x);
  EXPECT_TRUE(tensors_equal(qa.mu, qb.mu));
  EXPECT_TRUE(tensors_equal(qa.sigma, qb.sigma));
  EXPECT_TRUE(tensors_equal(vae_decode(m, qa.mu), vae_decode(r, qb.mu)));
}

TEST(ModelIo, ClassifierRoundTrip) {
  PathGuard pg("ltbr_clf_io.ckpt");
  Rng rng(3);
  ClassifierConfig cfg;
  cfg.hidden = {6, 6};
  DataClassifier c = init_classifier(3, 4, cfg, rng);
  save_classifier(pg.path, c);
  DataClassifier r = load_classifier(pg.path);
  EXPECT_EQ(r.num_classes, 4);
  Rng rng2(4);
  Tensor x = random_tensor({7, 3}, rng2);
  EXPECT_TRUE(tensors_equal(classifier_logits(c, x), classifier_logits(r, x)));
  EXPECT_EQ(classifier_predict(c, x), classifier_predict(r, x));
}

TEST(ModelIo, BridgeRoundTrip) {
  PathGuard pg("ltbr_bridge_io.ckpt");
  Rng rng(5);
  BridgeTrainConfig cfg;
  cfg.shared_dim = 3;
  cfg.hidden = {8};
  cfg.conditional = false;
  BridgingVae m = init_bridge(4, 2, cfg, rng);
  save_bridge(pg.path, m);
  BridgingVae r = load_bridge(pg.path);
  EXPECT_EQ(r.latent_dim, 4);
  EXPECT_EQ(r.shared_dim, 3);
  EXPECT_EQ(r.num_classes, 2);
  EXPECT_FALSE(r.conditional);
  Rng rng2(6);
  Tensor z = random_tensor({6, 4}, rng2);
  EXPECT_TRUE(tensors_equal(bridge_embed(m, z, 0), bridge_embed(r, z, 0)));
  EXPECT_TRUE(tensors_equal(transfer_latents(m, z, 0, 1), transfer_latents(r, z, 0, 1)));
  EXPECT_TRUE(tensors_equal(bridge_classify(m, bridge_embed(m, z, 0)),
                            bridge_classify(r, bridge_embed(r, z, 0))));
}

TEST(ModelIo, LatentBankRoundTrip) {
  PathGuard pg("ltbr_bank_io.ckpt");
  Rng rng(7);
  LatentBank b;
  b.vectors = random_tensor({9, 3}, rng);
  b.labels = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  b.num_classes = 3;
  b.provenance = BankProvenance::PriorRejectionSampled;
  save_latent_bank(pg.path, b);
  LatentBank r = load_latent_bank(pg.path);
  EXPECT_TRUE(tensors_equal(r.vectors, b.vectors));
  EXPECT_EQ(r.labels, b.labels);
  EXPECT_EQ(r.num_classes, 3);
  EXPECT_EQ(r.provenance, BankProvenance::PriorRejectionSampled);
}

TEST(ModelIo, WrongTagAndTamperedMetadata) {
  PathGuard pg("ltbr_io_guard.ckpt");
  Rng rng(8);
  BaseVaeConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = {4};
  BetaVae m = init_beta_vae(3, cfg, rng);
  save_beta_vae(pg.path, m);

  try {
    load_classifier(pg.path);
    FAIL() << "wrong model tag accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Err::UnknownKind);
  }
  EXPECT_THROW(load_bridge(pg.path), Error);
  EXPECT_THROW(load_latent_bank(pg.path), Error);

  Checkpoint cp = load_checkpoint(pg.path);
  cp.set_meta("latent_dim", "7");
  save_checkpoint(pg.path, cp);
  try {
    load_beta_vae(pg.path);
    FAIL() << "inconsistent latent_dim accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Err::CorruptEntry);
  }

  cp.set_meta("latent_dim", "banana");
  save_checkpoint(pg.path, cp);
  EXPECT_THROW(load_beta_vae(pg.path), Error);
}

TEST(ModelIo, BankLabelMustBeIntegral) {
  PathGuard pg("ltbr_bank_bad.ckpt");
  Checkpoint cp;
  cp.add("vectors", Tensor({2, 2}, {1, 2, 3, 4}));
  cp.add("labels", Tensor({2}, {0.0, 1.5}));
  cp.set_meta("model", "latent_bank");
  cp.set_meta("num_classes", "2");
  cp.set_meta("provenance", "raw_vectors");
  save_checkpoint(pg.path, cp);
  try {
    load_latent_bank(pg.path);
    FAIL() << "fractional label accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Err::CorruptEntry);
  }
}
