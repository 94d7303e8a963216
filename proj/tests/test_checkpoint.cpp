#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ltbr/checkpoint.hpp"
#include "testutil.hpp"

using namespace ltbr;

TEST(Checkpoint, GoldenBytesForMinimalFile) {
  // One entry "w", shape {2}, values {1.0, 2.0}, no metadata. Laid out by hand
  // from the format contract.
  Checkpoint cp;
  cp.add("w", Tensor::row({1.0, 2.0}));
  std::vector<unsigned char> want = {
      'L', 'T', 'B', 'R',                              // magic
      0x01, 0x00, 0x00, 0x00,                          // version 1
      0x01, 0x00, 0x00, 0x00,                          // 1 entry
      0x01, 0x00, 0x00, 0x00, 'w',                     // name
      0x01, 0x00, 0x00, 0x00,                          // rank 1
      0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // dim 2
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F,  // 1.0
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x40,  // 2.0
      0x00, 0x00, 0x00, 0x00,                          // 0 metadata pairs
  };
  EXPECT_EQ(encode_checkpoint(cp), want);
  Checkpoint back = decode_checkpoint(want);
  ASSERT_EQ(back.entries.size(), 1u);
  EXPECT_EQ(back.entries[0].name, "w");
  EXPECT_EQ(back.entries[0].shape, Shape{2});
  EXPECT_DOUBLE_EQ(back.entries[0].data[1], 2.0);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  Checkpoint cp;
  cp.add("a.weight", Tensor({2, 3}, {0.1, -0.2, 1e-300, 3.5e10, -0.0, 7}));
  cp.add("a.bias", Tensor::scalar(-1.25));
  cp.add("bank/vectors", Tensor({2, 2}, {1, 2, 3, 4}));
  cp.set_meta("model", "test");
  cp.set_meta("latent_dim", "100");

  std::string path = testutil::temp_dir() + "/ltbr_test_cp.bin";
  save_checkpoint(path, cp);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  Checkpoint back = load_checkpoint(path);

  ASSERT_EQ(back.entries.size(), 3u);
  for (std::size_t i = 0; i < cp.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].name, cp.entries[i].name);
    EXPECT_EQ(back.entries[i].shape, cp.entries[i].shape);
    EXPECT_EQ(back.entries[i].data, cp.entries[i].data);  // bit-exact
  }
  EXPECT_EQ(back.metadata, cp.metadata);
  EXPECT_EQ(*back.meta("latent_dim"), "100");
  EXPECT_FALSE(back.meta("missing").has_value());

  // load -> save -> identical bytes
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(cp));
  std::remove(path.c_str());
}

TEST(Checkpoint, SaveOverwritesAtomically) {
  std::string path = testutil::temp_dir() + "/ltbr_test_cp2.bin";
  Checkpoint cp1;
  cp1.add("x", Tensor::scalar(1.0));
  save_checkpoint(path, cp1);
  Checkpoint cp2;
  cp2.add("x", Tensor::scalar(2.0));
  save_checkpoint(path, cp2);
  EXPECT_DOUBLE_EQ(load_checkpoint(path).tensor("x").item(), 2.0);
  std::remove(path.c_str());
}

TEST(Checkpoint, CorruptionErrorKinds) {
  Checkpoint cp;
  cp.add("w", Tensor::row({1.0, 2.0}));
  std::vector<unsigned char> good = encode_checkpoint(cp);

  auto expect_kind = [](const std::vector<unsigned char>& bytes, Err want, const char* label) {
    try {
      decode_checkpoint(bytes);
      FAIL() << label << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), want) << label << ": " << e.what();
    }
  };

  std::vector<unsigned char> bad_magic = good;
  bad_magic[0] = 'X';
  expect_kind(bad_magic, Err::BadMagic, "wrong magic");

  std::vector<unsigned char> bad_version = good;
  bad_version[4] = 9;
  expect_kind(bad_version, Err::VersionUnsupported, "future version");

  std::vector<unsigned char> truncated(good.begin(), good.begin() + 30);
  expect_kind(truncated, Err::TruncatedFile, "truncated payload");

  std::vector<unsigned char> absurd = good;
  absurd[21] = 0xFF;  // dim low byte -> enormous element count claim
  absurd[27] = 0x7F;  // dim high byte
  expect_kind(absurd, Err::CorruptEntry, "absurd dims");

  std::vector<unsigned char> name_overrun = good;
  name_overrun[12] = 0xFF;  // name length beyond file
  name_overrun[13] = 0xFF;
  expect_kind(name_overrun, Err::CorruptEntry, "name length overrun");
}

TEST(Checkpoint, ApiGuards) {
  Checkpoint cp;
  cp.add("w", Tensor::scalar(1.0));
  EXPECT_THROW(cp.add("w", Tensor::scalar(2.0)), Error);
  EXPECT_THROW(cp.tensor("nope"), Error);
  EXPECT_THROW(cp.meta_or_fail("nope"), Error);
  EXPECT_THROW(save_checkpoint("/nonexistent_dir_xyz/cp.bin", cp), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent_dir_xyz/cp.bin"), Error);
}
