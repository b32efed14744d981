/* Copyright 2026 The ODPC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "odpc/head.hpp"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace odpc {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "odpc_head_test";
  fs::create_directories(dir);
  return dir / name;
}

TEST(InitHeadTest, OutputCountIncludesPeers) {
  const auto head = init_head(6, 18, 1);
  EXPECT_EQ(head.num_outputs(), 24);
  EXPECT_EQ(head.params.classifier_weight.rows(), 24);
  EXPECT_EQ(head.params.classifier_weight.cols(), 512);
  EXPECT_EQ(head.params.weights[0].cols(), 512);
  EXPECT_EQ(head.feature_dim(), 512);
}

TEST(InitHeadTest, SameSeedSameParameters) {
  const auto a = init_head(6, 18, 77);
  const auto b = init_head(6, 18, 77);
  const auto c = init_head(6, 18, 78);
  EXPECT_EQ(a.params.weights[1], b.params.weights[1]);
  EXPECT_EQ(a.params.classifier_weight, b.params.classifier_weight);
  EXPECT_NE(a.params.weights[1], c.params.weights[1]);
}

TEST(InitHeadTest, NeedsTwoClasses) {
  EXPECT_THROW(init_head(1, 0, 0), Error);
  EXPECT_THROW(init_head(3, -1, 0), Error);
}

TEST(InitHeadTest, UniformFanInBound) {
  HeadShape shape{16, {8, 8, 4}};
  const auto head = init_head(3, 2, 9, shape);
  EXPECT_LE(head.params.weights[0].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(16.0));
  EXPECT_LE(head.params.weights[1].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(8.0));
  EXPECT_TRUE(head.params.biases[2].isZero());
}

TEST(ForwardTest, ZeroWeightsGiveUniformProbabilities) {
  HeadShape shape{10, {6, 6, 6}};
  auto head = init_head(4, 3, 5, shape);
  head.params = head.params.zeros_like();
  Rng rng(1);
  const MatrixF x = oracle::random_matrix<float>(rng, 5, 10);
  const auto act = forward(head, x);
  for (const auto& h : act.per_layer) EXPECT_TRUE(h.isZero());
  for (Eigen::Index r = 0; r < 5; ++r)
    for (Eigen::Index c = 0; c < 7; ++c) EXPECT_FLOAT_EQ(act.probabilities(r, c), 1.0f / 7.0f);
}

TEST(ForwardTest, EmptyBatch) {
  const auto head = init_head(3, 0, 2, HeadShape{8, {4, 4, 4}});
  const auto act = forward(head, MatrixF(0, 8));
  EXPECT_EQ(act.logits.rows(), 0);
  EXPECT_EQ(act.logits.cols(), 3);
  EXPECT_EQ(act.per_layer[2].rows(), 0);
}

TEST(ForwardTest, WrongWidthIsShapeError) {
  const auto head = init_head(3, 0, 2, HeadShape{8, {4, 4, 4}});
  try {
    forward(head, MatrixF(MatrixF::Zero(2, 9)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(ForwardTest, MatchesLoopMatmul) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    HeadShape shape{24, {16, 12, 8}};
    auto head = init_head(5, 4, seed, shape);
    Rng rng(seed + 50);
    for (auto& b : head.params.biases) b = oracle::random_matrix<float>(rng, b.size(), 1, 0.1);
    const MatrixF x = oracle::random_matrix<float>(rng, 7, 24);
    const auto act = forward(head, x);
    const auto want = oracle::forward(head, oracle::to_rows(x));
    for (int l = 0; l < kProjectionLayers; ++l)
      for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t c = 0; c < want.layers[l][r].size(); ++c)
          EXPECT_NEAR(act.per_layer[l](r, c), want.layers[l][r][c], 1e-5);
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 9; ++c) EXPECT_NEAR(act.logits(r, c), want.logits[r][c], 1e-5);
  }
}

TEST(ForwardTest, ProbabilitiesSumToOne) {
  const auto head = init_head(6, 18, 3);
  Rng rng(2);
  const auto act = forward(head, oracle::random_matrix<float>(rng, 4, 512));
  for (Eigen::Index r = 0; r < 4; ++r) EXPECT_NEAR(act.probabilities.row(r).sum(), 1.0f, 1e-5f);
}

TEST(CheckpointTest, RoundtripIsBitwise) {
  auto head = init_head(6, 18, 12);
  head.epoch = 3;
  head.id_labels = {"a", "b", "c", "d", "e", "f"};
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(head, path);
  const auto back = load_checkpoint(path);
  for (int l = 0; l < kProjectionLayers; ++l) {
    EXPECT_EQ(back.params.weights[l], head.params.weights[l]);
    EXPECT_EQ(back.params.biases[l], head.params.biases[l]);
  }
  EXPECT_EQ(back.params.classifier_weight, head.params.classifier_weight);
  EXPECT_EQ(back.params.classifier_bias, head.params.classifier_bias);
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.seed, 12u);
  EXPECT_EQ(back.id_labels, head.id_labels);
}

TEST(CheckpointTest, MissingFileIsNotFound) {
  try {
    load_checkpoint(temp_path("does_not_exist.ckpt"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotFound);
  }
}

TEST(CheckpointTest, FlippedByteIsCorruption) {
  auto bytes = encode_checkpoint(init_head(3, 1, 4, HeadShape{8, {4, 4, 4}}));
  bytes[bytes.size() - 10] ^= 0x40;
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorruption);
  }
}

TEST(CheckpointTest, ManifestShapeMismatchIsFormatError) {
  const auto head = init_head(3, 1, 4, HeadShape{8, {4, 4, 4}});
  auto manifest = checkpoint_manifest(head);
  manifest["tensors"][0]["shape"] = {5, 8};
  // Re-assemble a file whose CRC is valid but whose manifest lies.
  persist::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  const std::string text = manifest.dump();
  w.put_u32(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text);
  head.params.for_each([&](const std::string&, const float* d, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) w.put_f32(d[i]);
  });
  const auto body = std::span(w.bytes()).subspan(12);
  w.put_u32(persist::crc32(body));
  try {
    decode_checkpoint(w.bytes());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

TEST(CheckpointTest, TruncatedAndBadMagic) {
  auto bytes = encode_checkpoint(init_head(2, 0, 1, HeadShape{4, {2, 2, 2}}));
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 10);
  EXPECT_THROW(decode_checkpoint(cut), Error);
  bytes[0] = 'X';
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

}  // namespace
}  // namespace odpc
