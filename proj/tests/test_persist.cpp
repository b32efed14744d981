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
#include "odpc/persist.hpp"

#include <filesystem>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace odpc::persist {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "odpc_persist_test";
  fs::create_directories(dir);
  return dir / name;
}

TEST(BankFileTest, RoundtripIsBitwise) {
  Rng rng(1);
  const MatrixF m = oracle::random_matrix<float>(rng, 37, 1536);
  const auto decoded = decode_bank(encode_bank(m, true));
  EXPECT_EQ(decoded.values, m);
  EXPECT_TRUE(decoded.normalized);
}

TEST(BankFileTest, FlippedPayloadByteIsCorruption) {
  Rng rng(2);
  auto bytes = encode_bank(oracle::random_matrix<float>(rng, 5, 6), false);
  bytes[kBankHeaderBytes + 7] ^= 0x01;
  try {
    decode_bank(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorruption);
  }
}

TEST(BankFileTest, EmptyMatrixRoundtrips) {
  const MatrixF empty(0, 12);
  write_bank({empty, true, EmbeddingSource::kToy}, scratch("empty.bin"));
  const auto back = read_bank(scratch("empty.bin"));
  EXPECT_EQ(back.rows(), 0);
  EXPECT_EQ(back.dim(), 12);
}

TEST(BankFileTest, HeaderSizeMismatch) {
  auto bytes = encode_bank(MatrixF::Ones(3, 3), false);
  bytes[12] = 4;  // rows field
  try {
    decode_bank(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

TEST(BankFileTest, RejectsNonFinite) {
  MatrixF m = MatrixF::Ones(2, 2);
  m(1, 1) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(encode_bank(m, false), Error);
}

TEST(AtomicWriteTest, ReplacesAndLeavesNoTemp) {
  const auto p = scratch("atomic.txt");
  atomic_write_text(p, "first");
  atomic_write_text(p, "second");
  EXPECT_EQ(read_text(p), "second");
  for (const auto& e : fs::directory_iterator(p.parent_path()))
    EXPECT_EQ(e.path().filename().string().find(".tmp"), std::string::npos) << e.path();
}

TEST(JsonTest, ParseErrorIsFormat) {
  const auto p = scratch("bad.json");
  atomic_write_text(p, "{not json");
  try {
    read_json(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

TEST(Crc32Test, KnownVector) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())), 0xCBF43926u);
}

}  // namespace
}  // namespace odpc::persist
