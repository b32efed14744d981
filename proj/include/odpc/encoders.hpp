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
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "odpc/error.hpp"
#include "odpc/persist.hpp"
#include "odpc/rng.hpp"
#include "odpc/tensor.hpp"

namespace odpc {

inline constexpr int kDefaultFeatureDim = 512;

struct ToyEncoderConfig {
  std::uint64_t seed = 0;
  int raw_dim = 64;
  int out_dim = kDefaultFeatureDim;
};

// Frozen stand-in for a vision-language encoder: a seeded Gaussian projection
// followed by row normalization. Nothing here is trainable.
class ToyEncoder {
 public:
  explicit ToyEncoder(const ToyEncoderConfig& cfg) : cfg_(cfg) {
    require(cfg.raw_dim >= 1, ErrorKind::kInvalidArgument, "raw_dim must be >= 1");
    require(cfg.out_dim >= 1, ErrorKind::kInvalidArgument, "out_dim must be >= 1");
    Rng rng(mix_seed(cfg.seed, 0x70726f6aULL));
    projection_.resize(cfg.raw_dim, cfg.out_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.out_dim));
    for (Eigen::Index i = 0; i < projection_.rows(); ++i)
      for (Eigen::Index j = 0; j < projection_.cols(); ++j) projection_(i, j) = rng.normal() * scale;
  }

  const ToyEncoderConfig& config() const { return cfg_; }

  EmbeddingMatrix encode_raw(const MatrixD& raw) const {
    require(raw.cols() == cfg_.raw_dim, ErrorKind::kShape,
            "expected " + std::to_string(cfg_.raw_dim) + " input columns, got " +
                std::to_string(raw.cols()));
    require(raw.allFinite(), ErrorKind::kInvalidArgument, "non-finite encoder input");
    MatrixD projected = raw * projection_;
    EmbeddingMatrix out;
    out.values.resize(raw.rows(), cfg_.out_dim);
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
      const double norm = projected.row(r).norm();
      require(norm > 0.0, ErrorKind::kInvalidArgument,
              "row " + std::to_string(r) + " projects to zero; norm undefined");
      out.values.row(r) = (projected.row(r) / norm).cast<float>();
    }
    out.normalized = true;
    out.source = EmbeddingSource::kToy;
    return out;
  }

  /// Whitespace tokens hashed into a raw_dim bag-of-words count vector.
  MatrixD bag_of_words(std::span<const std::string> descriptions) const {
    MatrixD counts = MatrixD::Zero(static_cast<Eigen::Index>(descriptions.size()), cfg_.raw_dim);
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
      std::istringstream tokens(descriptions[i]);
      std::string token;
      bool any = false;
      while (tokens >> token) {
        const auto bucket = fnv1a(token) % static_cast<std::uint64_t>(cfg_.raw_dim);
        counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(bucket)) += 1.0;
        any = true;
      }
      require(any, ErrorKind::kInvalidArgument,
              "description " + std::to_string(i) + " is empty");
    }
    return counts;
  }

  EmbeddingMatrix encode_texts(std::span<const std::string> descriptions) const {
    return encode_raw(bag_of_words(descriptions));
  }

 private:
  ToyEncoderConfig cfg_;
  MatrixD projection_;
};

inline EmbeddingMatrix toy_encode_images(const MatrixD& raw_vectors, const ToyEncoderConfig& cfg) {
  return ToyEncoder(cfg).encode_raw(raw_vectors);
}

inline EmbeddingMatrix toy_encode_texts(std::span<const std::string> descriptions,
                                        const ToyEncoderConfig& cfg) {
  return ToyEncoder(cfg).encode_texts(descriptions);
}

inline EmbeddingMatrix import_embeddings(const std::filesystem::path& path) {
  return persist::read_bank(path);
}

}  // namespace odpc
