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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "odpc/error.hpp"
#include "odpc/head.hpp"
#include "odpc/persist.hpp"
#include "odpc/tensor.hpp"

namespace odpc {

enum class KnnBackend { kExact, kIndexed };

inline KnnBackend parse_knn_backend(std::string_view s) {
  if (s == "exact") return KnnBackend::kExact;
  if (s == "indexed") return KnnBackend::kIndexed;
  fail(ErrorKind::kConfiguration, "unknown knn backend '" + std::string(s) + "'");
}

struct KnnConfig {
  int k = 200;
  double target_tpr = 0.95;
  KnnBackend backend = KnnBackend::kIndexed;

  void validate() const {
    require(k >= 1, ErrorKind::kConfiguration, "k must be >= 1");
    require(target_tpr > 0.0 && target_tpr <= 1.0, ErrorKind::kConfiguration,
            "target_tpr must lie in (0, 1]");
  }
};

/// ID training features after the per-layer normalize-and-concatenate
/// transform. Immutable once built.
struct FeatureBank {
  MatrixF vectors;
  std::vector<int> layer_dims;
  std::string built_from;

  Eigen::Index rows() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
};

/// Normalizes each layer block row-wise and concatenates the blocks.
template <typename T>
MatrixF concat_normalized(const std::vector<const Matrix<T>*>& layers) {
  require(!layers.empty(), ErrorKind::kInvalidArgument, "no layers to concatenate");
  const Eigen::Index rows = layers.front()->rows();
  Eigen::Index width = 0;
  for (const auto* m : layers) {
    require(m->rows() == rows, ErrorKind::kShape, "layer blocks differ in row count");
    width += m->cols();
  }
  MatrixF out(rows, width);
  Eigen::Index offset = 0;
  for (const auto* m : layers) {
    const MatrixD block = normalize_rows(MatrixD(m->template cast<double>()));
    out.middleCols(offset, m->cols()) = block.cast<float>();
    offset += m->cols();
  }
  return out;
}

/// Query/bank embedding: every projection layer's output, normalized per layer
/// and concatenated (classifier logits are not used).
template <typename T>
MatrixF knn_embedding(const BasicMlpHead<T>& head, const MatrixF& features) {
  const auto hidden = project(head, Matrix<T>(features.cast<T>()));
  std::vector<const Matrix<T>*> blocks;
  for (const auto& h : hidden) blocks.push_back(&h);
  return concat_normalized(blocks);
}

template <typename T>
FeatureBank build_bank(const BasicMlpHead<T>& head, const EmbeddingMatrix& train_features,
                       std::string built_from = {}) {
  require(train_features.rows() > 0, ErrorKind::kInvalidArgument, "empty training set");
  FeatureBank bank;
  bank.vectors = knn_embedding(head, train_features.values);
  bank.layer_dims.assign(head.hidden_dims.begin(), head.hidden_dims.end());
  bank.built_from = std::move(built_from);
  return bank;
}

/// Encoder features repeated `copies` times; the untrained reference that
/// matches the width of a trained bank.
inline MatrixF passthrough_embedding(const MatrixF& features, int copies = kProjectionLayers) {
  std::vector<const MatrixF*> blocks(static_cast<std::size_t>(copies), &features);
  return concat_normalized(blocks);
}

inline FeatureBank passthrough_bank(const EmbeddingMatrix& features, int copies = kProjectionLayers) {
  require(features.rows() > 0, ErrorKind::kInvalidArgument, "empty training set");
  FeatureBank bank;
  bank.vectors = passthrough_embedding(features.values, copies);
  bank.layer_dims.assign(static_cast<std::size_t>(copies), static_cast<int>(features.dim()));
  bank.built_from = "passthrough";
  return bank;
}

namespace detail {

inline void check_query(Eigen::Index query_dim, const FeatureBank& bank, int k) {
  require(query_dim == bank.dim(), ErrorKind::kShape,
          "query width " + std::to_string(query_dim) + " differs from bank width " +
              std::to_string(bank.dim()));
  require(k >= 1 && k <= bank.rows(), ErrorKind::kInvalidArgument,
          "k=" + std::to_string(k) + " outside [1, " + std::to_string(bank.rows()) + "]");
}

}  // namespace detail

/// Euclidean distance to the k-th nearest bank row by full scan and sort,
/// ties ordered by bank row index. This is the reference implementation.
inline double knn_score(const Eigen::Ref<const Eigen::RowVectorXf>& query, const FeatureBank& bank, int k) {
  detail::check_query(query.size(), bank, k);
  std::vector<std::pair<double, Eigen::Index>> dist;
  dist.reserve(static_cast<std::size_t>(bank.rows()));
  for (Eigen::Index r = 0; r < bank.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < bank.dim(); ++c) {
      const double diff = static_cast<double>(query(c)) - static_cast<double>(bank.vectors(r, c));
      s += diff * diff;
    }
    dist.emplace_back(std::sqrt(s), r);
  }
  std::sort(dist.begin(), dist.end());
  return dist[static_cast<std::size_t>(k - 1)].first;
}

/// Flat L2 index: cached row norms and blocked matrix products with partial
/// selection. Agrees with knn_score to rounding.
class KnnIndex {
 public:
  explicit KnnIndex(const FeatureBank& bank) : bank_(&bank) {
    require(bank.rows() > 0, ErrorKind::kInvalidArgument, "cannot index an empty bank");
    data_ = bank.vectors.cast<double>();
    sq_norms_ = data_.rowwise().squaredNorm();
  }

  Eigen::Index rows() const { return data_.rows(); }

  std::vector<double> scores(const MatrixF& queries, int k) const {
    detail::check_query(queries.cols(), *bank_, k);
    std::vector<double> out(static_cast<std::size_t>(queries.rows()));
    constexpr Eigen::Index kBlock = 256;
    std::vector<std::pair<double, Eigen::Index>> row;
    row.reserve(static_cast<std::size_t>(data_.rows()));
    for (Eigen::Index start = 0; start < queries.rows(); start += kBlock) {
      const Eigen::Index count = std::min(kBlock, queries.rows() - start);
      const MatrixD q = queries.middleRows(start, count).cast<double>();
      const VectorD q_sq = q.rowwise().squaredNorm();
      const MatrixD cross = q * data_.transpose();
      for (Eigen::Index i = 0; i < count; ++i) {
        row.clear();
        for (Eigen::Index r = 0; r < data_.rows(); ++r) {
          const double d2 = std::max(0.0, q_sq(i) + sq_norms_(r) - 2.0 * cross(i, r));
          row.emplace_back(d2, r);
        }
        auto kth = row.begin() + (k - 1);
        std::nth_element(row.begin(), kth, row.end());
        out[static_cast<std::size_t>(start + i)] = std::sqrt(kth->first);
      }
    }
    return out;
  }

 private:
  const FeatureBank* bank_;
  MatrixD data_;
  VectorD sq_norms_;
};

inline std::vector<double> knn_scores(const MatrixF& queries, const FeatureBank& bank, int k,
                                      KnnBackend backend) {
  if (backend == KnnBackend::kIndexed) return KnnIndex(bank).scores(queries, k);
  detail::check_query(queries.cols(), bank, k);
  std::vector<double> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    out[static_cast<std::size_t>(i)] = knn_score(queries.row(i), bank, k);
  return out;
}

/// Linear-interpolated empirical quantile (the (n-1)p rank rule).
inline double calibrate_threshold(std::vector<double> id_holdout_scores, double target_tpr) {
  require(!id_holdout_scores.empty(), ErrorKind::kInvalidArgument, "no holdout scores");
  require(target_tpr >= 0.0 && target_tpr <= 1.0, ErrorKind::kInvalidArgument,
          "target_tpr must lie in [0, 1]");
  std::sort(id_holdout_scores.begin(), id_holdout_scores.end());
  const double h = static_cast<double>(id_holdout_scores.size() - 1) * target_tpr;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, id_holdout_scores.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return id_holdout_scores[lo] + frac * (id_holdout_scores[hi] - id_holdout_scores[lo]);
}

enum class Decision { kId, kOod };

inline std::string_view to_string(Decision d) { return d == Decision::kId ? "ID" : "OOD"; }

inline Decision detect(double score, double threshold) {
  return score > threshold ? Decision::kOod : Decision::kId;
}

// Bank files reuse the feature-bank binary layout. The per-layer widths are
// not stored; a bank file is read back as equal-width layer blocks.
inline void write_feature_bank(const FeatureBank& bank, const std::filesystem::path& path) {
  persist::atomic_write(path, persist::encode_bank(bank.vectors, false));
}

inline FeatureBank read_feature_bank(const std::filesystem::path& path, int layers = kProjectionLayers) {
  auto m = persist::read_bank(path);
  require(m.dim() % layers == 0, ErrorKind::kFormat, "bank width is not a multiple of the layer count");
  FeatureBank bank;
  bank.vectors = std::move(m.values);
  bank.layer_dims.assign(static_cast<std::size_t>(layers), static_cast<int>(bank.dim() / layers));
  bank.built_from = path.filename().string();
  Eigen::Index offset = 0;
  for (int w : bank.layer_dims) {
    for (Eigen::Index r = 0; r < bank.rows(); ++r) {
      const double norm = bank.vectors.row(r).segment(offset, w).cast<double>().norm();
      require(std::abs(norm - 1.0) < kUnitNormTolerance, ErrorKind::kFormat,
              "bank row " + std::to_string(r) + " has a non-unit layer segment");
    }
    offset += w;
  }
  return bank;
}

inline std::string scores_csv(const std::vector<std::string>& ids, const std::vector<double>& scores,
                              double threshold) {
  require(ids.size() == scores.size(), ErrorKind::kShape, "ids and scores differ in length");
  std::string out = "sample_id,score,decision\n";
  char buf[64];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", scores[i]);
    out += ids[i] + "," + buf + "," + std::string(to_string(detect(scores[i], threshold))) + "\n";
  }
  return out;
}

}  // namespace odpc
