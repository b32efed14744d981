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
#include <vector>

#include <Eigen/Core>

#include "odpc/error.hpp"

namespace odpc {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;
using VectorD = Vector<double>;

enum class EmbeddingSource : std::uint8_t { kToy, kImported };

/// Rows of float32 features produced by a frozen encoder (or loaded from disk).
struct EmbeddingMatrix {
  MatrixF values;
  bool normalized = false;
  EmbeddingSource source = EmbeddingSource::kToy;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

inline constexpr double kUnitNormTolerance = 1e-4;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// Checks finiteness and, when the matrix claims it, unit row norms.
inline void validate(const EmbeddingMatrix& m) {
  require(m.values.allFinite(), ErrorKind::kInvalidArgument,
          "embedding matrix contains non-finite values");
  if (!m.normalized) return;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.values.row(r).template cast<double>().norm();
    require(std::abs(norm - 1.0) < kUnitNormTolerance, ErrorKind::kInvalidArgument,
            "row " + std::to_string(r) + " is flagged normalized but has norm " +
                std::to_string(norm));
  }
}

/// Row-wise L2 normalization. Rows with norm below `eps` are scaled by 1/eps,
/// matching the usual clamped-norm convention.
template <typename T>
Matrix<T> normalize_rows(const Matrix<T>& m, T eps = T(1e-12)) {
  Matrix<T> out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const T norm = std::max(m.row(r).norm(), eps);
    out.row(r) = m.row(r) / norm;
  }
  return out;
}

/// Gathers rows `index[i]` of `m` into a new matrix.
template <typename T>
Matrix<T> gather_rows(const Matrix<T>& m, const std::vector<std::size_t>& index) {
  Matrix<T> out(static_cast<Eigen::Index>(index.size()), m.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(index[i]));
  }
  return out;
}

}  // namespace odpc
