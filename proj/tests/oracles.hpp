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
// Reference implementations for the tests. Plain loops over std::vector,
// float64 throughout, nothing shared with the library code under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "odpc/head.hpp"
#include "odpc/rng.hpp"
#include "odpc/tensor.hpp"

namespace odpc::oracle {

using Rows = std::vector<std::vector<double>>;

template <typename M>
Rows to_rows(const M& m) {
  Rows out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = static_cast<double>(m(r, c));
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> unit(const std::vector<double>& v) {
  double n = std::sqrt(dot(v, v));
  if (n < 1e-12) n = 1e-12;
  std::vector<double> out(v);
  for (double& x : out) x /= n;
  return out;
}

inline Rows unit_rows(const Rows& m) {
  Rows out;
  for (const auto& r : m) out.push_back(unit(r));
  return out;
}

// log(sum(exp(v))) with the maximum pulled out.
inline double lse(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Per-layer contrastive term. literal=false averages -log(pos/(pos+negs))
/// over anchors; literal=true returns -log(mean(pos/negs)).
inline double pcc(const Rows& img, const Rows& txt, const Rows& mixed_img, const Rows& mixed_txt,
                  double tau, bool literal = false) {
  const std::size_t n = img.size();
  const Rows a = unit_rows(img), t = unit_rows(txt), mi = unit_rows(mixed_img), mt = unit_rows(mixed_txt);
  double acc = 0.0;
  std::vector<double> ratios;
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = dot(a[i], t[i]) / tau;
    std::vector<double> negs;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      if (!mi.empty()) negs.push_back(dot(a[i], mi[k]) / tau);
      negs.push_back(dot(a[i], t[k]) / tau);
      if (!mt.empty()) negs.push_back(dot(a[i], mt[k]) / tau);
    }
    if (literal) {
      ratios.push_back(pos - lse(negs));
    } else {
      std::vector<double> all = negs;
      all.push_back(pos);
      acc += lse(all) - pos;
    }
  }
  if (literal) return -(lse(ratios) - std::log(static_cast<double>(n)));
  return acc / static_cast<double>(n);
}

inline double ce(const Rows& logits, const std::vector<int>& labels) {
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) acc += lse(logits[i]) - logits[i][static_cast<std::size_t>(labels[i])];
  return acc / static_cast<double>(logits.size());
}

/// y = relu(x W^T + b), one row at a time.
inline Rows dense(const Rows& x, const Rows& w, const std::vector<double>& b, bool relu) {
  Rows out;
  for (const auto& row : x) {
    std::vector<double> y(w.size());
    for (std::size_t o = 0; o < w.size(); ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < row.size(); ++i) s += w[o][i] * row[i];
      y[o] = relu ? std::max(0.0, s) : s;
    }
    out.push_back(std::move(y));
  }
  return out;
}

template <typename T>
std::vector<double> to_vec(const Vector<T>& v) {
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(v(i));
  return out;
}

struct Forward {
  std::vector<Rows> layers;
  Rows logits;
};

template <typename T>
Forward forward(const BasicMlpHead<T>& head, const Rows& x) {
  Forward f;
  const Rows* h = &x;
  for (int l = 0; l < kProjectionLayers; ++l) {
    f.layers.push_back(dense(*h, to_rows(head.params.weights[l]), to_vec(head.params.biases[l]), true));
    h = &f.layers.back();
  }
  f.logits = dense(*h, to_rows(head.params.classifier_weight), to_vec(head.params.classifier_bias), false);
  return f;
}

inline Rows slice(const Rows& m, std::size_t start, std::size_t count) {
  return Rows(m.begin() + static_cast<std::ptrdiff_t>(start), m.begin() + static_cast<std::ptrdiff_t>(start + count));
}

/// Whole objective: three per-layer contrastive terms on [I; T; I_m; T_m]
/// plus cross-entropy on the image rows.
template <typename T>
double total_loss(const BasicMlpHead<T>& head, const Rows& images, const Rows& texts, const Rows& mixed_images,
                  const Rows& mixed_texts, const std::vector<int>& labels, double tau, bool literal = false) {
  const std::size_t n = images.size();
  const bool mix = !mixed_images.empty();
  Rows x = images;
  x.insert(x.end(), texts.begin(), texts.end());
  if (mix) {
    x.insert(x.end(), mixed_images.begin(), mixed_images.end());
    x.insert(x.end(), mixed_texts.begin(), mixed_texts.end());
  }
  const Forward f = forward(head, x);
  double total = 0.0;
  for (const auto& h : f.layers) {
    total += pcc(slice(h, 0, n), slice(h, n, n), mix ? slice(h, 2 * n, n) : Rows{},
                 mix ? slice(h, 3 * n, n) : Rows{}, tau, literal);
  }
  total += ce(slice(f.logits, 0, n), labels);
  return total;
}

/// k-th smallest Euclidean distance by brute force.
inline double kth_distance(const std::vector<double>& q, const Rows& bank, int k) {
  std::vector<double> d;
  for (const auto& r : bank) {
    double s = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) s += (q[c] - r[c]) * (q[c] - r[c]);
    d.push_back(std::sqrt(s));
  }
  std::sort(d.begin(), d.end());
  return d[static_cast<std::size_t>(k - 1)];
}

/// AUROC as (2 * #(ood > id) + #(ood == id), 2 * n_id * n_ood) by visiting
/// every pair.
inline std::pair<std::uint64_t, std::uint64_t> auroc_pairs(const std::vector<double>& id,
                                                           const std::vector<double>& ood) {
  std::uint64_t num = 0;
  for (double o : ood)
    for (double i : id) num += o > i ? 2 : (o == i ? 1 : 0);
  return {num, 2 * static_cast<std::uint64_t>(id.size()) * ood.size()};
}

template <typename T = double>
Matrix<T> random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<T>(rng.normal() * scale);
  return m;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace odpc::oracle
