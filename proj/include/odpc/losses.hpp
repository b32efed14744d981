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
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "odpc/error.hpp"
#include "odpc/head.hpp"
#include "odpc/rng.hpp"
#include "odpc/tensor.hpp"

namespace odpc {

/// kPerAnchor: mean_i -log(pos_i / (pos_i + negs_i)).
/// kLiteral:   -log(mean_i pos_i / negs_i), positive absent from the denominator.
enum class PccForm { kPerAnchor, kLiteral };

struct LossConfig {
  double temperature = 0.005;
  double mix_lambda = 0.5;
  PccForm form = PccForm::kPerAnchor;
  // Ablation switches. With use_mixup off the negative set is still built
  // from partner images and peer texts, just without interpolation
  // (lambda = 0).
  bool use_pcc = true;
  bool use_ce = true;
  bool use_mixup = true;

  void validate() const {
    require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::kInvalidArgument,
            "temperature must be > 0");
    require(mix_lambda >= 0.0 && mix_lambda <= 1.0, ErrorKind::kInvalidArgument,
            "mix_lambda must lie in [0, 1]");
    require(use_pcc || use_ce, ErrorKind::kConfiguration, "at least one loss term must be enabled");
  }
};

/// Interpolation weight actually used to build negatives.
inline double effective_lambda(const LossConfig& cfg) { return cfg.use_mixup ? cfg.mix_lambda : 0.0; }

/// Image features, their class labels and the encoded description of each
/// sample's class (row i of `texts` pairs with row i of `images`).
template <typename T>
struct TrainingBatch {
  Matrix<T> images;
  Matrix<T> texts;
  std::vector<int> labels;

  Eigen::Index size() const { return images.rows(); }
};

template <typename T>
struct NegativeSet {
  Matrix<T> mixed_images;
  Matrix<T> mixed_texts;
  std::vector<std::size_t> q_indices;  // partner image for each row
  std::vector<std::size_t> p_choices;  // peer index within the anchor's class
};

template <typename T>
Vector<T> mixup(const Vector<T>& a, const Vector<T>& b, double lambda) {
  require(a.size() == b.size(), ErrorKind::kShape, "mixup operands differ in dimension");
  return static_cast<T>(lambda) * a + static_cast<T>(1.0 - lambda) * b;
}

/// Mixes each image with a random same-batch image of another class and each
/// paired text with a random peer description of the same class.
template <typename T>
NegativeSet<T> build_negative_set(const TrainingBatch<T>& batch,
                                  const std::vector<Matrix<T>>& peer_text_features, double lambda,
                                  Rng& rng) {
  const auto n = static_cast<std::size_t>(batch.size());
  require(batch.labels.size() == n && batch.texts.rows() == batch.images.rows(), ErrorKind::kShape,
          "batch images, texts and labels disagree in length");
  require(batch.texts.cols() == batch.images.cols(), ErrorKind::kShape,
          "image and text features differ in dimension");
  NegativeSet<T> out;
  out.mixed_images.resize(batch.images.rows(), batch.images.cols());
  out.mixed_texts.resize(batch.texts.rows(), batch.texts.cols());
  out.q_indices.resize(n);
  out.p_choices.resize(n);
  std::vector<std::size_t> others;
  others.reserve(n);
  const T lam = static_cast<T>(lambda);
  const T rest = static_cast<T>(1.0 - lambda);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = batch.labels[i];
    others.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (batch.labels[j] != y) others.push_back(j);
    require(!others.empty(), ErrorKind::kDegenerateBatch,
            "batch holds a single class; no mixup partner exists");
    require(y >= 0 && static_cast<std::size_t>(y) < peer_text_features.size(),
            ErrorKind::kConfiguration, "no peer features for class " + std::to_string(y));
    const auto& peers = peer_text_features[static_cast<std::size_t>(y)];
    require(peers.rows() > 0, ErrorKind::kConfiguration,
            "class " + std::to_string(y) + " has no peer descriptions");
    require(peers.cols() == batch.texts.cols(), ErrorKind::kShape,
            "peer features differ in dimension from text features");
    const std::size_t q = others[rng.below(others.size())];
    const std::size_t p = rng.below(static_cast<std::size_t>(peers.rows()));
    const auto ri = static_cast<Eigen::Index>(i);
    out.mixed_images.row(ri) = lam * batch.images.row(ri) + rest * batch.images.row(static_cast<Eigen::Index>(q));
    out.mixed_texts.row(ri) = lam * batch.texts.row(ri) + rest * peers.row(static_cast<Eigen::Index>(p));
    out.q_indices[i] = q;
    out.p_choices[i] = p;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Peer-class contrastive loss on one layer.

struct PccResult {
  double loss = 0.0;
  MatrixD grad_img;
  MatrixD grad_txt_pos;
  MatrixD grad_txt_all;
  MatrixD grad_mixed_img;
  MatrixD grad_mixed_txt;
};

namespace detail {

inline constexpr double kNormEps = 1e-12;

inline VectorD row_norms(const MatrixD& x) {
  VectorD n(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) n(r) = std::max(x.row(r).norm(), kNormEps);
  return n;
}

inline MatrixD scale_rows(const MatrixD& x, const VectorD& norms) {
  return norms.cwiseInverse().asDiagonal() * x;
}

// Gradient through a <- x / max(|x|, eps), given dL/da.
inline MatrixD normalize_backward(const MatrixD& x, const MatrixD& a, const VectorD& norms,
                                  const MatrixD& grad_a) {
  MatrixD out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (x.row(r).norm() > kNormEps) {
      const double dot = a.row(r).dot(grad_a.row(r));
      out.row(r) = (grad_a.row(r) - dot * a.row(r)) / norms(r);
    } else {
      out.row(r) = grad_a.row(r) / norms(r);
    }
  }
  return out;
}

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

}  // namespace detail

/// Contrastive loss of one projection layer. Every row is L2-normalized before
/// the dot products. For anchor i the positive is txt_pos[i]; the negatives are
/// mixed_img[k], txt_all[k] and mixed_txt[k] for every k != i. Empty mixed
/// matrices drop those negatives.
inline PccResult pcc_loss_with_grad(const MatrixD& img, const MatrixD& txt_pos, const MatrixD& txt_all,
                                    const MatrixD& mixed_img, const MatrixD& mixed_txt,
                                    double temperature, PccForm form = PccForm::kPerAnchor,
                                    bool want_grad = true) {
  require(temperature > 0.0, ErrorKind::kInvalidArgument, "temperature must be > 0");
  const Eigen::Index n = img.rows();
  require(n >= 2, ErrorKind::kDegenerateBatch, "contrastive loss needs at least 2 anchors");
  const Eigen::Index d = img.cols();
  auto check = [&](const MatrixD& m, const char* what, bool optional) {
    if (optional && m.size() == 0) return;
    require(m.rows() == n && m.cols() == d, ErrorKind::kShape,
            std::string(what) + " must be " + std::to_string(n) + "x" + std::to_string(d));
  };
  check(txt_pos, "txt_pos", false);
  check(txt_all, "txt_all", false);
  check(mixed_img, "mixed_img", true);
  check(mixed_txt, "mixed_txt", true);
  const bool has_mi = mixed_img.size() > 0;
  const bool has_mt = mixed_txt.size() > 0;

  const double inv_tau = 1.0 / temperature;
  const VectorD n_img = detail::row_norms(img), n_pos = detail::row_norms(txt_pos),
                n_all = detail::row_norms(txt_all);
  const MatrixD a = detail::scale_rows(img, n_img);
  const MatrixD p = detail::scale_rows(txt_pos, n_pos);
  const MatrixD t = detail::scale_rows(txt_all, n_all);
  VectorD n_mi, n_mt;
  MatrixD mi, mt;
  if (has_mi) {
    n_mi = detail::row_norms(mixed_img);
    mi = detail::scale_rows(mixed_img, n_mi);
  }
  if (has_mt) {
    n_mt = detail::row_norms(mixed_txt);
    mt = detail::scale_rows(mixed_txt, n_mt);
  }

  const VectorD pos = (a.cwiseProduct(p)).rowwise().sum() * inv_tau;
  const MatrixD s_txt = a * t.transpose() * inv_tau;
  MatrixD s_mi, s_mt;
  if (has_mi) s_mi = a * mi.transpose() * inv_tau;
  if (has_mt) s_mt = a * mt.transpose() * inv_tau;

  // Per-anchor logits laid out as [pos, negs...]; softmax weights kept for the
  // backward pass.
  const std::size_t blocks = 1 + (has_mi ? 1 : 0) + (has_mt ? 1 : 0);
  const std::size_t negs = blocks * static_cast<std::size_t>(n - 1);
  std::vector<double> logits(negs + 1);
  VectorD dpos = VectorD::Zero(n);
  MatrixD ds_txt = MatrixD::Zero(n, n), ds_mi, ds_mt;
  if (has_mi) ds_mi = MatrixD::Zero(n, n);
  if (has_mt) ds_mt = MatrixD::Zero(n, n);

  VectorD ratio_log(n);     // literal form: pos_i - lse(negs_i)
  VectorD lse_all(n);       // per-anchor: lse(pos_i, negs_i)
  VectorD lse_negs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t c = 0;
    logits[c++] = pos(i);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      if (has_mi) logits[c++] = s_mi(i, k);
      logits[c++] = s_txt(i, k);
      if (has_mt) logits[c++] = s_mt(i, k);
    }
    lse_all(i) = detail::log_sum_exp(logits.data(), logits.size());
    lse_negs(i) = detail::log_sum_exp(logits.data() + 1, negs);
    ratio_log(i) = pos(i) - lse_negs(i);
  }

  PccResult out;
  VectorD anchor_weight(n);  // literal form: softmax over anchors of ratio_log
  if (form == PccForm::kPerAnchor) {
    out.loss = (lse_all - pos).mean();
  } else {
    const double lse_r = detail::log_sum_exp(ratio_log.data(), static_cast<std::size_t>(n));
    out.loss = -(lse_r - std::log(static_cast<double>(n)));
    anchor_weight = (ratio_log.array() - lse_r).exp();
  }
  if (!want_grad) return out;

  for (Eigen::Index i = 0; i < n; ++i) {
    // dL/dlogit for the positive and each negative of anchor i.
    double g_pos, scale_neg, ref;
    if (form == PccForm::kPerAnchor) {
      ref = lse_all(i);
      g_pos = (std::exp(pos(i) - ref) - 1.0) / static_cast<double>(n);
      scale_neg = 1.0 / static_cast<double>(n);
    } else {
      ref = lse_negs(i);
      g_pos = -anchor_weight(i);
      scale_neg = anchor_weight(i);
    }
    dpos(i) = g_pos;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      if (has_mi) ds_mi(i, k) = scale_neg * std::exp(s_mi(i, k) - ref);
      ds_txt(i, k) = scale_neg * std::exp(s_txt(i, k) - ref);
      if (has_mt) ds_mt(i, k) = scale_neg * std::exp(s_mt(i, k) - ref);
    }
  }

  MatrixD ga = dpos.asDiagonal() * p + ds_txt * t;
  if (has_mi) ga += ds_mi * mi;
  if (has_mt) ga += ds_mt * mt;
  ga *= inv_tau;
  const MatrixD gp = dpos.asDiagonal() * a * inv_tau;
  const MatrixD gt = ds_txt.transpose() * a * inv_tau;

  out.grad_img = detail::normalize_backward(img, a, n_img, ga);
  out.grad_txt_pos = detail::normalize_backward(txt_pos, p, n_pos, gp);
  out.grad_txt_all = detail::normalize_backward(txt_all, t, n_all, gt);
  if (has_mi) {
    out.grad_mixed_img = detail::normalize_backward(mixed_img, mi, n_mi, MatrixD(ds_mi.transpose() * a * inv_tau));
  }
  if (has_mt) {
    out.grad_mixed_txt = detail::normalize_backward(mixed_txt, mt, n_mt, MatrixD(ds_mt.transpose() * a * inv_tau));
  }
  return out;
}

inline double pcc_loss(const MatrixD& img, const MatrixD& txt_pos, const MatrixD& txt_all,
                       const MatrixD& mixed_img, const MatrixD& mixed_txt, double temperature,
                       PccForm form = PccForm::kPerAnchor) {
  return pcc_loss_with_grad(img, txt_pos, txt_all, mixed_img, mixed_txt, temperature, form, false).loss;
}

// ---------------------------------------------------------------------------
// Cross-entropy over the classifier outputs.

struct CeResult {
  double loss = 0.0;
  MatrixD grad_logits;
};

inline CeResult ce_loss_with_grad(const MatrixD& logits, const std::vector<int>& labels,
                                  bool want_grad = true) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), ErrorKind::kShape,
          "label count differs from logit rows");
  CeResult out;
  const Eigen::Index n = logits.rows();
  if (n == 0) return out;
  if (want_grad) out.grad_logits.resize(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < logits.cols(), ErrorKind::kInvalidArgument,
            "label " + std::to_string(y) + " out of range");
    const double lse = detail::log_sum_exp(logits.row(i).data(), static_cast<std::size_t>(logits.cols()));
    total += lse - logits(i, y);
    if (want_grad) {
      out.grad_logits.row(i) = (logits.row(i).array() - lse).exp() / static_cast<double>(n);
      out.grad_logits(i, y) -= 1.0 / static_cast<double>(n);
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

inline double ce_loss(const MatrixD& logits, const std::vector<int>& labels) {
  return ce_loss_with_grad(logits, labels, false).loss;
}

// ---------------------------------------------------------------------------
// Total objective over the head.

struct LossBreakdown {
  std::array<double, kProjectionLayers> pcc{};
  double ce = 0.0;
  double total = 0.0;
};

template <typename T>
struct LossAndGrad {
  LossBreakdown loss;
  HeadParameters<T> grads;
};

namespace detail {

template <typename T>
LossAndGrad<T> evaluate(const BasicMlpHead<T>& head, const TrainingBatch<T>& batch,
                        const NegativeSet<T>& negatives, const LossConfig& cfg, bool want_grad) {
  cfg.validate();
  const Eigen::Index n = batch.size();
  require(batch.texts.rows() == n && static_cast<Eigen::Index>(batch.labels.size()) == n,
          ErrorKind::kShape, "batch images, texts and labels disagree in length");
  for (int y : batch.labels)
    require(y >= 0 && y < head.num_id_classes, ErrorKind::kInvalidArgument,
            "label " + std::to_string(y) + " is not an ID class");
  if (cfg.use_pcc) {
    require(negatives.mixed_images.rows() == n && negatives.mixed_texts.rows() == n, ErrorKind::kShape,
            "negative set does not match batch size");
  }

  // Stacked rows: [images; texts; mixed images; mixed texts]; all modalities
  // go through the same shared layers.
  const Eigen::Index blocks = cfg.use_pcc ? 4 : 1;
  Matrix<T> x(blocks * n, batch.images.cols());
  x.topRows(n) = batch.images;
  if (blocks == 4) {
    x.middleRows(n, n) = batch.texts;
    x.middleRows(2 * n, n) = negatives.mixed_images;
    x.middleRows(3 * n, n) = negatives.mixed_texts;
  }
  const auto hidden = project(head, x);

  LossAndGrad<T> out;
  std::array<Matrix<T>, kProjectionLayers> upstream;
  if (cfg.use_pcc) {
    for (int l = 0; l < kProjectionLayers; ++l) {
      const MatrixD h = hidden[l].template cast<double>();
      const MatrixD img = h.topRows(n);
      const MatrixD txt = h.middleRows(n, n);
      const MatrixD mi = h.middleRows(2 * n, n);
      const MatrixD mt = h.middleRows(3 * n, n);
      auto r = pcc_loss_with_grad(img, txt, txt, mi, mt, cfg.temperature, cfg.form, want_grad);
      out.loss.pcc[static_cast<std::size_t>(l)] = r.loss;
      if (want_grad) {
        MatrixD g(h.rows(), h.cols());
        g.topRows(n) = r.grad_img;
        g.middleRows(n, n) = r.grad_txt_pos + r.grad_txt_all;
        g.middleRows(2 * n, n) = r.grad_mixed_img;
        g.middleRows(3 * n, n) = r.grad_mixed_txt;
        upstream[static_cast<std::size_t>(l)] = g.template cast<T>();
      }
    }
  }

  Matrix<T> grad_logits;
  const Matrix<T> h_img_last = hidden.back().topRows(n);
  if (cfg.use_ce) {
    Matrix<T> logits = h_img_last * head.params.classifier_weight.transpose();
    logits.rowwise() += head.params.classifier_bias.transpose();
    auto r = ce_loss_with_grad(logits.template cast<double>(), batch.labels, want_grad);
    out.loss.ce = r.loss;
    if (want_grad) grad_logits = r.grad_logits.template cast<T>();
  }
  out.loss.total = out.loss.ce;
  for (double v : out.loss.pcc) out.loss.total += v;
  if (!want_grad) return out;

  out.grads = head.params.zeros_like();
  Matrix<T> g = cfg.use_pcc ? upstream.back() : Matrix<T>::Zero(hidden.back().rows(), hidden.back().cols());
  if (cfg.use_ce) {
    out.grads.classifier_weight.noalias() = grad_logits.transpose() * h_img_last;
    out.grads.classifier_bias = grad_logits.colwise().sum().transpose();
    g.topRows(n).noalias() += grad_logits * head.params.classifier_weight;
  }
  for (int l = kProjectionLayers - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    Matrix<T> dz = g.cwiseProduct((hidden[li].array() > T(0)).template cast<T>().matrix());
    const Matrix<T>& below = (l == 0) ? x : hidden[li - 1];
    out.grads.weights[li].noalias() = dz.transpose() * below;
    out.grads.biases[li] = dz.colwise().sum().transpose();
    if (l > 0) {
      g.noalias() = dz * head.params.weights[li];
      if (cfg.use_pcc) g += upstream[li - 1];
    }
  }
  return out;
}

}  // namespace detail

/// Sum of the per-layer contrastive terms and the classification term.
template <typename T>
LossBreakdown total_loss(const BasicMlpHead<T>& head, const TrainingBatch<T>& batch,
                         const NegativeSet<T>& negatives, const LossConfig& cfg) {
  return detail::evaluate(head, batch, negatives, cfg, false).loss;
}

/// Exact reverse-mode gradient of total_loss for every head parameter. The
/// encoder features are inputs only and receive nothing.
template <typename T>
LossAndGrad<T> grad_total_loss(const BasicMlpHead<T>& head, const TrainingBatch<T>& batch,
                               const NegativeSet<T>& negatives, const LossConfig& cfg) {
  return detail::evaluate(head, batch, negatives, cfg, true);
}

}  // namespace odpc
