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
// Seeded problem instances shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "odpc/head.hpp"
#include "odpc/losses.hpp"
#include "odpc/rng.hpp"
#include "oracles.hpp"

namespace odpc::testing {

struct LossInstance {
  BasicMlpHead<double> head;
  TrainingBatch<double> batch;
  NegativeSet<double> negatives;
};

/// Small double-precision head with a two-class batch of four and one peer
/// pool per class. Biases start positive so few units sit exactly at a kink.
inline LossInstance make_loss_instance(std::uint64_t seed, int n = 4, int input_dim = 6,
                                       std::array<int, kProjectionLayers> hidden = {5, 5, 4}) {
  Rng rng(mix_seed(seed, 0x6c6f7373ULL));
  LossInstance inst;
  HeadShape shape;
  shape.input_dim = input_dim;
  shape.hidden_dims = hidden;
  inst.head = init_head<double>(2, 4, seed, shape);
  for (auto& b : inst.head.params.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(0.05, 0.3);
  for (Eigen::Index i = 0; i < inst.head.params.classifier_bias.size(); ++i)
    inst.head.params.classifier_bias(i) = rng.uniform(-0.2, 0.2);

  const MatrixD class_texts = oracle::random_matrix(rng, 2, input_dim);
  std::vector<MatrixD> peers = {oracle::random_matrix(rng, 2, input_dim), oracle::random_matrix(rng, 2, input_dim)};
  inst.batch.images = oracle::random_matrix(rng, n, input_dim);
  inst.batch.texts.resize(n, input_dim);
  for (int i = 0; i < n; ++i) {
    const int y = i % 2;
    inst.batch.labels.push_back(y);
    inst.batch.texts.row(i) = class_texts.row(y);
  }
  inst.negatives = build_negative_set(inst.batch, peers, 0.5, rng);
  return inst;
}

struct GradCheck {
  double max_rel_err = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences of total_loss against the analytic gradient for every
/// parameter. The relative error is |a - n| / max(|a|, |n|); entries whose
/// magnitudes are both below `floor` are compared in absolute terms.
inline GradCheck check_gradients(const LossInstance& inst, const LossConfig& cfg, double h = 1e-4,
                                 double floor = 1e-8) {
  const auto analytic = grad_total_loss(inst.head, inst.batch, inst.negatives, cfg).grads;
  BasicMlpHead<double> probe = inst.head;
  std::vector<const double*> grad_ptrs;
  analytic.for_each([&](const std::string&, const double* data, Eigen::Index rows, Eigen::Index cols) {
    for (Eigen::Index i = 0; i < rows * cols; ++i) grad_ptrs.push_back(data + i);
  });
  GradCheck out;
  std::size_t flat = 0;
  probe.params.for_each([&](const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols) {
    for (Eigen::Index i = 0; i < rows * cols; ++i, ++flat) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = total_loss(probe, inst.batch, inst.negatives, cfg).total;
      data[i] = saved - h;
      const double down = total_loss(probe, inst.batch, inst.negatives, cfg).total;
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = *grad_ptrs[flat];
      const double err = std::max(std::abs(a), std::abs(numeric)) < floor ? std::abs(a - numeric)
                                                                           : oracle::rel_diff(a, numeric);
      if (err > out.max_rel_err) {
        out.max_rel_err = err;
        out.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                    " numeric=" + std::to_string(numeric);
      }
      ++out.checked;
    }
  });
  return out;
}

}  // namespace odpc::testing
