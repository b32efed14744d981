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

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <string_view>
#include <vector>

#include "odpc/error.hpp"
#include "odpc/head.hpp"
#include "odpc/losses.hpp"
#include "odpc/persist.hpp"
#include "odpc/rng.hpp"
#include "odpc/tensor.hpp"

namespace odpc {

struct TrainingConfig {
  int epochs = 160;
  int batch_size = 32;
  double lr = 1e-5;
  double momentum = 0.99;
  int step_size = 30;
  double gamma = 0.25;
  std::uint64_t seed = 0;
  LossConfig loss;

  void validate() const {
    require(epochs >= 0, ErrorKind::kConfiguration, "epochs must be >= 0");
    require(batch_size >= 2, ErrorKind::kConfiguration, "batch_size must be >= 2");
    require(lr >= 0.0, ErrorKind::kConfiguration, "lr must be >= 0");
    require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kConfiguration, "momentum must lie in [0, 1)");
    require(step_size >= 1, ErrorKind::kConfiguration, "step_size must be >= 1");
    require(gamma > 0.0 && gamma <= 1.0, ErrorKind::kConfiguration, "gamma must lie in (0, 1]");
    loss.validate();
  }
};

/// Step schedule: lr * gamma^floor(epoch / step_size).
inline double lr_at(int epoch, const TrainingConfig& cfg) {
  require(epoch >= 0, ErrorKind::kInvalidArgument, "epoch must be >= 0");
  return cfg.lr * std::pow(cfg.gamma, epoch / cfg.step_size);
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;  // mean over the epoch's update steps
  int steps = 0;
  int skipped_batches = 0;
};

template <typename T>
struct TrainingState {
  BasicMlpHead<T> head;
  HeadParameters<T> velocity;
  int epoch = 0;
  std::vector<EpochRecord> history;
};

template <typename T>
TrainingState<T> make_state(BasicMlpHead<T> head) {
  TrainingState<T> state;
  state.velocity = head.params.zeros_like();
  state.epoch = head.epoch;
  state.head = std::move(head);
  return state;
}

/// Classical momentum: v <- momentum * v + g; theta <- theta - lr * v.
template <typename T>
void sgd_step(HeadParameters<T>& params, HeadParameters<T>& velocity, const HeadParameters<T>& grads,
              double lr, double momentum) {
  require(params.same_shapes(grads) && params.same_shapes(velocity), ErrorKind::kShape,
          "gradient or momentum buffer shapes do not match the parameters");
  const T m = static_cast<T>(momentum);
  const T step = static_cast<T>(lr);
  auto update = [&](auto& theta, auto& v, const auto& g) {
    v = m * v + g;
    theta -= step * v;
  };
  for (int l = 0; l < kProjectionLayers; ++l) {
    update(params.weights[l], velocity.weights[l], grads.weights[l]);
    update(params.biases[l], velocity.biases[l], grads.biases[l]);
  }
  update(params.classifier_weight, velocity.classifier_weight, grads.classifier_weight);
  update(params.classifier_bias, velocity.classifier_bias, grads.classifier_bias);
}

template <typename T>
void sgd_step(TrainingState<T>& state, const HeadParameters<T>& grads, double lr, double momentum) {
  sgd_step(state.head.params, state.velocity, grads, lr, momentum);
}

/// Precomputed encoder outputs for one training run. Encoders are frozen, so
/// these are computed once and only read here.
template <typename T>
struct TrainingData {
  Matrix<T> images;
  std::vector<int> labels;
  Matrix<T> class_texts;                // row c: description feature of ID class c
  std::vector<Matrix<T>> peer_texts;    // entry c: description features of c's peers
};

using TrainLogger = std::function<void(std::string_view)>;

inline void stderr_logger(std::string_view msg) { std::cerr << "[odpc] " << msg << "\n"; }

template <typename T>
void validate_training_data(const TrainingData<T>& data, int num_id_classes, bool need_peers) {
  const auto n = static_cast<std::size_t>(data.images.rows());
  require(data.labels.size() == n, ErrorKind::kShape, "labels and images differ in length");
  require(data.class_texts.rows() == num_id_classes, ErrorKind::kConfiguration,
          "need one description feature per ID class");
  require(data.class_texts.cols() == data.images.cols(), ErrorKind::kShape,
          "text and image features differ in dimension");
  std::vector<int> counts(static_cast<std::size_t>(num_id_classes), 0);
  for (int y : data.labels) {
    require(y >= 0 && y < num_id_classes, ErrorKind::kInvalidArgument,
            "label " + std::to_string(y) + " is not an ID class");
    ++counts[static_cast<std::size_t>(y)];
  }
  int present = 0;
  for (int c : counts) present += c > 0 ? 1 : 0;
  require(present >= 2, ErrorKind::kConfiguration, "training data must contain at least 2 classes");
  if (need_peers) {
    require(data.peer_texts.size() == static_cast<std::size_t>(num_id_classes),
            ErrorKind::kConfiguration, "need peer description features for every ID class");
    for (std::size_t c = 0; c < data.peer_texts.size(); ++c)
      require(data.peer_texts[c].rows() > 0, ErrorKind::kConfiguration,
              "ID class " + std::to_string(c) + " has no peer descriptions");
  }
}

/// Seeded mini-batch training: shuffle each epoch, drop the last partial
/// batch, build negatives per batch, one momentum-SGD update per batch.
template <typename T>
TrainingState<T> train(const TrainingData<T>& data, BasicMlpHead<T> head, const TrainingConfig& cfg,
                       const TrainLogger& log = stderr_logger) {
  cfg.validate();
  const bool need_peers = cfg.loss.use_pcc;
  validate_training_data(data, head.num_id_classes, need_peers);
  require(data.images.cols() == head.input_dim, ErrorKind::kShape,
          "feature dimension does not match the head");
  const auto n = static_cast<std::size_t>(data.images.rows());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = n / batch;
  if (cfg.epochs > 0) {
    require(steps_per_epoch > 0, ErrorKind::kConfiguration,
            "dataset of " + std::to_string(n) + " rows is smaller than one batch");
  }

  TrainingState<T> state = make_state(std::move(head));
  Rng rng(mix_seed(cfg.seed, 0x747261696eULL));
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> idx(batch);
  TrainingBatch<T> tb;
  tb.labels.resize(batch);
  tb.texts.resize(static_cast<Eigen::Index>(batch), data.images.cols());

  for (int e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = state.epoch;
    rec.lr = lr_at(state.epoch, cfg);
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      bool multi_class = false;
      for (std::size_t j = 0; j < batch; ++j) {
        idx[j] = order[s * batch + j];
        tb.labels[j] = data.labels[idx[j]];
        multi_class = multi_class || tb.labels[j] != tb.labels[0];
      }
      if (!multi_class) {
        ++rec.skipped_batches;
        log("epoch " + std::to_string(state.epoch) + ": skipping single-class batch " +
            std::to_string(s));
        continue;
      }
      tb.images = gather_rows(data.images, idx);
      for (std::size_t j = 0; j < batch; ++j)
        tb.texts.row(static_cast<Eigen::Index>(j)) = data.class_texts.row(tb.labels[j]);
      NegativeSet<T> neg;
      if (need_peers) neg = build_negative_set(tb, data.peer_texts, effective_lambda(cfg.loss), rng);
      auto lg = grad_total_loss(state.head, tb, neg, cfg.loss);
      sgd_step(state, lg.grads, rec.lr, cfg.momentum);
      for (std::size_t l = 0; l < rec.loss.pcc.size(); ++l) rec.loss.pcc[l] += lg.loss.pcc[l];
      rec.loss.ce += lg.loss.ce;
      rec.loss.total += lg.loss.total;
      ++rec.steps;
    }
    require(rec.steps > 0, ErrorKind::kDegenerateBatch,
            "epoch " + std::to_string(state.epoch) + " produced no multi-class batch");
    const double inv = 1.0 / rec.steps;
    for (double& v : rec.loss.pcc) v *= inv;
    rec.loss.ce *= inv;
    rec.loss.total *= inv;
    require(std::isfinite(rec.loss.total), ErrorKind::kGeneration,
            "training diverged at epoch " + std::to_string(state.epoch));
    state.history.push_back(rec);
    ++state.epoch;
  }
  state.head.epoch = state.epoch;
  return state;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string loss_history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,total,pcc1,pcc2,pcc3,ce\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.lr) + "," + format_double(r.loss.total);
    for (double v : r.loss.pcc) out += "," + format_double(v);
    out += "," + format_double(r.loss.ce) + "\n";
  }
  return out;
}

inline void write_loss_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  persist::atomic_write_text(path, loss_history_csv(history));
}

}  // namespace odpc
