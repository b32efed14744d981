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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "odpc/error.hpp"
#include "odpc/persist.hpp"
#include "odpc/rng.hpp"
#include "odpc/tensor.hpp"

namespace odpc {

inline constexpr int kProjectionLayers = 3;

/// Weights are stored (out x in) so a layer computes rows * W^T + b.
template <typename T>
struct HeadParameters {
  std::array<Matrix<T>, kProjectionLayers> weights;
  std::array<Vector<T>, kProjectionLayers> biases;
  Matrix<T> classifier_weight;
  Vector<T> classifier_bias;

  /// Visits every tensor in manifest order with a stable name.
  template <typename F>
  void for_each(F&& f) {
    for (int l = 0; l < kProjectionLayers; ++l) {
      f("fc" + std::to_string(l + 1) + ".weight", weights[l].data(), weights[l].rows(), weights[l].cols());
      f("fc" + std::to_string(l + 1) + ".bias", biases[l].data(), biases[l].rows(), Eigen::Index{1});
    }
    f(std::string("classifier.weight"), classifier_weight.data(), classifier_weight.rows(),
      classifier_weight.cols());
    f(std::string("classifier.bias"), classifier_bias.data(), classifier_bias.rows(), Eigen::Index{1});
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<HeadParameters*>(this)->for_each(
        [&](const std::string& name, T* data, Eigen::Index rows, Eigen::Index cols) {
          f(name, static_cast<const T*>(data), rows, cols);
        });
  }

  HeadParameters zeros_like() const {
    HeadParameters out;
    for (int l = 0; l < kProjectionLayers; ++l) {
      out.weights[l] = Matrix<T>::Zero(weights[l].rows(), weights[l].cols());
      out.biases[l] = Vector<T>::Zero(biases[l].rows());
    }
    out.classifier_weight = Matrix<T>::Zero(classifier_weight.rows(), classifier_weight.cols());
    out.classifier_bias = Vector<T>::Zero(classifier_bias.rows());
    return out;
  }

  bool same_shapes(const HeadParameters& other) const {
    for (int l = 0; l < kProjectionLayers; ++l) {
      if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols())
        return false;
      if (biases[l].rows() != other.biases[l].rows()) return false;
    }
    return classifier_weight.rows() == other.classifier_weight.rows() &&
           classifier_weight.cols() == other.classifier_weight.cols() &&
           classifier_bias.rows() == other.classifier_bias.rows();
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const T* data, Eigen::Index rows, Eigen::Index cols) {
      for (Eigen::Index i = 0; i < rows * cols; ++i) ok = ok && std::isfinite(data[i]);
    });
    return ok;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const T*, Eigen::Index rows, Eigen::Index cols) {
      n += static_cast<std::size_t>(rows * cols);
    });
    return n;
  }

  template <typename U>
  HeadParameters<U> cast() const {
    HeadParameters<U> out;
    for (int l = 0; l < kProjectionLayers; ++l) {
      out.weights[l] = weights[l].template cast<U>();
      out.biases[l] = biases[l].template cast<U>();
    }
    out.classifier_weight = classifier_weight.template cast<U>();
    out.classifier_bias = classifier_bias.template cast<U>();
    return out;
  }
};

/// Three shared projection layers (ReLU after each) plus a linear classifier
/// over num_id_classes + num_peer_outputs outputs.
template <typename T>
struct BasicMlpHead {
  HeadParameters<T> params;
  int input_dim = 0;
  std::array<int, kProjectionLayers> hidden_dims{};
  int num_id_classes = 0;
  int num_peer_outputs = 0;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::vector<std::string> id_labels;
  std::vector<std::string> peer_labels;

  int num_outputs() const { return num_id_classes + num_peer_outputs; }
  int feature_dim() const { return hidden_dims.back(); }

  template <typename U>
  BasicMlpHead<U> cast() const {
    BasicMlpHead<U> out;
    out.params = params.template cast<U>();
    out.input_dim = input_dim;
    out.hidden_dims = hidden_dims;
    out.num_id_classes = num_id_classes;
    out.num_peer_outputs = num_peer_outputs;
    out.seed = seed;
    out.epoch = epoch;
    out.id_labels = id_labels;
    out.peer_labels = peer_labels;
    return out;
  }
};

using MlpHead = BasicMlpHead<float>;

struct HeadShape {
  int input_dim = 512;
  std::array<int, kProjectionLayers> hidden_dims{512, 512, 512};
};

template <typename T = float>
BasicMlpHead<T> init_head(int num_id_classes, int num_peer_outputs, std::uint64_t seed,
                          const HeadShape& shape = {}) {
  require(num_id_classes >= 2, ErrorKind::kInvalidArgument, "need at least 2 ID classes");
  require(num_peer_outputs >= 0, ErrorKind::kInvalidArgument, "negative peer output count");
  require(shape.input_dim >= 1, ErrorKind::kInvalidArgument, "input_dim must be >= 1");
  for (int d : shape.hidden_dims)
    require(d >= 1, ErrorKind::kInvalidArgument, "hidden dims must be >= 1");

  BasicMlpHead<T> head;
  head.input_dim = shape.input_dim;
  head.hidden_dims = shape.hidden_dims;
  head.num_id_classes = num_id_classes;
  head.num_peer_outputs = num_peer_outputs;
  head.seed = seed;

  Rng rng(mix_seed(seed, 0x68656164ULL));
  auto uniform_fill = [&](Matrix<T>& w, int out, int in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    w.resize(out, in);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<T>(rng.uniform(-bound, bound));
  };
  int fan_in = shape.input_dim;
  for (int l = 0; l < kProjectionLayers; ++l) {
    uniform_fill(head.params.weights[l], shape.hidden_dims[l], fan_in);
    head.params.biases[l] = Vector<T>::Zero(shape.hidden_dims[l]);
    fan_in = shape.hidden_dims[l];
  }
  uniform_fill(head.params.classifier_weight, head.num_outputs(), fan_in);
  head.params.classifier_bias = Vector<T>::Zero(head.num_outputs());
  return head;
}

template <typename T>
struct ForwardActivations {
  std::array<Matrix<T>, kProjectionLayers> per_layer;  // post-ReLU outputs
  Matrix<T> logits;
  Matrix<T> probabilities;
};

/// Row-wise softmax with max subtraction.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Runs only the shared projection layers.
template <typename T>
std::array<Matrix<T>, kProjectionLayers> project(const BasicMlpHead<T>& head, const Matrix<T>& x) {
  require(x.cols() == head.input_dim, ErrorKind::kShape,
          "head expects " + std::to_string(head.input_dim) + "-dim features, got " +
              std::to_string(x.cols()));
  std::array<Matrix<T>, kProjectionLayers> out;
  const Matrix<T>* h = &x;
  for (int l = 0; l < kProjectionLayers; ++l) {
    out[l].noalias() = *h * head.params.weights[l].transpose();
    out[l].rowwise() += head.params.biases[l].transpose();
    out[l] = out[l].cwiseMax(T(0));
    h = &out[l];
  }
  return out;
}

template <typename T>
ForwardActivations<T> forward(const BasicMlpHead<T>& head, const Matrix<T>& x) {
  ForwardActivations<T> act;
  act.per_layer = project(head, x);
  act.logits.noalias() = act.per_layer.back() * head.params.classifier_weight.transpose();
  act.logits.rowwise() += head.params.classifier_bias.transpose();
  act.probabilities = softmax_rows(act.logits);
  return act;
}

template <typename T>
ForwardActivations<T> forward(const BasicMlpHead<T>& head, const EmbeddingMatrix& features) {
  return forward(head, Matrix<T>(features.values.template cast<T>()));
}

// ---------------------------------------------------------------------------
// Checkpoints: "ODPCCK01", u32 manifest length, JSON manifest, float32 LE
// parameter blob in manifest order, CRC32 over manifest + blob.

inline constexpr std::string_view kCheckpointMagic = "ODPCCK01";

template <typename T>
nlohmann::json checkpoint_manifest(const BasicMlpHead<T>& head) {
  nlohmann::json tensors = nlohmann::json::array();
  head.params.for_each([&](const std::string& name, const T*, Eigen::Index rows, Eigen::Index cols) {
    tensors.push_back({{"name", name}, {"shape", {rows, cols}}});
  });
  return {
      {"format_version", 1},
      {"input_dim", head.input_dim},
      {"hidden_dims", head.hidden_dims},
      {"num_id_classes", head.num_id_classes},
      {"num_peer_outputs", head.num_peer_outputs},
      {"num_outputs", head.num_outputs()},
      {"seed", head.seed},
      {"epoch", head.epoch},
      {"id_labels", head.id_labels},
      {"peer_labels", head.peer_labels},
      {"tensors", tensors},
  };
}

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const BasicMlpHead<T>& head) {
  persist::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  const std::string manifest = checkpoint_manifest(head).dump();
  w.put_u32(static_cast<std::uint32_t>(manifest.size()));
  const std::size_t crc_start = w.size();
  w.put_bytes(manifest);
  head.params.for_each([&](const std::string&, const T* data, Eigen::Index rows, Eigen::Index cols) {
    for (Eigen::Index i = 0; i < rows * cols; ++i) w.put_f32(static_cast<float>(data[i]));
  });
  const auto& bytes = w.bytes();
  w.put_u32(persist::crc32(std::span(bytes).subspan(crc_start)));
  return std::move(w.bytes());
}

template <typename T = float>
BasicMlpHead<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  persist::ByteReader r(bytes);
  require(bytes.size() >= 16, ErrorKind::kFormat, "checkpoint truncated");
  require(r.take_bytes(8) == kCheckpointMagic, ErrorKind::kFormat, "bad checkpoint magic");
  const std::uint32_t manifest_len = r.take_u32();
  require(r.remaining() >= static_cast<std::size_t>(manifest_len) + 4, ErrorKind::kFormat,
          "checkpoint truncated");
  const std::size_t crc_start = r.position();
  const std::string_view manifest_text = r.take_bytes(manifest_len);
  const std::uint32_t crc = persist::crc32(bytes.subspan(crc_start, bytes.size() - 4 - crc_start));
  std::uint32_t stored_crc = 0;
  {
    persist::ByteReader tail(bytes.subspan(bytes.size() - 4));
    stored_crc = tail.take_u32();
  }
  require(crc == stored_crc, ErrorKind::kCorruption, "checkpoint CRC mismatch");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("checkpoint manifest: ") + e.what());
  }
  BasicMlpHead<T> head;
  try {
    require(manifest.at("format_version").get<int>() == 1, ErrorKind::kFormat,
            "unsupported checkpoint version");
    HeadShape shape;
    shape.input_dim = manifest.at("input_dim").get<int>();
    shape.hidden_dims = manifest.at("hidden_dims").get<std::array<int, kProjectionLayers>>();
    head = init_head<T>(manifest.at("num_id_classes").get<int>(),
                        manifest.at("num_peer_outputs").get<int>(), 0, shape);
    require(manifest.at("num_outputs").get<int>() == head.num_outputs(), ErrorKind::kFormat,
            "manifest output count disagrees with class counts");
    head.seed = manifest.at("seed").get<std::uint64_t>();
    head.epoch = manifest.at("epoch").get<int>();
    head.id_labels = manifest.value("id_labels", std::vector<std::string>{});
    head.peer_labels = manifest.value("peer_labels", std::vector<std::string>{});
    const auto expected = checkpoint_manifest(head).at("tensors");
    require(manifest.at("tensors") == expected, ErrorKind::kFormat,
            "checkpoint tensor manifest does not match declared dimensions");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("checkpoint manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidArgument) fail(ErrorKind::kFormat, e.what());
    throw;
  }
  const std::size_t count = head.params.parameter_count();
  require(r.remaining() == count * 4 + 4, ErrorKind::kFormat,
          "checkpoint parameter blob size mismatch");
  head.params.for_each([&](const std::string&, T* data, Eigen::Index rows, Eigen::Index cols) {
    for (Eigen::Index i = 0; i < rows * cols; ++i) data[i] = static_cast<T>(r.take_f32());
  });
  require(head.params.all_finite(), ErrorKind::kFormat, "checkpoint has non-finite parameters");
  return head;
}

template <typename T>
void save_checkpoint(const BasicMlpHead<T>& head, const std::filesystem::path& path) {
  persist::atomic_write(path, encode_checkpoint(head));
}

template <typename T = float>
BasicMlpHead<T> load_checkpoint(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kNotFound, "no such checkpoint: " + path.string());
  return decode_checkpoint<T>(persist::read_file(path));
}

}  // namespace odpc
