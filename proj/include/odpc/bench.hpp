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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "odpc/catalog.hpp"
#include "odpc/encoders.hpp"
#include "odpc/error.hpp"
#include "odpc/head.hpp"
#include "odpc/knn.hpp"
#include "odpc/metrics.hpp"
#include "odpc/peer_gen.hpp"
#include "odpc/persist.hpp"
#include "odpc/rng.hpp"
#include "odpc/tensor.hpp"
#include "odpc/trainer.hpp"

namespace odpc {

enum class Protocol { kCifar10, kCifarPlus10, kCifarPlus50, kCifar100, kTinyImageNet, kSynthetic };

struct ProtocolSpec {
  Protocol protocol;
  std::string_view name;
  int known;
  int unknown;
};

inline const std::vector<ProtocolSpec>& protocol_specs() {
  static const std::vector<ProtocolSpec> specs = {
      {Protocol::kCifar10, "cifar10_6v4", 6, 4},
      {Protocol::kCifarPlus10, "cifar_plus_10", 4, 10},
      {Protocol::kCifarPlus50, "cifar_plus_50", 4, 50},
      {Protocol::kCifar100, "cifar100_20v80", 20, 80},
      {Protocol::kTinyImageNet, "tinyimagenet_20v180", 20, 180},
      {Protocol::kSynthetic, "synthetic", 6, 4},
  };
  return specs;
}

inline const ProtocolSpec& spec_of(Protocol p) {
  for (const auto& s : protocol_specs())
    if (s.protocol == p) return s;
  fail(ErrorKind::kInvalidArgument, "unknown protocol");
}

inline Protocol parse_protocol(std::string_view name) {
  for (const auto& s : protocol_specs())
    if (s.name == name) return s.protocol;
  fail(ErrorKind::kConfiguration, "unknown protocol '" + std::string(name) + "'");
}

inline std::string protocol_name(Protocol p) { return std::string(spec_of(p).name); }

/// Class universe a protocol samples from. `animal_classes` feeds the CIFAR+N
/// protocols.
struct ClassCatalog {
  std::string dataset;
  std::vector<std::string> classes;
  std::vector<std::string> animal_classes;
};

/// The built-in catalog for a protocol when no label manifest is given.
inline ClassCatalog builtin_catalog(Protocol p) {
  switch (p) {
    case Protocol::kCifar10:
    case Protocol::kSynthetic:
      return {p == Protocol::kSynthetic ? "synthetic" : "cifar10", catalog::cifar10(), {}};
    case Protocol::kCifar100:
      return {"cifar100", catalog::cifar100(), catalog::cifar100_animals()};
    case Protocol::kCifarPlus10:
    case Protocol::kCifarPlus50: {
      ClassCatalog c{"cifar_plus", catalog::cifar10(), catalog::cifar100_animals()};
      for (const auto& name : catalog::cifar100_animals()) c.classes.push_back(name);
      return c;
    }
    case Protocol::kTinyImageNet:
      fail(ErrorKind::kInvalidArgument, "tinyimagenet_20v180 needs a label manifest listing 200 classes");
  }
  fail(ErrorKind::kInvalidArgument, "unknown protocol");
}

struct BenchmarkSplit {
  Protocol protocol = Protocol::kSynthetic;
  std::vector<std::string> known_classes;
  std::vector<std::string> unknown_classes;
  std::uint64_t seed = 0;

  int n_train_classes() const { return static_cast<int>(known_classes.size()); }
  int n_unknown() const { return static_cast<int>(unknown_classes.size()); }
  int n_total_test_classes() const { return n_train_classes() + n_unknown(); }
  double openness() const { return odpc::openness(n_train_classes(), n_total_test_classes()); }
};

namespace detail {

inline std::vector<std::string> sample_without_replacement(std::vector<std::string> pool, std::size_t count,
                                                           Rng& rng) {
  require(pool.size() >= count, ErrorKind::kInvalidArgument,
          "need " + std::to_string(count) + " classes, catalog has " + std::to_string(pool.size()));
  rng.shuffle(pool);
  pool.resize(count);
  return pool;
}

}  // namespace detail

/// Seeded known/unknown partition for a protocol.
inline BenchmarkSplit make_split(Protocol protocol, const ClassCatalog& catalog, std::uint64_t seed) {
  const auto& spec = spec_of(protocol);
  BenchmarkSplit split;
  split.protocol = protocol;
  split.seed = seed;
  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  std::set<std::string> unique(catalog.classes.begin(), catalog.classes.end());
  require(unique.size() == catalog.classes.size(), ErrorKind::kInvalidArgument,
          "catalog lists a class twice");

  if (protocol == Protocol::kCifarPlus10 || protocol == Protocol::kCifarPlus50) {
    for (const auto& name : catalog::cifar10_non_animal())
      require(unique.contains(name), ErrorKind::kInvalidArgument,
              "catalog lacks CIFAR-10 class '" + name + "'");
    split.known_classes = catalog::cifar10_non_animal();
    std::vector<std::string> animals;
    for (const auto& a : catalog.animal_classes)
      if (std::find(split.known_classes.begin(), split.known_classes.end(), a) == split.known_classes.end())
        animals.push_back(a);
    split.unknown_classes =
        detail::sample_without_replacement(animals, static_cast<std::size_t>(spec.unknown), rng);
    return split;
  }

  const auto total = static_cast<std::size_t>(spec.known + spec.unknown);
  require(catalog.classes.size() >= total, ErrorKind::kInvalidArgument,
          protocol_name(protocol) + " needs " + std::to_string(total) + " classes, catalog has " +
              std::to_string(catalog.classes.size()));
  auto chosen = detail::sample_without_replacement(catalog.classes, total, rng);
  split.known_classes.assign(chosen.begin(), chosen.begin() + spec.known);
  split.unknown_classes.assign(chosen.begin() + spec.known, chosen.end());
  return split;
}

// ---------------------------------------------------------------------------
// Datasets

/// Encoder features with per-sample class and train/test membership.
struct LabeledFeatures {
  EmbeddingMatrix features;
  std::vector<std::string> ids;
  std::vector<std::string> classes;
  std::vector<bool> is_train;

  std::size_t size() const { return ids.size(); }
};

/// labels.json manifest; rows of the accompanying feature file follow `samples`.
struct LabelManifest {
  ClassCatalog catalog;
  std::vector<std::string> ids;
  std::vector<std::string> classes;
  std::vector<bool> is_train;
};

inline LabelManifest parse_label_manifest(const nlohmann::json& doc) {
  try {
    LabelManifest m;
    m.catalog.dataset = doc.at("dataset").get<std::string>();
    m.catalog.classes = doc.at("classes").get<std::vector<std::string>>();
    m.catalog.animal_classes = doc.value("animal_classes", std::vector<std::string>{});
    std::set<std::string> known(m.catalog.classes.begin(), m.catalog.classes.end());
    for (const auto& s : doc.at("samples")) {
      const auto split = s.at("split").get<std::string>();
      require(split == "train" || split == "test", ErrorKind::kFormat, "sample split must be train or test");
      const auto cls = s.at("class").get<std::string>();
      require(known.contains(cls), ErrorKind::kFormat, "sample class '" + cls + "' not in classes");
      m.ids.push_back(s.at("id").get<std::string>());
      m.classes.push_back(cls);
      m.is_train.push_back(split == "train");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("labels.json: ") + e.what());
  }
}

inline LabelManifest read_label_manifest(const std::filesystem::path& path) {
  return parse_label_manifest(persist::read_json(path));
}

inline nlohmann::json to_json(const LabelManifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < m.ids.size(); ++i)
    samples.push_back({{"id", m.ids[i]}, {"class", m.classes[i]}, {"split", m.is_train[i] ? "train" : "test"}});
  return {{"dataset", m.catalog.dataset},
          {"classes", m.catalog.classes},
          {"animal_classes", m.catalog.animal_classes},
          {"samples", samples}};
}

/// Seeded Gaussian clusters in raw space, passed through the toy image
/// encoder. Known classes get random centers; each unknown class is centered
/// near the midpoint of two known centers, which makes it near-OOD.
struct SyntheticConfig {
  int raw_dim = 64;
  int train_per_class = 200;
  int test_per_class = 100;
  double center_scale = 1.0;    // per-coordinate std of known centers
  double noise = 1.75;          // per-coordinate std of samples around a center
  double ood_offset = 0.0;      // per-coordinate std of the unknown-center offset
  double ood_mix = 0.5;         // weight of the first known center in an unknown center
  std::uint64_t encoder_seed = 1234;
  int out_dim = kDefaultFeatureDim;
};

struct SyntheticData {
  LabeledFeatures data;
  MatrixD raw;
};

inline SyntheticData make_synthetic_dataset(const BenchmarkSplit& split, const SyntheticConfig& cfg,
                                            std::uint64_t seed) {
  require(split.known_classes.size() >= 2, ErrorKind::kInvalidArgument, "need at least 2 known classes");
  Rng rng(mix_seed(seed, 0x73796e7468ULL));
  const int d = cfg.raw_dim;
  std::vector<VectorD> centers;
  for (std::size_t c = 0; c < split.known_classes.size(); ++c) {
    VectorD v(d);
    for (int j = 0; j < d; ++j) v(j) = rng.normal() * cfg.center_scale;
    centers.push_back(v);
  }
  for (std::size_t u = 0; u < split.unknown_classes.size(); ++u) {
    const std::size_t a = rng.below(split.known_classes.size());
    std::size_t b = rng.below(split.known_classes.size() - 1);
    if (b >= a) ++b;
    VectorD v = cfg.ood_mix * centers[a] + (1.0 - cfg.ood_mix) * centers[b];
    for (int j = 0; j < d; ++j) v(j) += rng.normal() * cfg.ood_offset;
    centers.push_back(v);
  }

  std::vector<std::string> names = split.known_classes;
  names.insert(names.end(), split.unknown_classes.begin(), split.unknown_classes.end());
  const std::size_t known = split.known_classes.size();
  std::size_t total = 0;
  for (std::size_t c = 0; c < names.size(); ++c)
    total += static_cast<std::size_t>(cfg.test_per_class + (c < known ? cfg.train_per_class : 0));

  SyntheticData out;
  out.raw.resize(static_cast<Eigen::Index>(total), d);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const int train_n = c < known ? cfg.train_per_class : 0;
    for (int s = 0; s < train_n + cfg.test_per_class; ++s) {
      for (int j = 0; j < d; ++j) out.raw(row, j) = centers[c](j) + rng.normal() * cfg.noise;
      const bool train = s < train_n;
      out.data.ids.push_back(names[c] + (train ? "/train/" : "/test/") + std::to_string(train ? s : s - train_n));
      out.data.classes.push_back(names[c]);
      out.data.is_train.push_back(train);
      ++row;
    }
  }
  out.data.features = toy_encode_images(out.raw, {cfg.encoder_seed, d, cfg.out_dim});
  return out;
}

// ---------------------------------------------------------------------------
// Text features

/// Maps class labels (ID or peer) to frozen text-encoder features of their
/// rendered descriptions.
class TextFeatureSource {
 public:
  virtual ~TextFeatureSource() = default;
  virtual MatrixF encode(const std::vector<std::string>& labels) const = 0;
};

class ToyTextSource : public TextFeatureSource {
 public:
  ToyTextSource(ToyEncoderConfig cfg, PeerGenConfig render) : encoder_(cfg), render_(std::move(render)) {}

  MatrixF encode(const std::vector<std::string>& labels) const override {
    std::vector<std::string> descriptions;
    for (const auto& l : labels) descriptions.push_back(render_description(l, render_));
    return encoder_.encode_texts(descriptions).values;
  }

 private:
  ToyEncoder encoder_;
  PeerGenConfig render_;
};

/// Text features computed elsewhere: one row per label, looked up by label.
class TableTextSource : public TextFeatureSource {
 public:
  TableTextSource(const std::vector<std::string>& labels, MatrixF features) : features_(std::move(features)) {
    require(static_cast<Eigen::Index>(labels.size()) == features_.rows(), ErrorKind::kShape,
            "text label list and text feature rows differ in length");
    for (std::size_t i = 0; i < labels.size(); ++i) index_[text::normalize_label(labels[i])] = i;
  }

  MatrixF encode(const std::vector<std::string>& labels) const override {
    MatrixF out(static_cast<Eigen::Index>(labels.size()), features_.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto it = index_.find(text::normalize_label(labels[i]));
      require(it != index_.end(), ErrorKind::kNotFound, "no text feature for label '" + labels[i] + "'");
      out.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(it->second));
    }
    return out;
  }

 private:
  MatrixF features_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// One repeat of the pipeline: split -> train -> bank -> score -> AUROC.

struct BenchmarkOptions {
  TrainingConfig training;
  KnnConfig knn;
  PeerGenConfig peers;
  std::array<int, kProjectionLayers> hidden_dims{512, 512, 512};
  double holdout_fraction = 0.1;
  bool compute_baseline = true;
  TrainLogger log = stderr_logger;
};

/// Desk-scale settings for the synthetic protocol. The bank holds 180 rows per
/// class, so k must stay well below that; the shorter schedule needs a larger
/// step and a softer temperature than the full-scale defaults.
inline BenchmarkOptions synthetic_options() {
  BenchmarkOptions o;
  o.training.epochs = 20;
  o.training.lr = 3e-4;
  o.training.loss.temperature = 0.05;
  o.knn.k = 10;
  return o;
}

using DatasetFactory = std::function<LabeledFeatures(const BenchmarkSplit&, std::uint64_t seed)>;
using PeerSource = std::function<PeerClassSet(const std::vector<std::string>& known_labels)>;

struct BenchmarkInputs {
  Protocol protocol = Protocol::kSynthetic;
  ClassCatalog catalog;
  DatasetFactory dataset;
  const TextFeatureSource* text = nullptr;
  PeerSource peers;
};

struct RepeatResult {
  int repeat = 0;
  std::uint64_t seed = 0;
  double auroc = 0.0;
  double baseline_auroc = std::nan("");
  double threshold = 0.0;
  double id_accept_rate = 0.0;   // fraction of ID test samples scored <= threshold
  double ood_reject_rate = 0.0;  // fraction of OOD test samples scored > threshold
  double openness = 0.0;
  BenchmarkSplit split;
  std::vector<EpochRecord> history;
};

struct EvalResult {
  Protocol protocol = Protocol::kSynthetic;
  std::vector<RepeatResult> repeats;
  double mean = 0.0;
  double std = 0.0;
  double openness = 0.0;

  std::vector<double> aurocs() const {
    std::vector<double> v;
    for (const auto& r : repeats) v.push_back(r.auroc);
    return v;
  }
};

namespace detail {

struct ScoredSplit {
  double auroc;
  double threshold;
  double id_accept;
  double ood_reject;
};

inline ScoredSplit score_split(const MatrixF& bank_rows, const MatrixF& holdout, const MatrixF& id_test,
                               const MatrixF& ood_test, const KnnConfig& knn, int layers) {
  FeatureBank bank;
  bank.vectors = bank_rows;
  bank.layer_dims.assign(static_cast<std::size_t>(layers), static_cast<int>(bank_rows.cols() / layers));
  const int k = std::min<int>(knn.k, static_cast<int>(bank.rows()));
  const auto id_scores = knn_scores(id_test, bank, k, knn.backend);
  const auto ood_scores = knn_scores(ood_test, bank, k, knn.backend);
  ScoredSplit out{};
  out.auroc = auroc(id_scores, ood_scores);
  out.threshold = holdout.rows() > 0 ? calibrate_threshold(knn_scores(holdout, bank, k, knn.backend), knn.target_tpr)
                                     : calibrate_threshold(id_scores, knn.target_tpr);
  std::size_t accepted = 0, rejected = 0;
  for (double s : id_scores) accepted += detect(s, out.threshold) == Decision::kId ? 1 : 0;
  for (double s : ood_scores) rejected += detect(s, out.threshold) == Decision::kOod ? 1 : 0;
  out.id_accept = static_cast<double>(accepted) / static_cast<double>(id_scores.size());
  out.ood_reject = static_cast<double>(rejected) / static_cast<double>(ood_scores.size());
  return out;
}

}  // namespace detail

struct PreparedRepeat {
  BenchmarkSplit split;
  TrainingData<float> training;
  MatrixF train_features;   // rows used for the bank
  MatrixF holdout_features; // rows used to calibrate the threshold
  MatrixF id_test;
  MatrixF ood_test;
  std::vector<std::string> id_labels;
  std::vector<std::string> peer_labels;
  std::vector<std::string> id_test_ids;
  std::vector<std::string> ood_test_ids;
};

/// Everything a repeat needs before training: split, data partition and the
/// frozen text features of ID and peer descriptions.
inline PreparedRepeat prepare_repeat(const BenchmarkInputs& in, const BenchmarkOptions& opt, std::uint64_t seed) {
  require(in.text != nullptr && in.dataset && in.peers, ErrorKind::kConfiguration, "incomplete benchmark inputs");
  PreparedRepeat p;
  p.split = make_split(in.protocol, in.catalog, seed);
  const LabeledFeatures data = in.dataset(p.split, seed);
  require(data.features.rows() == static_cast<Eigen::Index>(data.size()), ErrorKind::kShape,
          "feature rows differ from sample count");

  std::map<std::string, int> known_index;
  for (std::size_t i = 0; i < p.split.known_classes.size(); ++i)
    known_index[p.split.known_classes[i]] = static_cast<int>(i);
  std::set<std::string> unknown(p.split.unknown_classes.begin(), p.split.unknown_classes.end());

  std::vector<std::size_t> train_rows, id_test_rows, ood_test_rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto it = known_index.find(data.classes[i]);
    if (it != known_index.end()) {
      (data.is_train[i] ? train_rows : id_test_rows).push_back(i);
    } else if (unknown.contains(data.classes[i]) && !data.is_train[i]) {
      ood_test_rows.push_back(i);
    }
  }
  require(!train_rows.empty() && !id_test_rows.empty() && !ood_test_rows.empty(), ErrorKind::kInvalidArgument,
          "split leaves no training, ID test or OOD test samples");

  Rng rng(mix_seed(seed, 0x686f6c64ULL));
  rng.shuffle(train_rows);
  const auto holdout_n = static_cast<std::size_t>(std::floor(opt.holdout_fraction * static_cast<double>(train_rows.size())));
  std::vector<std::size_t> holdout_rows(train_rows.begin(), train_rows.begin() + static_cast<std::ptrdiff_t>(holdout_n));
  train_rows.erase(train_rows.begin(), train_rows.begin() + static_cast<std::ptrdiff_t>(holdout_n));
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(holdout_rows.begin(), holdout_rows.end());

  const MatrixF& feats = data.features.values;
  p.train_features = gather_rows(feats, train_rows);
  p.holdout_features = gather_rows(feats, holdout_rows);
  p.id_test = gather_rows(feats, id_test_rows);
  p.ood_test = gather_rows(feats, ood_test_rows);
  for (auto r : id_test_rows) p.id_test_ids.push_back(data.ids[r]);
  for (auto r : ood_test_rows) p.ood_test_ids.push_back(data.ids[r]);

  p.id_labels = p.split.known_classes;
  const PeerClassSet peers = in.peers(p.id_labels);
  p.peer_labels = peers.distinct_peers();
  p.training.images = p.train_features;
  for (auto r : train_rows) p.training.labels.push_back(known_index.at(data.classes[r]));
  p.training.class_texts = in.text->encode(p.id_labels);
  require(p.training.class_texts.cols() == feats.cols(), ErrorKind::kShape,
          "text features and image features differ in dimension");
  for (const auto& label : p.id_labels) {
    const auto& list = peers.peers_of(label);
    p.training.peer_texts.push_back(list.empty() ? MatrixF(0, feats.cols()) : in.text->encode(list));
  }
  return p;
}

inline RepeatResult run_repeat(const BenchmarkInputs& in, const BenchmarkOptions& opt, int repeat,
                               std::uint64_t seed) {
  PreparedRepeat p = prepare_repeat(in, opt, seed);
  RepeatResult out;
  out.repeat = repeat;
  out.seed = seed;
  out.split = p.split;
  out.openness = p.split.openness();

  HeadShape shape;
  shape.input_dim = static_cast<int>(p.train_features.cols());
  shape.hidden_dims = opt.hidden_dims;
  auto head = init_head<float>(static_cast<int>(p.id_labels.size()), static_cast<int>(p.peer_labels.size()),
                               seed, shape);
  TrainingConfig tcfg = opt.training;
  tcfg.seed = seed;
  auto state = train(p.training, std::move(head), tcfg, opt.log);
  out.history = state.history;

  const auto scored = detail::score_split(knn_embedding(state.head, p.train_features),
                                          knn_embedding(state.head, p.holdout_features),
                                          knn_embedding(state.head, p.id_test), knn_embedding(state.head, p.ood_test),
                                          opt.knn, kProjectionLayers);
  out.auroc = scored.auroc;
  out.threshold = scored.threshold;
  out.id_accept_rate = scored.id_accept;
  out.ood_reject_rate = scored.ood_reject;
  if (opt.compute_baseline) {
    out.baseline_auroc = detail::score_split(passthrough_embedding(p.train_features),
                                             passthrough_embedding(p.holdout_features),
                                             passthrough_embedding(p.id_test), passthrough_embedding(p.ood_test),
                                             opt.knn, kProjectionLayers)
                             .auroc;
  }
  return out;
}

/// Repeats r = 0..repeats-1 use seed base_seed + r.
inline EvalResult run_benchmark(const BenchmarkInputs& in, int repeats, std::uint64_t base_seed,
                                const BenchmarkOptions& opt) {
  require(repeats >= 1, ErrorKind::kInvalidArgument, "repeats must be >= 1");
  opt.training.validate();
  opt.knn.validate();
  EvalResult out;
  out.protocol = in.protocol;
  for (int r = 0; r < repeats; ++r) out.repeats.push_back(run_repeat(in, opt, r, base_seed + static_cast<std::uint64_t>(r)));
  const auto ms = mean_std(out.aurocs());
  out.mean = ms.mean;
  out.std = ms.std;
  out.openness = out.repeats.front().openness;
  return out;
}

/// Inputs for the built-in synthetic protocol: toy encoders and stub peers.
struct SyntheticSetup {
  SyntheticConfig data;
  ToyEncoderConfig text_encoder{4321, 1024, kDefaultFeatureDim};
  std::uint64_t stub_seed = 0;
};

class SyntheticBenchmark {
 public:
  SyntheticBenchmark(SyntheticSetup setup, PeerGenConfig peer_cfg)
      : setup_(aligned(std::move(setup))), peer_cfg_(std::move(peer_cfg)),
        text_(setup_.text_encoder, peer_cfg_), stub_(setup_.stub_seed) {}

  // The object is referenced by the returned inputs and must outlive them.
  SyntheticBenchmark(const SyntheticBenchmark&) = delete;
  SyntheticBenchmark& operator=(const SyntheticBenchmark&) = delete;

  BenchmarkInputs inputs() {
    BenchmarkInputs in;
    in.protocol = Protocol::kSynthetic;
    in.catalog = builtin_catalog(Protocol::kSynthetic);
    const SyntheticConfig cfg = setup_.data;
    in.dataset = [cfg](const BenchmarkSplit& split, std::uint64_t seed) {
      return make_synthetic_dataset(split, cfg, seed).data;
    };
    in.text = &text_;
    in.peers = [this](const std::vector<std::string>& labels) {
      return generate_peer_classes(labels, peer_cfg_, stub_);
    };
    return in;
  }

 private:
  static SyntheticSetup aligned(SyntheticSetup s) {
    s.text_encoder.out_dim = s.data.out_dim;
    return s;
  }

  SyntheticSetup setup_;
  PeerGenConfig peer_cfg_;
  ToyTextSource text_;
  StubProvider stub_;
};

// ---------------------------------------------------------------------------
// Reports

inline std::string results_csv(const std::vector<EvalResult>& results) {
  std::string out = "protocol,repeat,seed,auroc,openness\n";
  char buf[128];
  for (const auto& res : results) {
    for (const auto& r : res.repeats) {
      std::snprintf(buf, sizeof buf, "%s,%d,%llu,%.6f,%.2f\n", protocol_name(res.protocol).c_str(), r.repeat,
                    static_cast<unsigned long long>(r.seed), r.auroc, r.openness);
      out += buf;
    }
  }
  return out;
}

struct ResultRow {
  std::string protocol;
  int repeat = 0;
  std::uint64_t seed = 0;
  double auroc = 0.0;
  double openness = 0.0;
};

inline std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::vector<ResultRow> rows;
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == "protocol,repeat,seed,auroc,openness",
          ErrorKind::kFormat, "results.csv header mismatch");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string f[5];
    for (auto& s : f) require(static_cast<bool>(std::getline(fields, s, ',')), ErrorKind::kFormat, "short results row");
    try {
      rows.push_back({f[0], std::stoi(f[1]), std::stoull(f[2]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::exception&) {
      fail(ErrorKind::kFormat, "bad results row: " + line);
    }
  }
  return rows;
}

/// Markdown table with one mean±std AUROC row (percent) per protocol.
inline std::string results_table_md(const std::vector<ResultRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> aurocs;
  std::map<std::string, double> openness;
  for (const auto& r : rows) {
    if (!aurocs.contains(r.protocol)) order.push_back(r.protocol);
    aurocs[r.protocol].push_back(100.0 * r.auroc);
    openness[r.protocol] = r.openness;
  }
  std::string out = "| Protocol | Openness (%) | Repeats | AUROC (%) |\n|---|---|---|---|\n";
  char buf[256];
  for (const auto& p : order) {
    const auto ms = mean_std(aurocs[p]);
    std::snprintf(buf, sizeof buf, "| %s | %.2f | %zu | %.1f±%.1f |\n", p.c_str(), openness[p], aurocs[p].size(),
                  ms.mean, ms.std);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D projection for plotting

struct Projection2D {
  MatrixD coords;      // n x 2
  MatrixD components;  // 2 x d, unit rows
  VectorD mean;
};

/// PCA to two components via SVD of the centered data. Each component is
/// signed so that its first non-negligible loading is positive.
inline Projection2D pca_2d(const MatrixD& x) {
  require(x.rows() >= 3, ErrorKind::kInvalidArgument, "projection needs at least 3 samples");
  Projection2D out;
  out.mean = x.colwise().mean().transpose();
  const MatrixD centered = x.rowwise() - out.mean.transpose();
  Eigen::BDCSVD<MatrixD> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double scale = std::max(1.0, centered.cwiseAbs().maxCoeff());
  require(sv.size() > 0 && sv(0) > 1e-12 * scale * std::sqrt(static_cast<double>(x.size())),
          ErrorKind::kInvalidArgument, "data has rank 0; projection undefined");
  out.components = MatrixD::Zero(2, x.cols());
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, svd.matrixV().cols()); ++c) {
    VectorD v = svd.matrixV().col(c);
    if (c > 0 && sv(c) <= 1e-12 * sv(0)) v.setZero();
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (std::abs(v(j)) > 1e-12) {
        if (v(j) < 0) v = -v;
        break;
      }
    }
    out.components.row(c) = v.transpose();
  }
  out.coords = centered * out.components.transpose();
  return out;
}

inline std::string projection_csv(const std::vector<std::string>& ids, const MatrixD& coords,
                                  const std::vector<std::string>& labels, const std::vector<bool>& is_id) {
  require(ids.size() == static_cast<std::size_t>(coords.rows()) && labels.size() == ids.size() &&
              is_id.size() == ids.size(),
          ErrorKind::kShape, "projection inputs differ in length");
  std::string out = "sample_id,x,y,label,id_or_ood\n";
  char buf[96];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g,", coords(static_cast<Eigen::Index>(i), 0),
                  coords(static_cast<Eigen::Index>(i), 1));
    out += ids[i] + buf + labels[i] + "," + (is_id[i] ? "ID" : "OOD") + "\n";
  }
  return out;
}

inline void export_projection(const MatrixD& features, const std::vector<std::string>& ids,
                              const std::vector<std::string>& labels, const std::vector<bool>& is_id,
                              const std::filesystem::path& out) {
  persist::atomic_write_text(out, projection_csv(ids, pca_2d(features).coords, labels, is_id));
}

}  // namespace odpc
