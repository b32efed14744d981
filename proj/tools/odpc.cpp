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

// odpc: command-line driver for peer-class generation, training, KNN scoring
// and benchmark reports.
//
//   odpc gen-peers --classes classes.txt --provider stub --n 3 --out work
//   odpc encode    --protocol synthetic --seed 7 --out work
//   odpc train     --features work/features.bin --labels work/labels.json
//                  --peers work/peers.json --out work
//   odpc eval      --protocol synthetic --repeats 5 --seed 7 --out work
//   odpc report    --results work/results.csv --out work
//   odpc project   --features work/features.bin --labels work/labels.json
//                  --checkpoint work/checkpoint.odpc --out work
//
// Exit status: 0 on success, 2 for usage or configuration errors (including
// missing inputs), 1 for runtime failures. Failures print one JSON line on
// stderr: {"error": <kind>, "message": <text>}.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "odpc/bench.hpp"
#include "odpc/encoders.hpp"
#include "odpc/head.hpp"
#include "odpc/http_provider.hpp"
#include "odpc/knn.hpp"
#include "odpc/peer_gen.hpp"
#include "odpc/persist.hpp"
#include "odpc/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using odpc::ErrorKind;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Paths {
  std::string classes;
  std::string features;
  std::string labels;
  std::string peers;
  std::string checkpoint;
  std::string text_features;
  std::string text_labels;
  std::string images;
  std::string texts;
  std::string import_path;
  std::string llm_cache;
  std::vector<std::string> results;
  std::string out = ".";
};

// Flat configuration shared by every command. Keys mirror the JSON file.
struct PipelineConfig {
  odpc::BenchmarkOptions bench;
  odpc::Protocol protocol = odpc::Protocol::kSynthetic;
  int repeats = 5;
  std::uint64_t seed = 0;
  odpc::HttpLlmConfig http;
  odpc::SyntheticSetup synthetic;
  Paths paths;
};

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    odpc::fail(ErrorKind::kConfiguration, "config key '" + key + "' has the wrong type");
  }
}

using Dims = std::array<int, odpc::kProjectionLayers>;
using Setter = std::function<void(PipelineConfig&, const json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
#define ODPC_KEY(name, type, target) \
  t[name] = [](PipelineConfig& c, const json& v) { c.target = as<type>(v, name); }
    ODPC_KEY("epochs", int, bench.training.epochs);
    ODPC_KEY("batch_size", int, bench.training.batch_size);
    ODPC_KEY("lr", double, bench.training.lr);
    ODPC_KEY("momentum", double, bench.training.momentum);
    ODPC_KEY("step_size", int, bench.training.step_size);
    ODPC_KEY("gamma", double, bench.training.gamma);
    ODPC_KEY("temperature", double, bench.training.loss.temperature);
    ODPC_KEY("mix_lambda", double, bench.training.loss.mix_lambda);
    ODPC_KEY("use_pcc", bool, bench.training.loss.use_pcc);
    ODPC_KEY("use_ce", bool, bench.training.loss.use_ce);
    ODPC_KEY("use_mixup", bool, bench.training.loss.use_mixup);
    ODPC_KEY("knn_k", int, bench.knn.k);
    ODPC_KEY("target_tpr", double, bench.knn.target_tpr);
    ODPC_KEY("peers_per_class", int, bench.peers.peers_per_class);
    ODPC_KEY("prompt_template", std::string, bench.peers.prompt_template);
    ODPC_KEY("description_template", std::string, bench.peers.description_template);
    ODPC_KEY("max_requery_attempts", int, bench.peers.max_requery_attempts);
    ODPC_KEY("offline", bool, bench.peers.offline);
    ODPC_KEY("hidden_dims", Dims, bench.hidden_dims);
    ODPC_KEY("holdout_fraction", double, bench.holdout_fraction);
    ODPC_KEY("repeats", int, repeats);
    ODPC_KEY("seed", std::uint64_t, seed);
    ODPC_KEY("llm_endpoint", std::string, http.endpoint);
    ODPC_KEY("llm_model", std::string, http.model);
    ODPC_KEY("llm_timeout_seconds", int, http.timeout_seconds);
    ODPC_KEY("stub_seed", std::uint64_t, synthetic.stub_seed);
    ODPC_KEY("image_encoder_seed", std::uint64_t, synthetic.data.encoder_seed);
    ODPC_KEY("text_encoder_seed", std::uint64_t, synthetic.text_encoder.seed);
    ODPC_KEY("text_raw_dim", int, synthetic.text_encoder.raw_dim);
    ODPC_KEY("feature_dim", int, synthetic.data.out_dim);
    ODPC_KEY("synthetic_raw_dim", int, synthetic.data.raw_dim);
    ODPC_KEY("synthetic_train_per_class", int, synthetic.data.train_per_class);
    ODPC_KEY("synthetic_test_per_class", int, synthetic.data.test_per_class);
    ODPC_KEY("synthetic_center_scale", double, synthetic.data.center_scale);
    ODPC_KEY("synthetic_noise", double, synthetic.data.noise);
    ODPC_KEY("synthetic_ood_offset", double, synthetic.data.ood_offset);
    ODPC_KEY("classes", std::string, paths.classes);
    ODPC_KEY("features", std::string, paths.features);
    ODPC_KEY("labels", std::string, paths.labels);
    ODPC_KEY("peers", std::string, paths.peers);
    ODPC_KEY("checkpoint", std::string, paths.checkpoint);
    ODPC_KEY("text_features", std::string, paths.text_features);
    ODPC_KEY("text_labels", std::string, paths.text_labels);
    ODPC_KEY("images", std::string, paths.images);
    ODPC_KEY("texts", std::string, paths.texts);
    ODPC_KEY("import", std::string, paths.import_path);
    ODPC_KEY("llm_cache", std::string, paths.llm_cache);
    ODPC_KEY("out", std::string, paths.out);
#undef ODPC_KEY
    t["pcc_form"] = [](PipelineConfig& c, const json& v) {
      const auto s = as<std::string>(v, "pcc_form");
      if (s == "per_anchor") {
        c.bench.training.loss.form = odpc::PccForm::kPerAnchor;
      } else if (s == "literal") {
        c.bench.training.loss.form = odpc::PccForm::kLiteral;
      } else {
        odpc::fail(ErrorKind::kConfiguration, "pcc_form must be per_anchor or literal");
      }
    };
    t["knn_backend"] = [](PipelineConfig& c, const json& v) {
      c.bench.knn.backend = odpc::parse_knn_backend(as<std::string>(v, "knn_backend"));
    };
    t["provider"] = [](PipelineConfig& c, const json& v) {
      c.bench.peers.provider_kind = odpc::parse_provider_kind(as<std::string>(v, "provider"));
    };
    t["protocol"] = [](PipelineConfig& c, const json& v) {
      c.protocol = odpc::parse_protocol(as<std::string>(v, "protocol"));
    };
    t["results"] = [](PipelineConfig& c, const json& v) {
      c.paths.results = v.is_string() ? std::vector<std::string>{v.get<std::string>()}
                                       : as<std::vector<std::string>>(v, "results");
    };
    return t;
  }();
  return table;
}

void apply(PipelineConfig& cfg, const json& doc, const std::string& origin) {
  odpc::require(doc.is_object(), ErrorKind::kConfiguration, origin + " must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const auto it = setters().find(key);
    odpc::require(it != setters().end(), ErrorKind::kConfiguration,
                  "unknown config key '" + key + "' in " + origin);
    it->second(cfg, value);
  }
}

// Preset for the protocol, then the config file, then flags.
PipelineConfig resolve(const std::string& config_path, const json& flags) {
  try {
    json file = json::object();
    if (!config_path.empty()) {
      odpc::require(fs::exists(config_path), ErrorKind::kNotFound, "no such config file: " + config_path);
      file = odpc::persist::read_json(config_path);
    }
    std::string protocol = "synthetic";
    if (file.is_object() && file.contains("protocol")) protocol = as<std::string>(file["protocol"], "protocol");
    if (flags.contains("protocol")) protocol = flags["protocol"].get<std::string>();

    PipelineConfig cfg;
    cfg.protocol = odpc::parse_protocol(protocol);
    if (cfg.protocol == odpc::Protocol::kSynthetic) cfg.bench = odpc::synthetic_options();
    apply(cfg, file, config_path.empty() ? "config" : config_path);
    apply(cfg, flags, "command-line flags");

    cfg.bench.training.validate();
    cfg.bench.knn.validate();
    cfg.bench.peers.validate();
    odpc::require(cfg.repeats >= 1, ErrorKind::kConfiguration, "repeats must be >= 1");
    odpc::require(cfg.bench.holdout_fraction > 0.0 && cfg.bench.holdout_fraction < 1.0,
                  ErrorKind::kConfiguration, "holdout_fraction must lie in (0, 1)");
    for (int d : cfg.bench.hidden_dims)
      odpc::require(d >= 1, ErrorKind::kConfiguration, "hidden_dims must be >= 1");
    return cfg;
  } catch (const odpc::Error& e) {
    if (e.kind() == ErrorKind::kNotFound) throw;
    throw odpc::Error(ErrorKind::kConfiguration, e.what());
  }
}

const std::string& need(const std::string& value, const std::string& key, const std::string& command) {
  odpc::require(!value.empty(), ErrorKind::kConfiguration, command + " needs --" + key);
  return value;
}

fs::path out_file(const PipelineConfig& cfg, const std::string& name) { return fs::path(cfg.paths.out) / name; }

// One label per line, or a JSON array of strings.
std::vector<std::string> read_label_list(const fs::path& path) {
  odpc::require(fs::exists(path), ErrorKind::kNotFound, "no such file: " + path.string());
  const std::string text = odpc::persist::read_text(path);
  if (path.extension() == ".json") {
    try {
      return json::parse(text).get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      odpc::fail(ErrorKind::kFormat, path.string() + ": " + e.what());
    }
  }
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = odpc::text::trim(line);
    if (!trimmed.empty()) out.emplace_back(trimmed);
  }
  return out;
}

void log_line(std::string_view msg) { std::cerr << "[odpc] " << msg << "\n"; }

// ---------------------------------------------------------------------------
// Providers and text features

class ProviderStack {
 public:
  explicit ProviderStack(const PipelineConfig& cfg)
      : cache_(cfg.paths.llm_cache.empty() ? out_file(cfg, "llm_cache.json") : fs::path(cfg.paths.llm_cache)) {
    if (cfg.bench.peers.provider_kind == odpc::ProviderKind::kHttpLlm) {
      inner_ = std::make_unique<odpc::HttpLlmProvider>(cfg.http);
    } else {
      inner_ = std::make_unique<odpc::StubProvider>(cfg.synthetic.stub_seed);
    }
    cached_ = std::make_unique<odpc::CachedProvider>(*inner_, cache_, cfg.bench.peers.offline);
  }

  odpc::LlmProvider& provider() { return *cached_; }
  void save() const { cache_.save(); }

 private:
  odpc::LlmCache cache_;
  std::unique_ptr<odpc::LlmProvider> inner_;
  std::unique_ptr<odpc::CachedProvider> cached_;
};

std::unique_ptr<odpc::TextFeatureSource> make_text_source(const PipelineConfig& cfg, int feature_dim,
                                                          const odpc::PeerGenConfig& render) {
  if (!cfg.paths.text_features.empty() || !cfg.paths.text_labels.empty()) {
    const auto labels = read_label_list(need(cfg.paths.text_labels, "text_labels", "text features"));
    auto features = odpc::import_embeddings(cfg.paths.text_features);
    return std::make_unique<odpc::TableTextSource>(labels, std::move(features.values));
  }
  odpc::ToyEncoderConfig enc = cfg.synthetic.text_encoder;
  enc.out_dim = feature_dim;
  return std::make_unique<odpc::ToyTextSource>(enc, render);
}

struct LoadedDataset {
  odpc::LabeledFeatures data;
  odpc::LabelManifest manifest;
};

LoadedDataset load_dataset(const PipelineConfig& cfg, const std::string& command) {
  LoadedDataset out;
  const auto labels_path = need(cfg.paths.labels, "labels", command);
  odpc::require(fs::exists(labels_path), ErrorKind::kNotFound, "no such file: " + labels_path);
  out.manifest = odpc::read_label_manifest(labels_path);
  out.data.features = odpc::import_embeddings(need(cfg.paths.features, "features", command));
  odpc::validate(out.data.features);
  odpc::require(static_cast<std::size_t>(out.data.features.rows()) == out.manifest.ids.size(), ErrorKind::kShape,
                "feature rows (" + std::to_string(out.data.features.rows()) + ") differ from labels.json samples (" +
                    std::to_string(out.manifest.ids.size()) + ")");
  out.data.ids = out.manifest.ids;
  out.data.classes = out.manifest.classes;
  out.data.is_train = out.manifest.is_train;
  return out;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_gen_peers(const PipelineConfig& cfg) {
  const auto classes = read_label_list(need(cfg.paths.classes, "classes", "gen-peers"));
  ProviderStack stack(cfg);
  odpc::PeerClassSet set;
  try {
    set = odpc::generate_peer_classes(classes, cfg.bench.peers, stack.provider());
  } catch (...) {
    stack.save();
    throw;
  }
  stack.save();
  odpc::write_peers(out_file(cfg, "peers.json"), set, cfg.bench.peers);
  std::cout << "wrote " << out_file(cfg, "peers.json").string() << ": " << set.id_labels.size() << " classes, "
            << set.total_peer_entries() << " peer entries\n";
}

void cmd_encode(const PipelineConfig& cfg) {
  bool did = false;
  if (!cfg.paths.images.empty()) {
    const auto raw = odpc::import_embeddings(cfg.paths.images);
    odpc::ToyEncoderConfig enc{cfg.synthetic.data.encoder_seed, static_cast<int>(raw.dim()), cfg.synthetic.data.out_dim};
    odpc::persist::write_bank(odpc::toy_encode_images(raw.values.cast<double>(), enc), out_file(cfg, "features.bin"));
    std::cout << "wrote " << out_file(cfg, "features.bin").string() << "\n";
    did = true;
  }
  if (!cfg.paths.texts.empty()) {
    const auto descriptions = read_label_list(cfg.paths.texts);
    odpc::ToyEncoderConfig enc = cfg.synthetic.text_encoder;
    enc.out_dim = cfg.synthetic.data.out_dim;
    odpc::persist::write_bank(odpc::toy_encode_texts(descriptions, enc), out_file(cfg, "text_features.bin"));
    std::cout << "wrote " << out_file(cfg, "text_features.bin").string() << "\n";
    did = true;
  }
  if (!cfg.paths.import_path.empty()) {
    auto m = odpc::import_embeddings(cfg.paths.import_path);
    odpc::validate(m);
    odpc::persist::write_bank(m, out_file(cfg, "features.bin"));
    std::cout << "wrote " << out_file(cfg, "features.bin").string() << " (" << m.rows() << " x " << m.dim() << ")\n";
    did = true;
  }
  if (!did) {
    odpc::require(cfg.protocol == odpc::Protocol::kSynthetic, ErrorKind::kConfiguration,
                  "encode needs --images, --texts, --import or --protocol synthetic");
    const auto catalog = odpc::builtin_catalog(odpc::Protocol::kSynthetic);
    const auto split = odpc::make_split(odpc::Protocol::kSynthetic, catalog, cfg.seed);
    const auto synth = odpc::make_synthetic_dataset(split, cfg.synthetic.data, cfg.seed);
    odpc::LabelManifest manifest;
    manifest.catalog = catalog;
    manifest.ids = synth.data.ids;
    manifest.classes = synth.data.classes;
    manifest.is_train = synth.data.is_train;
    odpc::persist::write_bank(synth.data.features, out_file(cfg, "features.bin"));
    odpc::persist::write_json(out_file(cfg, "labels.json"), odpc::to_json(manifest));
    std::string known;
    for (const auto& c : split.known_classes) known += c + "\n";
    odpc::persist::atomic_write_text(out_file(cfg, "known_classes.txt"), known);
    std::cout << "wrote " << out_file(cfg, "features.bin").string() << ", labels.json and known_classes.txt ("
              << synth.data.size() << " samples)\n";
  }
}

void cmd_train(const PipelineConfig& cfg) {
  const auto loaded = load_dataset(cfg, "train");
  const auto peers = odpc::read_peers(need(cfg.paths.peers, "peers", "train"));
  const auto& id_labels = peers.set.id_labels;
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < id_labels.size(); ++i) index[id_labels[i]] = static_cast<int>(i);

  std::vector<std::size_t> rows;
  odpc::TrainingData<float> data;
  for (std::size_t i = 0; i < loaded.data.size(); ++i) {
    const auto it = index.find(loaded.data.classes[i]);
    if (!loaded.data.is_train[i] || it == index.end()) continue;
    rows.push_back(i);
    data.labels.push_back(it->second);
  }
  odpc::require(!rows.empty(), ErrorKind::kConfiguration, "no training samples belong to the classes in peers.json");
  const odpc::MatrixF train_features = odpc::gather_rows(loaded.data.features.values, rows);
  data.images = train_features;

  const int dim = static_cast<int>(train_features.cols());
  const auto text = make_text_source(cfg, dim, peers.cfg);
  data.class_texts = text->encode(id_labels);
  for (const auto& label : id_labels) {
    const auto& list = peers.set.peers_of(label);
    data.peer_texts.push_back(list.empty() ? odpc::MatrixF(0, dim) : text->encode(list));
  }

  odpc::HeadShape shape;
  shape.input_dim = dim;
  shape.hidden_dims = cfg.bench.hidden_dims;
  const auto peer_labels = peers.set.distinct_peers();
  auto head = odpc::init_head<float>(static_cast<int>(id_labels.size()), static_cast<int>(peer_labels.size()),
                                     cfg.seed, shape);
  head.id_labels = id_labels;
  head.peer_labels = peer_labels;

  odpc::TrainingConfig tcfg = cfg.bench.training;
  tcfg.seed = cfg.seed;
  const auto state = odpc::train(data, std::move(head), tcfg, log_line);

  odpc::save_checkpoint(state.head, out_file(cfg, "checkpoint.odpc"));
  odpc::write_loss_history(out_file(cfg, "loss_history.csv"), state.history);
  odpc::EmbeddingMatrix train_matrix{train_features, loaded.data.features.normalized,
                                     loaded.data.features.source};
  odpc::write_feature_bank(odpc::build_bank(state.head, train_matrix), out_file(cfg, "bank.bin"));
  std::cout << "trained " << state.history.size() << " epochs on " << rows.size() << " samples; wrote "
            << out_file(cfg, "checkpoint.odpc").string() << ", loss_history.csv and bank.bin\n";
}

void cmd_eval(const PipelineConfig& cfg) {
  odpc::BenchmarkOptions opt = cfg.bench;
  opt.log = log_line;
  std::unique_ptr<odpc::SyntheticBenchmark> synthetic;
  std::unique_ptr<odpc::TextFeatureSource> text;
  std::unique_ptr<ProviderStack> stack;
  std::optional<odpc::LoadedPeers> fixed_peers;
  odpc::BenchmarkInputs in;

  if (cfg.protocol == odpc::Protocol::kSynthetic) {
    synthetic = std::make_unique<odpc::SyntheticBenchmark>(cfg.synthetic, cfg.bench.peers);
    in = synthetic->inputs();
  } else {
    auto loaded = std::make_shared<LoadedDataset>(load_dataset(cfg, "eval"));
    in.protocol = cfg.protocol;
    in.catalog = loaded->manifest.catalog;
    if (in.catalog.animal_classes.empty() && cfg.protocol != odpc::Protocol::kTinyImageNet)
      in.catalog.animal_classes = odpc::builtin_catalog(cfg.protocol).animal_classes;
    in.dataset = [loaded](const odpc::BenchmarkSplit&, std::uint64_t) { return loaded->data; };
    text = make_text_source(cfg, static_cast<int>(loaded->data.features.dim()), cfg.bench.peers);
    in.text = text.get();
  }

  if (!cfg.paths.peers.empty()) {
    fixed_peers = odpc::read_peers(cfg.paths.peers);
    in.peers = [&fixed_peers](const std::vector<std::string>& labels) {
      odpc::PeerClassSet subset;
      subset.provenance = fixed_peers->set.provenance;
      subset.id_labels = labels;
      for (const auto& l : labels) {
        try {
          subset.peers.push_back(fixed_peers->set.peers_of(l));
        } catch (const odpc::Error&) {
          odpc::fail(ErrorKind::kNotFound, "peers.json has no entry for class '" + l + "'");
        }
      }
      return subset;
    };
  } else if (cfg.protocol != odpc::Protocol::kSynthetic ||
             cfg.bench.peers.provider_kind == odpc::ProviderKind::kHttpLlm) {
    stack = std::make_unique<ProviderStack>(cfg);
    in.peers = [&stack, &cfg](const std::vector<std::string>& labels) {
      auto set = odpc::generate_peer_classes(labels, cfg.bench.peers, stack->provider());
      stack->save();
      return set;
    };
  }

  const auto result = odpc::run_benchmark(in, cfg.repeats, cfg.seed, opt);
  odpc::persist::atomic_write_text(out_file(cfg, "results.csv"), odpc::results_csv({result}));
  std::printf("%s: AUROC %.4f +- %.4f over %d repeats (openness %.2f%%); wrote %s\n",
              odpc::protocol_name(cfg.protocol).c_str(), result.mean, result.std, cfg.repeats, result.openness,
              out_file(cfg, "results.csv").c_str());
}

void cmd_report(const PipelineConfig& cfg) {
  odpc::require(!cfg.paths.results.empty(), ErrorKind::kConfiguration, "report needs --results");
  std::vector<odpc::ResultRow> rows;
  for (const auto& path : cfg.paths.results) {
    odpc::require(fs::exists(path), ErrorKind::kNotFound, "no such file: " + path);
    const auto part = odpc::parse_results_csv(odpc::persist::read_text(path));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  odpc::require(!rows.empty(), ErrorKind::kFormat, "results files contain no rows");
  const auto table = odpc::results_table_md(rows);
  odpc::persist::atomic_write_text(out_file(cfg, "table.md"), table);
  std::cout << table;
}

void cmd_project(const PipelineConfig& cfg) {
  const auto loaded = load_dataset(cfg, "project");
  std::set<std::string> id_classes;
  odpc::MatrixD features;
  if (!cfg.paths.checkpoint.empty()) {
    const auto head = odpc::load_checkpoint<float>(cfg.paths.checkpoint);
    id_classes.insert(head.id_labels.begin(), head.id_labels.end());
    // The last projection layer feeds the classifier.
    features = odpc::project(head, loaded.data.features.values).back().cast<double>();
  } else {
    features = loaded.data.features.values.cast<double>();
  }
  if (id_classes.empty()) {
    if (!cfg.paths.classes.empty()) {
      for (const auto& c : read_label_list(cfg.paths.classes)) id_classes.insert(c);
    } else {
      for (std::size_t i = 0; i < loaded.data.size(); ++i)
        if (loaded.data.is_train[i]) id_classes.insert(loaded.data.classes[i]);
    }
  }
  std::vector<bool> is_id;
  for (const auto& c : loaded.data.classes) is_id.push_back(id_classes.contains(c));
  odpc::export_projection(features, loaded.data.ids, loaded.data.classes, is_id, out_file(cfg, "proj.csv"));
  std::cout << "wrote " << out_file(cfg, "proj.csv").string() << " (" << loaded.data.size() << " samples)\n";
}

int report_error(std::string_view kind, std::string_view message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peer-class OOD detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> protocol, provider, out;
  std::optional<int> repeats, epochs, n;
  bool offline = false;
  std::map<std::string, std::optional<std::string>> path_flags = {
      {"classes", {}}, {"features", {}},      {"labels", {}},      {"peers", {}},  {"checkpoint", {}},
      {"images", {}},  {"texts", {}},         {"import", {}},      {"llm_cache", {}},
      {"text_features", {}}, {"text_labels", {}},
  };
  std::vector<std::string> results;

  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--protocol", protocol, "benchmark protocol (synthetic, cifar10_6v4, ...)");
  app.add_option("--repeats", repeats, "number of seeded repeats");
  app.add_flag("--offline", offline, "answer LLM prompts from the cache only");
  app.add_option("--provider", provider, "peer provider: stub or http_llm");
  app.add_option("--out", out, "output directory");
  app.add_option("--epochs", epochs, "training epochs");
  app.add_option("--n", n, "peer classes per ID class");
  for (auto& [key, value] : path_flags) {
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    app.add_option(flag, value, key + " path");
  }
  app.add_option("--results", results, "results.csv files to summarize");

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const PipelineConfig&);
  };
  const Command commands[] = {
      {"gen-peers", "query the provider for peer classes; writes peers.json", cmd_gen_peers},
      {"encode", "encode inputs with the frozen toy encoders; writes feature banks", cmd_encode},
      {"train", "train the projection head; writes a checkpoint, loss_history.csv and bank.bin", cmd_train},
      {"eval", "run the benchmark protocol; writes results.csv", cmd_eval},
      {"report", "summarize results files; writes table.md", cmd_report},
      {"project", "2-D PCA projection of features; writes proj.csv", cmd_project},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kExitUsage);
  }

  json flags = json::object();
  if (seed) flags["seed"] = *seed;
  if (protocol) flags["protocol"] = *protocol;
  if (repeats) flags["repeats"] = *repeats;
  if (offline) flags["offline"] = true;
  if (provider) flags["provider"] = *provider;
  if (out) flags["out"] = *out;
  if (epochs) flags["epochs"] = *epochs;
  if (n) flags["peers_per_class"] = *n;
  for (const auto& [key, value] : path_flags)
    if (value) flags[key] = *value;
  if (!results.empty()) flags["results"] = results;

  try {
    const PipelineConfig cfg = resolve(config_path, flags);
    const auto* sub = app.get_subcommands().front();
    for (const auto& c : commands)
      if (sub->get_name() == c.name) c.run(cfg);
    return 0;
  } catch (const odpc::Error& e) {
    const bool usage = e.kind() == ErrorKind::kConfiguration || e.kind() == ErrorKind::kNotFound;
    return report_error(odpc::to_string(e.kind()), e.what(), usage ? kExitUsage : kExitRuntime);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kExitRuntime);
  }
}
