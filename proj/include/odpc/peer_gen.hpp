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
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "odpc/error.hpp"
#include "odpc/persist.hpp"
#include "odpc/rng.hpp"
#include "odpc/text.hpp"

namespace odpc {

inline constexpr std::string_view kDefaultPromptTemplate =
    "what categories are similar to [class] in semantic or appearance";
inline constexpr std::string_view kDefaultDescriptionTemplate = "This is a photo of a [CLASS]";
inline constexpr std::string_view kClassPlaceholder = "[class]";
inline constexpr std::string_view kDescriptionPlaceholder = "[CLASS]";
inline constexpr std::string_view kApiKeyEnv = "ODPC_LLM_API_KEY";

enum class ProviderKind { kHttpLlm, kStub };

inline std::string_view to_string(ProviderKind kind) {
  return kind == ProviderKind::kHttpLlm ? "http_llm" : "stub";
}

inline ProviderKind parse_provider_kind(std::string_view s) {
  if (s == "http_llm" || s == "http") return ProviderKind::kHttpLlm;
  if (s == "stub") return ProviderKind::kStub;
  fail(ErrorKind::kConfiguration, "unknown provider kind '" + std::string(s) + "'");
}

struct PeerGenConfig {
  int peers_per_class = 3;
  std::string prompt_template{kDefaultPromptTemplate};
  std::string description_template{kDefaultDescriptionTemplate};
  ProviderKind provider_kind = ProviderKind::kStub;
  int max_requery_attempts = 5;
  bool offline = false;

  void validate() const {
    require(peers_per_class >= 0, ErrorKind::kConfiguration, "peers_per_class must be >= 0");
    require(max_requery_attempts >= 1, ErrorKind::kConfiguration,
            "max_requery_attempts must be >= 1");
    require(text::count_occurrences(prompt_template, kClassPlaceholder) == 1,
            ErrorKind::kConfiguration, "prompt_template must contain [class] exactly once");
    require(text::count_occurrences(description_template, kDescriptionPlaceholder) == 1,
            ErrorKind::kConfiguration, "description_template must contain [CLASS] exactly once");
  }
};

inline std::string build_prompt(std::string_view class_label, const PeerGenConfig& cfg) {
  require(!text::trim(class_label).empty(), ErrorKind::kInvalidArgument, "empty class label");
  return text::replace_once(cfg.prompt_template, kClassPlaceholder, class_label);
}

inline std::string render_description(std::string_view label, const PeerGenConfig& cfg) {
  require(!text::trim(label).empty(), ErrorKind::kInvalidArgument, "empty label");
  return text::replace_once(cfg.description_template, kDescriptionPlaceholder, label);
}

inline std::string requery_prompt(const std::string& base, int attempt) {
  if (attempt == 0) return base;
  return base + ". Please give different answers (attempt " + std::to_string(attempt + 1) + ")";
}

// ---------------------------------------------------------------------------
// Providers

class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  /// Ordered candidate labels for one prompt.
  virtual std::vector<std::string> request(const std::string& prompt) = 0;
  /// Stable identifier; part of the cache key.
  virtual std::string id() const = 0;
  virtual bool needs_network() const { return false; }
};

/// Splits a free-text LLM answer into labels: one per line or comma, with list
/// bullets, numbering and surrounding punctuation removed.
inline std::vector<std::string> parse_label_list(std::string_view answer) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    std::string s = text::trim(current);
    current.clear();
    std::size_t i = 0;
    while (i < s.size() && (s[i] == '-' || s[i] == '*' || s[i] == ' ' || (s[i] >= '0' && s[i] <= '9')))
      ++i;
    if (i < s.size() && i > 0 && (s[i] == '.' || s[i] == ')')) ++i;
    s = text::trim(std::string_view(s).substr(std::min(i, s.size())));
    while (!s.empty() && (s.back() == '.' || s.back() == ';')) s.pop_back();
    if (!s.empty()) out.push_back(s);
  };
  for (char c : answer) {
    if (c == '\n' || c == ',') flush();
    else current.push_back(c);
  }
  flush();
  return out;
}

/// Deterministic offline provider. Answers come from an explicit table when a
/// key matches the start of the prompt, otherwise from a seeded draw over a
/// fixed vocabulary of category names.
class StubProvider : public LlmProvider {
 public:
  explicit StubProvider(std::uint64_t seed = 0, int answers_per_prompt = 8)
      : seed_(seed), answers_per_prompt_(answers_per_prompt) {}

  StubProvider(std::uint64_t seed, std::map<std::string, std::vector<std::string>> table)
      : seed_(seed), table_(std::move(table)) {}

  static StubProvider always(std::vector<std::string> answer) {
    StubProvider p(0);
    p.fixed_ = std::move(answer);
    return p;
  }

  std::vector<std::string> request(const std::string& prompt) override {
    ++calls_;
    if (fixed_) return *fixed_;
    const std::string* best = nullptr;
    for (const auto& [key, value] : table_) {
      if (prompt.starts_with(key) && (best == nullptr || key.size() > best->size())) best = &key;
    }
    if (best != nullptr) return table_.at(*best);
    const auto& vocab = vocabulary();
    Rng rng(mix_seed(seed_, fnv1a(prompt)));
    std::vector<std::size_t> idx(vocab.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    std::vector<std::string> out;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(answers_per_prompt_), idx.size());
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(vocab[idx[i]]);
    return out;
  }

  std::string id() const override { return "stub:" + std::to_string(seed_); }

  int calls() const { return calls_; }

  static const std::vector<std::string_view>& vocabulary() {
    static const std::vector<std::string_view> words = {
        "wolf", "fox", "coyote", "jackal", "hyena", "lynx", "leopard", "cheetah",
        "tiger", "lion", "panther", "ocelot", "raccoon", "badger", "otter", "weasel",
        "ferret", "mink", "skunk", "beaver", "squirrel", "chipmunk", "hamster", "rabbit",
        "hare", "mole", "hedgehog", "porcupine", "bat", "owl", "hawk", "eagle",
        "falcon", "vulture", "crow", "raven", "magpie", "parrot", "pigeon", "dove",
        "sparrow", "finch", "swallow", "heron", "stork", "crane", "pelican", "penguin",
        "ostrich", "emu", "turkey", "pheasant", "quail", "goose", "swan", "duck",
        "moose", "elk", "caribou", "antelope", "gazelle", "bison", "buffalo", "yak",
        "camel", "llama", "alpaca", "donkey", "mule", "zebra", "pony", "goat",
        "sheep", "pig", "boar", "toad", "newt", "salamander", "lizard", "gecko",
        "iguana", "crocodile", "alligator", "turtle", "tortoise", "snake", "glider", "blimp",
        "helicopter", "drone", "rocket", "jet", "van", "bus", "tractor", "forklift",
        "motorcycle", "scooter", "bicycle", "tram", "train", "canoe", "kayak", "yacht",
        "ferry", "submarine", "sailboat", "barge", "trailer", "ambulance", "minivan", "jeep",
    };
    return words;
  }

 private:
  std::uint64_t seed_ = 0;
  int answers_per_prompt_ = 8;
  std::map<std::string, std::vector<std::string>> table_;
  std::optional<std::vector<std::string>> fixed_;
  int calls_ = 0;
};

/// Response cache keyed by (provider id, prompt); persisted as llm_cache.json.
class LlmCache {
 public:
  LlmCache() = default;
  explicit LlmCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!path_.empty() && std::filesystem::exists(path_)) {
      const auto doc = persist::read_json(path_);
      require(doc.is_object() && doc.contains("entries") && doc["entries"].is_object(),
              ErrorKind::kFormat, "malformed LLM cache " + path_.string());
      for (const auto& [provider, prompts] : doc["entries"].items()) {
        for (const auto& [prompt, answer] : prompts.items()) {
          entries_[{provider, prompt}] = answer.get<std::vector<std::string>>();
        }
      }
    }
  }

  std::optional<std::vector<std::string>> lookup(const std::string& provider,
                                                 const std::string& prompt) const {
    std::lock_guard lock(mutex_);
    const auto it = entries_.find({provider, prompt});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void store(const std::string& provider, const std::string& prompt,
             std::vector<std::string> answer) {
    std::lock_guard lock(mutex_);
    entries_[{provider, prompt}] = std::move(answer);
  }

  void save() const {
    if (path_.empty()) return;
    std::lock_guard lock(mutex_);
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [key, answer] : entries_) entries[key.first][key.second] = answer;
    persist::write_json(path_, {{"entries", entries}});
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> entries_;
};

/// Puts a cache in front of any provider. In offline mode a network provider
/// may only be answered from the cache.
class CachedProvider : public LlmProvider {
 public:
  CachedProvider(LlmProvider& inner, LlmCache& cache, bool offline)
      : inner_(inner), cache_(cache), offline_(offline) {}

  std::vector<std::string> request(const std::string& prompt) override {
    const std::string key = inner_.id();
    if (auto hit = cache_.lookup(key, prompt)) return *hit;
    require(!(offline_ && inner_.needs_network()), ErrorKind::kOffline,
            "offline mode: no cached answer for prompt '" + prompt + "'");
    auto answer = inner_.request(prompt);
    cache_.store(key, prompt, answer);
    return answer;
  }

  std::string id() const override { return inner_.id(); }
  bool needs_network() const override { return inner_.needs_network(); }

 private:
  LlmProvider& inner_;
  LlmCache& cache_;
  bool offline_;
};

// ---------------------------------------------------------------------------
// Peer-class sets

struct PeerProvenance {
  std::string provider;
  std::string timestamp;
};

struct PeerClassSet {
  std::vector<std::string> id_labels;
  std::vector<std::vector<std::string>> peers;  // aligned with id_labels
  PeerProvenance provenance;

  const std::vector<std::string>& peers_of(std::string_view id_label) const {
    for (std::size_t i = 0; i < id_labels.size(); ++i)
      if (id_labels[i] == id_label) return peers[i];
    fail(ErrorKind::kInvalidArgument, "unknown ID label '" + std::string(id_label) + "'");
  }

  std::size_t total_peer_entries() const {
    std::size_t n = 0;
    for (const auto& p : peers) n += p.size();
    return n;
  }

  /// Distinct peer labels across all classes, in first-seen order. These are
  /// the extra classifier outputs.
  std::vector<std::string> distinct_peers() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& list : peers)
      for (const auto& p : list)
        if (seen.insert(p).second) out.push_back(p);
    return out;
  }

  bool same_content(const PeerClassSet& other) const {
    return id_labels == other.id_labels && peers == other.peers;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void check_id_labels(const std::vector<std::string>& id_labels) {
  require(!id_labels.empty(), ErrorKind::kInvalidArgument, "no ID labels");
  std::set<std::string> seen;
  for (const auto& label : id_labels) {
    const auto norm = text::normalize_label(label);
    require(!norm.empty(), ErrorKind::kInvalidArgument, "empty ID label");
    require(seen.insert(norm).second, ErrorKind::kInvalidArgument,
            "duplicate ID label '" + label + "'");
  }
}

/// Queries the provider once per ID class (re-querying when too few
/// candidates survive) and keeps the first `peers_per_class` normalized
/// candidates that collide neither with an ID label nor with an earlier peer
/// of the same class.
inline PeerClassSet generate_peer_classes(const std::vector<std::string>& id_labels,
                                          const PeerGenConfig& cfg, LlmProvider& provider) {
  cfg.validate();
  check_id_labels(id_labels);
  std::set<std::string> id_norm;
  for (const auto& label : id_labels) id_norm.insert(text::normalize_label(label));

  PeerClassSet out;
  out.id_labels = id_labels;
  out.provenance = {provider.id(), utc_timestamp()};
  const auto wanted = static_cast<std::size_t>(cfg.peers_per_class);
  for (const auto& label : id_labels) {
    std::vector<std::string> accepted;
    std::set<std::string> accepted_set;
    const std::string base = build_prompt(label, cfg);
    for (int attempt = 0; accepted.size() < wanted && attempt <= cfg.max_requery_attempts;
         ++attempt) {
      std::vector<std::string> candidates;
      try {
        candidates = provider.request(requery_prompt(base, attempt));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kOffline) throw;
        fail(ErrorKind::kGeneration, "class '" + label + "': provider failed: " + e.what());
      } catch (const std::exception& e) {
        fail(ErrorKind::kGeneration, "class '" + label + "': provider failed: " + e.what());
      }
      for (const auto& raw : candidates) {
        if (accepted.size() == wanted) break;
        std::string norm;
        try {
          norm = text::normalize_label(raw);
        } catch (const Error&) {
          continue;  // undecodable candidate
        }
        if (norm.empty() || id_norm.contains(norm) || accepted_set.contains(norm)) continue;
        accepted_set.insert(norm);
        accepted.push_back(norm);
      }
    }
    require(accepted.size() == wanted, ErrorKind::kGeneration,
            "class '" + label + "': only " + std::to_string(accepted.size()) + " of " +
                std::to_string(wanted) + " valid peer labels after " +
                std::to_string(cfg.max_requery_attempts) + " re-queries");
    out.peers.push_back(std::move(accepted));
  }
  return out;
}

// peers.json
inline nlohmann::json to_json(const PeerClassSet& set, const PeerGenConfig& cfg) {
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t i = 0; i < set.id_labels.size(); ++i) classes[set.id_labels[i]] = set.peers[i];
  return {
      {"prompt_template", cfg.prompt_template},
      {"description_template", cfg.description_template},
      {"n", cfg.peers_per_class},
      {"classes", classes},
      {"id_labels", set.id_labels},
      {"provenance", {{"provider", set.provenance.provider}, {"timestamp", set.provenance.timestamp}}},
  };
}

struct LoadedPeers {
  PeerClassSet set;
  PeerGenConfig cfg;
};

inline LoadedPeers peers_from_json(const nlohmann::json& doc) {
  try {
    LoadedPeers out;
    out.cfg.prompt_template = doc.at("prompt_template").get<std::string>();
    out.cfg.description_template = doc.at("description_template").get<std::string>();
    out.cfg.peers_per_class = doc.at("n").get<int>();
    const auto& classes = doc.at("classes");
    // "classes" is an object, whose key order is not preserved; the optional
    // id_labels array restores the original class order.
    if (doc.contains("id_labels")) {
      out.set.id_labels = doc["id_labels"].get<std::vector<std::string>>();
    } else {
      for (const auto& [label, _] : classes.items()) out.set.id_labels.push_back(label);
    }
    for (const auto& label : out.set.id_labels)
      out.set.peers.push_back(classes.at(label).get<std::vector<std::string>>());
    if (doc.contains("provenance")) {
      const auto& p = doc["provenance"];
      out.set.provenance.provider = p.value("provider", "");
      out.set.provenance.timestamp = p.value("timestamp", "");
    }
    out.cfg.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("peers.json: ") + e.what());
  }
}

inline void write_peers(const std::filesystem::path& path, const PeerClassSet& set,
                        const PeerGenConfig& cfg) {
  persist::write_json(path, to_json(set, cfg));
}

inline LoadedPeers read_peers(const std::filesystem::path& path) {
  return peers_from_json(persist::read_json(path));
}

}  // namespace odpc
