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
#include "odpc/peer_gen.hpp"

#include <filesystem>

#include <gtest/gtest.h>

#include "odpc/http_provider.hpp"

namespace odpc {
namespace {

namespace fs = std::filesystem;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kIo;
}

TEST(PromptTest, DefaultTemplate) {
  EXPECT_EQ(build_prompt("dog", {}), "what categories are similar to dog in semantic or appearance");
}

TEST(PromptTest, CustomTemplate) {
  PeerGenConfig cfg;
  cfg.prompt_template = "Q: [class]?";
  EXPECT_EQ(build_prompt("x", cfg), "Q: x?");
}

TEST(PromptTest, EmptyLabel) {
  EXPECT_EQ(kind_of([] { build_prompt("", {}); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([] { build_prompt("  ", {}); }), ErrorKind::kInvalidArgument);
}

TEST(DescriptionTest, Rendering) {
  EXPECT_EQ(render_description("dog", {}), "This is a photo of a dog");
  EXPECT_EQ(render_description("wolf", {}), "This is a photo of a wolf");
  EXPECT_EQ(kind_of([] { render_description("", {}); }), ErrorKind::kInvalidArgument);
}

TEST(ConfigTest, PlaceholderMustAppearOnce) {
  PeerGenConfig cfg;
  cfg.prompt_template = "no placeholder";
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::kConfiguration);
  cfg.prompt_template = "[class] and [class]";
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::kConfiguration);
  cfg = {};
  cfg.description_template = "photo";
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::kConfiguration);
}

TEST(NormalizeTest, TrimAndFold) {
  EXPECT_EQ(text::normalize_label("  Dog "), "dog");
  EXPECT_EQ(text::normalize_label("\tGRIZZLY Bear\n"), "grizzly bear");
  EXPECT_EQ(text::normalize_label("Éclair"), "éclair");
  EXPECT_EQ(text::normalize_label("ΛΎΚΟΣ"), "λύκοσ");
  EXPECT_EQ(text::normalize_label("ВОЛК"), "волк");
}

TEST(ParseLabelListTest, BulletsNumbersAndCommas) {
  EXPECT_EQ(parse_label_list("1. wolf\n2) fox\n- coyote\n* jackal."),
            (std::vector<std::string>{"wolf", "fox", "coyote", "jackal"}));
  EXPECT_EQ(parse_label_list("wolf, fox,  coyote"), (std::vector<std::string>{"wolf", "fox", "coyote"}));
  EXPECT_TRUE(parse_label_list(" \n , ").empty());
}

TEST(GeneratePeersTest, IdLabelIsFiltered) {
  StubProvider stub(0, {{"what categories are similar to dog", {"cat", "wolf", "fox", "coyote"}},
                        {"what categories are similar to cat", {"lynx", "ocelot", "tiger"}}});
  const auto set = generate_peer_classes({"dog", "cat"}, {}, stub);
  EXPECT_EQ(set.peers_of("dog"), (std::vector<std::string>{"wolf", "fox", "coyote"}));
  EXPECT_EQ(set.peers_of("cat"), (std::vector<std::string>{"lynx", "ocelot", "tiger"}));
  EXPECT_EQ(set.total_peer_entries(), 6u);
  EXPECT_EQ(set.provenance.provider, "stub:0");
}

TEST(GeneratePeersTest, ZeroPeersPerClass) {
  StubProvider stub(3);
  PeerGenConfig cfg;
  cfg.peers_per_class = 0;
  const auto set = generate_peer_classes({"dog", "cat", "ship"}, cfg, stub);
  for (const auto& p : set.peers) EXPECT_TRUE(p.empty());
  EXPECT_TRUE(set.distinct_peers().empty());
}

TEST(GeneratePeersTest, AllCandidatesCollide) {
  auto stub = StubProvider::always({"Dog", "dog "});
  PeerGenConfig cfg;
  cfg.peers_per_class = 1;
  EXPECT_EQ(kind_of([&] { generate_peer_classes({"dog"}, cfg, stub); }), ErrorKind::kGeneration);
  EXPECT_EQ(stub.calls(), 1 + cfg.max_requery_attempts);
}

TEST(GeneratePeersTest, RequeryFillsShortfall) {
  StubProvider stub(0, {{"what categories are similar to dog in semantic or appearance. Please", {"wolf", "fox"}},
                        {"what categories are similar to dog", {"wolf", "dog"}}});
  PeerGenConfig cfg;
  cfg.peers_per_class = 2;
  // Attempt 0 yields only "wolf"; the first re-query adds "fox".
  const auto set = generate_peer_classes({"dog"}, cfg, stub);
  EXPECT_EQ(set.peers_of("dog"), (std::vector<std::string>{"wolf", "fox"}));
  EXPECT_EQ(stub.calls(), 2);
}

TEST(GeneratePeersTest, InvariantsOnStubVocabulary) {
  StubProvider stub(17);
  const std::vector<std::string> ids = {"airplane", "automobile", "bird", "cat", "deer", "dog"};
  const auto set = generate_peer_classes(ids, {}, stub);
  ASSERT_EQ(set.peers.size(), 6u);
  std::set<std::string> id_norm;
  for (const auto& l : ids) id_norm.insert(text::normalize_label(l));
  for (const auto& list : set.peers) {
    EXPECT_EQ(list.size(), 3u);
    std::set<std::string> seen;
    for (const auto& p : list) {
      EXPECT_FALSE(id_norm.contains(p));
      EXPECT_TRUE(seen.insert(p).second);
      EXPECT_EQ(p, text::normalize_label(p));
    }
  }
  StubProvider again(17);
  EXPECT_TRUE(generate_peer_classes(ids, {}, again).same_content(set));
}

TEST(GeneratePeersTest, DuplicateIdLabelsRejected) {
  StubProvider stub;
  EXPECT_EQ(kind_of([&] { generate_peer_classes({"Dog", "dog"}, {}, stub); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([&] { generate_peer_classes({}, {}, stub); }), ErrorKind::kInvalidArgument);
}

class FailingProvider : public LlmProvider {
 public:
  std::vector<std::string> request(const std::string&) override { throw std::runtime_error("timeout"); }
  std::string id() const override { return "failing"; }
};

TEST(GeneratePeersTest, ProviderFailureNamesClass) {
  FailingProvider p;
  try {
    generate_peer_classes({"truck"}, {}, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGeneration);
    EXPECT_NE(std::string(e.what()).find("truck"), std::string::npos);
  }
}

class NetworkStub : public StubProvider {
 public:
  using StubProvider::StubProvider;
  bool needs_network() const override { return true; }
  std::string id() const override { return "net"; }
};

TEST(CacheTest, OfflineServedFromCacheOnly) {
  const auto path = fs::temp_directory_path() / "odpc_peer_test" / "llm_cache.json";
  fs::remove(path);
  {
    NetworkStub live(5);
    LlmCache cache(path);
    CachedProvider cached(live, cache, false);
    generate_peer_classes({"dog", "cat"}, {}, cached);
    EXPECT_EQ(live.calls(), 2);
    cache.save();
  }
  NetworkStub offline_inner(5);
  LlmCache cache(path);
  EXPECT_EQ(cache.size(), 2u);
  CachedProvider offline(offline_inner, cache, true);
  const auto set = generate_peer_classes({"dog", "cat"}, {}, offline);
  EXPECT_EQ(offline_inner.calls(), 0);
  EXPECT_EQ(set.peers.size(), 2u);
  EXPECT_EQ(kind_of([&] { generate_peer_classes({"ship"}, {}, offline); }), ErrorKind::kOffline);
}

TEST(PeersFileTest, Roundtrip) {
  StubProvider stub(2);
  PeerGenConfig cfg;
  const std::vector<std::string> ids = {"zebra", "apple", "mango"};
  const auto set = generate_peer_classes(ids, cfg, stub);
  const auto path = fs::temp_directory_path() / "odpc_peer_test" / "peers.json";
  write_peers(path, set, cfg);
  const auto back = read_peers(path);
  EXPECT_TRUE(back.set.same_content(set));
  EXPECT_EQ(back.set.id_labels, ids);
  EXPECT_EQ(back.cfg.peers_per_class, 3);
  EXPECT_EQ(back.cfg.prompt_template, cfg.prompt_template);
  EXPECT_EQ(back.set.provenance.provider, "stub:2");
}

TEST(HttpProviderTest, RequestAndResponseShapes) {
  const auto req = HttpLlmProvider::build_request("m", "what categories are similar to dog");
  EXPECT_EQ(req["model"], "m");
  EXPECT_EQ(req["messages"].back()["content"], "what categories are similar to dog");
  const std::string body = R"({"choices":[{"message":{"content":"1. wolf\n2. fox"}}]})";
  EXPECT_EQ(HttpLlmProvider::parse_response(body), (std::vector<std::string>{"wolf", "fox"}));
  EXPECT_THROW(HttpLlmProvider::parse_response("{}"), Error);
}

TEST(HttpProviderTest, UrlParsing) {
  const auto u = parse_url("https://api.example.com:8443/v1/chat/completions");
  EXPECT_EQ(u.origin, "https://api.example.com:8443");
  EXPECT_EQ(u.path, "/v1/chat/completions");
  EXPECT_THROW(parse_url("not a url"), Error);
}

}  // namespace
}  // namespace odpc
