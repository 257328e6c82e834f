#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "mghft/mllm.hpp"
#include "mghft/text_context.hpp"
#include "test_util.hpp"

namespace mghft {
namespace {

using nlohmann::json;
using test::TempDir;

ViewDescriptions sample(const std::string& id) {
  return {id, {"greets a friend", "flat cartoon", "a small cat", "waving paw with a smile"}, "fixture"};
}

double row_norm(const Tensor& t, std::size_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < t.dim(1); ++c) s += t.at(r, c) * t.at(r, c);
  return std::sqrt(s);
}

TEST(HashEmbedding, RepeatedTokensGiveIdenticalUnitRows) {
  Tensor t = hash_embed("hello hello", 16, 0);
  ASSERT_EQ(t.shape(), (Shape{2, 16}));
  for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(t.at(0, c), t.at(1, c));
  EXPECT_NEAR(row_norm(t, 0), 1.0, 1e-12);
}

TEST(HashEmbedding, SeedAndTokenChangeTheVector) {
  Tensor a = hash_embed("hello", 16, 0), b = hash_embed("hello", 16, 1), c = hash_embed("world", 16, 0);
  EXPECT_NE(a.to_vector(), b.to_vector());
  EXPECT_NE(a.to_vector(), c.to_vector());
  EXPECT_EQ(a.to_vector(), hash_embed("  hello\n", 16, 0).to_vector());
}

TEST(HashEmbedding, EmptyTextAndZeroDimAreErrors) {
  EXPECT_THROW(hash_embed("   ", 8, 0), EncodeError);
  EXPECT_THROW(HashEmbeddingProvider(0, 0), ConfigError);
}

TEST(EncodeViews, TruncatesToMaxLengthAndPoolsRowMeans) {
  std::string long_text;
  for (int i = 0; i < 600; ++i) long_text += "tok" + std::to_string(i) + " ";
  ViewDescriptions d = sample("s1");
  d.views[3] = long_text;
  HashEmbeddingProvider enc(8, 3);
  ViewEmbeddings e = encode_views(d, enc);
  EXPECT_EQ(e.sequences[3].dim(0), kMaxTextLength);
  EXPECT_EQ(e.sequences[0].dim(0), 3u);
  for (std::size_t i = 0; i < kNumViews; ++i) {
    for (std::size_t c = 0; c < 8; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < e.sequences[i].dim(0); ++r) mean += e.sequences[i].at(r, c);
      EXPECT_NEAR(e.pooled[i].at(c), mean / e.sequences[i].dim(0), 1e-12);
    }
  }
  EXPECT_EQ(encode_views(d, enc, 4).sequences[3].dim(0), 4u);
}

TEST(EncodeViews, EmptyViewIsRejected) {
  ViewDescriptions d = sample("s1");
  d.views[1].clear();
  EXPECT_THROW(encode_views(d, HashEmbeddingProvider(8, 0)), DataError);
}

TEST(Descriptions, JsonLinesRoundTrip) {
  TempDir dir("descriptions");
  std::vector<ViewDescriptions> items{sample("a"), sample("b")};
  items[1].views[0] = "quotes \"inside\" and unicode é";
  write_descriptions(dir.path() / "d.jsonl", items);
  EXPECT_EQ(read_descriptions(dir.path() / "d.jsonl"), items);
  const json j = json::parse(description_to_json_line(items[0]));
  EXPECT_EQ(j.at("views").at("main_roles"), "a small cat");
}

TEST(Descriptions, DuplicateIdsAndMalformedLinesAreRejected) {
  TempDir dir("descriptions_bad");
  write_descriptions(dir.path() / "dup.jsonl", {sample("a"), sample("a")});
  EXPECT_THROW(read_descriptions(dir.path() / "dup.jsonl"), DataError);
  std::ofstream(dir.path() / "bad.jsonl") << "{\"sticker_id\": \"x\"}\n";
  EXPECT_THROW(read_descriptions(dir.path() / "bad.jsonl"), DataError);
}

TEST(Embeddings, ArchiveRoundTripAndPrecomputedLookup) {
  TempDir dir("embeddings");
  HashEmbeddingProvider enc(8, 5);
  std::vector<ViewEmbeddings> items{encode_views(sample("a"), enc), encode_views(sample("b"), enc)};
  write_embeddings(dir.path() / "e.marc", items);
  auto back = read_embeddings(dir.path() / "e.marc");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < kNumViews; ++i) {
    const Tensor& x = items[0].sequences[i];
    const Tensor& y = back.at("a").sequences[i];
    ASSERT_EQ(x.shape(), y.shape());
    for (std::size_t k = 0; k < x.numel(); ++k) EXPECT_NEAR(x.at(k), y.at(k), 1e-6);
  }
  PrecomputedEmbeddingProvider pre(dir.path() / "e.marc");
  EXPECT_EQ(pre.dim(), 8u);
  EXPECT_EQ(pre.encode({"b", 2, "ignored"}).shape(), items[1].sequences[2].shape());
  EXPECT_THROW(pre.encode({"zzz", 0, "x"}), EncodeError);
}

TEST(Prompts, DefaultsRoundTripAndHashTracksContent) {
  PromptSet p = PromptSet::defaults();
  PromptSet q = PromptSet::from_json(p.to_json());
  EXPECT_EQ(p.templates, q.templates);
  EXPECT_EQ(p.hash(), q.hash());
  q.templates[2] += " Be brief.";
  EXPECT_NE(p.hash(), q.hash());
  EXPECT_EQ(p.hash().size(), 64u);
}

TEST(DescriptionCache, KeyDependsOnImageAndPrompts) {
  PromptSet p = PromptSet::defaults();
  PromptSet q = p;
  q.multi_round = !q.multi_round;
  EXPECT_EQ(DescriptionCache::key("img", p), DescriptionCache::key("img", p));
  EXPECT_NE(DescriptionCache::key("img", p), DescriptionCache::key("img2", p));
  EXPECT_NE(DescriptionCache::key("img", p), DescriptionCache::key("img", q));
}

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

class ScriptedBackend : public ChatBackend {
 public:
  mutable std::atomic<int> calls{0};
  mutable std::atomic<int> transient_failures{0};
  bool empty_answer = false;

  std::string complete(const std::vector<ChatMessage>& conversation) const override {
    ++calls;
    if (transient_failures.load() > 0) {
      --transient_failures;
      throw EndpointError("temporarily unavailable");
    }
    if (empty_answer) return "  ";
    return "answer " + std::to_string(conversation.size());
  }
  std::string name() const override { return "scripted"; }
};

GenerationOptions fast_options() {
  GenerationOptions o;
  o.base_backoff = std::chrono::milliseconds(1);
  o.parallel = 2;
  return o;
}

TEST(GenerateDescriptions, FourRoundsPerImageAndCacheHitsSkipTheBackend) {
  TempDir dir("gen_cache");
  DescriptionCache cache(dir.path());
  ScriptedBackend backend;
  std::vector<StickerImage> images{{"one", "bytes-1", "image/png"}, {"two", "bytes-2", "image/png"}};
  auto first = generate_descriptions(images, backend, PromptSet::defaults(), &cache, fast_options());
  EXPECT_EQ(backend.calls.load(), 8);
  ASSERT_EQ(first.size(), 2u);
  EXPECT_EQ(first[0].sticker_id, "one");
  ASSERT_TRUE(first[1].descriptions);
  // Multi-round conversations grow by two messages per view.
  EXPECT_EQ(first[1].descriptions->views[0], "answer 1");
  EXPECT_EQ(first[1].descriptions->views[3], "answer 7");

  backend.calls = 0;
  auto second = generate_descriptions(images, backend, PromptSet::defaults(), &cache, fast_options());
  EXPECT_EQ(backend.calls.load(), 0);
  EXPECT_TRUE(second[0].from_cache);
  EXPECT_EQ(second[0].descriptions->views, first[0].descriptions->views);
}

TEST(GenerateDescriptions, SingleRoundModeStartsFreshConversations) {
  ScriptedBackend backend;
  PromptSet p = PromptSet::defaults();
  p.multi_round = false;
  auto r = generate_descriptions({{"x", "b", "image/png"}}, backend, p, nullptr, fast_options());
  ASSERT_TRUE(r[0].descriptions);
  for (const auto& v : r[0].descriptions->views) EXPECT_EQ(v, "answer 1");
}

TEST(GenerateDescriptions, EmptyAnswerIsAPerImageError) {
  ScriptedBackend backend;
  backend.empty_answer = true;
  auto r = generate_descriptions({{"x", "b", "image/png"}, {"y", "c", "image/png"}}, backend,
                                 PromptSet::defaults(), nullptr, fast_options());
  ASSERT_EQ(r.size(), 2u);
  for (const auto& item : r) {
    EXPECT_FALSE(item.descriptions);
    EXPECT_NE(item.error.find("empty response"), std::string::npos) << item.error;
  }
}

TEST(GenerateDescriptions, TransientFailuresAreRetried) {
  ScriptedBackend backend;
  backend.transient_failures = 2;
  auto r = generate_descriptions({{"x", "b", "image/png"}}, backend, PromptSet::defaults(), nullptr, fast_options());
  EXPECT_TRUE(r[0].descriptions) << r[0].error;
  EXPECT_EQ(backend.calls.load(), 6);

  ScriptedBackend down;
  down.transient_failures = 100;
  auto failed = generate_descriptions({{"x", "b", "image/png"}}, down, PromptSet::defaults(), nullptr, fast_options());
  EXPECT_FALSE(failed[0].descriptions);
  EXPECT_EQ(down.calls.load(), 3);
}

TEST(ChatWire, RequestCarriesImageAndHistory) {
  MllmEndpointConfig cfg;
  cfg.model = "m";
  const json body = json::parse(build_chat_request(
      cfg, {{"user", "describe", "QUJD", "image/png"}, {"assistant", "a cat", {}, {}}, {"user", "style?", {}, {}}}));
  EXPECT_EQ(body.at("model"), "m");
  EXPECT_EQ(body.at("max_tokens"), 256);
  const auto& msgs = body.at("messages");
  ASSERT_EQ(msgs.size(), 3u);
  EXPECT_EQ(msgs[0].at("content")[0].at("image_url").at("url"), "data:image/png;base64,QUJD");
  EXPECT_EQ(msgs[1].at("content"), "a cat");
  EXPECT_EQ(msgs[2].at("content").size(), 1u);
  EXPECT_EQ(parse_chat_response(R"({"choices":[{"message":{"content":"hi"}}]})"), "hi");
  EXPECT_THROW(parse_chat_response(R"({"choices":[]})"), MalformedResponseError);
}

class LocalServer {
 public:
  LocalServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu_);
        last_auth_ = req.get_header_value("Authorization");
      }
      const json body = json::parse(req.body);
      if (body.at("model") == "broken") {
        res.status = 503;
        return;
      }
      const std::string reply = "turn " + std::to_string(body.at("messages").size());
      res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}}.dump(),
                      "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      const std::string text = body.at("input");
      json data;
      if (text == "tokens") {
        data = {{{"embedding", {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}}}};
      } else {
        data = {{{"embedding", {0.5, 0.25, static_cast<double>(text.size())}}}};
      }
      res.set_content(json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::string last_auth_;
};

TEST(HttpBackends, ChatAndEmbeddingEndpointsOverLoopback) {
  LocalServer server;
  MllmEndpointConfig cfg;
  cfg.url = server.url("/v1/chat/completions");
  cfg.api_key = "secret";
  cfg.timeout = std::chrono::seconds(5);
  HttpChatBackend chat(cfg);
  EXPECT_EQ(chat.complete({{"user", "hi", {}, {}}}), "turn 1");
  EXPECT_EQ(server.last_auth(), "Bearer secret");

  auto results = generate_descriptions({{"s", "png-bytes", "image/png"}}, chat, PromptSet::defaults(), nullptr,
                                       fast_options());
  ASSERT_TRUE(results[0].descriptions) << results[0].error;
  EXPECT_EQ(results[0].descriptions->views[2], "turn 5");

  cfg.model = "broken";
  EXPECT_THROW(HttpChatBackend(cfg).complete({{"user", "hi", {}, {}}}), EndpointError);

  RemoteEmbeddingProvider emb(server.url("/v1/embeddings"), "e", 3);
  Tensor one = emb.encode({"s", 0, "abcd"});
  EXPECT_EQ(one.shape(), (Shape{1, 3}));
  EXPECT_DOUBLE_EQ(one.at(0, 2), 4.0);
  EXPECT_EQ(emb.encode({"s", 0, "tokens"}).shape(), (Shape{2, 3}));
  RemoteEmbeddingProvider wrong_dim(server.url("/v1/embeddings"), "e", 4);
  EXPECT_THROW(wrong_dim.encode({"s", 0, "abcd"}), EncodeError);
}

TEST(HttpBackends, UnreachableEndpointIsAnEndpointError) {
  MllmEndpointConfig cfg;
  cfg.url = "http://127.0.0.1:1/v1/chat/completions";
  cfg.timeout = std::chrono::seconds(2);
  EXPECT_THROW(HttpChatBackend(cfg).complete({{"user", "hi", {}, {}}}), EndpointError);
}

}  // namespace
}  // namespace mghft
