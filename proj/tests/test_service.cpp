#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "clonebot/error.hpp"
#include "clonebot/http_server.hpp"
#include "clonebot/service.hpp"
#include "clonebot/text.hpp"
#include "clonebot/tokenizer.hpp"
#include "support/test_support.hpp"

using namespace clonebot;
using nlohmann::json;

namespace {

std::shared_ptr<const SpeakerIndexSet> fixture_engine() {
  // A/B fixture plus a speaker C who never answers anyone.
  Corpus c = fixtures::ab_fixture();
  c.conversations.push_back(Conversation{"c1", {Utterance{3, "c1", "C", 5000, "first"}}});
  c.refresh_speakers();
  return std::make_shared<const SpeakerIndexSet>(
      build_speaker_indexes(c, c.speakers, std::make_shared<HashingEmbedder>(64)));
}

std::string create_body(const std::string& target) { return json{{"target_speaker", target}}.dump(); }
std::string msg(const std::string& text, const std::string& speaker = "user") {
  return json{{"speaker_id", speaker}, {"text", text}}.dump();
}

}  // namespace

TEST(ChatService, FixtureReply) {
  ChatService svc(fixture_engine(), {});
  const auto created = svc.create_session(create_body("B"));
  ASSERT_EQ(created.status, 201);
  const std::string sid = created.body["session_id"];
  const auto r = svc.post_message(sid, msg("hi"));
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["response_text"], "hello");
  EXPECT_EQ(r.body["matched_context"], "hi");
  EXPECT_NEAR(r.body["distance"].get<double>(), 0.0, 1e-6);
  EXPECT_EQ(r.body["candidates"].size(), 1u);
  const auto h = svc.history(sid);
  ASSERT_TRUE(h);
  ASSERT_EQ(h->size(), 2u);
  EXPECT_EQ((*h)[0].text, "hi");
  EXPECT_EQ((*h)[1].speaker_id, "B");
}

TEST(ChatService, ErrorsAndNoAnswer) {
  ChatService svc(fixture_engine(), {});
  EXPECT_EQ(svc.create_session(create_body("Z")).status, 422);
  EXPECT_EQ(svc.create_session("{").status, 400);
  EXPECT_EQ(svc.create_session(R"({"target_speaker": 3})").status, 400);
  EXPECT_EQ(svc.post_message("nope", msg("hi")).status, 404);

  const std::string sid = svc.create_session(create_body("C")).body["session_id"];
  EXPECT_EQ(svc.post_message(sid, "not json").status, 400);
  EXPECT_EQ(svc.post_message(sid, msg("   ")).status, 400);
  EXPECT_EQ(svc.post_message(sid, R"({"text":"x"})").status, 400);
  const auto r = svc.post_message(sid, msg("hi"));
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(r.body["response_text"].is_null());
  EXPECT_EQ(r.body["reason"], "no-data-for-speaker");

  EXPECT_EQ(svc.delete_session(sid).status, 204);
  EXPECT_EQ(svc.post_message(sid, msg("hi")).status, 404);
  EXPECT_EQ(svc.delete_session(sid).status, 404);
}

TEST(ChatService, SpeakersAndHealth) {
  ChatService svc(fixture_engine(), {});
  EXPECT_EQ(svc.speakers().body["speakers"], json::array({"A", "B", "C"}));
  const auto h = svc.health();
  EXPECT_EQ(h.body["status"], "ok");
  EXPECT_EQ(h.body["embedder"], "hashing-v1/dim=64");
  EXPECT_EQ(svc.health().body, h.body);
}

TEST(ChatService, HistoryIsBounded) {
  ServiceConfig cfg;
  cfg.history_limit = 3;
  ChatService svc(fixture_engine(), cfg);
  const std::string sid = svc.create_session(create_body("B")).body["session_id"];
  for (int i = 0; i < 10; ++i) svc.post_message(sid, msg("hi " + std::to_string(i)));
  EXPECT_EQ(svc.history(sid)->size(), 3u);
  EXPECT_EQ(svc.history(sid)->back().text, "hello");
}

TEST(ChatService, TtlEviction) {
  auto now = std::chrono::steady_clock::time_point{};
  ServiceConfig cfg;
  cfg.session_ttl = std::chrono::seconds(10);
  ChatService svc(fixture_engine(), cfg, nullptr, [&] { return now; });
  const std::string a = svc.create_session(create_body("B")).body["session_id"];
  now += std::chrono::seconds(6);
  const std::string b = svc.create_session(create_body("B")).body["session_id"];
  now += std::chrono::seconds(6);
  svc.evict_expired();
  EXPECT_FALSE(svc.history(a));
  EXPECT_TRUE(svc.history(b));
  EXPECT_EQ(svc.post_message(a, msg("hi")).status, 404);
  EXPECT_EQ(svc.session_count(), 1u);
}

TEST(ChatService, ConcurrentSessionsStayIsolated) {
  ChatService svc(fixture_engine(), ServiceConfig{100, 5, std::chrono::seconds(3600), ResponseMode::Retrieval});
  constexpr int kThreads = 8, kMessages = 40;
  std::vector<std::string> ids;
  for (int t = 0; t < kThreads; ++t) ids.push_back(svc.create_session(create_body(t % 2 ? "A" : "B")).body["session_id"]);
  std::atomic<int> failures{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < kMessages; ++i)
        if (svc.post_message(ids[t], msg("t" + std::to_string(t) + " m" + std::to_string(i))).status != 200) ++failures;
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(failures, 0);
  for (int t = 0; t < kThreads; ++t) {
    const auto h = *svc.history(ids[t]);
    ASSERT_EQ(h.size(), 2u * kMessages);
    for (int i = 0; i < kMessages; ++i) {
      EXPECT_EQ(h[2 * i].text, "t" + std::to_string(t) + " m" + std::to_string(i));
      EXPECT_EQ(h[2 * i + 1].speaker_id, t % 2 ? "A" : "B");
    }
  }
}

TEST(ChatService, SharedSessionKeepsArrivalPairs) {
  ChatService svc(fixture_engine(), ServiceConfig{1000, 1, std::chrono::seconds(3600), ResponseMode::Retrieval});
  const std::string sid = svc.create_session(create_body("B")).body["session_id"];
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) svc.post_message(sid, msg("x" + std::to_string(t)));
    });
  for (auto& th : threads) th.join();
  const auto h = *svc.history(sid);
  ASSERT_EQ(h.size(), 200u);
  // Each request appends its message and the reply atomically.
  for (std::size_t i = 0; i < h.size(); i += 2) {
    EXPECT_EQ(h[i].speaker_id, "user");
    EXPECT_EQ(h[i + 1].speaker_id, "B");
  }
}

TEST(ChatService, SamplerMode) {
  auto engine = fixture_engine();
  auto gen = std::make_shared<GenerationBackend>();
  auto tok = std::make_shared<WordTokenizer>(WordTokenizer::from_tokens({"hi", "hello", "bye"}, {}));
  gen->tokenizer = tok;
  gen->model = std::make_shared<BigramLanguageModel>(
      BigramLanguageModel::train({tok->encode("hi"), tok->encode("hello"), tok->encode("bye")}, tok->vocab_size(), 1));
  gen->sampler.seed = 3;
  gen->sampler.max_new_tokens = 5;
  ServiceConfig cfg;
  cfg.mode = ResponseMode::Sampler;
  ChatService svc(engine, cfg, gen);
  EXPECT_EQ(svc.health().body["mode"], "sampler");
  const std::string sid = svc.create_session(create_body("B")).body["session_id"];
  for (int i = 0; i < 5; ++i) {
    const auto r = svc.post_message(sid, msg("hi"));
    ASSERT_EQ(r.status, 200);
    if (!r.body["response_text"].is_null()) {
      EXPECT_TRUE(r.body["distance"].is_null());
      EXPECT_LE(split_whitespace(r.body["response_text"].get<std::string>()).size(), 5u);
    }
  }
}

TEST(ServiceConfigFile, AppliesKnownKeys) {
  ServiceConfig cfg;
  apply_service_config(json{{"history_limit", 4}, {"k", 2}, {"session_ttl_seconds", 60}, {"mode", "sampler"}, {"x", 1}},
                       cfg);
  EXPECT_EQ(cfg.history_limit, 4u);
  EXPECT_EQ(cfg.k, 2u);
  EXPECT_EQ(cfg.session_ttl, std::chrono::seconds(60));
  EXPECT_EQ(cfg.mode, ResponseMode::Sampler);
}

TEST(ParseAddress, Forms) {
  EXPECT_EQ(parse_address("0.0.0.0:9000"), (std::pair<std::string, int>{"0.0.0.0", 9000}));
  EXPECT_EQ(parse_address("8080"), (std::pair<std::string, int>{"127.0.0.1", 8080}));
  EXPECT_THROW(parse_address("host:notaport"), ParameterError);
}

class HttpApi : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<ChatService>(fixture_engine(), ServiceConfig{});
    server_ = std::make_unique<HttpServer>(*service_);
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 100 && !client_->Get("/v1/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  void TearDown() override {
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  std::unique_ptr<ChatService> service_;
  std::unique_ptr<HttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpApi, FullConversation) {
  auto health = client_->Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");

  auto speakers = client_->Get("/v1/speakers");
  ASSERT_TRUE(speakers);
  EXPECT_EQ(json::parse(speakers->body)["speakers"], json::array({"A", "B", "C"}));

  auto created = client_->Post("/v1/sessions", create_body("B"), "application/json");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 201);
  const std::string sid = json::parse(created->body)["session_id"];

  auto reply = client_->Post("/v1/sessions/" + sid + "/messages", msg("hi"), "application/json");
  ASSERT_TRUE(reply);
  ASSERT_EQ(reply->status, 200);
  const auto body = json::parse(reply->body);
  EXPECT_EQ(body["response_text"], "hello");
  EXPECT_NEAR(body["distance"].get<double>(), 0.0, 1e-6);

  auto del = client_->Delete("/v1/sessions/" + sid);
  ASSERT_TRUE(del);
  EXPECT_EQ(del->status, 204);
  auto gone = client_->Post("/v1/sessions/" + sid + "/messages", msg("hi"), "application/json");
  ASSERT_TRUE(gone);
  EXPECT_EQ(gone->status, 404);
}

TEST_F(HttpApi, ErrorStatuses) {
  auto unknown = client_->Post("/v1/sessions", create_body("nobody"), "application/json");
  ASSERT_TRUE(unknown);
  EXPECT_EQ(unknown->status, 422);
  EXPECT_EQ(json::parse(unknown->body)["error"], "unknown-speaker");

  auto bad = client_->Post("/v1/sessions", "{oops", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  auto missing = client_->Post("/v1/sessions/xyz/messages", msg("hi"), "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);

  const std::string sid =
      json::parse(client_->Post("/v1/sessions", create_body("C"), "application/json")->body)["session_id"];
  auto none = client_->Post("/v1/sessions/" + sid + "/messages", msg("hi"), "application/json");
  ASSERT_TRUE(none);
  EXPECT_EQ(none->status, 200);
  const auto body = json::parse(none->body);
  EXPECT_TRUE(body["response_text"].is_null());
  EXPECT_EQ(body["reason"], "no-data-for-speaker");

  auto preflight = client_->Options("/v1/sessions");
  ASSERT_TRUE(preflight);
  EXPECT_EQ(preflight->status, 204);
}

TEST_F(HttpApi, ConcurrentClients) {
  constexpr int kClients = 4;
  std::vector<std::string> sids;
  for (int i = 0; i < kClients; ++i)
    sids.push_back(json::parse(client_->Post("/v1/sessions", create_body("B"), "application/json")->body)["session_id"]);
  std::atomic<int> bad{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < kClients; ++i)
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port_);
      for (int j = 0; j < 10; ++j) {
        auto r = c.Post("/v1/sessions/" + sids[i] + "/messages", msg("hi"), "application/json");
        if (!r || r->status != 200 || json::parse(r->body)["response_text"] != "hello") ++bad;
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(bad, 0);
  for (const auto& sid : sids) EXPECT_EQ(service_->history(sid)->size(), 10u);  // history_limit = 10
}
