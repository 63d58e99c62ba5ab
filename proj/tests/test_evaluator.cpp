#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <regex>
#include <thread>

#include "llmshape/evaluator.hpp"
#include "llmshape/rng.hpp"

using namespace llmshape;

TEST(Prompt, ExactStrings) {
  EXPECT_EQ(render_prompt(TaskContext{2, 25, 400}), "orders:2 t:25/400");
  EXPECT_EQ(render_prompt(TaskContext{0, 0, 400}), "orders:0 t:0/400");
  EXPECT_EQ(render_prompt(TaskContext{5, 400, 400}), "orders:5 t:400/400");
}

TEST(Prompt, MatchesTemplateRegex) {
  const std::regex re(R"(^orders:\d+ t:\d+/\d+$)");
  RandomStream rng(1);
  for (int k = 0; k < 1000; ++k) {
    const int horizon = static_cast<int>(rng.uniform_int(1, 5000));
    const TaskContext ctx{static_cast<int>(rng.uniform_int(0, 50)), static_cast<int>(rng.uniform_int(0, horizon)), horizon};
    const auto p = render_prompt(ctx);
    ASSERT_TRUE(std::regex_match(p, re)) << p;
    ASSERT_EQ(parse_prompt(p), ctx);
  }
}

TEST(Prompt, TracksGroundTruthOnly) {
  const KitchenEnv env(EnvConfig{});
  GridState s = env.reset(0);
  EXPECT_EQ(render_prompt(s, false), "orders:0 t:0/400");
  s.t = 25;
  s.order_queue.orders[0].status = OrderStatus::Pending;
  s.order_queue.orders[1].status = OrderStatus::Pending;
  EXPECT_EQ(render_prompt(s, false), "orders:2 t:25/400");
}

TEST(Prompt, ExtendedAppendsDistances) {
  const KitchenEnv env(EnvConfig{});
  const GridState s = env.reset(0);
  // Agent 0 at (1,1), stove at (0,2); agent 1 at (1,5), window at (0,5).
  EXPECT_EQ(render_prompt(s, true), "orders:0 t:0/400 dA:2 dB:1");
  EXPECT_EQ(parse_prompt(render_prompt(s, true)), (TaskContext{0, 0, 400}));
}

TEST(Prompt, MalformedRejected) {
  for (const char* bad : {"", "orders:x t:1/400", "orders:1 t:1", "orders:1 t:401/400", "orders:1 t:1/0",
                          "orders:1 t:1/400x", "order:1 t:1/400", "orders:-1 t:1/400"})
    EXPECT_THROW(parse_prompt(bad), MalformedPrompt) << bad;
}

TEST(Heuristic, OnPaceRule) {
  HeuristicEvaluator h(5);
  EXPECT_TRUE(h.judge("orders:0 t:200/400").good());
  EXPECT_FALSE(h.judge("orders:5 t:390/400").good());
  EXPECT_EQ(h.judge("orders:3 t:100/400"), h.judge("orders:3 t:100/400"));
  const auto v = h.judge("orders:0 t:0/400");
  EXPECT_EQ(v.logit_good, 1.0);
  EXPECT_EQ(v.logit_bad, -1.0);
  EXPECT_EQ(v.source, VerdictSource::Heuristic);
  EXPECT_THROW(h.judge("nonsense"), MalformedPrompt);
}

TEST(Heuristic, MatchesFloatingPointForm) {
  HeuristicEvaluator h(5);
  for (int t = 0; t <= 400; t += 7)
    for (int pending = 0; pending <= 5; ++pending) {
      const double allowed = std::ceil(5.0 * (1.0 - t / 400.0)) + 1.0;
      const auto v = h.judge(render_prompt(TaskContext{pending, t, 400}));
      EXPECT_EQ(v.good(), pending <= allowed) << pending << " " << t;
    }
}

TEST(ShapingSignal, Examples) {
  EXPECT_EQ(shaping_signal({1.2, 0.3, VerdictSource::Remote}, 0.05).bonus, 0.05);
  EXPECT_EQ(shaping_signal({0.3, 1.2, VerdictSource::Remote}, 0.05).bonus, 0.0);
  EXPECT_EQ(shaping_signal({0.7, 0.7, VerdictSource::Remote}, 0.05).bonus, 0.0);
  EXPECT_EQ(shaping_signal({5.0, 0.0, VerdictSource::Fallback}, 0.05).bonus, 0.0);
  EXPECT_THROW(shaping_signal({1.0, 0.0, VerdictSource::Remote}, -0.01), ConfigError);
  EXPECT_THROW(shaping_signal({1.0, 0.0, VerdictSource::Remote}, NAN), ConfigError);
}

TEST(ShapingSignal, AlwaysBinary) {
  RandomStream rng(3);
  for (int k = 0; k < 10000; ++k) {
    const double lambda = rng.uniform() * 0.2;
    const auto s = shaping_signal({rng.normal(), rng.normal(), VerdictSource::Remote}, lambda);
    ASSERT_TRUE(s.bonus == 0.0 || s.bonus == lambda);
  }
}

namespace {

// Minimal stand-in for the logit server speaking the same wire schema.
class FakeLogitServer {
 public:
  FakeLogitServer() {
    server_.Post("/v1/logits", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_.load()));
      if (status_ != 200) {
        res.status = status_;
        return;
      }
      if (!raw_body_.empty()) {
        res.set_content(raw_body_, "application/json");
        return;
      }
      const auto j = nlohmann::json::parse(req.body);
      last_request_ = j;
      const auto prompt = j["prompt"].get<std::string>();
      const double g = static_cast<double>(prompt.size()) / 10.0;
      res.set_content(nlohmann::json{{"logits", {g, 1.0}}, {"model", "fake"}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeLogitServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int calls() const { return calls_; }

  std::atomic<int> delay_ms_{0};
  std::atomic<int> status_{200};
  std::string raw_body_;
  nlohmann::json last_request_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> calls_{0};
};

RemoteClientConfig client_for(const FakeLogitServer& s, int timeout_ms = 500) {
  return RemoteClientConfig{s.endpoint(), timeout_ms};
}

}  // namespace

TEST(RemoteEvaluator, WireRequestAndResponse) {
  FakeLogitServer server;
  RemoteEvaluator ev(client_for(server));
  const auto v = ev.judge("orders:2 t:25/400");
  EXPECT_EQ(v.source, VerdictSource::Remote);
  EXPECT_DOUBLE_EQ(v.logit_good, 1.7);
  EXPECT_DOUBLE_EQ(v.logit_bad, 1.0);
  EXPECT_EQ(server.last_request_["prompt"], "orders:2 t:25/400");
  EXPECT_EQ(server.last_request_["candidates"], nlohmann::json::array({"good", "bad"}));
}

TEST(RemoteEvaluator, CacheServesRepeatsWithoutNetwork) {
  FakeLogitServer server;
  RemoteEvaluator ev(client_for(server));
  const auto a = ev.judge("orders:1 t:5/400");
  const auto b = ev.judge("orders:1 t:5/400");
  EXPECT_EQ(server.calls(), 1);
  EXPECT_EQ(b.source, VerdictSource::Cache);
  EXPECT_EQ(a.logit_good, b.logit_good);
  EXPECT_EQ(a.logit_bad, b.logit_bad);
  EXPECT_EQ(ev.cache()->size(), 1u);
}

TEST(RemoteEvaluator, TimeoutFallsBackAndIsNotCached) {
  FakeLogitServer server;
  server.delay_ms_ = 300;
  RemoteEvaluator ev(client_for(server, 50));
  const auto v = ev.judge("orders:1 t:5/400");
  EXPECT_EQ(v.source, VerdictSource::Fallback);
  EXPECT_EQ(v.logit_good, 0.0);
  EXPECT_EQ(v.logit_bad, 0.0);
  EXPECT_EQ(shaping_signal(v, 0.05).bonus, 0.0);
  EXPECT_EQ(ev.cache()->size(), 0u);
}

TEST(RemoteEvaluator, ConnectionRefusedFallsBack) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  RemoteEvaluator ev(RemoteClientConfig{"http://127.0.0.1:" + std::to_string(port), 200});
  EXPECT_EQ(ev.judge("orders:0 t:0/400").source, VerdictSource::Fallback);
}

TEST(RemoteEvaluator, MalformedBodyIsProtocolError) {
  FakeLogitServer server;
  RemoteEvaluator ev(client_for(server));
  for (const char* body : {"not json", R"({"logits":[1.0],"model":"m"})", R"({"logits":[1.0,"x"],"model":"m"})",
                           R"({"logits":[1.0,2.0]})", R"([1,2])"}) {
    server.raw_body_ = body;
    EXPECT_THROW(ev.judge(std::string("orders:0 t:0/400 ") + body), ProtocolError) << body;
  }
}

TEST(RemoteEvaluator, Non200IsProtocolError) {
  FakeLogitServer server;
  server.status_ = 503;
  RemoteEvaluator ev(client_for(server));
  EXPECT_THROW(ev.judge("orders:0 t:0/400"), ProtocolError);
}

TEST(RemoteEvaluator, ParseResponseDirect) {
  EXPECT_EQ(RemoteEvaluator::parse_response(200, R"({"logits":[0.25,-1.5],"model":"m"})"), (std::pair{0.25, -1.5}));
  EXPECT_THROW(RemoteEvaluator::parse_response(404, "{}"), ProtocolError);
}

TEST(ReplayEvaluator, LoadsFixtureAndRejectsUnknown) {
  const std::string path = ::testing::TempDir() + "replay_fixture.jsonl";
  {
    std::ofstream out(path);
    out << R"({"prompt":"orders:2 t:25/400","logit_good":0.8125,"logit_bad":-0.25})" << "\n";
    out << R"({"type":"partial","reason":"x"})" << "\n";
    out << R"({"prompt":"orders:0 t:0/400","logit_good":null,"logit_bad":null})" << "\n";
  }
  auto ev = ReplayEvaluator::from_jsonl(path);
  EXPECT_EQ(ev.size(), 1u);
  const auto v = ev.judge("orders:2 t:25/400");
  EXPECT_EQ(v.logit_good, 0.8125);
  EXPECT_EQ(v.logit_bad, -0.25);
  EXPECT_EQ(v.source, VerdictSource::Replay);
  EXPECT_THROW(ev.judge("orders:0 t:0/400"), ProtocolError);
  std::remove(path.c_str());
  EXPECT_THROW(ReplayEvaluator::from_jsonl(path), IoError);
}

TEST(CachedEvaluator, TransparentOverHeuristic) {
  auto inner = std::make_shared<HeuristicEvaluator>(5);
  CachedEvaluator cached(inner);
  RandomStream rng(4);
  for (int k = 0; k < 500; ++k) {
    const auto p = render_prompt(TaskContext{static_cast<int>(rng.uniform_int(0, 5)), static_cast<int>(rng.uniform_int(0, 40)) * 10, 400});
    const auto a = cached.judge(p);
    const auto b = inner->judge(p);
    ASSERT_EQ(a.logit_good, b.logit_good);
    ASSERT_EQ(a.logit_bad, b.logit_bad);
  }
  EXPECT_LE(cached.cache()->size(), 6u * 41u);
}
