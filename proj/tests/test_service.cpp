#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "httplib.h"
#include "hybridnet/service.hpp"
#include "support.hpp"

using namespace hybridnet;
using namespace testing_support;
using nlohmann::json;

namespace {

const std::string kSixWords = "I think we can agree here";

struct Harness {
  TempDir dir;
  ManualClock clock{1'000'000};
  std::unique_ptr<Service> service;

  explicit Harness(bool workers = true, bool annotator = true) { open(workers, annotator); }

  void open(bool workers = true, bool annotator = true) {
    ServiceOptions o;
    o.data_dir = dir.path();
    o.pool = default_pool();
    if (annotator) o.annotator = std::make_shared<LexiconAnnotator>(default_lexicon());
    o.agent_factory = default_agent_factory(default_lexicon());
    auto c = clock;
    o.clock_factory = [c](std::int64_t resume_after) mutable {
      if (c.now() < resume_after) c.set(resume_after);
      return c.clock();
    };
    o.start_ai_workers = workers;
    o.snapshot_every = 10;
    service = std::make_unique<Service>(std::move(o));
  }
};

json human_config(int iterations = 2) {
  return {{"condition", "human_only"}, {"iterations", iterations}, {"seed", 7}};
}

json scripted_json(const std::string& policy = "majority-copy", int seed = 3) {
  return {{"condition", "ai_only"}, {"ai_backend", "scripted"}, {"scripted_policy", policy}, {"seed", seed}};
}

std::string created_id(const Response& r) { return r.body.at("run_id").get<std::string>(); }

std::vector<std::string> note_details(const RunState& run) {
  std::vector<std::string> out;
  for (const auto& e : run.events()) {
    if (e.type == EventType::note) out.push_back(e.detail);
  }
  return out;
}

/// Commits the next `n` ready slots of `kind` sequentially, agent keeping its own statement.
void commit_sequential(RunState& run, AgentKind kind, int n, const std::string& agent = "w") {
  for (int k = 0; k < n; ++k) {
    auto t = run.next_task(kind, agent);
    ASSERT_TRUE(t);
    run.submit_choice(t->slot, agent, 0);
    run.submit_revision(t->slot, agent, t->observed[0]);
  }
}

}  // namespace

TEST(Status, ErrorCodesMapToHttp) {
  EXPECT_EQ(http_status(ErrorCode::validation), 400);
  EXPECT_EQ(http_status(ErrorCode::auth), 401);
  EXPECT_EQ(http_status(ErrorCode::not_found), 404);
  EXPECT_EQ(http_status(ErrorCode::wrong_state), 409);
  EXPECT_EQ(http_status(ErrorCode::run_finished), 410);
  EXPECT_EQ(http_status(ErrorCode::too_short), 422);
  EXPECT_EQ(http_status(ErrorCode::too_early), 425);
  EXPECT_EQ(http_status(ErrorCode::transport), 502);
  auto r = error_response(Error(ErrorCode::too_short, "4 words"));
  EXPECT_EQ(r.body["error"], "too_short");
}

TEST(Runs, CreateValidatesAndIsIdempotent) {
  Harness h(false);
  auto bad = h.service->create_run({{"iterations", 0}});
  EXPECT_EQ(bad.status, 400);
  auto a = h.service->create_run(human_config(), "key-1");
  ASSERT_EQ(a.status, 201);
  EXPECT_EQ(a.body["status"], "running");
  auto b = h.service->create_run(human_config(), "key-1");
  EXPECT_EQ(b.status, 200);
  EXPECT_EQ(created_id(a), created_id(b));
  auto c = h.service->create_run(human_config(), "key-2");
  EXPECT_NE(created_id(a), created_id(c));
  EXPECT_EQ(h.service->run_ids().size(), 2u);
  EXPECT_EQ(h.service->get_run("nope").status, 404);
  auto g = h.service->get_run(created_id(a));
  EXPECT_EQ(g.body["slots"]["ready"], 25);
  EXPECT_EQ(g.body["slots"]["blocked"], 25);
}

TEST(Tasks, FullHumanProtocol) {
  Harness h(false);
  auto id = created_id(h.service->create_run(human_config()));
  auto task = h.service->next_task(id, "alice");
  ASSERT_EQ(task.status, 200);
  const auto token = task.body["token"].get<std::string>();
  EXPECT_EQ(token.size(), 32u);
  EXPECT_FALSE(task.body["question"].get<std::string>().empty());
  EXPECT_GE(task.body["statements"].size(), 3u);
  EXPECT_EQ(task.body["display_seconds"], 60);
  EXPECT_EQ(task.body["min_words"], 5);
  EXPECT_EQ(task.body["expires_at"], h.clock.now() + 15 * 60 * 1000);

  EXPECT_EQ(h.service->submit_choice(token, {{"index", "zero"}}).status, 400);
  EXPECT_EQ(h.service->submit_choice(token, {{"index", 99}}).status, 422);
  auto choice = h.service->submit_choice(token, {{"index", 0}});
  ASSERT_EQ(choice.status, 200);
  EXPECT_EQ(choice.body["revision_not_before"].get<std::int64_t>(), choice.body["chosen_at"].get<std::int64_t>() + 60'000);

  h.clock.advance(10'000);
  EXPECT_EQ(h.service->submit_revision(token, {{"text", kSixWords}}).status, 425);
  h.clock.advance(51'000);
  EXPECT_EQ(h.service->submit_revision(token, {{"text", "only four words here"}}).status, 422);
  auto done = h.service->submit_revision(token, {{"text", kSixWords}});
  ASSERT_EQ(done.status, 200);
  EXPECT_EQ(done.body["committed"], true);
  EXPECT_EQ(done.body["run_complete"], false);

  EXPECT_EQ(h.service->submit_revision(token, {{"text", kSixWords}}).status, 401);
  EXPECT_EQ(h.service->submit_choice(token, {{"index", 0}}).status, 401);
  EXPECT_EQ(h.service->submit_choice("deadbeef", {{"index", 0}}).status, 401);

  // One slot per participant by default.
  EXPECT_EQ(h.service->next_task(id, "alice").status, 204);
  EXPECT_EQ(h.service->next_task(id, "bob").status, 200);
  EXPECT_EQ(h.service->next_task("run-999999", "bob").status, 404);

  auto notes = note_details(*h.service->run(id));
  EXPECT_EQ(std::count(notes.begin(), notes.end(), "token_issued"), 2);
  EXPECT_EQ(std::count(notes.begin(), notes.end(), "token_closed"), 1);
}

TEST(Tasks, AnonymousParticipantGetsId) {
  Harness h(false);
  auto id = created_id(h.service->create_run(human_config()));
  ASSERT_EQ(h.service->next_task(id, "").status, 200);
  bool found = false;
  for (const auto& e : h.service->run(id)->events()) {
    if (e.type == EventType::dispatched) found = e.agent.rfind("anon-", 0) == 0;
  }
  EXPECT_TRUE(found);
}

TEST(Tasks, AiOnlyRunHasNoHumanWork) {
  Harness h(false);
  auto id = created_id(h.service->create_run(scripted_json()));
  EXPECT_EQ(h.service->next_task(id, "alice").status, 204);
}

TEST(Tasks, CompletedRunIsGone) {
  Harness h;
  auto id = created_id(h.service->create_run(scripted_json()));
  h.service->join_workers(id);
  EXPECT_EQ(h.service->status(id), RunStatus::complete);
  EXPECT_EQ(h.service->next_task(id, "alice").status, 410);
  EXPECT_TRUE(std::filesystem::exists(h.dir.path() / "runs" / id / "transcript.json"));
}

TEST(Tasks, ExpiredTokenReleasesSlot) {
  Harness h(false);
  auto id = created_id(h.service->create_run(human_config()));
  auto token = h.service->next_task(id, "alice").body["token"].get<std::string>();
  EXPECT_EQ(h.service->run(id)->counts().dispatched, 1u);
  h.clock.advance(15 * 60 * 1000);
  EXPECT_EQ(h.service->submit_choice(token, {{"index", 0}}).status, 401);
  EXPECT_EQ(h.service->run(id)->counts().dispatched, 0u);
  EXPECT_EQ(h.service->run(id)->counts().ready, 25u);
  bool closed = false;
  for (const auto& e : h.service->run(id)->events()) {
    if (e.type == EventType::note && e.detail == "token_closed") closed = e.text == token + ":expired";
  }
  EXPECT_TRUE(closed);
}

TEST(Tasks, SweepReleasesWithoutTraffic) {
  Harness h(false);
  auto id = created_id(h.service->create_run(human_config()));
  h.service->next_task(id, "alice");
  h.clock.advance(15 * 60 * 1000 - 1);
  h.service->sweep_timeouts();
  EXPECT_EQ(h.service->run(id)->counts().dispatched, 1u);
  h.clock.advance(1);
  h.service->sweep_timeouts();
  EXPECT_EQ(h.service->run(id)->counts().dispatched, 0u);
}

TEST(Tasks, VisibilityIsLogged) {
  Harness h(false);
  auto id = created_id(h.service->create_run(human_config()));
  auto token = h.service->next_task(id, "alice").body["token"].get<std::string>();
  EXPECT_EQ(h.service->report_visibility(token, {{"hidden", true}}).status, 204);
  EXPECT_EQ(h.service->report_visibility(token, {{"hidden", false}}).status, 204);
  EXPECT_EQ(h.service->report_visibility("bad", {}).status, 401);
  auto notes = note_details(*h.service->run(id));
  EXPECT_EQ(std::count(notes.begin(), notes.end(), "visibility_hidden"), 1);
  EXPECT_EQ(std::count(notes.begin(), notes.end(), "visibility_visible"), 1);
}

TEST(Tasks, HybridRunCompletesWithHumansAndWorkers) {
  Harness h;
  json cfg{{"condition", "hybrid"}, {"iterations", 2}, {"ai_backend", "scripted"}, {"seed", 11}};
  auto id = created_id(h.service->create_run(cfg));
  int participant = 0;
  while (h.service->status(id) == RunStatus::running) {
    auto t = h.service->next_task(id, "p" + std::to_string(participant++));
    if (t.status == 204) {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      continue;
    }
    if (t.status == 410) break;
    ASSERT_EQ(t.status, 200);
    auto tok = t.body["token"].get<std::string>();
    ASSERT_EQ(h.service->submit_choice(tok, {{"index", 0}}).status, 200);
    h.clock.advance(60'000);
    ASSERT_EQ(h.service->submit_revision(tok, {{"text", kSixWords}}).status, 200);
  }
  h.service->join_workers(id);
  EXPECT_EQ(h.service->status(id), RunStatus::complete);
  EXPECT_TRUE(h.service->run(id)->finished());
}

TEST(Metrics, CompletedScriptedRunHasNineRecords) {
  Harness h;
  auto id = created_id(h.service->create_run(scripted_json()));
  h.service->join_workers(id);
  auto m = h.service->run_metrics(id);
  ASSERT_EQ(m.status, 200);
  ASSERT_EQ(m.body["records"].size(), 9u);
  EXPECT_EQ(m.body["records"][0]["polarization"], 0.9856);
  EXPECT_EQ(m.body["run_id"], id);
  EXPECT_EQ(m.body["condition"], "ai_only");
  EXPECT_EQ(m.body["framing"], "consensus");
  EXPECT_EQ(h.service->run_metrics("run-424242").status, 404);
}

TEST(Metrics, MidRunSeriesStopsAtLatestIteration) {
  Harness h(false);
  auto id = created_id(h.service->create_run(scripted_json()));
  commit_sequential(*h.service->run(id), AgentKind::scripted, 3 * 25 + 4);
  auto m = h.service->run_metrics(id);
  ASSERT_EQ(m.status, 200);
  EXPECT_EQ(m.body["records"].size(), 4u);
}

TEST(Metrics, NoAnnotatorIsUnavailable) {
  Harness h(false, false);
  auto id = created_id(h.service->create_run(scripted_json()));
  EXPECT_EQ(h.service->run_metrics(id).status, 503);
}

TEST(Persistence, RecoveryRestoresSlotStatesAndFinalTranscript) {
  const auto cfg = scripted_json("stubborn", 21);
  // Reference: the same operations without a restart.
  Harness ref(false);
  auto ref_id = created_id(ref.service->create_run(cfg));
  auto& ref_run = *ref.service->run(ref_id);
  commit_sequential(ref_run, AgentKind::scripted, 60);
  auto in_flight = ref_run.next_task(AgentKind::scripted, "w");
  ASSERT_TRUE(in_flight);

  Harness h(false);
  auto id = created_id(h.service->create_run(cfg));
  ASSERT_EQ(id, ref_id);
  commit_sequential(*h.service->run(id), AgentKind::scripted, 60);
  ASSERT_TRUE(h.service->run(id)->next_task(AgentKind::scripted, "w"));

  std::map<SlotStatus, std::vector<SlotKey>> before;
  for (auto st : {SlotStatus::blocked, SlotStatus::ready, SlotStatus::dispatched, SlotStatus::committed}) {
    before[st] = h.service->run(id)->slots_with_status(st);
  }
  const auto events_before = h.service->run(id)->events();
  h.service.reset();

  h.open(false);
  h.service->recover();
  ASSERT_EQ(h.service->run_ids(), std::vector<std::string>{id});
  EXPECT_EQ(h.service->status(id), RunStatus::running);
  auto& run = *h.service->run(id);
  for (auto& [st, keys] : before) EXPECT_EQ(run.slots_with_status(st), keys) << to_string(st);
  EXPECT_EQ(run.events(), events_before);

  // Finish both the same way.
  for (auto* r : {&run, &ref_run}) {
    r->submit_choice(in_flight->slot, "w", 0);
    r->submit_revision(in_flight->slot, "w", in_flight->observed[0]);
    commit_sequential(*r, AgentKind::scripted, 200 - 61);
    EXPECT_TRUE(r->finished());
  }
  EXPECT_EQ(to_json(run.transcript()).dump(), to_json(ref_run.transcript()).dump());
}

TEST(Persistence, TornTailIsDropped) {
  Harness h(false);
  auto id = created_id(h.service->create_run(scripted_json()));
  commit_sequential(*h.service->run(id), AgentKind::scripted, 5);
  const auto events = h.service->run(id)->events();
  h.service.reset();
  {
    std::ofstream log(h.dir.path() / "runs" / id / "events.jsonl", std::ios::app);
    log << R"({"seq": 999, "t": 12, "ty)";
  }
  h.open(false);
  h.service->recover();
  EXPECT_EQ(h.service->run(id)->events(), events);
  // The log was rewritten clean and keeps growing.
  commit_sequential(*h.service->run(id), AgentKind::scripted, 1);
  auto log = read_file(h.dir.path() / "runs" / id / "events.jsonl");
  EXPECT_EQ(log.find("\"ty\n"), std::string::npos);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), static_cast<long>(events.size() + 3));
}

TEST(Persistence, TokensSurviveRestart) {
  Harness h(false);
  auto id = created_id(h.service->create_run(human_config(), "idem"));
  auto token = h.service->next_task(id, "alice").body["token"].get<std::string>();
  ASSERT_EQ(h.service->submit_choice(token, {{"index", 1}}).status, 200);
  h.service.reset();

  h.open(false);
  h.service->recover();
  h.clock.advance(60'000);
  EXPECT_EQ(h.service->submit_revision(token, {{"text", kSixWords}}).status, 200);
  EXPECT_EQ(created_id(h.service->create_run(human_config(), "idem")), id);
  // Fresh runs continue the id sequence.
  EXPECT_EQ(created_id(h.service->create_run(human_config())), "run-000002");
}

TEST(Persistence, RecoveredAiRunFinishesInBackground) {
  Harness h(false);
  auto id = created_id(h.service->create_run(scripted_json()));
  commit_sequential(*h.service->run(id), AgentKind::scripted, 30);
  h.service.reset();
  h.open(true);
  h.service->recover();
  h.service->join_workers(id);
  EXPECT_EQ(h.service->status(id), RunStatus::complete);
  EXPECT_EQ(commit_count(h.service->run(id)->events()), 200u);
  auto snap = json::parse(read_file(h.dir.path() / "runs" / id / "transcript.json"));
  EXPECT_EQ(snap["slots"].size(), 200u);
}

TEST(Http, EndToEnd) {
  Harness h(false);
  httplib::Server server;
  h.service->bind(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/api/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  EXPECT_EQ(client.Post("/api/v1/runs", "{not json", "application/json")->status, 400);
  auto created = client.Post("/api/v1/runs", {{"Idempotency-Key", "k"}}, human_config().dump(), "application/json");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 201);
  auto id = json::parse(created->body)["run_id"].get<std::string>();
  EXPECT_EQ(client.Post("/api/v1/runs", {{"Idempotency-Key", "k"}}, human_config().dump(), "application/json")->status,
            200);

  EXPECT_EQ(client.Get("/api/v1/runs/" + id)->status, 200);
  EXPECT_EQ(client.Get("/api/v1/runs/run-000777")->status, 404);

  auto task = client.Post("/api/v1/runs/" + id + "/tasks", R"({"participant":"alice"})", "application/json");
  ASSERT_EQ(task->status, 200);
  auto token = json::parse(task->body)["token"].get<std::string>();
  auto again = client.Post("/api/v1/runs/" + id + "/tasks", R"({"participant":"alice"})", "application/json");
  EXPECT_EQ(again->status, 204);
  EXPECT_TRUE(again->body.empty());

  const auto tp = "/api/v1/tasks/" + token;
  EXPECT_EQ(client.Post(tp + "/choice", R"({"index":0})", "application/json")->status, 200);
  EXPECT_EQ(client.Post(tp + "/revision", json{{"text", kSixWords}}.dump(), "application/json")->status, 425);
  EXPECT_EQ(client.Post(tp + "/visibility", R"({"hidden":true})", "application/json")->status, 204);
  h.clock.advance(60'000);
  auto rev = client.Post(tp + "/revision", json{{"text", kSixWords}}.dump(), "application/json");
  EXPECT_EQ(rev->status, 200);
  EXPECT_EQ(client.Post(tp + "/revision", json{{"text", kSixWords}}.dump(), "application/json")->status, 401);

  auto metrics = client.Get("/api/v1/runs/" + id + "/metrics");
  ASSERT_EQ(metrics->status, 200);
  EXPECT_EQ(json::parse(metrics->body)["records"].size(), 1u);
  auto transcript = client.Get("/api/v1/runs/" + id + "/transcript");
  ASSERT_EQ(transcript->status, 200);
  EXPECT_EQ(transcript_from_json(json::parse(transcript->body)).run_id, id);

  server.stop();
  listener.join();
}

namespace {

struct StubEndpoint {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  json last_request;

  explicit StubEndpoint(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server.Post("/v1/chat", [this, handler](const httplib::Request& req, httplib::Response& res) {
      last_request = json::parse(req.body);
      last_request["auth"] = req.get_header_value("Authorization");
      handler(req, res);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubEndpoint() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat"; }
};

ChatRequest hello() { return {"some-model", {{"user", "hello"}}, 0.5}; }

}  // namespace

TEST(HttpTransport, ReturnsFirstChoiceContent) {
  StubEndpoint stub([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"answer: 2"}}]})", "application/json");
  });
  HttpChatTransport t({stub.url(), "secret", 5});
  EXPECT_EQ(t.complete(hello()), "answer: 2");
  EXPECT_EQ(stub.last_request["model"], "some-model");
  EXPECT_EQ(stub.last_request["temperature"], 0.5);
  EXPECT_EQ(stub.last_request["messages"][0]["content"], "hello");
  EXPECT_EQ(stub.last_request["auth"], "Bearer secret");
}

TEST(HttpTransport, ErrorsAreTransportErrors) {
  StubEndpoint failing([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("upstream", "text/plain");
  });
  StubEndpoint garbled([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[]})", "application/json");
  });
  for (const auto& url : {failing.url(), garbled.url(), std::string("http://127.0.0.1:1/v1/chat")}) {
    HttpChatTransport t({url, "", 2});
    try {
      t.complete(hello());
      ADD_FAILURE() << url;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::transport) << url;
    }
  }
  EXPECT_THROW(HttpChatTransport({"not a url", "", 1}), Error);
}
