#include "triagebot/http_api.hpp"

#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "test_support.hpp"
#include "triagebot/service.hpp"

namespace triagebot {
namespace {

using testing::shipped_matcher;
using testing::shipped_types;
using testing::table2_csv;
using testing::TempDir;

ServiceConfig config_for(const std::filesystem::path& dir) {
  ServiceConfig cfg;
  cfg.data_dir = dir;
  cfg.matcher = shipped_matcher();
  cfg.incident_types = shipped_types();
  return cfg;
}

/// A service plus its HTTP front end on an ephemeral loopback port.
class Server {
 public:
  explicit Server(ServiceConfig cfg) : service_(std::move(cfg)), api_(service_) {
    port_ = api_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { api_.listen_after_bind(); });
    api_.wait_until_ready();
  }
  ~Server() {
    api_.stop();
    thread_.join();
  }

  TriageService& service() { return service_; }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  TriageService service_;
  HttpApi api_;
  int port_ = -1;
  std::thread thread_;
};

struct Reply {
  int status = 0;
  Json body;
  std::string raw;
};

Reply to_reply(const httplib::Result& res) {
  if (!res) return {};
  Reply r{res->status, Json::parse(res->body, nullptr, false), res->body};
  return r;
}

class ApiTest : public ::testing::Test {
 protected:
  TempDir dir;
  std::unique_ptr<Server> server = std::make_unique<Server>(config_for(dir.path()));

  Reply get(const std::string& path) { return to_reply(server->client().Get(path)); }
  Reply post(const std::string& path, const Json& body) {
    return to_reply(server->client().Post(path, body.dump(), "application/json"));
  }
  Reply post_raw(const std::string& path, const std::string& body, const char* type) {
    return to_reply(server->client().Post(path, body, type));
  }
  Reply import_table2() { return post_raw("/tables/import", table2_csv(), "text/csv"); }
  std::string new_session() { return post("/sessions", Json::object()).body.at("session_id"); }
  Reply say(const std::string& id, const std::string& text) {
    return post("/sessions/" + id + "/messages", {{"text", text}});
  }
  void restart() {
    server.reset();
    server = std::make_unique<Server>(config_for(dir.path()));
  }
};

TEST_F(ApiTest, NothingImportedYet) {
  const Reply s = post("/sessions", Json::object());
  EXPECT_EQ(s.status, 409);
  EXPECT_EQ(s.body["error"]["code"], "NoActiveTable");
  EXPECT_EQ(get("/tables/active").status, 404);
  EXPECT_EQ(get("/health").status, 200);
}

TEST_F(ApiTest, ImportTable2) {
  const Reply r = import_table2();
  ASSERT_EQ(r.status, 200) << r.raw;
  EXPECT_EQ(r.body["ok"], true);
  EXPECT_EQ(r.body["version"], 1);
  ASSERT_EQ(r.body["findings"].size(), 1u);
  EXPECT_EQ(r.body["findings"][0]["severity"], "WARNING");
  EXPECT_EQ(r.body["findings"][0]["code"], "MissingNegative");

  const Reply active = get("/tables/active");
  ASSERT_EQ(active.status, 200);
  EXPECT_EQ(active.body["root"], "intention-01");
  EXPECT_EQ(active.body["intentions"].size(), 8u);
  EXPECT_EQ(import_table2().body["version"], 2);
}

TEST_F(ApiTest, ImportFailures) {
  const Reply dangling = post_raw("/tables/import",
                                  "intention,response,condition,action\n"
                                  "Intention 01,Software Incident?,Yes,Proceed for intention 02\n",
                                  "text/csv");
  EXPECT_EQ(dangling.status, 422);
  EXPECT_EQ(dangling.body["ok"], false);
  bool found = false;
  for (const auto& f : dangling.body["findings"]) found |= f["code"] == "DanglingReference";
  EXPECT_TRUE(found);
  EXPECT_EQ(get("/tables/active").status, 404);

  const Reply garbage = post_raw("/tables/import", std::string("\x01\xff\"\x00zz", 6), "text/csv");
  EXPECT_EQ(garbage.status, 400);
  EXPECT_EQ(garbage.body["error"]["code"], "FormatError");
  EXPECT_EQ(post_raw("/tables/import", "{not json", "application/json").status, 400);
  EXPECT_EQ(post_raw("/tables/import", table2_csv(), "text/plain").status, 415);
  const Reply grammar = post_raw("/tables/import",
                                 "intention,response,condition,action\n"
                                 "Intention 01,Q?,Yes,Go to 02\n",
                                 "text/csv");
  EXPECT_EQ(grammar.status, 400);
  EXPECT_EQ(grammar.body["error"]["code"], "ActionGrammarError");
}

TEST_F(ApiTest, SessionConversation) {
  import_table2();
  const Reply start = post("/sessions", Json::object());
  ASSERT_EQ(start.status, 201);
  EXPECT_EQ(start.body["prompt"], "Software Incident?");
  EXPECT_NE(start.body["session_id"], new_session());
  const std::string id = start.body["session_id"];

  const Reply fresh = get("/sessions/" + id);
  ASSERT_EQ(fresh.status, 200);
  EXPECT_EQ(fresh.body["transcript"].size(), 1u);

  const Reply yes = say(id, "yes");
  ASSERT_EQ(yes.status, 200);
  EXPECT_EQ(yes.body["reply"], "Is the Software unavailable?");
  EXPECT_EQ(yes.body["terminal"], false);
  EXPECT_EQ(yes.body["intention_id"], "intention-02");

  const Reply zzz = say(id, "zzz");
  EXPECT_EQ(zzz.body["fallback"], true);
  EXPECT_EQ(zzz.body["reply"].get<std::string>().rfind("Sorry, I didn't understand.", 0), 0u);

  const Reply done = say(id, "yes");
  EXPECT_EQ(done.body["terminal"], true);
  EXPECT_EQ(done.body["event"], "NotifyResponsible");
  EXPECT_EQ(say(id, "yes").status, 410);
  EXPECT_EQ(say("missing", "yes").status, 404);
  EXPECT_EQ(get("/sessions/missing").status, 404);
  EXPECT_EQ(post("/sessions/" + id + "/messages", {{"words", "x"}}).status, 400);
  EXPECT_EQ(post_raw("/sessions/" + id + "/messages", "{oops", "application/json").status, 400);

  EXPECT_EQ(get("/sessions/" + id).body["transcript"].size(), 7u);
  const auto records = server->service().notifier().records();
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].session_id, id);
  EXPECT_EQ(records[0].audience, "support_group");
}

TEST_F(ApiTest, AlignUserNotifiesReportingUser) {
  import_table2();
  const std::string id = new_session();
  for (const char* a : {"yes", "no", "no", "no", "yes", "yes"}) say(id, a);
  const auto records = server->service().notifier().records();
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].event, "AlignUser");
  EXPECT_EQ(records[0].target, "reporting-user");
}

TEST_F(ApiTest, NoNotificationForNotAnIncident) {
  import_table2();
  const Reply r = say(new_session(), "no");
  EXPECT_EQ(r.body["event"], "CloseNotIncident");
  EXPECT_TRUE(server->service().notifier().records().empty());
}

TEST_F(ApiTest, Incidents) {
  const Reply opened = post("/incidents", {{"type", "Software Unavailable"},
                                           {"description", "dashboard times out"},
                                           {"assigned_group", "bi-team"}});
  ASSERT_EQ(opened.status, 201) << opened.raw;
  EXPECT_EQ(opened.body["state"], "Reported");
  const std::string id = opened.body.at("incident_id");

  const Reply closed = post("/incidents/" + id + "/events", {{"event", "closed"}});
  EXPECT_EQ(closed.status, 409);
  EXPECT_EQ(closed.body["error"]["code"], "IllegalTransition");
  const Reply triaged = post("/incidents/" + id + "/events", {{"event", "triaged"}, {"actor", "ana"}});
  EXPECT_EQ(triaged.status, 200);
  EXPECT_EQ(triaged.body["state"], "Triaged");
  EXPECT_EQ(get("/incidents/" + id).body, triaged.body);

  EXPECT_EQ(post("/incidents/" + id + "/events", {{"event", "explode"}}).status, 400);
  EXPECT_EQ(post("/incidents/inc-none/events", {{"event", "triaged"}}).status, 404);
  EXPECT_EQ(get("/incidents/inc-none").status, 404);
  EXPECT_EQ(post("/incidents", {{"type", "Printer jam"}}).status, 422);
  EXPECT_EQ(post("/incidents", {{"description", "no type"}}).status, 400);

  import_table2();
  const Reply linked = post("/sessions", {{"incident_id", id}});
  EXPECT_EQ(linked.status, 201);
  EXPECT_EQ(post("/sessions", {{"incident_id", "inc-none"}}).status, 404);
  const std::string sid = linked.body["session_id"];
  say(sid, "yes");
  say(sid, "yes");
  const auto records = server->service().notifier().records();
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].incident_id, id);
  EXPECT_EQ(records[0].target, "bi-team");
}

TEST_F(ApiTest, FallbackReportAndImprovementCycle) {
  EXPECT_EQ(get("/reports/fallbacks").body["total"], 0);
  import_table2();
  for (int i = 0; i < 2; ++i) {
    const std::string id = new_session();
    say(id, "yes");
    say(id, "no");
    EXPECT_EQ(say(id, "kinda sluggish").body["fallback"], true);
  }
  const Reply report = get("/reports/fallbacks");
  ASSERT_EQ(report.status, 200);
  EXPECT_EQ(report.body["total"], 2);
  EXPECT_EQ(report.body["counts"], (Json{{"intention-03", 2}}));
  EXPECT_EQ(get("/reports/fallbacks?from=10&to=5").status, 400);
  EXPECT_EQ(get("/reports/fallbacks?from=abc").status, 400);
  EXPECT_EQ(get("/reports/fallbacks?from=0&to=1").body["total"], 0);

  const Reply suggestions = get("/suggestions");
  ASSERT_EQ(suggestions.body["suggestions"].size(), 1u);
  const Json s = suggestions.body["suggestions"][0];
  EXPECT_EQ(s["phrase"], "kinda sluggish");

  const Reply applied = post("/suggestions/apply",
                             {{"intention_id", s["intention_id"]},
                              {"phrase", s["phrase"]},
                              {"condition", "Yes"},
                              {"supporting_records", s["supporting_records"]}});
  ASSERT_EQ(applied.status, 200) << applied.raw;
  EXPECT_EQ(applied.body["version"], 2);
  EXPECT_EQ(get("/suggestions").body["suggestions"].size(), 0u);

  const std::string id = new_session();
  say(id, "yes");
  say(id, "no");
  const Reply hit = say(id, "kinda sluggish");
  EXPECT_EQ(hit.body["fallback"], false);
  EXPECT_EQ(hit.body["intention_id"], "intention-08");

  EXPECT_EQ(post("/suggestions/apply",
                 {{"intention_id", "intention-99"}, {"phrase", "x"}, {"condition", "Yes"}})
                .status,
            404);
  EXPECT_EQ(post("/suggestions/apply",
                 {{"intention_id", "intention-03"}, {"phrase", "yes"}, {"condition", "No"}})
                .status,
            409);
}

TEST_F(ApiTest, CorsHeaders) {
  auto res = server->client().Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  auto pre = server->client().Options("/sessions");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
}

TEST_F(ApiTest, RestartRecoversEverything) {
  import_table2();
  const std::string finished = new_session();
  for (const char* a : {"yes", "no", "hmm", "no", "no", "yes", "yes"}) say(finished, a);
  const std::string open = new_session();
  say(open, "yes");
  say(open, "what?");
  const std::string inc = post("/incidents", {{"type", "Incomplete report"}}).body.at("incident_id");
  post("/incidents/" + inc + "/events", {{"event", "triaged"}});

  const std::vector<std::string> paths = {"/sessions/" + finished, "/sessions/" + open,
                                          "/incidents/" + inc, "/reports/fallbacks",
                                          "/tables/active", "/suggestions"};
  std::vector<std::string> before;
  for (const auto& p : paths) before.push_back(get(p).raw);

  restart();
  for (std::size_t i = 0; i < paths.size(); ++i) EXPECT_EQ(get(paths[i]).raw, before[i]) << paths[i];

  EXPECT_EQ(say(open, "no").body["intention_id"], "intention-03");
  EXPECT_EQ(say(finished, "yes").status, 410);
  EXPECT_EQ(server->service().notifier().records().size(), 1u);
}

TEST_F(ApiTest, ConcurrentClients) {
  import_table2();
  std::vector<std::thread> threads;
  std::vector<std::string> ids(8);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    threads.emplace_back([&, t] {
      ids[t] = new_session();
      for (const char* a : {"yes", "no", "no", "no", "yes", "yes"}) say(ids[t], a);
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& id : ids) {
    const Reply s = get("/sessions/" + id);
    EXPECT_EQ(s.body["transcript"].size(), 13u);
  }
}

TEST(ApiEquivalence, HttpAndEngineTranscriptsMatch) {
  TempDir dir;
  ServiceConfig cfg = config_for(dir.path());
  cfg.clock = [] { return Instant{1'700'000'000'000}; };
  Server server(cfg);
  auto client = server.client();
  client.Post("/tables/import", table2_csv(), "text/csv");

  DialogEngine engine(shipped_matcher(), {}, cfg.clock);
  auto table = std::make_shared<const IntentionTable>(testing::table2());

  std::mt19937 rng(13);
  const std::vector<std::string> utterances = {"yes", "no", "Yes!", "nope", "what", "", "kinda"};
  for (int trial = 0; trial < 20; ++trial) {
    auto started = client.Post("/sessions", "{}", "application/json");
    ASSERT_TRUE(started);
    const std::string id = Json::parse(started->body)["session_id"];
    const Session direct = engine.start_session(table);
    for (int step = 0; step < 8; ++step) {
      const std::string u = utterances[rng() % utterances.size()];
      auto res = client.Post("/sessions/" + id + "/messages", Json{{"text", u}}.dump(), "application/json");
      ASSERT_TRUE(res);
      try {
        const TurnResult r = engine.advance(direct.id, u);
        ASSERT_EQ(res->status, 200);
        EXPECT_EQ(Json::parse(res->body), turn_result_to_json(r));
      } catch (const Error& e) {
        EXPECT_EQ(res->status, map_error(e).status);
      }
    }
    Json via_http = Json::parse(client.Get("/sessions/" + id)->body);
    Json via_engine = session_to_json(engine.snapshot(direct.id));
    via_http.erase("session_id");
    via_engine.erase("session_id");
    EXPECT_EQ(via_http.dump(), via_engine.dump());
  }
}

TEST(ErrorMapping, EveryCodeHasAStatus) {
  std::set<std::pair<int, std::string>> seen;
  for (int c = 0; c <= static_cast<int>(Errc::conflicting_phrase); ++c) {
    const auto code = static_cast<Errc>(c);
    const ApiError mapped = map_error(Error(code, "x"));
    EXPECT_EQ(mapped.code, to_string(code));
    EXPECT_GE(mapped.status, 400);
    if (code != Errc::storage_error) EXPECT_LT(mapped.status, 500 + (code == Errc::channel_unavailable ? 3 : 0));
    EXPECT_TRUE(seen.insert({mapped.status, mapped.code}).second);
  }
  EXPECT_EQ(map_error(Error(Errc::session_closed, "")).status, 410);
  EXPECT_EQ(map_error(Error(Errc::no_active_table, "")).status, 409);
  EXPECT_EQ(map_error(Error(Errc::illegal_transition, "")).status, 409);
}

}  // namespace
}  // namespace triagebot
