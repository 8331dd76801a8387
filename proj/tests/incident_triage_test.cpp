#include "triagebot/incident_triage.hpp"

#include <atomic>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <httplib.h>

#include "test_support.hpp"

namespace triagebot {
namespace {

using testing::oracle_lifecycle;
using testing::shipped_matcher;
using testing::shipped_types;
using testing::TempDir;

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::storage_error;
}

struct SeededStore : SampleStore {
  SeededStore() { seed(shipped_types()); }
};

TEST(IncidentTypesTest, SeedFileLoadsVerbatim) {
  const auto types = shipped_types();
  const std::vector<IncidentType> expected = {
      {"Software Unavailable", "Unavailability or slowness when using a software feature"},
      {"Software access failure", "Inability to access the system"},
      {"Incomplete report", "Report with no data"},
      {"Data import failed", "Data import agents do not run at the specified time"},
      {"Incorrect software calculations", "Equations that compromise the outcome of reports"},
  };
  EXPECT_EQ(types, expected);

  const SeededStore store;
  const auto samples = store.samples();
  ASSERT_EQ(samples.size(), 5u);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(samples[i].incident_type, expected[i].name);
    EXPECT_EQ(samples[i].text, expected[i].description);
    EXPECT_EQ(samples[i].source, "seed");
  }
}

TEST(IncidentTypesTest, MalformedSeedFileRejected) {
  EXPECT_EQ(code_of([] { parse_incident_types("name,text\na,b\n"); }), Errc::format_error);
  EXPECT_EQ(code_of([] { parse_incident_types("sample,description\na,b,c\n"); }),
            Errc::format_error);
}

TEST(LifecycleTest, AutomatonMatchesOracleEdgeList) {
  std::set<std::tuple<std::string, std::string, std::string>> edges;
  for (LifecycleState s : kAllStates) {
    for (LifecycleEvent e : kAllEvents) {
      if (auto to = next_state(s, e)) {
        edges.insert({std::string(to_string(s)), std::string(to_string(e)), std::string(to_string(*to))});
      }
    }
  }
  EXPECT_EQ(edges, oracle_lifecycle());
  for (LifecycleEvent e : kAllEvents) EXPECT_FALSE(next_state(LifecycleState::closed, e));
}

TEST(LifecycleTest, NamesRoundTrip) {
  for (LifecycleState s : kAllStates) EXPECT_EQ(parse_state(to_string(s)), s);
  for (LifecycleEvent e : kAllEvents) EXPECT_EQ(parse_event(to_string(e)), e);
  EXPECT_FALSE(parse_event("reopen"));
  EXPECT_FALSE(parse_state("Open"));
}

class RegistryTest : public ::testing::Test {
 protected:
  SeededStore store;
  Instant now = 100;
  IncidentRegistry registry{store, nullptr, [this] { return ++now; }};

  Incident walk(const std::string& id, std::initializer_list<LifecycleEvent> events) {
    Incident last = registry.get(id);
    for (LifecycleEvent e : events) last = registry.apply(id, e);
    return last;
  }
};

TEST_F(RegistryTest, OpenExamples) {
  const Incident a = registry.open("Software Unavailable", "dashboard times out");
  EXPECT_EQ(a.state, LifecycleState::reported);
  ASSERT_EQ(a.history.size(), 1u);
  EXPECT_EQ(a.history[0].state, LifecycleState::reported);
  EXPECT_FALSE(a.history[0].event);
  EXPECT_EQ(a.type.description, "Unavailability or slowness when using a software feature");

  const Incident b = registry.open("Incorrect software calculations", "totals off by 10%");
  EXPECT_EQ(b.state, LifecycleState::reported);
  EXPECT_NE(a.id, b.id);

  EXPECT_EQ(code_of([&] { registry.open("Printer jam", "x"); }), Errc::unknown_type);
  EXPECT_EQ(code_of([&] { registry.get("inc-missing"); }), Errc::unknown_incident);
}

TEST_F(RegistryTest, TransitionExamples) {
  using E = LifecycleEvent;
  const std::string id = registry.open("Incomplete report", "empty pdf").id;
  Incident i = walk(id, {E::triaged, E::assigned, E::correction_applied, E::validation_started});
  EXPECT_EQ(i.state, LifecycleState::under_validation);

  const Incident ok = transition(i, E::validated_ok, 1);
  EXPECT_EQ(ok.state, LifecycleState::resolved);
  const Incident fail = transition(i, E::validated_fail, 1, std::string("end-user"));
  EXPECT_EQ(fail.state, LifecycleState::reopened);
  EXPECT_EQ(fail.history.back().actor, "end-user");
  EXPECT_EQ(i.state, LifecycleState::under_validation);

  i = walk(id, {E::validated_fail, E::assigned, E::correction_applied, E::validation_started,
                E::validated_ok, E::closed});
  EXPECT_EQ(i.state, LifecycleState::closed);
  EXPECT_EQ(i.history.size(), 11u);
  for (LifecycleEvent e : kAllEvents) {
    try {
      registry.apply(id, e);
      ADD_FAILURE() << "Closed accepted " << to_string(e);
    } catch (const Error& err) {
      EXPECT_EQ(err.code(), Errc::illegal_transition);
      EXPECT_NE(std::string(err.what()).find("Closed"), std::string::npos);
      EXPECT_NE(std::string(err.what()).find(to_string(e)), std::string::npos);
    }
  }
  EXPECT_EQ(registry.get(id).history.size(), 11u);
}

TEST_F(RegistryTest, RandomEventSequencesStayInsideAutomaton) {
  std::mt19937 rng(29);
  const auto& edges = oracle_lifecycle();
  const std::string id = registry.open("Data import failed", "agent idle").id;
  Incident incident = registry.get(id);
  for (int seq = 0; seq < 10000; ++seq) {
    Incident current = incident;
    for (int step = 0; step < 12; ++step) {
      const LifecycleEvent e = kAllEvents[rng() % std::size(kAllEvents)];
      const std::string from(to_string(current.state));
      try {
        Incident next = transition(current, e, step);
        ASSERT_TRUE(edges.count({from, std::string(to_string(e)), std::string(to_string(next.state))}))
            << from << " --" << to_string(e) << "--> " << to_string(next.state);
        ASSERT_EQ(next.history.size(), current.history.size() + 1);
        current = std::move(next);
      } catch (const Error& err) {
        ASSERT_EQ(err.code(), Errc::illegal_transition);
        bool legal = false;
        for (const auto& [f, ev, t] : edges) legal |= f == from && ev == to_string(e);
        ASSERT_FALSE(legal) << from << " rejected " << to_string(e);
      }
    }
  }
}

TEST_F(RegistryTest, ConcurrentTransitionsOnOneIncidentSerialize) {
  const std::string id = registry.open("Software access failure", "sso loop").id;
  std::atomic<int> accepted{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      try {
        registry.apply(id, LifecycleEvent::triaged);
        ++accepted;
      } catch (const Error&) {
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(accepted.load(), 1);
  EXPECT_EQ(registry.get(id).history.size(), 2u);
}

TEST(RegistryJournalTest, RecoverReplaysOpensAndTransitions) {
  TempDir dir;
  auto log = std::make_shared<JsonlLog>(dir.path() / "incidents.jsonl");
  SeededStore store;
  std::vector<Incident> before;
  {
    IncidentRegistry registry(store, log);
    const auto a = registry.open("Software Unavailable", "slow", std::string("ops"));
    registry.apply(a.id, LifecycleEvent::triaged);
    registry.apply(a.id, LifecycleEvent::assigned, std::string("lead"));
    registry.open("Incomplete report", "blank");
    before = registry.all();
  }
  IncidentRegistry again(store, log);
  again.recover();
  EXPECT_EQ(again.all(), before);
  for (const auto& i : before) EXPECT_EQ(incident_from_json(incident_to_json(i)), i);
}

TEST(ClassifyIncidentTypeTest, EachSeedDescriptionFindsItsType) {
  const SeededStore store;
  const auto cfg = shipped_matcher();
  for (const auto& type : shipped_types()) {
    const auto r = classify_incident_type(type.description, store, cfg);
    ASSERT_TRUE(r.matched) << type.description;
    EXPECT_EQ(*r.matched, type.name);
    EXPECT_EQ(r.score, 1.0);
  }
  EXPECT_TRUE(classify_incident_type("purple elephants dancing", store, cfg).is_fallback());
  EXPECT_EQ(code_of([&] { classify_incident_type("x", SampleStore{}, cfg); }), Errc::empty_store);
}

TEST(SampleStoreTest, RecordSample) {
  TempDir dir;
  auto log = std::make_shared<JsonlLog>(dir.path() / "samples.jsonl");
  SampleStore store(log);
  store.seed(shipped_types());
  const std::string a = store.record_sample("Incomplete report", "Report with no data");
  const std::string b = store.record_sample("Incomplete report", "Report with no data");
  EXPECT_NE(a, b);
  EXPECT_EQ(code_of([&] { store.record_sample("Incomplete report", "   "); }), Errc::invalid_sample);
  EXPECT_EQ(code_of([&] { store.record_sample("Nope", "words"); }), Errc::unknown_type);

  const std::string c = store.record_sample("Software access failure", "cannot log in at all");
  const auto r = classify_incident_type("cannot log in at all", store, shipped_matcher());
  ASSERT_TRUE(r.matched);
  EXPECT_EQ(*r.matched, "Software access failure");

  SampleStore reloaded(log);
  reloaded.seed(shipped_types());
  reloaded.recover();
  EXPECT_EQ(reloaded.samples(), store.samples());
  EXPECT_EQ(reloaded.samples().back().id, c);
}

// A loopback port that was bound and released without listening.
int closed_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

class NotifierTest : public ::testing::Test {
 protected:
  TempDir dir;
  std::shared_ptr<JsonlLog> log = std::make_shared<JsonlLog>(dir.path() / "notifications.jsonl");

  std::size_t logged_lines() {
    std::size_t n = 0;
    log->replay([&](const Json&) { ++n; });
    return n;
  }
};

TEST_F(NotifierTest, LogChannelDelivers) {
  Notifier notifier(log, {}, [] { return Instant{42}; });
  const auto r = notifier.dispatch(TerminalEvent::notify_responsible(), "s1", std::string("inc-1"),
                                   "responsible-group", "slow software");
  EXPECT_TRUE(r.delivered);
  EXPECT_EQ(r.channel, Channel::log);
  EXPECT_EQ(r.audience, "support_group");
  EXPECT_EQ(Json::parse(r.payload), (Json{{"event", "NotifyResponsible"},
                                          {"session_id", "s1"},
                                          {"incident_id", "inc-1"},
                                          {"target", "responsible-group"},
                                          {"summary", "slow software"},
                                          {"timestamp", 42}}));
  EXPECT_EQ(logged_lines(), 1u);
}

TEST_F(NotifierTest, AlignUserAddressesReportingUser) {
  Notifier notifier(log);
  const auto r = notifier.dispatch(TerminalEvent::align_user(), "s2", std::nullopt, "reporting-user");
  EXPECT_EQ(r.audience, "reporting_user");
  EXPECT_EQ(Json::parse(r.payload)["target"], "reporting-user");
  EXPECT_TRUE(Json::parse(r.payload)["incident_id"].is_null());
  EXPECT_EQ(code_of([&] { notifier.dispatch(TerminalEvent::close_not_incident(), "s3", {}, "x"); }),
            Errc::format_error);
}

TEST_F(NotifierTest, ExactlyOncePerSessionAndEvent) {
  Notifier notifier(log);
  const auto first = notifier.dispatch(TerminalEvent::notify_responsible(), "s1", {}, "g");
  const auto again = notifier.dispatch(TerminalEvent::notify_responsible(), "s1", {}, "g");
  EXPECT_EQ(first, again);
  EXPECT_EQ(notifier.records().size(), 1u);
  EXPECT_EQ(logged_lines(), 1u);

  Notifier restarted(log);
  restarted.recover();
  EXPECT_EQ(restarted.dispatch(TerminalEvent::notify_responsible(), "s1", {}, "g"), first);
  EXPECT_EQ(logged_lines(), 1u);
}

TEST_F(NotifierTest, WebhookReceivesPayload) {
  httplib::Server hook;
  std::vector<std::string> bodies;
  std::mutex m;
  hook.Post("/notify", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(m);
    bodies.push_back(req.body);
    res.status = 204;
  });
  const int port = hook.bind_to_any_port("127.0.0.1");
  std::thread server([&] { hook.listen_after_bind(); });
  hook.wait_until_ready();

  Notifier notifier(log, "http://127.0.0.1:" + std::to_string(port) + "/notify");
  const auto r = notifier.dispatch(TerminalEvent::notify_responsible(), "s9", {}, "dba");
  hook.stop();
  server.join();

  EXPECT_TRUE(r.delivered);
  EXPECT_EQ(r.channel, Channel::webhook);
  ASSERT_EQ(bodies.size(), 1u);
  EXPECT_EQ(bodies[0], r.payload);
}

TEST_F(NotifierTest, UnreachableWebhookPersistsUndeliveredRecord) {
  const int port = closed_port();
  Notifier notifier(log, "http://127.0.0.1:" + std::to_string(port) + "/hook");
  try {
    notifier.dispatch(TerminalEvent::notify_responsible(), "s1", std::string("inc-7"), "g");
    FAIL() << "expected ChannelUnavailable";
  } catch (const ChannelUnavailable& e) {
    EXPECT_EQ(e.code(), Errc::channel_unavailable);
    EXPECT_FALSE(e.record().delivered);
  }
  ASSERT_EQ(logged_lines(), 1u);
  log->replay([](const Json& j) { EXPECT_FALSE(notification_from_json(j).delivered); });
}

}  // namespace
}  // namespace triagebot
