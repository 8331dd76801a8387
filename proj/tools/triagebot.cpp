// triagebot: operator command line for the incident triage chatbot.
//
//   triagebot validate <table>
//   triagebot import <table> [--data-dir D]
//   triagebot chat --table <table>
//   triagebot replay --table <table> --answers yes,no,...
//   triagebot report fallbacks [--from MS] [--to MS]
//   triagebot suggest [--min-support N]
//   triagebot apply --intention ID --phrase TEXT --condition Yes|No|<phrase>
//   triagebot serve [--port 8080] [--bind 127.0.0.1] [--table FILE]
//
// Exit codes: 0 success, 1 validation errors or invalid input, 2 usage/IO.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "triagebot/dialog_engine.hpp"
#include "triagebot/error.hpp"
#include "triagebot/http_api.hpp"
#include "triagebot/improvement_loop.hpp"
#include "triagebot/incident_triage.hpp"
#include "triagebot/intention_model.hpp"
#include "triagebot/nlu_matcher.hpp"
#include "triagebot/service.hpp"

#ifndef TRIAGEBOT_SHARE_DIR
#define TRIAGEBOT_SHARE_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace triagebot;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kUsage = 2;

struct Globals {
  bool json = false;
  std::string matcher_config;
  std::string data_dir;
  std::string incident_types;
};

std::string env_or(const char* name, std::string fallback) {
  const char* value = std::getenv(name);
  return value && *value ? std::string(value) : std::move(fallback);
}

fs::path share_dir() { return env_or("TRIAGEBOT_SHARE_DIR", TRIAGEBOT_SHARE_DIR); }

MatcherConfig load_matcher(const Globals& g) {
  std::string path = g.matcher_config;
  if (path.empty()) path = env_or("TRIAGEBOT_MATCHER_CONFIG", (share_dir() / "matcher.json").string());
  return MatcherConfig::load(path);
}

fs::path data_dir(const Globals& g) {
  if (!g.data_dir.empty()) return g.data_dir;
  return env_or("TRIAGEBOT_DATA_DIR", "triagebot-data");
}

std::vector<IncidentType> load_types(const Globals& g, const fs::path& dir) {
  if (!g.incident_types.empty()) return load_incident_types(g.incident_types);
  if (fs::exists(dir / "incident_types.csv")) return load_incident_types(dir / "incident_types.csv");
  return load_incident_types(share_dir() / "incident_types.csv");
}

ServiceConfig service_config(const Globals& g) {
  ServiceConfig cfg;
  cfg.data_dir = data_dir(g);
  cfg.matcher = load_matcher(g);
  cfg.incident_types = load_types(g, cfg.data_dir);
  cfg.notify_url = env_or("TRIAGEBOT_NOTIFY_URL", "");
  return cfg;
}

// Reads and parses a table file. IO failures are reported as usage errors.
struct Loaded {
  std::optional<IntentionTable> table;
  ValidationReport report;
  int exit_code = kOk;
};

Loaded load_table(const std::string& path) {
  Loaded out;
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    std::cerr << "triagebot: " << e.what() << "\n";
    out.exit_code = kUsage;
    return out;
  }
  try {
    out.table = parse_table(text);
    out.report = validate_table(*out.table);
  } catch (const Error& e) {
    out.report.ok = false;
    out.report.findings.push_back({Severity::error, std::string(e.code_name()), "table", e.what()});
  }
  if (!out.report.ok) out.exit_code = kInvalid;
  return out;
}

void print_report(const ValidationReport& report, bool json, std::ostream& os) {
  if (json) {
    os << report_to_json(report).dump() << "\n";
    return;
  }
  for (const auto& f : report.findings) {
    os << to_string(f.severity) << " " << f.code << " @" << f.location << " " << f.message << "\n";
  }
}

int cmd_validate(const Globals& g, const std::string& file) {
  Loaded loaded = load_table(file);
  if (loaded.exit_code == kUsage) return kUsage;
  print_report(loaded.report, g.json, std::cout);
  return loaded.report.ok ? kOk : kInvalid;
}

int cmd_import(const Globals& g, const std::string& file) {
  Loaded loaded = load_table(file);
  if (loaded.exit_code == kUsage) return kUsage;
  print_report(loaded.report, g.json, std::cout);
  if (!loaded.report.ok) return kInvalid;
  TriageService service(service_config(g));
  auto published = service.tables().publish(*loaded.table);
  if (g.json) {
    std::cout << Json{{"version", published->version}}.dump() << "\n";
  } else {
    std::cout << "IMPORTED version " << published->version << "\n";
  }
  return kOk;
}

std::optional<Answer> parse_answer(std::string text) {
  for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (text == "yes" || text == "y") return Answer::affirmative;
  if (text == "no" || text == "n") return Answer::negative;
  return std::nullopt;
}

int cmd_replay(const Globals& g, const std::string& file, const std::string& answers_text) {
  Loaded loaded = load_table(file);
  if (loaded.exit_code == kUsage) return kUsage;
  if (!loaded.report.ok) {
    print_report(loaded.report, false, std::cerr);
    return kInvalid;
  }
  std::vector<Answer> answers;
  std::stringstream ss(answers_text);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    auto answer = parse_answer(item);
    if (!answer) {
      std::cerr << "triagebot: answer \"" << item << "\" must be yes/no\n";
      return kUsage;
    }
    answers.push_back(*answer);
  }
  try {
    PathResult path = run_path(*loaded.table, answers);
    if (g.json) {
      Json visited = Json::array();
      for (const auto& id : path.visited) visited.push_back(id.str());
      std::cout << Json{{"visited", visited}, {"event", path.event.name}}.dump() << "\n";
    } else {
      for (const auto& id : path.visited) {
        if (id == synthetic_close_id() || id == synthetic_escalation_id()) continue;
        std::cout << id.short_form() << " ";
      }
      std::cout << path.event.name << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "triagebot: " << e.code_name() << ": " << e.what() << "\n";
    return kInvalid;
  }
  return kOk;
}

int cmd_chat(const Globals& g, const std::string& file, const std::string& transcript_path) {
  Loaded loaded = load_table(file);
  if (loaded.exit_code == kUsage) return kUsage;
  if (!loaded.report.ok) {
    print_report(loaded.report, false, std::cerr);
    return kInvalid;
  }
  const MatcherConfig matcher = load_matcher(g);

  const bool persist = !g.data_dir.empty() || std::getenv("TRIAGEBOT_DATA_DIR");
  const fs::path dir = data_dir(g);
  FallbackStore fallbacks(persist ? std::make_shared<JsonlLog>(dir / "fallbacks.jsonl") : nullptr);
  Notifier notifier(persist ? std::make_shared<JsonlLog>(dir / "notifications.jsonl") : nullptr,
                    env_or("TRIAGEBOT_NOTIFY_URL", ""));

  DialogEngine engine(matcher);
  EngineHooks hooks;
  hooks.fallback = [&](const Session& s, const IntentionId& node, std::string_view text) {
    fallbacks.record(s.id, node, text);
  };
  engine.set_hooks(std::move(hooks));

  auto table = std::make_shared<const IntentionTable>(std::move(*loaded.table));
  Session session;
  try {
    session = engine.start_session(table);
  } catch (const Error& e) {
    std::cerr << "triagebot: " << e.what() << "\n";
    return kInvalid;
  }

  auto say = [&](const std::string& text, bool fallback) {
    if (g.json) {
      std::cout << Json{{"bot", text}, {"fallback", fallback}}.dump() << "\n";
    } else {
      std::cout << "BOT " << text << "\n";
    }
    std::cout.flush();
  };

  say(session.transcript.front().text, false);
  std::optional<TerminalEvent> event;
  for (std::string line; !event && std::getline(std::cin, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    TurnResult result = engine.advance(session.id, line);
    say(result.reply, result.fallback);
    if (result.terminal) event = result.event;
  }

  const Session done = engine.snapshot(session.id);
  const std::string transcript = session_to_json(done).dump(2);
  if (!transcript_path.empty()) {
    std::ofstream(transcript_path) << transcript << "\n";
  } else if (persist) {
    write_file_atomically(dir / "transcripts" / (done.id + ".json"), transcript + "\n");
  } else {
    std::cerr << transcript << "\n";
  }

  if (!event) {
    std::cout << "ABORTED\n";
    return kUsage;
  }
  if (*event == TerminalEvent::notify_responsible() || *event == TerminalEvent::align_user()) {
    try {
      const bool to_group = *event == TerminalEvent::notify_responsible();
      notifier.dispatch(*event, done.id, std::nullopt,
                        to_group ? "responsible-group" : "reporting-user");
    } catch (const ChannelUnavailable& e) {
      std::cerr << "triagebot: " << e.what() << "\n";
    }
  }
  if (g.json) {
    std::cout << Json{{"event", event->name}}.dump() << "\n";
  } else {
    std::cout << "EVENT " << event->name << "\n";
  }
  return kOk;
}

int cmd_report(const Globals& g, Instant from, Instant to) {
  FallbackStore store(std::make_shared<JsonlLog>(data_dir(g) / "fallbacks.jsonl"));
  store.recover();
  try {
    std::cout << report_to_json(fallback_report(store.records(), from, to)).dump(g.json ? -1 : 2)
              << "\n";
  } catch (const Error& e) {
    std::cerr << "triagebot: " << e.what() << "\n";
    return kInvalid;
  }
  return kOk;
}

int cmd_suggest(const Globals& g, std::size_t min_support) {
  ServiceConfig cfg = service_config(g);
  cfg.min_support = min_support;
  TriageService service(std::move(cfg));
  Json list = Json::array();
  for (const auto& s : service.suggestions()) list.push_back(suggestion_to_json(s));
  std::cout << list.dump(g.json ? -1 : 2) << "\n";
  return kOk;
}

int cmd_apply(const Globals& g, const std::string& intention, const std::string& phrase,
              const std::string& condition) {
  TriageService service(service_config(g));
  Suggestion suggestion;
  suggestion.intention_id = IntentionId::parse(intention);
  suggestion.phrase = phrase;
  suggestion.condition = Condition::parse(condition);
  // Resolve every pending record this phrase answers.
  const auto phrase_key = normalize(phrase).joined();
  for (const auto& r : service.fallbacks().records()) {
    if (!r.resolved && r.intention_id == suggestion.intention_id && r.normalized.joined() == phrase_key) {
      suggestion.supporting_records.push_back(r.id);
    }
  }
  auto table = service.apply_suggestion(suggestion, suggestion.condition);
  if (g.json) {
    std::cout << Json{{"version", table->version}}.dump() << "\n";
  } else {
    std::cout << "APPLIED version " << table->version << "\n";
  }
  return kOk;
}

int cmd_serve(const Globals& g, const std::string& bind, int port, const std::string& table_file) {
  // Block termination signals before any thread starts; a dedicated thread
  // waits for them and stops the server.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  TriageService service(service_config(g));
  if (!table_file.empty() && !service.active_table()) {
    const std::string text = read_file(table_file);
    auto result = service.import_table(text, sniff_format(text));
    if (!result.report.ok) {
      print_report(result.report, false, std::cerr);
      return kInvalid;
    }
  }

  HttpApi api(service);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    api.stop();
  });

  int bound = port;
  if (port == 0) {
    bound = api.bind_to_any_port(bind);
  }
  std::cout << "listening on " << bind << ":" << bound << "\n" << std::flush;
  const bool ok = port == 0 ? (bound > 0 && api.listen_after_bind()) : api.listen(bind, port);
  if (!ok) {
    std::cerr << "triagebot: cannot listen on " << bind << ":" << port << "\n";
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return kUsage;
  }
  waiter.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incident triage chatbot"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_flag("--json", g.json, "JSON output");
  app.add_option("--matcher-config", g.matcher_config, "Matcher lexicon/threshold JSON");
  app.add_option("--data-dir", g.data_dir, "State directory");
  app.add_option("--incident-types", g.incident_types, "Incident type seed CSV");

  std::string table_file;
  auto* validate = app.add_subcommand("validate", "Validate an intention table");
  validate->add_option("table", table_file, "CSV or JSON table")->required();

  auto* import = app.add_subcommand("import", "Validate and activate an intention table");
  import->add_option("table", table_file, "CSV or JSON table")->required();

  std::string transcript_path;
  auto* chat = app.add_subcommand("chat", "Interactive triage in the terminal");
  chat->add_option("--table", table_file, "CSV or JSON table")->required();
  chat->add_option("--transcript", transcript_path, "Write the transcript here on exit");

  std::string answers;
  auto* replay = app.add_subcommand("replay", "Walk the table with yes/no answers");
  replay->add_option("--table", table_file, "CSV or JSON table")->required();
  replay->add_option("--answers", answers, "Comma-separated yes/no list")->required();

  Instant from = std::numeric_limits<Instant>::min();
  Instant to = std::numeric_limits<Instant>::max();
  auto* report = app.add_subcommand("report", "Monitoring reports");
  report->require_subcommand(1);
  auto* fallbacks = report->add_subcommand("fallbacks", "Unmatched utterances in a window");
  fallbacks->add_option("--from", from, "Window start, epoch ms");
  fallbacks->add_option("--to", to, "Window end, epoch ms");

  std::size_t min_support = kDefaultMinSupport;
  auto* suggest = app.add_subcommand("suggest", "Training-phrase suggestions from fallbacks");
  suggest->add_option("--min-support", min_support, "Minimum repeats of an utterance");

  std::string intention, phrase, condition;
  auto* apply = app.add_subcommand("apply", "Add a reviewed training phrase (new table version)");
  apply->add_option("--intention", intention)->required();
  apply->add_option("--phrase", phrase)->required();
  apply->add_option("--condition", condition)->required();

  int port = 8080;
  std::string bind = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--port", port, "Listen port (0 picks a free one)");
  serve->add_option("--bind", bind, "Bind address");
  serve->add_option("--table", table_file, "Import this table when none is active");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate(g, table_file);
    if (*import) return cmd_import(g, table_file);
    if (*chat) return cmd_chat(g, table_file, transcript_path);
    if (*replay) return cmd_replay(g, table_file, answers);
    if (*fallbacks) return cmd_report(g, from, to);
    if (*suggest) return cmd_suggest(g, min_support);
    if (*apply) return cmd_apply(g, intention, phrase, condition);
    if (*serve) return cmd_serve(g, bind, port, table_file);
  } catch (const Error& e) {
    std::cerr << "triagebot: " << e.code_name() << ": " << e.what() << "\n";
    switch (e.code()) {
      case Errc::storage_error:
      case Errc::invalid_config: return kUsage;
      default: return kInvalid;
    }
  } catch (const std::exception& e) {
    std::cerr << "triagebot: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
