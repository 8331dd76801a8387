#include "triagebot/http_api.hpp"

#include <limits>

#include <httplib.h>

namespace triagebot {

ApiError map_error(const Error& error) {
  int status = 500;
  switch (error.code()) {
    case Errc::format_error:
    case Errc::action_grammar_error:
    case Errc::invalid_config:
    case Errc::answers_exhausted:
    case Errc::invalid_window: status = 400; break;
    case Errc::unknown_session:
    case Errc::unknown_incident:
    case Errc::unknown_intention: status = 404; break;
    case Errc::no_active_table:
    case Errc::terminal_node:
    case Errc::empty_store:
    case Errc::illegal_transition:
    case Errc::conflicting_phrase: status = 409; break;
    case Errc::session_closed: status = 410; break;
    case Errc::invalid_table:
    case Errc::unrepresentable:
    case Errc::unknown_type:
    case Errc::invalid_sample:
    case Errc::unknown_condition: status = 422; break;
    case Errc::channel_unavailable: status = 502; break;
    case Errc::storage_error: status = 500; break;
  }
  return {status, std::string(error.code_name()), error.what()};
}

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

Json body_json(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(Errc::format_error, "request body must be a JSON object");
  }
  return j;
}

std::optional<std::string> optional_field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

Instant query_instant(const httplib::Request& req, const char* key, Instant fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string text = req.get_param_value(key);
  try {
    std::size_t used = 0;
    Instant value = std::stoll(text, &used);
    if (used == text.size()) return value;
  } catch (const std::exception&) {
  }
  throw Error(Errc::invalid_window, std::string("query parameter ") + key + " must be epoch ms");
}

// Wraps a handler so every exception becomes a mapped JSON error.
template <class Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      auto mapped = map_error(e);
      send_error(res, mapped.status, mapped.code, mapped.message);
    } catch (const Json::exception& e) {
      send_error(res, 400, "FormatError", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  };
}

}  // namespace

HttpApi::HttpApi(TriageService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpApi::~HttpApi() { stop(); }

bool HttpApi::listen(const std::string& host, int port) { return server_->listen(host, port); }

int HttpApi::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool HttpApi::listen_after_bind() { return server_->listen_after_bind(); }

void HttpApi::stop() { server_->stop(); }

void HttpApi::wait_until_ready() const { server_->wait_until_ready(); }

void HttpApi::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_json(req);
    Session session = service_.start_session(optional_field(body, "incident_id"));
    send_json(res, 201, {{"session_id", session.id},
                         {"prompt", session.transcript.front().text},
                         {"intention_id", session.node_id().str()},
                         {"table_version", session.table_version}});
  }));

  s.Get(R"(/sessions/([A-Za-z0-9._-]+))",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, session_to_json(service_.session(req.matches[1])));
        }));

  s.Post(R"(/sessions/([A-Za-z0-9._-]+)/messages)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const Json body = body_json(req);
           auto text = body.find("text");
           if (text == body.end() || !text->is_string()) {
             throw Error(Errc::format_error, "message body needs a string \"text\"");
           }
           const TurnResult result = service_.post_message(req.matches[1], text->get<std::string>());
           send_json(res, 200, turn_result_to_json(result));
         }));

  s.Post("/tables/import", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::string type = req.get_header_value("Content-Type");
    type = type.substr(0, type.find(';'));
    while (!type.empty() && type.back() == ' ') type.pop_back();
    TableFormat format;
    if (type == "text/csv") {
      format = TableFormat::csv;
    } else if (type == "application/json") {
      format = TableFormat::json;
    } else {
      send_error(res, 415, "UnsupportedMediaType", "import accepts text/csv or application/json");
      return;
    }
    auto result = service_.import_table(req.body, format);
    Json body = report_to_json(result.report);
    if (result.table) body["version"] = result.table->version;
    send_json(res, result.report.ok ? 200 : 422, body);
  }));

  s.Get("/tables/active", guarded([this](const httplib::Request&, httplib::Response& res) {
    auto table = service_.active_table();
    if (!table) {
      send_error(res, 404, "NotFound", "no table has been imported");
      return;
    }
    send_json(res, 200, table_to_json(*table));
  }));

  s.Get("/reports/fallbacks", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Instant from = query_instant(req, "from", std::numeric_limits<Instant>::min());
    const Instant to = query_instant(req, "to", std::numeric_limits<Instant>::max());
    send_json(res, 200, report_to_json(service_.fallback_report(from, to)));
  }));

  s.Get("/suggestions", guarded([this](const httplib::Request&, httplib::Response& res) {
    Json list = Json::array();
    for (const auto& suggestion : service_.suggestions()) list.push_back(suggestion_to_json(suggestion));
    send_json(res, 200, {{"suggestions", std::move(list)}});
  }));

  s.Post("/suggestions/apply", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_json(req);
    Suggestion suggestion;
    suggestion.intention_id = IntentionId::parse(body.at("intention_id").get<std::string>());
    suggestion.phrase = body.at("phrase").get<std::string>();
    suggestion.condition = Condition::parse(body.at("condition").get<std::string>());
    if (body.contains("supporting_records")) {
      suggestion.supporting_records = body.at("supporting_records").get<std::vector<std::string>>();
    }
    auto table = service_.apply_suggestion(suggestion, suggestion.condition);
    send_json(res, 200, {{"version", table->version}});
  }));

  s.Post("/incidents", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Json body = body_json(req);
    auto type = body.find("type");
    if (type == body.end() || !type->is_string()) {
      throw Error(Errc::format_error, "incident body needs a string \"type\"");
    }
    Incident incident = service_.open_incident(type->get<std::string>(),
                                               body.value("description", std::string{}),
                                               optional_field(body, "assigned_group"));
    send_json(res, 201, incident_to_json(incident));
  }));

  s.Get(R"(/incidents/([A-Za-z0-9._-]+))",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, incident_to_json(service_.incident(req.matches[1])));
        }));

  s.Post(R"(/incidents/([A-Za-z0-9._-]+)/events)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const Json body = body_json(req);
           auto event = body.find("event");
           if (event == body.end() || !event->is_string()) {
             throw Error(Errc::format_error, "event body needs a string \"event\"");
           }
           Incident incident = service_.incident_event(req.matches[1], event->get<std::string>(),
                                                       optional_field(body, "actor"));
           send_json(res, 200, incident_to_json(incident));
         }));
}

}  // namespace triagebot
