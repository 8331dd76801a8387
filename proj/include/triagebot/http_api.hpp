#pragma once

#include <memory>
#include <string>

#include "triagebot/error.hpp"
#include "triagebot/service.hpp"

namespace httplib {
class Server;
}

namespace triagebot {

struct ApiError {
  int status = 500;
  std::string code;
  std::string message;
};

// One (status, code) per engine error.
ApiError map_error(const Error& error);

/// JSON-over-HTTP boundary:
///
///   POST /sessions                  -> 201 {session_id, prompt}
///   GET  /sessions/{id}             -> session with transcript
///   POST /sessions/{id}/messages    -> {reply, terminal, event, fallback, intention_id}
///   POST /tables/import             -> ValidationReport (text/csv or application/json)
///   GET  /tables/active             -> active table as JSON
///   GET  /reports/fallbacks         -> FallbackReport (?from=&to= in epoch ms)
///   GET  /suggestions               -> pending training-phrase suggestions
///   POST /suggestions/apply         -> reviewed apply, returns new table version
///   POST /incidents                 -> 201 incident
///   GET  /incidents/{id}            -> incident
///   POST /incidents/{id}/events     -> incident after the lifecycle event
///
/// Errors are {"error": {"code", "message"}} with the mapped status.
class HttpApi {
 public:
  explicit HttpApi(TriageService& service);
  ~HttpApi();

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  // Blocking. Returns false if the address cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it (or -1); call listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();

  TriageService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace triagebot
