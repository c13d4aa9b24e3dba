#include "study_server.hpp"

#include <httplib.h>

namespace attribench {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

int status_for(StudyError::Kind kind) {
  switch (kind) {
    case StudyError::Kind::bad_request: return 400;
    case StudyError::Kind::not_found: return 404;
    case StudyError::Kind::conflict: return 409;
  }
  return 500;
}

// Runs a handler and maps study and parse failures onto HTTP statuses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const StudyError& e) {
    send_json(res, status_for(e.kind()), {{"error", e.what()}});
  } catch (const json::exception& e) {
    send_json(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
  } catch (const ValidationError& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

}  // namespace

struct StudyServer::Impl {
  explicit Impl(StudyService& s) : service(s) {}
  StudyService& service;
  httplib::Server server;
};

StudyServer::StudyServer(StudyService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  StudyService& svc = service;

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Post("/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      auto reply = svc.create_session(body.at("participant_id").get<std::string>());
      send_json(res, reply.at("resumed").get<bool>() ? 200 : 201, reply);
    });
  });

  srv.Get(R"(/sessions/([^/]+)/next)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.next_trial(req.matches[1])); });
  });

  srv.Post(R"(/sessions/([^/]+)/judgments)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      const auto judgment = judgment_from_string(body.at("judgment").get<std::string>());
      send_json(res, 201,
                svc.submit(req.matches[1], body.at("example_id").get<std::string>(), judgment,
                           body.at("elapsed_ms").get<double>()));
    });
  });

  srv.Get("/results.csv", [&svc](const httplib::Request&, httplib::Response& res) {
    res.set_content(results_csv(svc.records()), "text/csv");
  });
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool StudyServer::listen() { return impl_->server.listen_after_bind(); }

void StudyServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void StudyServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace attribench
