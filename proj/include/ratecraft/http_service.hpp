#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

#include <json.hpp>

#include "harness.hpp"
#include "labeling_service.hpp"

#include <httplib.h>

namespace ratecraft {

// Served at / when no UI bundle directory is configured.
inline constexpr const char* kFallbackPage = R"html(<!doctype html>
<html><head><meta charset="utf-8"><title>ratecraft labeling</title></head>
<body>
<h1>ratecraft labeling</h1>
<p id="status">loading...</p>
<pre id="ticket"></pre>
<div id="controls"></div>
<script>
async function next() {
  const r = await fetch('/api/ticket');
  const controls = document.getElementById('controls');
  controls.innerHTML = '';
  if (r.status === 204) {
    document.getElementById('status').textContent = 'no pending ticket';
    setTimeout(next, 1000);
    return;
  }
  const t = await r.json();
  document.getElementById('status').textContent = 'ticket ' + t.ticket_id + ' (' + t.kind + '), budget ' + t.budget_remaining;
  document.getElementById('ticket').textContent = JSON.stringify(t.kind === 'rating' ? t.frames : t.frame_pairs).slice(0, 2000);
  const send = async (body) => {
    controls.innerHTML = '';
    await fetch('/api/answer', {method: 'POST', headers: {'Content-Type': 'application/json'},
                                body: JSON.stringify(Object.assign({ticket_id: t.ticket_id}, body))});
    next();
  };
  if (t.kind === 'rating') {
    for (let c = 0; c < t.n; ++c) {
      const b = document.createElement('button');
      b.textContent = c;
      b.onclick = () => send({class: c});
      controls.appendChild(b);
    }
  } else {
    for (const side of ['first', 'second']) {
      const b = document.createElement('button');
      b.textContent = side;
      b.onclick = () => send({preferred: side});
      controls.appendChild(b);
    }
  }
}
next();
</script>
</body></html>
)html";

inline void reply(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  if (r.status != 204) res.set_content(r.body.dump(), "application/json");
}

/// Wires the labeling API onto an httplib server.
inline void mount_labeling_api(httplib::Server& server, LabelingService& service, const std::string& ui_dir = {}) {
  server.Get("/api/ticket", [&service](const httplib::Request&, httplib::Response& res) { reply(res, service.get_ticket()); });
  server.Post("/api/answer", [&service](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      reply(res, {422, {{"error", "request body is not JSON"}}});
      return;
    }
    reply(res, service.post_answer(body));
  });
  server.Get("/api/stats", [&service](const httplib::Request&, httplib::Response& res) { reply(res, service.get_stats()); });
  server.Get("/api/curve", [&service](const httplib::Request&, httplib::Response& res) { reply(res, service.get_curve()); });
  if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir)) {
    server.set_mount_point("/", ui_dir);
  } else {
    server.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kFallbackPage, "text/html"); });
  }
}

/// Runs an httplib server on a background thread for the lifetime of the
/// object.
class HttpServerThread {
 public:
  HttpServerThread(LabelingService& service, const std::string& host, int port, const std::string& ui_dir = {}) {
    mount_labeling_api(server_, service, ui_dir);
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else if (server_.bind_to_port(host, port)) {
      port_ = port;
    } else {
      port_ = -1;
    }
    if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~HttpServerThread() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  HttpServerThread(const HttpServerThread&) = delete;
  HttpServerThread& operator=(const HttpServerThread&) = delete;

  int port() const { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

inline std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("bind address must be host:port");
  return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
}

/// Runs the experiment loop with labels coming from the HTTP service. Blocks
/// until the run finishes.
inline RunRecord serve_labeling(const ExperimentConfig& config, const std::string& bind,
                                const std::function<void(int port)>& on_ready = {}) {
  auto env = make_env(config.env);
  LabelingService service(config.modality, config.n, env->clone(), config.effective_budget());
  auto [host, port] = parse_bind(bind);
  HttpServerThread http(service, host, port, config.ui_dir);
  if (on_ready) on_ready(http.port());
  ServiceTicketTeacher teacher(service, config.human_round_timeout_s);
  RunHooks hooks;
  hooks.on_curve = [&service](const std::vector<CurveRow>& rows) { service.set_curve(curve_json(rows)); };
  ExperimentConfig c = config;
  c.teacher = TeacherKind::http_human;
  RunRecord rec = run_experiment(c, teacher, hooks);
  service.close();
  return rec;
}

}  // namespace ratecraft
