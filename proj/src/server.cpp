#include "sentinel/server.hpp"

#include <algorithm>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "sentinel/errors.hpp"

namespace sentinel::service {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

nlohmann::json field_errors(const ConfigError& e) {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& f : e.fields()) fields.push_back({{"field", f.field}, {"reason", f.reason}});
  return {{"type", "error"}, {"code", "InvalidConfig"}, {"fields", fields}};
}

}  // namespace

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "listen address must be host:port");
  try {
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "bad port in '" + listen + "'");
  }
}

ControlServer::ControlServer() : server_(std::make_unique<httplib::Server>()) { install_routes(); }

ControlServer::~ControlServer() { stop(); }

void ControlServer::add_stream(std::shared_ptr<Pipeline> pipeline) {
  std::lock_guard lock(mutex_);
  streams_[pipeline->stream_id()] = std::move(pipeline);
}

std::shared_ptr<Pipeline> ControlServer::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = streams_.find(id);
  return it == streams_.end() ? nullptr : it->second;
}

int ControlServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::InvalidArgument, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port))
    throw Error(ErrorCode::InvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ControlServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void ControlServer::run() { server_->listen_after_bind(); }

void ControlServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void ControlServer::install_routes() {
  server_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok\n", "text/plain"); });

  server_->Get(R"(/v1/streams/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    auto pipeline = find(req.matches[1]);
    if (!pipeline) return send_json(res, 404, {{"type", "error"}, {"code", "UnknownStream"}});
    std::shared_ptr<EventHub> hub(pipeline, &pipeline->hub());
    auto sub = hub->subscribe();
    res.set_chunked_content_provider(
        "application/x-ndjson",
        [sub](std::size_t, httplib::DataSink& sink) {
          if (auto ev = sub->pop(std::chrono::milliseconds(250))) {
            const std::string line = ev->dump() + "\n";
            if (!sink.write(line.data(), line.size())) return false;
          }
          if (sub->finished()) sink.done();
          return true;
        },
        [hub, sub](bool) { hub->unsubscribe(sub); });
  });

  server_->Post(R"(/v1/streams/([^/]+)/control)", [this](const httplib::Request& req, httplib::Response& res) {
    auto pipeline = find(req.matches[1]);
    if (!pipeline) return send_json(res, 404, {{"type", "error"}, {"code", "UnknownStream"}});
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return send_json(res, 400, field_errors(ConfigError(std::vector<FieldError>{{"body", "not valid JSON"}})));
    }
    try {
      send_json(res, 200, ack_json(pipeline->update_config(parse_config_update(body))));
    } catch (const ConfigError& e) {
      send_json(res, 400, field_errors(e));
    }
  });

  server_->Get(R"(/v1/streams/([^/]+)/archive)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    auto pipeline = find(id);
    if (!pipeline) return send_json(res, 404, {{"type", "error"}, {"code", "UnknownStream"}});
    nlohmann::json records = nlohmann::json::array();
    if (auto store = pipeline->store()) {
      try {
        for (const auto& key : store->list(id + "/")) {
          if (!key.ends_with(".json")) continue;
          const std::string base = key.substr(0, key.size() - 5);
          const std::string name = base.substr(id.size() + 1);
          records.push_back({{"id", base},
                             {"image", "/v1/streams/" + id + "/archive/" + name + ".png"},
                             {"sidecar", "/v1/streams/" + id + "/archive/" + name + ".json"}});
        }
      } catch (const Error& e) {
        return send_json(res, 503, {{"type", "error"}, {"code", std::string(to_string(e.code()))}});
      }
    }
    send_json(res, 200, {{"stream_id", id}, {"records", records}});
  });

  server_->Get(R"(/v1/streams/([^/]+)/archive/([A-Za-z0-9_.\-]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 const std::string name = req.matches[2];
                 auto pipeline = find(id);
                 auto store = pipeline ? pipeline->store() : nullptr;
                 if (!store) return send_json(res, 404, {{"type", "error"}, {"code", "NotFound"}});
                 try {
                   const auto bytes = store->get(id + "/" + name);
                   res.set_content(std::string(bytes.begin(), bytes.end()),
                                   name.ends_with(".png") ? "image/png" : "application/json");
                 } catch (const Error&) {
                   send_json(res, 404, {{"type", "error"}, {"code", "NotFound"}});
                 }
               });
}

}  // namespace sentinel::service
