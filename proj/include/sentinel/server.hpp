#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "sentinel/pipeline.hpp"

namespace httplib {
class Server;
}

namespace sentinel::service {

// HTTP front end for running pipelines:
//   GET  /healthz
//   GET  /v1/streams/{id}/events         newline-delimited JSON, chunked
//   POST /v1/streams/{id}/control        {"type":"update_config", ...}
//   GET  /v1/streams/{id}/archive        archived record listing
//   GET  /v1/streams/{id}/archive/{name} archived object bytes
class ControlServer {
 public:
  ControlServer();
  ~ControlServer();

  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  void add_stream(std::shared_ptr<Pipeline> pipeline);

  // Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Serves on a background thread until stop().
  void start();
  // Serves on the calling thread.
  void run();
  void stop();

 private:
  std::shared_ptr<Pipeline> find(const std::string& id) const;
  void install_routes();

  std::unique_ptr<httplib::Server> server_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Pipeline>> streams_;
  std::thread thread_;
};

// "host:port" -> (host, port)
std::pair<std::string, int> split_listen(const std::string& listen);

}  // namespace sentinel::service
