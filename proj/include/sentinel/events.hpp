#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sentinel/annotator.hpp"
#include "sentinel/ingest.hpp"
#include "sentinel/metrics.hpp"
#include "sentinel/patching.hpp"

namespace sentinel::service {

enum class SegmentStatus { ok, dropped_deadline, error };

std::string to_string(SegmentStatus status);

struct ActiveConfig {
  std::string stream_id;
  ingest::RoiSpec roi;  // native resolution
  patching::GridSpec grid;
  double threshold = 0.5;
  double interval_s = 2.0;
  // Working/native scale; mask rects are in working-resolution ROI pixels.
  double downscale = 1.0;

  bool operator==(const ActiveConfig&) const = default;
};

nlohmann::json config_event(const ActiveConfig& config);
// labels/rects are empty unless status is ok.
nlohmann::json mask_event(int i, double t, const annotator::AnnotationMask* mask, double descriptor_s,
                          double detect_s, double total_s, SegmentStatus status);
nlohmann::json alert_event(int i, int pushing_count);
nlohmann::json end_event(const std::string& reason);

// One subscriber's bounded buffer. When full, the oldest mask or alert is
// dropped so the publisher never waits on a slow reader.
class Subscription {
 public:
  explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

  // nullopt on timeout or when closed and drained.
  std::optional<nlohmann::json> pop(std::chrono::milliseconds timeout);
  bool finished() const;
  std::size_t dropped() const;

 private:
  friend class EventHub;
  void push(nlohmann::json event);
  void close();

  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<nlohmann::json> events_;
  bool closed_ = false;
  std::size_t dropped_ = 0;
};

// Fan-out of one stream's events. Late subscribers get the current config
// event first, then live events; after close() they get the end event only.
class EventHub {
 public:
  explicit EventHub(std::size_t per_client_capacity = 256) : capacity_(per_client_capacity) {}

  std::shared_ptr<Subscription> subscribe();
  void unsubscribe(const std::shared_ptr<Subscription>& sub);

  void publish_config(nlohmann::json config);
  void publish(nlohmann::json event);
  void close(nlohmann::json end);

  std::optional<nlohmann::json> current_config() const;
  std::size_t subscribers() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::optional<nlohmann::json> config_;
  std::optional<nlohmann::json> end_;
};

}  // namespace sentinel::service
