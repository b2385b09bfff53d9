#include "sentinel/events.hpp"

#include <algorithm>

namespace sentinel::service {

std::string to_string(SegmentStatus status) {
  switch (status) {
    case SegmentStatus::ok:
      return "ok";
    case SegmentStatus::dropped_deadline:
      return "dropped_deadline";
    case SegmentStatus::error:
      return "error";
  }
  return "?";
}

nlohmann::json config_event(const ActiveConfig& config) {
  return {{"type", "config"},
          {"stream_id", config.stream_id},
          {"roi",
           {{"top_left", {config.roi.top_left.x, config.roi.top_left.y}},
            {"bottom_right", {config.roi.bottom_right.x, config.roi.bottom_right.y}}}},
          {"grid", {{"n", config.grid.rows}, {"m", config.grid.cols}}},
          {"threshold", config.threshold},
          {"interval_s", config.interval_s},
          {"downscale", config.downscale}};
}

nlohmann::json mask_event(int i, double t, const annotator::AnnotationMask* mask, double descriptor_s,
                          double detect_s, double total_s, SegmentStatus status) {
  nlohmann::json labels = nlohmann::json::array();
  nlohmann::json rects = nlohmann::json::array();
  if (mask != nullptr && status == SegmentStatus::ok) {
    for (bool b : mask->labels) labels.push_back(b);
    for (const auto& r : mask->rects) rects.push_back({r.x0, r.y0, r.x1, r.y1});
  }
  return {{"type", "mask"},
          {"i", i},
          {"t", t},
          {"labels", labels},
          {"rects", rects},
          {"timings", {{"descriptor_s", descriptor_s}, {"detect_s", detect_s}, {"total_s", total_s}}},
          {"status", to_string(status)}};
}

nlohmann::json alert_event(int i, int pushing_count) {
  return {{"type", "alert"}, {"i", i}, {"pushing_count", pushing_count}};
}

nlohmann::json end_event(const std::string& reason) { return {{"type", "end"}, {"reason", reason}}; }

std::optional<nlohmann::json> Subscription::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  ready_.wait_for(lock, timeout, [&] { return !events_.empty() || closed_; });
  if (events_.empty()) return std::nullopt;
  auto ev = std::move(events_.front());
  events_.pop_front();
  return ev;
}

bool Subscription::finished() const {
  std::lock_guard lock(mutex_);
  return closed_ && events_.empty();
}

std::size_t Subscription::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

void Subscription::push(nlohmann::json event) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    if (events_.size() >= capacity_) {
      auto victim = std::find_if(events_.begin(), events_.end(), [](const nlohmann::json& e) {
        const auto& type = e.at("type");
        return type == "mask" || type == "alert";
      });
      if (victim == events_.end()) victim = events_.begin();
      events_.erase(victim);
      ++dropped_;
    }
    events_.push_back(std::move(event));
  }
  ready_.notify_all();
}

void Subscription::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  ready_.notify_all();
}

std::shared_ptr<Subscription> EventHub::subscribe() {
  auto sub = std::make_shared<Subscription>(capacity_);
  std::lock_guard lock(mutex_);
  if (!end_ && config_) sub->push(*config_);
  if (end_) {
    sub->push(*end_);
    sub->close();
    return sub;
  }
  subs_.push_back(sub);
  return sub;
}

void EventHub::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  std::lock_guard lock(mutex_);
  subs_.erase(std::remove(subs_.begin(), subs_.end(), sub), subs_.end());
  sub->close();
}

void EventHub::publish_config(nlohmann::json config) {
  std::lock_guard lock(mutex_);
  config_ = config;
  for (auto& s : subs_) s->push(config);
}

void EventHub::publish(nlohmann::json event) {
  std::lock_guard lock(mutex_);
  for (auto& s : subs_) s->push(event);
}

void EventHub::close(nlohmann::json end) {
  std::lock_guard lock(mutex_);
  if (end_) return;
  end_ = end;
  for (auto& s : subs_) {
    s->push(end);
    s->close();
  }
  subs_.clear();
}

std::optional<nlohmann::json> EventHub::current_config() const {
  std::lock_guard lock(mutex_);
  return config_;
}

std::size_t EventHub::subscribers() const {
  std::lock_guard lock(mutex_);
  return subs_.size();
}

}  // namespace sentinel::service
