#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sentinel/annotator.hpp"
#include "sentinel/config.hpp"
#include "sentinel/detector.hpp"
#include "sentinel/events.hpp"
#include "sentinel/flow.hpp"
#include "sentinel/ingest.hpp"
#include "sentinel/metrics.hpp"

namespace sentinel::service {

enum class Stage { descriptor, detect };

struct SegmentResult {
  int i = 0;
  double t = 0.0;
  SegmentStatus status = SegmentStatus::ok;
  std::optional<annotator::AnnotationMask> mask;  // present iff ok
  std::vector<detector::PatchVerdict> verdicts;
  ActiveConfig config;  // as snapshotted when the segment started
  metrics::TimingReport timings;
  double processing_s = 0.0;     // descriptor start -> emission
  double latency_s = 0.0;        // capture of keyframe i -> emission
  double pair_latency_s = 0.0;   // capture of keyframe i+1 -> emission
  std::string error;
};

struct PipelineHooks {
  // Runs on the stage's thread right before the stage starts; tests use it to
  // inject delays or failures.
  std::function<void(int i, Stage stage)> before_stage;
  std::function<void(const SegmentResult&)> on_result;
};

struct ConfigUpdate {
  std::optional<ingest::RoiSpec> roi;
  std::optional<patching::GridSpec> grid;
  std::optional<double> threshold;
};

// {"type":"update_config", "roi":{"top_left":[x,y],"bottom_right":[x,y]},
//  "grid":{"n":rows,"m":cols}, "threshold":t}; every part optional.
ConfigUpdate parse_config_update(const nlohmann::json& body);

struct ConfigAck {
  int effective_i = 0;
  ActiveConfig config;
};

nlohmann::json ack_json(const ConfigAck& ack);

// One stream: acquisition thread (inside the sampler), descriptor thread and
// detect thread joined by bounded queues, plus asynchronous persistence.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::shared_ptr<EventHub> hub = nullptr, PipelineHooks hooks = {});
  // Uses `stream` instead of opening config.source.
  Pipeline(PipelineConfig config, std::unique_ptr<ingest::FrameStream> stream, std::shared_ptr<EventHub> hub = nullptr,
           PipelineHooks hooks = {});
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void start();
  // Blocks until the stream has ended and everything is persisted.
  void wait();
  void stop();
  bool finished() const { return finished_; }

  // Validated against the native frame; throws ConfigError. Takes effect at
  // the next segment start.
  ConfigAck update_config(const ConfigUpdate& update);
  ActiveConfig active_config() const;

  const std::string& stream_id() const { return config_.source.source_id; }
  EventHub& hub() { return *hub_; }
  std::shared_ptr<annotator::ObjectStore> store() const { return store_; }
  std::vector<SegmentResult> results() const;
  std::optional<std::string> end_reason() const;

 private:
  struct Work;
  class WorkQueue;

  void descriptor_loop();
  void detect_loop();
  std::shared_ptr<const flow::FlowEstimator> estimator_for(cv::Size roi);

  PipelineConfig config_;
  PipelineHooks hooks_;
  std::shared_ptr<EventHub> hub_;
  std::unique_ptr<ingest::FrameStream> pending_stream_;
  std::unique_ptr<ingest::KeyframeSampler> sampler_;
  ingest::Rational downscale_;
  cv::Size native_size_;
  cv::Size frame_size_;
  std::shared_ptr<const detector::Classifier> classifier_;
  std::shared_ptr<const flow::FlowEstimator> estimator_;
  cv::Size estimator_size_;
  std::shared_ptr<annotator::ObjectStore> store_;
  std::unique_ptr<annotator::ArchiveWriter> archive_;

  mutable std::mutex config_mutex_;
  ActiveConfig active_;
  std::optional<ActiveConfig> pending_;
  std::uint64_t version_ = 0;
  int next_segment_ = 1;

  std::unique_ptr<WorkQueue> queue_;
  std::thread descriptor_thread_;
  std::thread detect_thread_;
  std::atomic<bool> started_{false};
  std::atomic<bool> finished_{false};
  std::atomic<bool> stopping_{false};

  mutable std::mutex results_mutex_;
  std::vector<SegmentResult> results_;
  std::optional<std::string> end_reason_;
};

// Offline convenience: runs the whole stream and returns every result.
std::vector<SegmentResult> run_pipeline(const PipelineConfig& config, PipelineHooks hooks = {});

}  // namespace sentinel::service
