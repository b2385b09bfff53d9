#include "sentinel/pipeline.hpp"

#include <condition_variable>
#include <deque>

#include <spdlog/spdlog.h>

#include "sentinel/errors.hpp"
#include "sentinel/flowviz.hpp"
#include "sentinel/patching.hpp"

namespace sentinel::service {

using metrics::seconds_between;
using Clock = ingest::Clock;

namespace {

ingest::RoiSpec parse_roi(const nlohmann::json& j) {
  const auto& tl = j.at("top_left");
  const auto& br = j.at("bottom_right");
  return {{tl.at(0).get<int>(), tl.at(1).get<int>()}, {br.at(0).get<int>(), br.at(1).get<int>()}};
}

}  // namespace

ConfigUpdate parse_config_update(const nlohmann::json& body) {
  std::vector<FieldError> errors;
  ConfigUpdate u;
  if (!body.is_object()) throw ConfigError(std::vector<FieldError>{{"body", "must be a JSON object"}});
  if (body.contains("type") && body["type"] != "update_config")
    errors.push_back({"type", "must be \"update_config\""});
  if (body.contains("roi")) {
    try {
      u.roi = parse_roi(body["roi"]);
    } catch (const nlohmann::json::exception&) {
      errors.push_back({"roi", "must be {top_left:[x,y], bottom_right:[x,y]} with integers"});
    }
  }
  if (body.contains("grid")) {
    try {
      const auto& g = body["grid"];
      u.grid = patching::GridSpec{g.at("n").get<int>(), g.at("m").get<int>()};
    } catch (const nlohmann::json::exception&) {
      errors.push_back({"grid", "must be {n:rows, m:cols} with integers"});
    }
  }
  if (body.contains("threshold")) {
    if (body["threshold"].is_number()) {
      u.threshold = body["threshold"].get<double>();
    } else {
      errors.push_back({"threshold", "must be a number"});
    }
  }
  if (!u.roi && !u.grid && !u.threshold && errors.empty())
    errors.push_back({"body", "nothing to update (roi, grid or threshold expected)"});
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return u;
}

nlohmann::json ack_json(const ConfigAck& ack) {
  return {{"type", "ack"}, {"effective_i", ack.effective_i}, {"config", config_event(ack.config)}};
}

// Message from the descriptor stage to the detect stage. A message without
// patches carries a dropped or failed segment, or (with `end`) the end of
// the stream.
struct Pipeline::Work {
  SegmentResult result;
  Clock::time_point started{};
  Clock::time_point captured_i{};
  Clock::time_point captured_next{};
  std::vector<patching::MimPatch> patches;
  cv::Mat roi_pixels;
  cv::Size roi_size;
  std::uint64_t version = 0;
  bool live = false;
  std::optional<std::string> end;
};

class Pipeline::WorkQueue {
 public:
  explicit WorkQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(Work w) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(w));
    not_empty_.notify_one();
  }

  Work pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty(); });
    Work w = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return w;
  }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<Work> items_;
};

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<EventHub> hub, PipelineHooks hooks)
    : Pipeline(config, nullptr, std::move(hub), std::move(hooks)) {}

Pipeline::Pipeline(PipelineConfig config, std::unique_ptr<ingest::FrameStream> stream,
                   std::shared_ptr<EventHub> hub, PipelineHooks hooks)
    : config_(std::move(config)), hooks_(std::move(hooks)), hub_(hub ? std::move(hub) : std::make_shared<EventHub>()) {
  if (stream && config_.source.path_or_url.empty()) config_.source.path_or_url = "<supplied stream>";
  config_.validate();
  if (!stream) stream = ingest::open_source(config_.source);
  downscale_ = stream->downscale();
  native_size_ = stream->native_size();
  frame_size_ = stream->frame_size();
  try {
    config_.roi.validate(native_size_);
    config_.roi.scaled(downscale_, frame_size_).validate(frame_size_);
  } catch (const Error& e) {
    throw ConfigError(std::vector<FieldError>{{"roi", e.what()}});
  }
  const auto roi = config_.roi.scaled(downscale_, frame_size_);
  try {
    patching::patch_rect(config_.grid, {roi.width(), roi.height()}, 1);
  } catch (const Error& e) {
    throw ConfigError(std::vector<FieldError>{{"grid", e.what()}});
  }
  if (auto warning = config_.grid.ground_cell_warning({config_.roi.width(), config_.roi.height()}, config_.px_per_meter))
    spdlog::warn("{}", *warning);

  classifier_ = detector::make_classifier(config_.classifier);
  estimator_for({roi.width(), roi.height()});
  store_ = make_store(config_.store);
  if (store_) {
    archive_ = std::make_unique<annotator::ArchiveWriter>(
        store_, config_.store.retry, [](const annotator::ArchiveRecord& r, const std::exception& e) {
          spdlog::warn("archiving {} failed: {}", annotator::object_id(r.stream_id, r.i), e.what());
        });
  }

  active_ = {config_.source.source_id, config_.roi,  config_.grid, config_.classifier.threshold,
             config_.interval_s,       downscale_.value()};
  pending_stream_ = std::move(stream);
  queue_ = std::make_unique<WorkQueue>(1);
}

Pipeline::~Pipeline() {
  stop();
  if (descriptor_thread_.joinable()) descriptor_thread_.join();
  if (detect_thread_.joinable()) detect_thread_.join();
}

void Pipeline::start() {
  if (started_.exchange(true)) return;
  hub_->publish_config(config_event(active_));
  ingest::SamplerOptions opts;
  opts.interval_s = config_.interval_s;
  sampler_ = std::make_unique<ingest::KeyframeSampler>(std::move(pending_stream_), opts);
  descriptor_thread_ = std::thread([this] { descriptor_loop(); });
  detect_thread_ = std::thread([this] { detect_loop(); });
}

void Pipeline::wait() {
  if (descriptor_thread_.joinable()) descriptor_thread_.join();
  if (detect_thread_.joinable()) detect_thread_.join();
  if (archive_) archive_->flush();
}

void Pipeline::stop() {
  stopping_ = true;
  if (sampler_) sampler_->stop();
}

ActiveConfig Pipeline::active_config() const {
  std::lock_guard lock(config_mutex_);
  return pending_ ? *pending_ : active_;
}

ConfigAck Pipeline::update_config(const ConfigUpdate& update) {
  std::vector<FieldError> errors;
  std::lock_guard lock(config_mutex_);
  ActiveConfig next = pending_ ? *pending_ : active_;
  if (update.roi) {
    try {
      update.roi->validate(native_size_);
      update.roi->scaled(downscale_, frame_size_).validate(frame_size_);
      next.roi = *update.roi;
    } catch (const Error& e) {
      errors.push_back({"roi", e.what()});
    }
  }
  if (update.grid) {
    if (update.grid->rows < 1 || update.grid->cols < 1) {
      errors.push_back({"grid", "n and m must be >= 1"});
    } else {
      next.grid = *update.grid;
    }
  }
  if (update.threshold) {
    if (*update.threshold >= 0.0 && *update.threshold <= 1.0) {
      next.threshold = *update.threshold;
    } else {
      errors.push_back({"threshold", "must be in [0, 1]"});
    }
  }
  if (errors.empty()) {
    const auto roi = next.roi.scaled(downscale_, frame_size_);
    try {
      patching::patch_rect(next.grid, {roi.width(), roi.height()}, 1);
    } catch (const Error& e) {
      errors.push_back({update.grid ? "grid" : "roi", e.what()});
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  pending_ = next;
  return {next_segment_, next};
}

std::vector<SegmentResult> Pipeline::results() const {
  std::lock_guard lock(results_mutex_);
  return results_;
}

std::optional<std::string> Pipeline::end_reason() const {
  std::lock_guard lock(results_mutex_);
  return end_reason_;
}

std::shared_ptr<const flow::FlowEstimator> Pipeline::estimator_for(cv::Size roi) {
  if (!estimator_ || estimator_size_ != roi) {
    estimator_ = flow::make_estimator(config_.flow, roi);
    estimator_size_ = roi;
  }
  return estimator_;
}

void Pipeline::descriptor_loop() {
  std::optional<ingest::Keyframe> prev;
  int ordinal = 0;
  std::string reason = "stream_ended";
  const flowviz::ColorWheel wheel;
  for (;;) {
    std::optional<ingest::Keyframe> kf;
    try {
      kf = sampler_->next();
    } catch (const std::exception& e) {
      reason = std::string("source_lost: ") + e.what();
      break;
    }
    if (!kf) {
      if (stopping_) reason = "stopped";
      break;
    }
    ++ordinal;
    if (prev) {
      const int i = ordinal - 1;
      Work w;
      w.started = Clock::now();
      w.captured_i = prev->captured;
      w.captured_next = kf->captured;
      {
        std::lock_guard lock(config_mutex_);
        if (pending_) {
          if (!(*pending_ == active_)) ++version_;
          active_ = *pending_;
          pending_.reset();
        }
        w.version = version_;
        w.result.config = active_;
        next_segment_ = i + 1;
      }
      w.result.i = i;
      w.result.t = prev->t;
      w.result.timings.deadline_s = config_.segment_deadline_s;
      try {
        if (hooks_.before_stage) hooks_.before_stage(i, Stage::descriptor);
        const auto pre_start = Clock::now();
        const auto roi = w.result.config.roi.scaled(downscale_, frame_size_);
        const auto a = ingest::crop_roi(*prev, roi, i);
        const auto b = ingest::crop_roi(*kf, roi, i + 1);
        w.result.timings.preprocess_s = seconds_between(pre_start, Clock::now()) + kf->decode_s;
        const auto desc_start = Clock::now();
        const auto field = flow::estimate_flow(a, b, *estimator_for(a.pixels.size()));
        const auto mim = flowviz::render_mim(field, wheel);
        w.patches = patching::split(mim, w.result.config.grid);
        w.result.timings.descriptor_s = seconds_between(desc_start, Clock::now());
        w.roi_pixels = a.pixels;
        w.roi_size = a.pixels.size();
        if (seconds_between(w.started, Clock::now()) > config_.segment_deadline_s) {
          w.result.status = SegmentStatus::dropped_deadline;
          w.patches.clear();
        } else {
          w.live = true;
        }
      } catch (const std::exception& e) {
        w.result.status = SegmentStatus::error;
        w.result.error = e.what();
        w.patches.clear();
        spdlog::warn("segment {} failed in descriptor stage: {}", i, e.what());
      }
      queue_->push(std::move(w));
    }
    prev = std::move(kf);
  }
  Work end;
  end.end = reason;
  queue_->push(std::move(end));
}

void Pipeline::detect_loop() {
  std::uint64_t announced = 0;
  for (;;) {
    Work w = queue_->pop();
    if (w.end) {
      {
        std::lock_guard lock(results_mutex_);
        end_reason_ = *w.end;
      }
      if (archive_) archive_->flush();
      hub_->close(end_event(*w.end));
      finished_ = true;
      return;
    }
    SegmentResult& r = w.result;
    std::optional<annotator::BlurredImage> archived;
    if (w.live) {
      try {
        if (hooks_.before_stage) hooks_.before_stage(r.i, Stage::detect);
        const auto det_start = Clock::now();
        detector::ClassifierSpec spec = config_.classifier;
        spec.threshold = r.config.threshold;
        r.verdicts = detector::classify_batch(w.patches, *classifier_, spec);
        auto mask = annotator::build_mask(r.verdicts, r.config.grid, w.roi_size, r.i);
        if (archive_) archived = annotator::blur_roi(w.roi_pixels, config_.store.blur_radius).annotated(mask);
        r.timings.detect_s = seconds_between(det_start, Clock::now());
        if (seconds_between(w.started, Clock::now()) > config_.segment_deadline_s) {
          r.status = SegmentStatus::dropped_deadline;
          archived.reset();
        } else {
          r.mask = std::move(mask);
        }
      } catch (const std::exception& e) {
        r.status = SegmentStatus::error;
        r.error = e.what();
        r.verdicts.clear();
        archived.reset();
        spdlog::warn("segment {} failed in detect stage: {}", r.i, e.what());
      }
    }

    if (w.version != announced) {
      hub_->publish_config(config_event(r.config));
      announced = w.version;
    }
    const auto emitted = Clock::now();
    r.processing_s = seconds_between(w.started, emitted);
    r.latency_s = seconds_between(w.captured_i, emitted);
    r.pair_latency_s = seconds_between(w.captured_next, emitted);
    hub_->publish(mask_event(r.i, r.t, r.mask ? &*r.mask : nullptr, r.timings.descriptor_s, r.timings.detect_s,
                             r.processing_s, r.status));
    if (r.mask && r.mask->pushing_count() > 0) hub_->publish(alert_event(r.i, r.mask->pushing_count()));
    if (archived && r.mask) archive_->submit({stream_id(), r.i, r.t, std::move(*archived), *r.mask});
    if (hooks_.on_result) hooks_.on_result(r);
    std::lock_guard lock(results_mutex_);
    results_.push_back(std::move(r));
  }
}

std::vector<SegmentResult> run_pipeline(const PipelineConfig& config, PipelineHooks hooks) {
  Pipeline pipeline(config, nullptr, std::move(hooks));
  pipeline.start();
  pipeline.wait();
  return pipeline.results();
}

}  // namespace sentinel::service
