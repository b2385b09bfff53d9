#include "sentinel/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "sentinel/errors.hpp"

namespace sentinel::ingest {

SourceMode parse_source_mode(const std::string& text) {
  if (text == "file_replay") return SourceMode::file_replay;
  if (text == "live_device") return SourceMode::live_device;
  if (text == "network_stream") return SourceMode::network_stream;
  throw Error(ErrorCode::InvalidArgument, "unknown source mode '" + text + "'");
}

std::string to_string(SourceMode mode) {
  switch (mode) {
    case SourceMode::file_replay: return "file_replay";
    case SourceMode::live_device: return "live_device";
    case SourceMode::network_stream: return "network_stream";
  }
  return "file_replay";
}

int Rational::scale_dim(int v) const {
  return static_cast<int>(static_cast<std::int64_t>(v) * num / den);
}

int Rational::scale_coord(int v) const {
  // round half away from zero for the non-negative coordinates used here
  const std::int64_t n = static_cast<std::int64_t>(v) * num;
  return static_cast<int>((2 * n + den) / (2 * static_cast<std::int64_t>(den)));
}

Rational Rational::parse(const std::string& text) {
  Rational r;
  try {
    if (auto slash = text.find('/'); slash != std::string::npos) {
      r.num = std::stoi(text.substr(0, slash));
      r.den = std::stoi(text.substr(slash + 1));
    } else {
      const double d = std::stod(text);
      constexpr int kScale = 1000000;
      r.num = static_cast<int>(std::lround(d * kScale));
      r.den = kScale;
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::ParseError, "bad rational '" + text + "'");
  }
  if (r.den == 0) throw Error(ErrorCode::ParseError, "zero denominator in '" + text + "'");
  const int g = std::gcd(r.num, r.den);
  if (g > 0) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

void FrameSource::validate() const {
  if (native_fps < 0.0) throw Error(ErrorCode::InvalidArgument, "native_fps must be > 0");
  if (resolution.width < 0 || resolution.height < 0)
    throw Error(ErrorCode::InvalidArgument, "resolution components must be > 0");
  if (!downscale.valid()) throw Error(ErrorCode::InvalidArgument, "downscale_factor must be in (0, 1]");
  if (open_attempts < 1) throw Error(ErrorCode::InvalidArgument, "open_attempts must be >= 1");
}

namespace {

cv::Mat apply_downscale(const cv::Mat& frame, Rational factor) {
  if (factor.num == factor.den) return frame;
  cv::Mat out;
  cv::resize(frame, out, cv::Size(factor.scale_dim(frame.cols), factor.scale_dim(frame.rows)), 0, 0,
             cv::INTER_AREA);
  return out;
}

void pace(Clock::time_point start, std::int64_t index, double fps) {
  const auto due = start + std::chrono::duration_cast<Clock::duration>(
                               std::chrono::duration<double>(static_cast<double>(index) / fps));
  std::this_thread::sleep_until(due);
}

class CaptureStream final : public FrameStream {
 public:
  explicit CaptureStream(FrameSource cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    open_with_retries();
  }

  std::optional<Frame> next() override {
    if (!started_) {
      started_ = true;
      start_ = Clock::now();
    }
    const bool paced = cfg_.mode == SourceMode::file_replay && cfg_.realtime;
    if (paced) pace(start_, index_, fps_);

    const auto t0 = Clock::now();
    cv::Mat raw;
    if (pending_.empty()) {
      if (!cap_.read(raw) || raw.empty()) {
        if (cfg_.mode == SourceMode::file_replay) return std::nullopt;
        throw Error(ErrorCode::SourceUnavailable, "lost source '" + cfg_.path_or_url + "'");
      }
    } else {
      raw = std::move(pending_);
      pending_.release();
    }
    if (raw.size() != native_)
      throw Error(ErrorCode::DecodeFailure, "frame size changed mid-stream in '" + cfg_.path_or_url + "'");

    Frame f;
    f.index = index_;
    f.t = static_cast<double>(index_) / fps_;
    f.pixels = apply_downscale(raw, cfg_.downscale);
    f.captured = Clock::now();
    f.decode_s = std::chrono::duration<double>(f.captured - t0).count();
    ++index_;
    return f;
  }

  double fps() const override { return fps_; }
  cv::Size native_size() const override { return native_; }
  cv::Size frame_size() const override {
    return {cfg_.downscale.scale_dim(native_.width), cfg_.downscale.scale_dim(native_.height)};
  }
  Rational downscale() const override { return cfg_.downscale; }

 private:
  bool try_open() {
    switch (cfg_.mode) {
      case SourceMode::file_replay:
        return cap_.open(cfg_.path_or_url);
      case SourceMode::live_device: {
        int device = 0;
        try {
          device = std::stoi(cfg_.path_or_url.empty() ? "0" : cfg_.path_or_url);
        } catch (const std::logic_error&) {
          return cap_.open(cfg_.path_or_url);
        }
        return cap_.open(device);
      }
      case SourceMode::network_stream:
        return cap_.open(cfg_.path_or_url);
    }
    return false;
  }

  void open_with_retries() {
    if (cfg_.mode == SourceMode::file_replay && !std::filesystem::exists(cfg_.path_or_url))
      throw Error(ErrorCode::SourceUnavailable, "no such file '" + cfg_.path_or_url + "'");

    bool opened = false;
    for (int attempt = 0; attempt < cfg_.open_attempts && !opened; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(cfg_.retry_delay);
      opened = try_open();
    }
    if (!opened) {
      if (cfg_.mode == SourceMode::file_replay)
        throw Error(ErrorCode::DecodeFailure, "cannot decode container '" + cfg_.path_or_url + "'");
      throw Error(ErrorCode::SourceUnavailable,
                  "cannot open " + to_string(cfg_.mode) + " '" + cfg_.path_or_url + "'");
    }

    if (!cap_.read(pending_) || pending_.empty()) {
      throw Error(cfg_.mode == SourceMode::file_replay ? ErrorCode::DecodeFailure
                                                       : ErrorCode::SourceUnavailable,
                  "no decodable frame in '" + cfg_.path_or_url + "'");
    }
    native_ = pending_.size();
    if (cfg_.resolution.area() > 0 && cfg_.resolution != native_)
      throw Error(ErrorCode::DimensionMismatch, "configured resolution does not match the source");

    fps_ = cfg_.native_fps > 0.0 ? cfg_.native_fps : cap_.get(cv::CAP_PROP_FPS);
    if (!(fps_ > 0.0)) throw Error(ErrorCode::DecodeFailure, "source reports no frame rate");
  }

  FrameSource cfg_;
  cv::VideoCapture cap_;
  cv::Mat pending_;
  cv::Size native_;
  double fps_ = 0.0;
  std::int64_t index_ = 0;
  bool started_ = false;
  Clock::time_point start_;
};

class GeneratedStream final : public FrameStream {
 public:
  explicit GeneratedStream(GeneratedSource spec) : spec_(std::move(spec)) {
    if (!(spec_.fps > 0.0)) throw Error(ErrorCode::InvalidArgument, "fps must be > 0");
    if (!spec_.render) throw Error(ErrorCode::InvalidArgument, "generated source needs a renderer");
    if (!spec_.downscale.valid()) throw Error(ErrorCode::InvalidArgument, "downscale must be in (0, 1]");
  }

  std::optional<Frame> next() override {
    if (index_ >= spec_.frame_count) return std::nullopt;
    if (!started_) {
      started_ = true;
      start_ = Clock::now();
    }
    if (spec_.realtime) pace(start_, index_, spec_.fps);
    const auto t0 = Clock::now();
    cv::Mat raw = spec_.render(index_);
    if (raw.size() != spec_.size || raw.type() != CV_8UC3)
      throw Error(ErrorCode::DecodeFailure, "generated frame has the wrong shape");
    Frame f;
    f.index = index_;
    f.t = static_cast<double>(index_) / spec_.fps;
    f.pixels = apply_downscale(raw, spec_.downscale);
    f.captured = Clock::now();
    f.decode_s = std::chrono::duration<double>(f.captured - t0).count();
    ++index_;
    return f;
  }

  double fps() const override { return spec_.fps; }
  cv::Size native_size() const override { return spec_.size; }
  cv::Size frame_size() const override {
    return {spec_.downscale.scale_dim(spec_.size.width), spec_.downscale.scale_dim(spec_.size.height)};
  }
  Rational downscale() const override { return spec_.downscale; }

 private:
  GeneratedSource spec_;
  std::int64_t index_ = 0;
  bool started_ = false;
  Clock::time_point start_;
};

}  // namespace

std::unique_ptr<FrameStream> open_source(const FrameSource& config) {
  return std::make_unique<CaptureStream>(config);
}

std::unique_ptr<FrameStream> make_generated_stream(GeneratedSource spec) {
  return std::make_unique<GeneratedStream>(std::move(spec));
}

TickSchedule::TickSchedule(double interval_s, double offset_s) : interval_(interval_s), offset_(offset_s) {
  if (!(interval_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling interval must be > 0");
  if (offset_s < 0.0) throw Error(ErrorCode::InvalidArgument, "sampling offset must be >= 0");
}

std::optional<double> TickSchedule::accept(double t) {
  constexpr double kSlack = 1e-9;
  const double tick = offset_ + static_cast<double>(k_) * interval_;
  if (t + kSlack < tick) return std::nullopt;
  k_ = static_cast<std::int64_t>(std::floor((t - offset_) / interval_ + kSlack)) + 1;
  return tick;
}

FrameQueue::FrameQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 2)) {}

void FrameQueue::push(Item item) {
  std::unique_lock lock(mutex_);
  while (!closed_ && items_.size() >= capacity_) {
    auto victim = std::find_if(items_.begin(), items_.end(), [](const Item& i) { return !i.tick; });
    if (victim != items_.end()) {
      items_.erase(victim);
      ++dropped_;
      break;
    }
    not_full_.wait(lock);
  }
  if (closed_) return;
  items_.push_back(std::move(item));
  not_empty_.notify_one();
}

std::optional<FrameQueue::Item> FrameQueue::pop() {
  std::unique_lock lock(mutex_);
  not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
  if (items_.empty()) return std::nullopt;
  Item item = std::move(items_.front());
  items_.pop_front();
  not_full_.notify_one();
  return item;
}

void FrameQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  not_empty_.notify_all();
  not_full_.notify_all();
}

std::size_t FrameQueue::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

KeyframeSampler::KeyframeSampler(std::unique_ptr<FrameStream> stream, SamplerOptions options)
    : stream_(std::move(stream)), options_(options), queue_(options.queue_capacity) {
  if (!(options_.interval_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling interval must be > 0");
  worker_ = std::thread([this] { acquire(); });
}

KeyframeSampler::~KeyframeSampler() {
  stop();
  if (worker_.joinable()) worker_.join();
}

void KeyframeSampler::stop() {
  stopping_ = true;
  queue_.close();
}

void KeyframeSampler::acquire() {
  try {
    TickSchedule schedule(options_.interval_s, options_.start_offset_s);
    while (!stopping_) {
      auto frame = stream_->next();
      if (!frame) break;
      auto tick = schedule.accept(frame->t);
      queue_.push({std::move(*frame), tick});
    }
  } catch (...) {
    std::lock_guard lock(failure_mutex_);
    failure_ = std::current_exception();
  }
  queue_.close();
}

std::optional<Keyframe> KeyframeSampler::next() {
  while (auto item = queue_.pop()) {
    if (!item->tick) continue;
    Keyframe kf;
    kf.t = *item->tick;
    kf.frame_index = item->frame.index;
    kf.pixels = std::move(item->frame.pixels);
    kf.captured = item->frame.captured;
    kf.decode_s = item->frame.decode_s;
    return kf;
  }
  std::lock_guard lock(failure_mutex_);
  if (failure_) std::rethrow_exception(failure_);
  return std::nullopt;
}

std::vector<Keyframe> sample_keyframes(FrameStream& stream, double interval_s, double start_offset_s) {
  TickSchedule schedule(interval_s, start_offset_s);
  std::vector<Keyframe> out;
  while (auto frame = stream.next()) {
    if (auto tick = schedule.accept(frame->t)) {
      out.push_back({*tick, frame->index, std::move(frame->pixels), frame->captured, frame->decode_s});
    }
  }
  return out;
}

bool RoiSpec::fits(cv::Size frame) const {
  return top_left.x >= 0 && top_left.y >= 0 && top_left.x < bottom_right.x && top_left.y < bottom_right.y &&
         bottom_right.x <= frame.width && bottom_right.y <= frame.height;
}

void RoiSpec::validate(cv::Size frame) const {
  if (!fits(frame)) {
    throw Error(ErrorCode::RoiOutOfBounds,
                "roi (" + std::to_string(top_left.x) + "," + std::to_string(top_left.y) + ")-(" +
                    std::to_string(bottom_right.x) + "," + std::to_string(bottom_right.y) + ") outside " +
                    std::to_string(frame.width) + "x" + std::to_string(frame.height));
  }
}

RoiSpec RoiSpec::scaled(Rational factor, cv::Size frame) const {
  RoiSpec out;
  out.top_left = {factor.scale_coord(top_left.x), factor.scale_coord(top_left.y)};
  out.bottom_right = {std::min(factor.scale_coord(bottom_right.x), frame.width),
                      std::min(factor.scale_coord(bottom_right.y), frame.height)};
  return out;
}

RoiKeyframe crop_roi(const Keyframe& kf, const RoiSpec& roi, int ordinal) {
  roi.validate(kf.pixels.size());
  RoiKeyframe out;
  out.i = ordinal;
  out.t = kf.t;
  out.frame_index = kf.frame_index;
  out.pixels = kf.pixels(roi.rect()).clone();
  out.captured = kf.captured;
  return out;
}

}  // namespace sentinel::ingest
