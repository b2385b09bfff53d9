#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <opencv2/core.hpp>

namespace sentinel::ingest {

using Clock = std::chrono::steady_clock;

enum class SourceMode { file_replay, live_device, network_stream };

SourceMode parse_source_mode(const std::string& text);
std::string to_string(SourceMode mode);

// Scale factor in (0, 1]. Dimensions scale with floor division, coordinates
// with round-to-nearest.
struct Rational {
  int num = 1;
  int den = 2;

  double value() const { return static_cast<double>(num) / den; }
  int scale_dim(int v) const;
  int scale_coord(int v) const;
  bool valid() const { return num > 0 && den > 0 && num <= den; }

  static Rational parse(const std::string& text);  // "1/2" or "0.5"
};

struct FrameSource {
  std::string source_id = "stream";
  SourceMode mode = SourceMode::file_replay;
  std::string path_or_url;
  // 0 means "take it from the container".
  double native_fps = 0.0;
  // Native resolution; filled in from the source when left at 0x0.
  cv::Size resolution{0, 0};
  Rational downscale{1, 2};
  // file_replay only: pace frames to wall clock as a live camera would.
  bool realtime = true;
  int open_attempts = 1;
  std::chrono::milliseconds retry_delay{200};

  void validate() const;
};

struct Frame {
  std::int64_t index = 0;
  double t = 0.0;  // stream seconds
  cv::Mat pixels;  // BGR, already downscaled
  Clock::time_point captured{};
  double decode_s = 0.0;
};

class FrameStream {
 public:
  virtual ~FrameStream() = default;

  // nullopt at end of stream.
  virtual std::optional<Frame> next() = 0;
  virtual double fps() const = 0;
  virtual cv::Size native_size() const = 0;
  virtual cv::Size frame_size() const = 0;
  virtual Rational downscale() const = 0;
};

std::unique_ptr<FrameStream> open_source(const FrameSource& config);

// In-process source used for desk-scale runs: pixels come from a callback,
// optionally paced to wall clock.
struct GeneratedSource {
  double fps = 25.0;
  cv::Size size{640, 480};
  std::int64_t frame_count = 0;
  Rational downscale{1, 1};
  bool realtime = false;
  std::function<cv::Mat(std::int64_t)> render;
};

std::unique_ptr<FrameStream> make_generated_stream(GeneratedSource spec);

struct Keyframe {
  double t = 0.0;
  std::int64_t frame_index = 0;
  cv::Mat pixels;
  Clock::time_point captured{};
  double decode_s = 0.0;
};

// Decides which frames are keyframes: the first frame whose timestamp is at
// or after offset + k * interval, for k = 0, 1, 2, ...
class TickSchedule {
 public:
  TickSchedule(double interval_s, double offset_s = 0.0);

  // Returns the tick time when `t` closes the pending tick.
  std::optional<double> accept(double t);
  double interval() const { return interval_; }

 private:
  double interval_;
  double offset_;
  std::int64_t k_ = 0;
};

// Bounded hand-off between acquisition and sampling. On overflow the oldest
// non-keyframe is dropped; a queue full of keyframes blocks the producer.
class FrameQueue {
 public:
  struct Item {
    Frame frame;
    std::optional<double> tick;
  };

  explicit FrameQueue(std::size_t capacity);

  void push(Item item);
  std::optional<Item> pop();
  void close();
  std::size_t dropped() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<Item> items_;
  bool closed_ = false;
  std::size_t dropped_ = 0;
};

struct SamplerOptions {
  double interval_s = 2.0;
  double start_offset_s = 0.0;
  std::size_t queue_capacity = 8;
};

// Pulls frames on its own acquisition thread and hands out keyframes.
class KeyframeSampler {
 public:
  KeyframeSampler(std::unique_ptr<FrameStream> stream, SamplerOptions options);
  ~KeyframeSampler();

  KeyframeSampler(const KeyframeSampler&) = delete;
  KeyframeSampler& operator=(const KeyframeSampler&) = delete;

  // nullopt once the stream has ended. Acquisition failures are rethrown here.
  std::optional<Keyframe> next();
  void stop();

  const FrameStream& stream() const { return *stream_; }
  std::size_t dropped_frames() const { return queue_.dropped(); }

 private:
  void acquire();

  std::unique_ptr<FrameStream> stream_;
  SamplerOptions options_;
  FrameQueue queue_;
  std::atomic<bool> stopping_{false};
  std::exception_ptr failure_;
  std::mutex failure_mutex_;
  std::thread worker_;
};

// Synchronous sampling over a whole stream.
std::vector<Keyframe> sample_keyframes(FrameStream& stream, double interval_s = 2.0,
                                       double start_offset_s = 0.0);

struct PixelPoint {
  int x = 0;
  int y = 0;
  bool operator==(const PixelPoint&) const = default;
};

struct RoiSpec {
  PixelPoint top_left;
  PixelPoint bottom_right;

  int width() const { return bottom_right.x - top_left.x; }
  int height() const { return bottom_right.y - top_left.y; }
  cv::Rect rect() const { return {top_left.x, top_left.y, width(), height()}; }
  bool fits(cv::Size frame) const;
  // Throws RoiOutOfBounds.
  void validate(cv::Size frame) const;
  // Native-resolution coordinates to a downscaled frame of size `frame`.
  RoiSpec scaled(Rational factor, cv::Size frame) const;

  bool operator==(const RoiSpec&) const = default;
};

struct RoiKeyframe {
  int i = 0;
  double t = 0.0;
  std::int64_t frame_index = 0;
  cv::Mat pixels;
  Clock::time_point captured{};
};

RoiKeyframe crop_roi(const Keyframe& kf, const RoiSpec& roi, int ordinal);

// Assigns the running ordinal i = 1, 2, 3, ...
class RoiCropper {
 public:
  explicit RoiCropper(RoiSpec roi) : roi_(roi) {}

  RoiKeyframe crop(const Keyframe& kf) { return crop_roi(kf, roi_, next_++); }
  const RoiSpec& roi() const { return roi_; }

 private:
  RoiSpec roi_;
  int next_ = 1;
};

}  // namespace sentinel::ingest
