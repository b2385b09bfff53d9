#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "sentinel/detector.hpp"
#include "sentinel/ingest.hpp"
#include "sentinel/patching.hpp"

namespace sentinel::annotator {

struct AnnotationMask {
  int i = 0;
  patching::GridSpec grid;
  std::vector<bool> labels;  // k order, true = pushing
  std::vector<patching::PatchRect> rects;

  int pushing_count() const;
  bool operator==(const AnnotationMask&) const = default;
};

// One verdict per k is required (MissingVerdict otherwise).
AnnotationMask build_mask(std::span<const detector::PatchVerdict> verdicts, const patching::GridSpec& grid,
                          cv::Size roi_dims, int i);

struct OverlayStyle {
  int line_width = 3;
  cv::Scalar pushing{0, 0, 255};      // BGR red
  cv::Scalar non_pushing{0, 255, 0};  // BGR green
  // ROI top-left when drawing onto the full frame.
  ingest::PixelPoint offset{0, 0};
};

// Draws box outlines inside each patch rect; everything else is untouched.
cv::Mat overlay(const cv::Mat& image, const AnnotationMask& mask, const OverlayStyle& style = {});

// An image that has been through blur_roi. Only blur_roi can make one, which
// is what lets persist() refuse unblurred archives.
class BlurredImage {
 public:
  const cv::Mat& pixels() const { return pixels_; }
  BlurredImage annotated(const AnnotationMask& mask, const OverlayStyle& style = {}) const;

 private:
  explicit BlurredImage(cv::Mat pixels) : pixels_(std::move(pixels)) {}
  friend BlurredImage blur_roi(const cv::Mat& image, int kernel_radius);

  cv::Mat pixels_;
};

// Separable (2r+1)-tap box blur, replicated borders.
BlurredImage blur_roi(const cv::Mat& image, int kernel_radius);

struct ArchiveRecord {
  std::string stream_id;
  int i = 0;
  double t = 0.0;
  BlurredImage image;
  AnnotationMask mask;
};

nlohmann::json sidecar_json(int i, double t, const AnnotationMask& mask);
AnnotationMask mask_from_sidecar(const nlohmann::json& sidecar);

// "{stream_id}/roi_{i:06}"
std::string object_id(const std::string& stream_id, int i);

class ObjectStore {
 public:
  virtual ~ObjectStore() = default;
  // StoreUnavailable when the backend cannot be reached, WriteFailure when it
  // rejects the write.
  virtual void put(const std::string& key, std::span<const std::uint8_t> bytes, const std::string& content_type) = 0;
  virtual std::vector<std::uint8_t> get(const std::string& key) = 0;
  virtual std::vector<std::string> list(const std::string& prefix) = 0;
};

// Objects are files under `root`. The root must already exist; a missing root
// counts as an offline store.
class LocalDirectoryStore final : public ObjectStore {
 public:
  explicit LocalDirectoryStore(std::filesystem::path root);

  void put(const std::string& key, std::span<const std::uint8_t> bytes, const std::string& content_type) override;
  std::vector<std::uint8_t> get(const std::string& key) override;
  std::vector<std::string> list(const std::string& prefix) override;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

struct S3Config {
  std::string endpoint;  // http://host:port
  std::string bucket;
  std::string region = "us-east-1";
  std::string access_key;
  std::string secret_key;
  std::chrono::milliseconds timeout{5000};
};

// Path-style S3 client signing requests with AWS Signature Version 4.
class S3Store final : public ObjectStore {
 public:
  explicit S3Store(S3Config config);

  void put(const std::string& key, std::span<const std::uint8_t> bytes, const std::string& content_type) override;
  std::vector<std::uint8_t> get(const std::string& key) override;
  std::vector<std::string> list(const std::string& prefix) override;

 private:
  S3Config config_;
  std::string host_;
  int port_ = 80;
};

namespace sigv4 {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);

struct Request {
  std::string method;
  std::string canonical_uri;    // already URI-encoded path
  std::string canonical_query;  // already encoded and sorted
  std::map<std::string, std::string> headers;  // lower-case names, must include host
  std::string payload_sha256;
};

// Returns the Authorization header value.
std::string authorization(const Request& request, const std::string& access_key, const std::string& secret_key,
                          const std::string& region, const std::string& service, const std::string& amz_date);

std::string uri_encode(const std::string& text, bool encode_slash);

}  // namespace sigv4

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  double multiplier = 2.0;
};

// Writes roi_{i:06}.png and roi_{i:06}.json under the stream prefix, retrying
// with backoff. Returns the object id.
std::string persist(const ArchiveRecord& record, ObjectStore& store, const RetryPolicy& retry = {});

struct StoredRecord {
  int i = 0;
  double t = 0.0;
  AnnotationMask mask;
  cv::Mat image;
};

StoredRecord read_back(ObjectStore& store, const std::string& id);

// Background, single-writer persistence. submit() never blocks on I/O.
class ArchiveWriter {
 public:
  using FailureHandler = std::function<void(const ArchiveRecord&, const std::exception&)>;

  ArchiveWriter(std::shared_ptr<ObjectStore> store, RetryPolicy retry, FailureHandler on_failure = {});
  ~ArchiveWriter();

  ArchiveWriter(const ArchiveWriter&) = delete;
  ArchiveWriter& operator=(const ArchiveWriter&) = delete;

  void submit(ArchiveRecord record);
  // Blocks until everything submitted so far is written or has failed.
  void flush();
  std::size_t written() const;
  std::size_t failed() const;

 private:
  void run();

  std::shared_ptr<ObjectStore> store_;
  RetryPolicy retry_;
  FailureHandler on_failure_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<ArchiveRecord> pending_;
  bool busy_ = false;
  bool closing_ = false;
  std::size_t written_ = 0;
  std::size_t failed_ = 0;
  std::thread worker_;
};

}  // namespace sentinel::annotator
