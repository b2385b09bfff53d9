#include "sentinel/annotator.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sentinel/errors.hpp"

namespace sentinel::annotator {

int AnnotationMask::pushing_count() const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), true));
}

AnnotationMask build_mask(std::span<const detector::PatchVerdict> verdicts, const patching::GridSpec& grid,
                          cv::Size roi_dims, int i) {
  grid.validate();
  std::vector<const detector::PatchVerdict*> by_k(static_cast<std::size_t>(grid.cells()), nullptr);
  for (const auto& v : verdicts) {
    if (v.k < 1 || v.k > grid.cells())
      throw Error(ErrorCode::IndexOutOfRange, "verdict for patch " + std::to_string(v.k) + " outside the grid");
    by_k[static_cast<std::size_t>(v.k - 1)] = &v;
  }
  AnnotationMask mask;
  mask.i = i;
  mask.grid = grid;
  for (int k = 1; k <= grid.cells(); ++k) {
    const auto* v = by_k[static_cast<std::size_t>(k - 1)];
    if (v == nullptr) throw Error(ErrorCode::MissingVerdict, "no verdict for patch " + std::to_string(k));
    mask.labels.push_back(v->label == detector::Label::pushing);
    mask.rects.push_back(patching::patch_rect(grid, roi_dims, k));
  }
  return mask;
}

cv::Mat overlay(const cv::Mat& image, const AnnotationMask& mask, const OverlayStyle& style) {
  const cv::Rect bounds(0, 0, image.cols, image.rows);
  for (const auto& r : mask.rects) {
    const cv::Rect placed(r.x0 + style.offset.x, r.y0 + style.offset.y, r.width(), r.height());
    if ((placed & bounds) != placed)
      throw Error(ErrorCode::RectOutOfBounds, "annotation rect leaves the image");
  }
  cv::Mat out = image.clone();
  for (std::size_t k = 0; k < mask.rects.size(); ++k) {
    const auto& r = mask.rects[k];
    const cv::Scalar color = mask.labels[k] ? style.pushing : style.non_pushing;
    const int x0 = r.x0 + style.offset.x;
    const int y0 = r.y0 + style.offset.y;
    const int lw_x = std::min(style.line_width, r.width());
    const int lw_y = std::min(style.line_width, r.height());
    out(cv::Rect(x0, y0, r.width(), lw_y)).setTo(color);
    out(cv::Rect(x0, y0 + r.height() - lw_y, r.width(), lw_y)).setTo(color);
    out(cv::Rect(x0, y0, lw_x, r.height())).setTo(color);
    out(cv::Rect(x0 + r.width() - lw_x, y0, lw_x, r.height())).setTo(color);
  }
  return out;
}

BlurredImage BlurredImage::annotated(const AnnotationMask& mask, const OverlayStyle& style) const {
  return BlurredImage(overlay(pixels_, mask, style));
}

BlurredImage blur_roi(const cv::Mat& image, int kernel_radius) {
  if (kernel_radius < 1) throw Error(ErrorCode::InvalidArgument, "blur radius must be >= 1");
  const int taps = 2 * kernel_radius + 1;
  const cv::Mat kernel(1, taps, CV_32F, cv::Scalar(1.0f / static_cast<float>(taps)));
  cv::Mat smooth;
  cv::sepFilter2D(image, smooth, CV_32F, kernel, kernel.t(), cv::Point(-1, -1), 0.0, cv::BORDER_REPLICATE);
  cv::Mat out;
  smooth.convertTo(out, image.depth());
  return BlurredImage(std::move(out));
}

nlohmann::json sidecar_json(int i, double t, const AnnotationMask& mask) {
  nlohmann::json rects = nlohmann::json::array();
  for (const auto& r : mask.rects) rects.push_back({r.x0, r.y0, r.x1, r.y1});
  nlohmann::json labels = nlohmann::json::array();
  for (bool b : mask.labels) labels.push_back(b);
  return {{"i", i},
          {"t", t},
          {"grid", {{"n", mask.grid.rows}, {"m", mask.grid.cols}}},
          {"labels", labels},
          {"rects", rects}};
}

AnnotationMask mask_from_sidecar(const nlohmann::json& sidecar) {
  try {
    AnnotationMask mask;
    mask.i = sidecar.at("i").get<int>();
    mask.grid = {sidecar.at("grid").at("n").get<int>(), sidecar.at("grid").at("m").get<int>()};
    for (const auto& b : sidecar.at("labels")) mask.labels.push_back(b.get<bool>());
    for (const auto& r : sidecar.at("rects"))
      mask.rects.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()});
    if (mask.labels.size() != static_cast<std::size_t>(mask.grid.cells()) || mask.rects.size() != mask.labels.size())
      throw Error(ErrorCode::ParseError, "sidecar label/rect count does not match its grid");
    return mask;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad sidecar: ") + e.what());
  }
}

std::string object_id(const std::string& stream_id, int i) {
  char name[32];
  std::snprintf(name, sizeof(name), "roi_%06d", i);
  return stream_id + "/" + name;
}

// --- local directory -------------------------------------------------------

LocalDirectoryStore::LocalDirectoryStore(std::filesystem::path root) : root_(std::move(root)) {}

void LocalDirectoryStore::put(const std::string& key, std::span<const std::uint8_t> bytes, const std::string&) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root_, ec))
    throw Error(ErrorCode::StoreUnavailable, "store root '" + root_.string() + "' is not reachable");
  const auto path = root_ / key;
  std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::WriteFailure, "cannot create " + path.parent_path().string() + ": " + ec.message());
  const auto tmp = path.string() + ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::WriteFailure, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::WriteFailure, "cannot move " + tmp + ": " + ec.message());
}

std::vector<std::uint8_t> LocalDirectoryStore::get(const std::string& key) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root_, ec))
    throw Error(ErrorCode::StoreUnavailable, "store root '" + root_.string() + "' is not reachable");
  std::ifstream in(root_ / key, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "no object '" + key + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> LocalDirectoryStore::list(const std::string& prefix) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root_, ec))
    throw Error(ErrorCode::StoreUnavailable, "store root '" + root_.string() + "' is not reachable");
  std::vector<std::string> keys;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root_, ec)) {
    if (!entry.is_regular_file()) continue;
    const auto key = std::filesystem::relative(entry.path(), root_).generic_string();
    if (key.ends_with(".part")) continue;
    if (key.rfind(prefix, 0) == 0) keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// --- S3 --------------------------------------------------------------------

namespace sigv4 {

namespace {
std::string hex(const unsigned char* data, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kDigits[data[i] >> 4];
    out[2 * i + 1] = kDigits[data[i] & 0xF];
  }
  return out;
}

std::string hmac(const std::string& key, const std::string& data) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), reinterpret_cast<const unsigned char*>(data.data()),
       data.size(), out, &len);
  return {reinterpret_cast<const char*>(out), len};
}
}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  return hex(digest, sizeof(digest));
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string uri_encode(const std::string& text, bool encode_slash) {
  std::ostringstream out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || (c == '/' && !encode_slash)) {
      out << c;
    } else {
      out << '%' << std::uppercase << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c)
          << std::nouppercase << std::dec;
    }
  }
  return out.str();
}

std::string authorization(const Request& request, const std::string& access_key, const std::string& secret_key,
                          const std::string& region, const std::string& service, const std::string& amz_date) {
  std::string canonical_headers;
  std::string signed_headers;
  for (const auto& [name, value] : request.headers) {
    canonical_headers += name + ":" + value + "\n";
    if (!signed_headers.empty()) signed_headers += ";";
    signed_headers += name;
  }
  const std::string canonical_request = request.method + "\n" + request.canonical_uri + "\n" +
                                        request.canonical_query + "\n" + canonical_headers + "\n" + signed_headers +
                                        "\n" + request.payload_sha256;
  const std::string date = amz_date.substr(0, 8);
  const std::string scope = date + "/" + region + "/" + service + "/aws4_request";
  const std::string to_sign = "AWS4-HMAC-SHA256\n" + amz_date + "\n" + scope + "\n" + sha256_hex(canonical_request);

  const std::string k_date = hmac("AWS4" + secret_key, date);
  const std::string k_region = hmac(k_date, region);
  const std::string k_service = hmac(k_region, service);
  const std::string k_signing = hmac(k_service, "aws4_request");
  const std::string sig = hmac(k_signing, to_sign);
  return "AWS4-HMAC-SHA256 Credential=" + access_key + "/" + scope + ", SignedHeaders=" + signed_headers +
         ", Signature=" + hex(reinterpret_cast<const unsigned char*>(sig.data()), sig.size());
}

}  // namespace sigv4

namespace {

std::string amz_now() {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &utc);
  return buf;
}

}  // namespace

S3Store::S3Store(S3Config config) : config_(std::move(config)) {
  static const std::regex kEndpoint(R"(^http://([^/:]+)(?::(\d+))?/?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, kEndpoint))
    throw Error(ErrorCode::InvalidArgument, "S3 endpoint must look like http://host[:port]");
  host_ = m[1];
  port_ = m[2].matched ? std::stoi(m[2]) : 80;
  if (config_.bucket.empty()) throw Error(ErrorCode::InvalidArgument, "S3 bucket is required");
}

namespace {

struct SignedCall {
  std::string path;
  httplib::Headers headers;
};

SignedCall sign(const S3Config& cfg, const std::string& host_header, const std::string& method, const std::string& uri,
                const std::string& query, const std::string& payload_hash) {
  const std::string date = amz_now();
  sigv4::Request req;
  req.method = method;
  req.canonical_uri = uri;
  req.canonical_query = query;
  req.headers = {{"host", host_header}, {"x-amz-content-sha256", payload_hash}, {"x-amz-date", date}};
  req.payload_sha256 = payload_hash;
  SignedCall call;
  call.path = query.empty() ? uri : uri + "?" + query;
  call.headers = {{"x-amz-content-sha256", payload_hash},
                  {"x-amz-date", date},
                  {"Authorization", sigv4::authorization(req, cfg.access_key, cfg.secret_key, cfg.region, "s3", date)}};
  return call;
}

httplib::Client make_client(const std::string& host, int port, std::chrono::milliseconds timeout) {
  httplib::Client cli(host, port);
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  return cli;
}

std::string host_header(const std::string& host, int port) {
  return port == 80 ? host : host + ":" + std::to_string(port);
}

}  // namespace

void S3Store::put(const std::string& key, std::span<const std::uint8_t> bytes, const std::string& content_type) {
  const std::string uri = "/" + sigv4::uri_encode(config_.bucket, true) + "/" + sigv4::uri_encode(key, false);
  auto call = sign(config_, host_header(host_, port_), "PUT", uri, "", sigv4::sha256_hex(bytes));
  auto cli = make_client(host_, port_, config_.timeout);
  auto res = cli.Put(call.path, call.headers, reinterpret_cast<const char*>(bytes.data()), bytes.size(), content_type);
  if (!res) throw Error(ErrorCode::StoreUnavailable, "S3 endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::WriteFailure, "S3 PUT " + key + " returned " + std::to_string(res->status));
}

std::vector<std::uint8_t> S3Store::get(const std::string& key) {
  const std::string uri = "/" + sigv4::uri_encode(config_.bucket, true) + "/" + sigv4::uri_encode(key, false);
  auto call = sign(config_, host_header(host_, port_), "GET", uri, "", sigv4::sha256_hex(std::string()));
  auto cli = make_client(host_, port_, config_.timeout);
  auto res = cli.Get(call.path, call.headers);
  if (!res) throw Error(ErrorCode::StoreUnavailable, "S3 endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::IoFailure, "S3 GET " + key + " returned " + std::to_string(res->status));
  return {res->body.begin(), res->body.end()};
}

std::vector<std::string> S3Store::list(const std::string& prefix) {
  static const std::regex kKey("<Key>([^<]*)</Key>");
  static const std::regex kToken("<NextContinuationToken>([^<]*)</NextContinuationToken>");
  std::vector<std::string> keys;
  std::string token;
  auto cli = make_client(host_, port_, config_.timeout);
  for (;;) {
    std::map<std::string, std::string> params{{"list-type", "2"}, {"prefix", prefix}};
    if (!token.empty()) params["continuation-token"] = token;
    std::string query;
    for (const auto& [k, v] : params) {
      if (!query.empty()) query += "&";
      query += sigv4::uri_encode(k, true) + "=" + sigv4::uri_encode(v, true);
    }
    const std::string uri = "/" + sigv4::uri_encode(config_.bucket, true);
    auto call = sign(config_, host_header(host_, port_), "GET", uri, query, sigv4::sha256_hex(std::string()));
    auto res = cli.Get(call.path, call.headers);
    if (!res) throw Error(ErrorCode::StoreUnavailable, "S3 endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorCode::IoFailure, "S3 list returned " + std::to_string(res->status));
    for (std::sregex_iterator it(res->body.begin(), res->body.end(), kKey), end; it != end; ++it)
      keys.push_back((*it)[1]);
    std::smatch m;
    if (res->body.find("<IsTruncated>true</IsTruncated>") == std::string::npos ||
        !std::regex_search(res->body, m, kToken))
      break;
    token = m[1];
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// --- persistence -----------------------------------------------------------

namespace {

void put_with_retry(ObjectStore& store, const std::string& key, std::span<const std::uint8_t> bytes,
                    const std::string& content_type, const RetryPolicy& retry) {
  auto backoff = retry.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      store.put(key, bytes, content_type);
      return;
    } catch (const Error& e) {
      const bool retryable = e.code() == ErrorCode::StoreUnavailable || e.code() == ErrorCode::WriteFailure;
      if (!retryable || attempt >= retry.attempts) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(static_cast<long>(static_cast<double>(backoff.count()) * retry.multiplier));
  }
}

}  // namespace

std::string persist(const ArchiveRecord& record, ObjectStore& store, const RetryPolicy& retry) {
  if (record.image.pixels().empty()) throw Error(ErrorCode::InvalidArgument, "archive record has no image");
  std::vector<std::uint8_t> png;
  if (!cv::imencode(".png", record.image.pixels(), png))
    throw Error(ErrorCode::WriteFailure, "PNG encoding failed for i=" + std::to_string(record.i));
  const std::string sidecar = sidecar_json(record.i, record.t, record.mask).dump();
  const std::string id = object_id(record.stream_id, record.i);
  put_with_retry(store, id + ".png", png, "image/png", retry);
  put_with_retry(store, id + ".json",
                 std::span(reinterpret_cast<const std::uint8_t*>(sidecar.data()), sidecar.size()), "application/json",
                 retry);
  return id;
}

StoredRecord read_back(ObjectStore& store, const std::string& id) {
  const auto meta_bytes = store.get(id + ".json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad sidecar for ") + id + ": " + e.what());
  }
  StoredRecord out;
  out.mask = mask_from_sidecar(meta);
  out.i = out.mask.i;
  out.t = meta.at("t").get<double>();
  const auto png = store.get(id + ".png");
  out.image = cv::imdecode(png, cv::IMREAD_COLOR);
  if (out.image.empty()) throw Error(ErrorCode::ParseError, "bad image for " + id);
  return out;
}

ArchiveWriter::ArchiveWriter(std::shared_ptr<ObjectStore> store, RetryPolicy retry, FailureHandler on_failure)
    : store_(std::move(store)), retry_(retry), on_failure_(std::move(on_failure)) {
  worker_ = std::thread([this] { run(); });
}

ArchiveWriter::~ArchiveWriter() {
  {
    std::lock_guard lock(mutex_);
    closing_ = true;
  }
  wake_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void ArchiveWriter::submit(ArchiveRecord record) {
  {
    std::lock_guard lock(mutex_);
    pending_.push_back(std::move(record));
  }
  wake_.notify_one();
}

void ArchiveWriter::flush() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [&] { return pending_.empty() && !busy_; });
}

std::size_t ArchiveWriter::written() const {
  std::lock_guard lock(mutex_);
  return written_;
}

std::size_t ArchiveWriter::failed() const {
  std::lock_guard lock(mutex_);
  return failed_;
}

void ArchiveWriter::run() {
  std::unique_lock lock(mutex_);
  for (;;) {
    wake_.wait(lock, [&] { return closing_ || !pending_.empty(); });
    if (pending_.empty()) break;
    ArchiveRecord record = std::move(pending_.front());
    pending_.pop_front();
    busy_ = true;
    lock.unlock();
    bool ok = true;
    try {
      persist(record, *store_, retry_);
    } catch (const std::exception& e) {
      ok = false;
      if (on_failure_) on_failure_(record, e);
    }
    lock.lock();
    busy_ = false;
    ok ? ++written_ : ++failed_;
    if (pending_.empty()) idle_.notify_all();
  }
  idle_.notify_all();
}

}  // namespace sentinel::annotator
