#include "sentinel/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "sentinel/errors.hpp"

extern char** environ;

namespace sentinel::service {

namespace {

constexpr std::string_view kEnvPrefix = "PUSH_SENTINEL_";
const char* const kSections[] = {"source", "roi",      "sample", "downscale", "grid",  "flow",
                                 "classifier", "pipeline", "store",  "server",    "scene"};

void apply_env(toml::table& root, const Environment& env) {
  for (const auto& [name, value] : env) {
    if (name.rfind(kEnvPrefix, 0) != 0) continue;
    std::string rest = name.substr(kEnvPrefix.size());
    std::transform(rest.begin(), rest.end(), rest.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const char* section : kSections) {
      const std::string head = std::string(section) + "_";
      if (rest.rfind(head, 0) != 0) continue;
      const std::string key = rest.substr(head.size());
      if (!root.contains(section)) root.insert(section, toml::table{});
      auto* table = root[section].as_table();
      if (table == nullptr) break;
      try {
        auto parsed = toml::parse("v = " + value);
        table->insert_or_assign(key, *parsed.get("v"));
      } catch (const toml::parse_error&) {
        table->insert_or_assign(key, value);
      }
      break;
    }
  }
}

class Reader {
 public:
  explicit Reader(const toml::table& root) : root_(root) {}

  template <class T>
  void read(const char* section, const char* key, T& out) {
    const auto node = root_[section][key];
    if (!node) return;
    if constexpr (std::is_same_v<T, int>) {
      if (auto v = node.template value<std::int64_t>()) {
        out = static_cast<int>(*v);
        return;
      }
    } else if constexpr (std::is_same_v<T, double>) {
      if (auto v = node.template value<double>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node.template value<bool>()) {
        out = *v;
        return;
      }
    } else {
      if (auto v = node.template value<std::string>()) {
        out = *v;
        return;
      }
    }
    fail(section, key, "has the wrong type");
  }

  void read_point(const char* section, const char* key, ingest::PixelPoint& out) {
    const auto node = root_[section][key];
    if (!node) return;
    const auto* arr = node.as_array();
    if (arr != nullptr && arr->size() == 2) {
      const auto x = (*arr)[0].value<std::int64_t>();
      const auto y = (*arr)[1].value<std::int64_t>();
      if (x && y) {
        out = {static_cast<int>(*x), static_cast<int>(*y)};
        return;
      }
    }
    fail(section, key, "must be [x, y] integers");
  }

  template <class Fn>
  void convert(const char* section, const char* key, Fn&& fn) {
    const auto node = root_[section][key];
    if (!node) return;
    try {
      if (auto s = node.template value<std::string>()) {
        fn(*s);
      } else if (auto d = node.template value<double>()) {
        std::ostringstream text;
        text << *d;
        fn(text.str());
      } else {
        fail(section, key, "has the wrong type");
      }
    } catch (const Error& e) {
      fail(section, key, e.what());
    }
  }

  void fail(const char* section, const char* key, const std::string& reason) {
    errors.push_back({std::string(section) + "." + key, reason});
  }

  std::vector<FieldError> errors;

 private:
  const toml::table& root_;
};

StoreKind parse_store_kind(const std::string& text) {
  if (text == "local") return StoreKind::local;
  if (text == "s3") return StoreKind::s3;
  if (text == "none") return StoreKind::none;
  throw Error(ErrorCode::InvalidArgument, "store.kind must be local, s3 or none");
}

}  // namespace

void PipelineConfig::validate() const {
  std::vector<FieldError> errors;
  auto check = [&](bool ok, const char* field, const char* reason) {
    if (!ok) errors.push_back({field, reason});
  };
  check(!source.path_or_url.empty(), "source.path_or_url", "is required");
  check(!source.source_id.empty(), "source.stream_id", "is required");
  check(source.native_fps >= 0.0, "source.fps", "must be >= 0");
  check(source.downscale.valid(), "downscale.factor", "must be in (0, 1]");
  check(roi.top_left.x >= 0 && roi.top_left.y >= 0, "roi.top_left", "must be non-negative");
  check(roi.bottom_right.x > roi.top_left.x && roi.bottom_right.y > roi.top_left.y, "roi.bottom_right",
        "must lie below and right of top_left");
  check(interval_s > 0.0, "sample.interval_s", "must be > 0");
  check(grid.rows >= 1, "grid.rows", "must be >= 1");
  check(grid.cols >= 1, "grid.cols", "must be >= 1");
  check(flow.search_radius >= 1, "flow.search_radius", "must be >= 1");
  check(flow.block_size >= 3 && flow.block_size % 2 == 1, "flow.block_size", "must be odd and >= 3");
  check(flow.kind != flow::EstimatorKind::external_model || (flow.model_path && !flow.model_path->empty()),
        "flow.model_path", "is required for external_model");
  check(classifier.threshold >= 0.0 && classifier.threshold <= 1.0, "classifier.threshold", "must be in [0, 1]");
  check(classifier.input_side > 0, "classifier.input_side", "must be > 0");
  check(classifier.kind != detector::ClassifierKind::external_model ||
            (classifier.model_path && !classifier.model_path->empty()),
        "classifier.model_path", "is required for external_model");
  check(segment_deadline_s > 0.0, "pipeline.segment_deadline_s", "must be > 0");
  check(store.blur_radius >= 1, "store.blur_radius", "must be >= 1");
  check(store.retry.attempts >= 1, "store.retries", "must be >= 1");
  check(store.kind != StoreKind::local || !store.root.empty(), "store.root", "is required for a local store");
  check(store.kind != StoreKind::s3 || !store.s3.endpoint.empty(), "store.endpoint", "is required for s3");
  check(store.kind != StoreKind::s3 || !store.s3.bucket.empty(), "store.bucket", "is required for s3");
  check(listen.find(':') != std::string::npos, "server.listen", "must be host:port");
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

Environment sentinel_environment() {
  Environment env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos || entry.rfind(kEnvPrefix, 0) != 0) continue;
    env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

PipelineConfig parse_config(const std::string& toml_text, const Environment& env) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream where;
    where << "line " << e.source().begin.line;
    throw ConfigError(std::vector<FieldError>{{where.str(), std::string(e.description())}});
  }
  apply_env(root, env);

  PipelineConfig c;
  Reader r(root);
  r.convert("source", "mode", [&](const std::string& s) { c.source.mode = ingest::parse_source_mode(s); });
  r.read("source", "path_or_url", c.source.path_or_url);
  r.read("source", "fps", c.source.native_fps);
  r.read("source", "stream_id", c.source.source_id);
  r.read("source", "realtime", c.source.realtime);
  r.read("source", "open_attempts", c.source.open_attempts);
  r.read_point("roi", "top_left", c.roi.top_left);
  r.read_point("roi", "bottom_right", c.roi.bottom_right);
  r.read("sample", "interval_s", c.interval_s);
  r.convert("downscale", "factor", [&](const std::string& s) { c.source.downscale = ingest::Rational::parse(s); });
  r.read("grid", "rows", c.grid.rows);
  r.read("grid", "cols", c.grid.cols);
  r.convert("flow", "estimator", [&](const std::string& s) { c.flow.kind = flow::parse_estimator_kind(s); });
  r.convert("flow", "model_path", [&](const std::string& s) { c.flow.model_path = s; });
  r.read("flow", "search_radius", c.flow.search_radius);
  r.read("flow", "block_size", c.flow.block_size);
  r.convert("classifier", "kind", [&](const std::string& s) { c.classifier.kind = detector::parse_classifier_kind(s); });
  r.convert("classifier", "model_path", [&](const std::string& s) { c.classifier.model_path = s; });
  r.read("classifier", "input_side", c.classifier.input_side);
  r.read("classifier", "threshold", c.classifier.threshold);
  r.read("pipeline", "segment_deadline_s", c.segment_deadline_s);
  r.convert("store", "kind", [&](const std::string& s) { c.store.kind = parse_store_kind(s); });
  std::string store_root;
  r.read("store", "root", store_root);
  c.store.root = store_root;
  r.read("store", "endpoint", c.store.s3.endpoint);
  r.read("store", "bucket", c.store.s3.bucket);
  r.read("store", "region", c.store.s3.region);
  r.read("store", "access_key", c.store.s3.access_key);
  r.read("store", "secret_key", c.store.s3.secret_key);
  r.read("store", "blur_radius", c.store.blur_radius);
  r.read("store", "retries", c.store.retry.attempts);
  int backoff_ms = static_cast<int>(c.store.retry.initial_backoff.count());
  r.read("store", "backoff_ms", backoff_ms);
  c.store.retry.initial_backoff = std::chrono::milliseconds(backoff_ms);
  r.read("server", "listen", c.listen);
  r.read("scene", "px_per_meter", c.px_per_meter);

  if (!r.errors.empty()) throw ConfigError(std::move(r.errors));
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, const Environment& env) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), env);
}

std::shared_ptr<annotator::ObjectStore> make_store(const StoreConfig& config) {
  switch (config.kind) {
    case StoreKind::local:
      return std::make_shared<annotator::LocalDirectoryStore>(config.root);
    case StoreKind::s3:
      return std::make_shared<annotator::S3Store>(config.s3);
    case StoreKind::none:
      break;
  }
  return nullptr;
}

}  // namespace sentinel::service
