#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "sentinel/annotator.hpp"
#include "sentinel/detector.hpp"
#include "sentinel/flow.hpp"
#include "sentinel/ingest.hpp"
#include "sentinel/patching.hpp"

namespace sentinel::service {

enum class StoreKind { none, local, s3 };

struct StoreConfig {
  StoreKind kind = StoreKind::none;
  std::filesystem::path root;  // local
  annotator::S3Config s3;
  int blur_radius = 4;
  annotator::RetryPolicy retry;
};

struct PipelineConfig {
  ingest::FrameSource source;
  ingest::RoiSpec roi;  // native resolution
  double interval_s = 2.0;
  patching::GridSpec grid;
  flow::FlowEstimatorSpec flow;
  detector::ClassifierSpec classifier;
  double segment_deadline_s = 2.0;
  StoreConfig store;
  std::string listen = "127.0.0.1:8080";
  double px_per_meter = 0.0;  // 0 disables the ground-cell size check

  // Structural checks only; ROI bounds are checked once the frame size is
  // known. Throws ConfigError listing every bad field.
  void validate() const;
};

using Environment = std::map<std::string, std::string>;

// The process environment restricted to PUSH_SENTINEL_* variables.
Environment sentinel_environment();

// TOML text, with PUSH_SENTINEL_<SECTION>_<KEY> overriding [section] key.
// Override values are read as TOML literals when they parse as one and as
// strings otherwise.
PipelineConfig parse_config(const std::string& toml_text, const Environment& env = {});
PipelineConfig load_config(const std::filesystem::path& path, const Environment& env = {});

std::shared_ptr<annotator::ObjectStore> make_store(const StoreConfig& config);

}  // namespace sentinel::service
