#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "sentinel/detector.hpp"
#include "sentinel/flow.hpp"
#include "sentinel/ingest.hpp"
#include "sentinel/patching.hpp"

namespace sentinel::datasetgen {

struct TrajectoryRecord {
  int pedestrian_id = 0;
  std::int64_t frame_index = 0;
  double x = 0.0;  // native frame pixels
  double y = 0.0;
  std::optional<double> z;
};

struct GroundTruthRecord {
  int pedestrian_id = 0;
  std::int64_t frame_index = 0;
  detector::Label behavior = detector::Label::non_pushing;
};

// "id frame x y [z]" per line, whitespace separated; '#' starts a comment.
std::vector<TrajectoryRecord> parse_trajectories(std::istream& in);
// "id,frame,label" per line; an optional header line is skipped.
std::vector<GroundTruthRecord> parse_ground_truth(std::istream& in);
std::vector<TrajectoryRecord> load_trajectories(const std::filesystem::path& path);
std::vector<GroundTruthRecord> load_ground_truth(const std::filesystem::path& path);

enum class PatchLabel { non_pushing, pushing, discarded };

std::string to_string(PatchLabel label);

// A pedestrian footprint in ROI coordinates.
struct Pedestrian {
  int id = 0;
  double cx = 0.0;
  double cy = 0.0;
  bool pushing = false;
};

// Centers count as inside on the half-open rect [x0, x1) x [y0, y1).
bool center_inside(double cx, double cy, const patching::PatchRect& rect);
// True when some pixel center of the rect lies within `radius` of (cx, cy).
bool disk_touches(double cx, double cy, double radius, const patching::PatchRect& rect);

// pushing: a pushing center lies inside. discarded: no pushing center inside
// but a pushing disk reaches into the rect. non_pushing otherwise.
PatchLabel label_patch(const patching::PatchRect& rect, std::span<const Pedestrian> pedestrians, double radius);

// Maps native frame coordinates into ROI coordinates of the working frame.
struct RoiPlacement {
  ingest::PixelPoint origin;  // ROI top-left in the working frame
  double scale = 1.0;         // working / native

  double to_roi_x(double x) const { return x * scale - origin.x; }
  double to_roi_y(double y) const { return y * scale - origin.y; }
};

// Joins trajectories with per-frame behavior.
class SceneIndex {
 public:
  SceneIndex(std::span<const TrajectoryRecord> trajectories, std::span<const GroundTruthRecord> ground_truth);

  // Everyone seen at `frame`, in ROI coordinates. Throws MissingGroundTruth
  // for a trajectory point without a behavior record.
  std::vector<Pedestrian> pedestrians_at(std::int64_t frame, const RoiPlacement& placement) const;

 private:
  std::map<std::int64_t, std::vector<TrajectoryRecord>> by_frame_;
  std::map<std::pair<int, std::int64_t>, detector::Label> behavior_;
};

// `frame` is the first frame of the keyframe pair the patch came from.
PatchLabel label_patch(const patching::PatchRect& rect, std::int64_t frame, const SceneIndex& scene,
                       const RoiPlacement& placement, double radius_px);

struct Provenance {
  std::string video;
  double pass_offset_s = 0.0;
  int i = 0;
  int k = 0;
  std::int64_t frame_index = 0;

  bool operator==(const Provenance&) const = default;
};

struct PassPatch {
  patching::MimPatch patch;
  Provenance provenance;
};

struct PassConfig {
  std::string video_id = "video";
  ingest::RoiSpec roi;  // native resolution
  patching::GridSpec grid;
  std::vector<double> offsets{0.0, 0.5, 1.0, 1.5};
  double interval_s = 2.0;
  flow::FlowEstimatorSpec flow;
};

// Offsets must be strictly increasing, non-negative and below the interval.
void validate_offsets(std::span<const double> offsets, double interval_s);

using StreamFactory = std::function<std::unique_ptr<ingest::FrameStream>()>;

// One sampling pass per offset; each pass reopens the video through `open`.
// Returns the placement used to map trajectories into ROI coordinates.
RoiPlacement generate_passes(const StreamFactory& open, const PassConfig& config,
                             const std::function<void(PassPatch)>& sink);

struct LabeledPatch {
  cv::Mat image;
  PatchLabel label = PatchLabel::non_pushing;
  Provenance provenance;
};

// generate_passes followed by label_patch on every patch.
std::vector<LabeledPatch> generate_dataset(const StreamFactory& open, const PassConfig& config, const SceneIndex& scene,
                                           double ped_radius_px);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  void validate() const;
};

struct StratumSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  bool operator==(const StratumSizes&) const = default;
};

// train = ceil(N * r_train); the rest is shared between val and test in
// proportion, an exact half going to val when `tie_to_val`.
StratumSizes stratum_sizes(std::size_t n, const SplitRatios& ratios, bool tie_to_val);

struct DatasetSplits {
  std::vector<LabeledPatch> train;
  std::vector<LabeledPatch> val;
  std::vector<LabeledPatch> test;
};

// Stratified per (video, label); discarded patches are dropped. Throws
// EmptyClass when either class is absent from the whole corpus.
DatasetSplits split_dataset(std::vector<LabeledPatch> labeled, const SplitRatios& ratios, std::uint64_t seed);

struct SplitCountRow {
  std::string video;
  PatchLabel label = PatchLabel::non_pushing;
  StratumSizes sizes;
};

std::vector<SplitCountRow> tabulate(const DatasetSplits& splits);

// {out}/{train|val|test}/{pushing|non_pushing}/img_NNNNNN.png and
// {out}/manifest.csv. Replaces any previous export in `out`. Returns the
// number of images written.
std::size_t export_dataset(const DatasetSplits& splits, const std::filesystem::path& out);

}  // namespace sentinel::datasetgen
