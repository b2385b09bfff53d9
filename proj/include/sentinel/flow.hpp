#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "sentinel/ingest.hpp"

namespace sentinel::flow {

// Dense per-pixel (u, v) displacements, in pixels, between ROI keyframes i and i+1.
class DisplacementField {
 public:
  DisplacementField() = default;
  DisplacementField(int ordinal, cv::Mat2f vectors);

  int ordinal() const { return ordinal_; }
  int width() const { return vectors_.cols; }
  int height() const { return vectors_.rows; }
  cv::Size size() const { return vectors_.size(); }
  const cv::Mat2f& vectors() const { return vectors_; }
  cv::Vec2f at(int x, int y) const { return vectors_(y, x); }

 private:
  int ordinal_ = 0;
  cv::Mat2f vectors_;
};

enum class EstimatorKind { reference_block_match, external_model };

EstimatorKind parse_estimator_kind(const std::string& text);
std::string to_string(EstimatorKind kind);

struct FlowEstimatorSpec {
  EstimatorKind kind = EstimatorKind::reference_block_match;
  std::optional<std::string> model_path;
  int search_radius = 8;
  int block_size = 7;

  void validate() const;
};

class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  // Returns the field for `prev.i`; inputs have already been checked.
  virtual cv::Mat2f estimate(const cv::Mat& prev, const cv::Mat& next) const = 0;
};

// Exhaustive SAD block matching over a (2r+1)^2 window. Blocks are compared
// over all three channels with zero padding outside the image. Ties go to the
// smallest |u|+|v|, then the smallest v, then the smallest u.
cv::Mat2f reference_block_match(const cv::Mat& prev, const cv::Mat& next, int search_radius, int block_size);

class ReferenceBlockMatcher final : public FlowEstimator {
 public:
  ReferenceBlockMatcher(int search_radius, int block_size);
  cv::Mat2f estimate(const cv::Mat& prev, const cv::Mat& next) const override;

 private:
  int search_radius_;
  int block_size_;
};

// Runner for an exchange-format model with inputs "frame_prev"/"frame_next"
// (1 x H x W x 3 float RGB in [0,1]) and output "flow" (1 x H x W x 2).
class ExternalFlowModel final : public FlowEstimator {
 public:
  ExternalFlowModel(cv::dnn::Net net, cv::Size working_size);
  cv::Mat2f estimate(const cv::Mat& prev, const cv::Mat& next) const override;
  cv::Size working_size() const { return size_; }

  // Raw forward pass on two NHWC blobs; SignatureMismatch on bad output.
  cv::Mat2f run(const cv::Mat& prev_blob, const cv::Mat& next_blob) const;

 private:
  mutable cv::dnn::Net net_;
  mutable std::mutex mutex_;
  cv::Size size_;
};

// Loads the model and checks its I/O signature with a probe inference at
// `working_size` (models with fixed spatial dims are the norm).
std::shared_ptr<ExternalFlowModel> load_external_model(const std::string& model_path, cv::Size working_size);

std::shared_ptr<const FlowEstimator> make_estimator(const FlowEstimatorSpec& spec, cv::Size roi_size);

// Throws DimensionMismatch when the pair is not consecutive and same-sized.
DisplacementField estimate_flow(const ingest::RoiKeyframe& prev, const ingest::RoiKeyframe& next,
                                const FlowEstimator& estimator);

// 1 x H x W x 3 float RGB blob in [0,1] from a BGR byte image.
cv::Mat to_nhwc_blob(const cv::Mat& bgr);

}  // namespace sentinel::flow
