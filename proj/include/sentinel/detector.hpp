#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "sentinel/patching.hpp"

namespace sentinel::detector {

enum class Label { non_pushing, pushing };

std::string to_string(Label label);
Label parse_label(const std::string& text);

enum class ClassifierKind { external_model, mean_intensity_stub };

ClassifierKind parse_classifier_kind(const std::string& text);
std::string to_string(ClassifierKind kind);

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::mean_intensity_stub;
  std::optional<std::string> model_path;
  int input_side = 224;
  double threshold = 0.5;

  void validate() const;
};

struct PatchVerdict {
  int i = 0;
  int k = 0;
  double delta = 0.0;
  Label label = Label::non_pushing;
};

// pushing iff delta >= threshold.
Label apply_threshold(double delta, double threshold);

// Bilinear resize to side x side, BGR -> RGB, bytes / 255. Returns CV_32FC3
// with values in [0, 1]. Dataset export and inference both go through here.
cv::Mat preprocess_patch(const cv::Mat& bgr, int input_side);

class Classifier {
 public:
  virtual ~Classifier() = default;
  // delta in [0, 1] for one preprocessed tensor.
  virtual double score(const cv::Mat& tensor) const = 0;
};

// delta = 1 - mean of the normalized tensor: white (no motion) scores 0.
class MeanIntensityStub final : public Classifier {
 public:
  double score(const cv::Mat& tensor) const override;
};

// Exchange-format model: input "patch" (1 x side x side x 3 float), output
// "delta" (one post-sigmoid probability).
class ExternalClassifier final : public Classifier {
 public:
  ExternalClassifier(cv::dnn::Net net, int input_side);
  double score(const cv::Mat& tensor) const override;

 private:
  mutable cv::dnn::Net net_;
  mutable std::mutex mutex_;
  int side_;
};

std::shared_ptr<ExternalClassifier> load_classifier_model(const std::string& model_path, int input_side);
std::shared_ptr<const Classifier> make_classifier(const ClassifierSpec& spec);

PatchVerdict classify(const patching::MimPatch& patch, const Classifier& classifier, const ClassifierSpec& spec);

// Same verdicts as mapping classify, in k order. Errors name the failing patch.
std::vector<PatchVerdict> classify_batch(std::span<const patching::MimPatch> patches, const Classifier& classifier,
                                         const ClassifierSpec& spec);

}  // namespace sentinel::detector
