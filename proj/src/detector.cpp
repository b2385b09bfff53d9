#include "sentinel/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include <opencv2/imgproc.hpp>

#include "sentinel/errors.hpp"

namespace sentinel::detector {

std::string to_string(Label label) { return label == Label::pushing ? "pushing" : "non_pushing"; }

Label parse_label(const std::string& text) {
  if (text == "pushing" || text == "1" || text == "P") return Label::pushing;
  if (text == "non_pushing" || text == "0" || text == "NP") return Label::non_pushing;
  throw Error(ErrorCode::ParseError, "unknown label '" + text + "'");
}

ClassifierKind parse_classifier_kind(const std::string& text) {
  if (text == "external_model") return ClassifierKind::external_model;
  if (text == "mean_intensity_stub") return ClassifierKind::mean_intensity_stub;
  throw Error(ErrorCode::InvalidArgument, "unknown classifier '" + text + "'");
}

std::string to_string(ClassifierKind kind) {
  return kind == ClassifierKind::external_model ? "external_model" : "mean_intensity_stub";
}

void ClassifierSpec::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in [0,1]");
  if (input_side <= 0) throw Error(ErrorCode::InvalidArgument, "input_side must be > 0");
  if (kind == ClassifierKind::external_model && (!model_path || model_path->empty()))
    throw Error(ErrorCode::InvalidArgument, "external_model requires model_path");
}

Label apply_threshold(double delta, double threshold) {
  return delta >= threshold ? Label::pushing : Label::non_pushing;
}

cv::Mat preprocess_patch(const cv::Mat& bgr, int input_side) {
  if (bgr.empty()) throw Error(ErrorCode::EmptyPatch, "patch has no pixels");
  if (bgr.type() != CV_8UC3) throw Error(ErrorCode::InvalidArgument, "patch must be 8-bit 3-channel");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat unit;
  rgb.convertTo(unit, CV_32FC3, 1.0 / 255.0);
  if (unit.rows == input_side && unit.cols == input_side) return unit;
  cv::Mat resized;
  cv::resize(unit, resized, cv::Size(input_side, input_side), 0, 0, cv::INTER_LINEAR);
  cv::min(resized, 1.0, resized);
  cv::max(resized, 0.0, resized);
  return resized;
}

double MeanIntensityStub::score(const cv::Mat& tensor) const {
  const cv::Scalar mean = cv::mean(tensor);
  const double intensity = (mean[0] + mean[1] + mean[2]) / 3.0;
  return std::clamp(1.0 - intensity, 0.0, 1.0);
}

ExternalClassifier::ExternalClassifier(cv::dnn::Net net, int input_side) : net_(std::move(net)), side_(input_side) {}

double ExternalClassifier::score(const cv::Mat& tensor) const {
  if (tensor.rows != side_ || tensor.cols != side_ || tensor.type() != CV_32FC3)
    throw Error(ErrorCode::ModelRuntimeFailure, "classifier input must be a preprocessed tensor");
  const int dims[] = {1, side_, side_, 3};
  cv::Mat blob(4, dims, CV_32F);
  const cv::Mat dense = tensor.isContinuous() ? tensor : tensor.clone();
  std::memcpy(blob.ptr<float>(), dense.ptr<float>(), sizeof(float) * static_cast<std::size_t>(side_) * side_ * 3);

  cv::Mat out;
  {
    std::lock_guard lock(mutex_);
    try {
      net_.setInput(blob, "patch");
      out = net_.forward("delta").clone();
    } catch (const cv::Exception& e) {
      throw Error(ErrorCode::ModelRuntimeFailure, std::string("classifier failed: ") + e.what());
    }
  }
  if (out.total() != 1 || out.depth() != CV_32F)
    throw Error(ErrorCode::SignatureMismatch, "classifier must emit a single float delta");
  // Allow float rounding at the ends of the range.
  constexpr double kSlack = 1e-5;
  const double delta = out.ptr<float>()[0];
  if (!std::isfinite(delta) || delta < -kSlack || delta > 1.0 + kSlack)
    throw Error(ErrorCode::ModelRuntimeFailure, "classifier delta outside [0,1]");
  return std::clamp(delta, 0.0, 1.0);
}

std::shared_ptr<ExternalClassifier> load_classifier_model(const std::string& model_path, int input_side) {
  if (!std::filesystem::exists(model_path))
    throw Error(ErrorCode::ModelLoadFailure, "no model file at '" + model_path + "'");
  cv::dnn::Net net;
  try {
    net = cv::dnn::readNetFromONNX(model_path);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::ModelLoadFailure, "cannot parse '" + model_path + "': " + e.what());
  }
  if (net.empty()) throw Error(ErrorCode::ModelLoadFailure, "empty network in '" + model_path + "'");
  auto model = std::make_shared<ExternalClassifier>(std::move(net), input_side);
  try {
    model->score(cv::Mat(input_side, input_side, CV_32FC3, cv::Scalar::all(1.0)));
  } catch (const Error& e) {
    throw Error(ErrorCode::SignatureMismatch, e.what());
  }
  return model;
}

std::shared_ptr<const Classifier> make_classifier(const ClassifierSpec& spec) {
  spec.validate();
  if (spec.kind == ClassifierKind::external_model) return load_classifier_model(*spec.model_path, spec.input_side);
  return std::make_shared<MeanIntensityStub>();
}

PatchVerdict classify(const patching::MimPatch& patch, const Classifier& classifier, const ClassifierSpec& spec) {
  const double delta = classifier.score(preprocess_patch(patch.pixels, spec.input_side));
  return {patch.i, patch.k, delta, apply_threshold(delta, spec.threshold)};
}

std::vector<PatchVerdict> classify_batch(std::span<const patching::MimPatch> patches, const Classifier& classifier,
                                         const ClassifierSpec& spec) {
  std::vector<PatchVerdict> verdicts;
  verdicts.reserve(patches.size());
  for (const auto& patch : patches) {
    try {
      verdicts.push_back(classify(patch, classifier, spec));
    } catch (const Error& e) {
      throw Error(e.code(), "patch i=" + std::to_string(patch.i) + " k=" + std::to_string(patch.k) + ": " + e.what());
    }
  }
  return verdicts;
}

}  // namespace sentinel::detector
