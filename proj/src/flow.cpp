#include "sentinel/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <vector>

#include <opencv2/core/utility.hpp>
#include <opencv2/imgproc.hpp>

#include "sentinel/errors.hpp"

namespace sentinel::flow {

DisplacementField::DisplacementField(int ordinal, cv::Mat2f vectors) : ordinal_(ordinal), vectors_(std::move(vectors)) {}

EstimatorKind parse_estimator_kind(const std::string& text) {
  if (text == "reference_block_match") return EstimatorKind::reference_block_match;
  if (text == "external_model") return EstimatorKind::external_model;
  throw Error(ErrorCode::InvalidArgument, "unknown flow estimator '" + text + "'");
}

std::string to_string(EstimatorKind kind) {
  return kind == EstimatorKind::external_model ? "external_model" : "reference_block_match";
}

void FlowEstimatorSpec::validate() const {
  if (kind == EstimatorKind::external_model && (!model_path || model_path->empty()))
    throw Error(ErrorCode::InvalidArgument, "external_model requires model_path");
  if (search_radius < 1) throw Error(ErrorCode::InvalidArgument, "search_radius must be >= 1");
  if (block_size < 3 || block_size % 2 == 0)
    throw Error(ErrorCode::InvalidArgument, "block_size must be odd and >= 3");
}

namespace {

struct Offset {
  int u;
  int v;
};

std::vector<Offset> search_order(int radius) {
  std::vector<Offset> order;
  order.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
  for (int v = -radius; v <= radius; ++v)
    for (int u = -radius; u <= radius; ++u) order.push_back({u, v});
  std::stable_sort(order.begin(), order.end(), [](const Offset& a, const Offset& b) {
    const int la = std::abs(a.u) + std::abs(a.v);
    const int lb = std::abs(b.u) + std::abs(b.v);
    if (la != lb) return la < lb;
    if (a.v != b.v) return a.v < b.v;
    return a.u < b.u;
  });
  return order;
}

// Evaluates every offset for output rows [y0, y1).
class BandMatcher : public cv::ParallelLoopBody {
 public:
  BandMatcher(const cv::Mat& prev_padded, const cv::Mat& next_padded, const std::vector<Offset>& order, int radius,
              int block, cv::Mat2f& out)
      : prev_(prev_padded), next_(next_padded), order_(order), radius_(radius), block_(block), out_(out) {}

  void operator()(const cv::Range& rows) const override {
    const int w = out_.cols;
    const int y0 = rows.start;
    const int y1 = rows.end;
    const int band = y1 - y0;
    const int span_rows = band + block_ - 1;

    std::vector<std::int32_t> best(static_cast<std::size_t>(band) * w, std::numeric_limits<std::int32_t>::max());
    std::vector<Offset> arg(static_cast<std::size_t>(band) * w, Offset{0, 0});
    std::vector<std::int32_t> diff(static_cast<std::size_t>(w + block_ - 1));
    std::vector<std::int32_t> hsum(static_cast<std::size_t>(span_rows) * w);
    std::vector<std::int32_t> acc(static_cast<std::size_t>(w));

    for (const Offset& o : order_) {
      for (int r = 0; r < span_rows; ++r) {
        const int yy = y0 + r;
        const auto* p = prev_.ptr<std::uint8_t>(yy);
        const auto* n = next_.ptr<std::uint8_t>(yy + radius_ + o.v) + 3 * (radius_ + o.u);
        for (int xx = 0; xx < w + block_ - 1; ++xx) {
          const int i = 3 * xx;
          diff[xx] = std::abs(p[i] - n[i]) + std::abs(p[i + 1] - n[i + 1]) + std::abs(p[i + 2] - n[i + 2]);
        }
        std::int32_t s = 0;
        for (int k = 0; k < block_; ++k) s += diff[k];
        std::int32_t* hrow = &hsum[static_cast<std::size_t>(r) * w];
        hrow[0] = s;
        for (int x = 1; x < w; ++x) {
          s += diff[x + block_ - 1] - diff[x - 1];
          hrow[x] = s;
        }
      }
      std::fill(acc.begin(), acc.end(), 0);
      for (int r = 0; r < block_; ++r) {
        const std::int32_t* hrow = &hsum[static_cast<std::size_t>(r) * w];
        for (int x = 0; x < w; ++x) acc[x] += hrow[x];
      }
      for (int r = 0; r < band; ++r) {
        std::int32_t* brow = &best[static_cast<std::size_t>(r) * w];
        Offset* arow = &arg[static_cast<std::size_t>(r) * w];
        for (int x = 0; x < w; ++x) {
          if (acc[x] < brow[x]) {
            brow[x] = acc[x];
            arow[x] = o;
          }
        }
        if (r + 1 < band) {
          const std::int32_t* leaving = &hsum[static_cast<std::size_t>(r) * w];
          const std::int32_t* entering = &hsum[static_cast<std::size_t>(r + block_) * w];
          for (int x = 0; x < w; ++x) acc[x] += entering[x] - leaving[x];
        }
      }
    }

    for (int r = 0; r < band; ++r) {
      auto* dst = out_.ptr<cv::Vec2f>(y0 + r);
      const Offset* arow = &arg[static_cast<std::size_t>(r) * w];
      for (int x = 0; x < w; ++x) dst[x] = cv::Vec2f(static_cast<float>(arow[x].u), static_cast<float>(arow[x].v));
    }
  }

 private:
  const cv::Mat& prev_;
  const cv::Mat& next_;
  const std::vector<Offset>& order_;
  int radius_;
  int block_;
  cv::Mat2f& out_;
};

void check_pair(const cv::Mat& prev, const cv::Mat& next) {
  if (prev.size() != next.size() || prev.type() != next.type())
    throw Error(ErrorCode::DimensionMismatch, "flow inputs differ in size or type");
  if (prev.empty()) throw Error(ErrorCode::DimensionMismatch, "flow inputs are empty");
  if (prev.type() != CV_8UC3) throw Error(ErrorCode::DimensionMismatch, "flow inputs must be 8-bit 3-channel");
}

}  // namespace

cv::Mat2f reference_block_match(const cv::Mat& prev, const cv::Mat& next, int search_radius, int block_size) {
  check_pair(prev, next);
  FlowEstimatorSpec{EstimatorKind::reference_block_match, std::nullopt, search_radius, block_size}.validate();

  const int half = block_size / 2;
  cv::Mat prev_padded;
  cv::Mat next_padded;
  cv::copyMakeBorder(prev, prev_padded, half, half, half, half, cv::BORDER_CONSTANT, cv::Scalar::all(0));
  const int margin = half + search_radius;
  cv::copyMakeBorder(next, next_padded, margin, margin, margin, margin, cv::BORDER_CONSTANT, cv::Scalar::all(0));

  cv::Mat2f out(prev.size(), cv::Vec2f(0.f, 0.f));
  const auto order = search_order(search_radius);
  BandMatcher body(prev_padded, next_padded, order, search_radius, block_size, out);
  const int bands = std::max(1, std::min(prev.rows, cv::getNumThreads() * 2));
  cv::parallel_for_(cv::Range(0, prev.rows), body, bands);
  return out;
}

ReferenceBlockMatcher::ReferenceBlockMatcher(int search_radius, int block_size)
    : search_radius_(search_radius), block_size_(block_size) {
  FlowEstimatorSpec{EstimatorKind::reference_block_match, std::nullopt, search_radius, block_size}.validate();
}

cv::Mat2f ReferenceBlockMatcher::estimate(const cv::Mat& prev, const cv::Mat& next) const {
  return reference_block_match(prev, next, search_radius_, block_size_);
}

cv::Mat to_nhwc_blob(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat f32;
  rgb.convertTo(f32, CV_32F, 1.0 / 255.0);
  const int dims[] = {1, bgr.rows, bgr.cols, 3};
  cv::Mat blob(4, dims, CV_32F);
  std::memcpy(blob.ptr<float>(), f32.isContinuous() ? f32.ptr<float>() : f32.clone().ptr<float>(),
              sizeof(float) * static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
  return blob;
}

ExternalFlowModel::ExternalFlowModel(cv::dnn::Net net, cv::Size working_size)
    : net_(std::move(net)), size_(working_size) {}

cv::Mat2f ExternalFlowModel::run(const cv::Mat& prev_blob, const cv::Mat& next_blob) const {
  cv::Mat out;
  {
    std::lock_guard lock(mutex_);
    try {
      net_.setInput(prev_blob, "frame_prev");
      net_.setInput(next_blob, "frame_next");
      out = net_.forward("flow").clone();
    } catch (const cv::Exception& e) {
      throw Error(ErrorCode::ModelRuntimeFailure, std::string("flow model failed: ") + e.what());
    }
  }
  if (out.dims != 4 || out.size[0] != 1 || out.size[1] != size_.height || out.size[2] != size_.width ||
      out.size[3] != 2 || out.type() != CV_32F) {
    std::string shape;
    for (int d = 0; d < out.dims; ++d) shape += (d ? "x" : "") + std::to_string(out.size[d]);
    throw Error(ErrorCode::SignatureMismatch, "flow output has shape " + shape + ", expected 1x" +
                                                  std::to_string(size_.height) + "x" + std::to_string(size_.width) +
                                                  "x2");
  }
  cv::Mat2f field(size_);
  std::memcpy(field.ptr<float>(), out.ptr<float>(), sizeof(float) * static_cast<std::size_t>(size_.area()) * 2);
  for (int y = 0; y < field.rows; ++y)
    for (int x = 0; x < field.cols; ++x) {
      const auto& d = field(y, x);
      if (!std::isfinite(d[0]) || !std::isfinite(d[1]))
        throw Error(ErrorCode::ModelRuntimeFailure, "flow model produced non-finite vectors");
    }
  return field;
}

cv::Mat2f ExternalFlowModel::estimate(const cv::Mat& prev, const cv::Mat& next) const {
  check_pair(prev, next);
  if (prev.size() != size_)
    throw Error(ErrorCode::DimensionMismatch, "flow model was loaded for a different ROI size");
  try {
    return run(to_nhwc_blob(prev), to_nhwc_blob(next));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SignatureMismatch) throw Error(ErrorCode::ModelRuntimeFailure, e.what());
    throw;
  }
}

std::shared_ptr<ExternalFlowModel> load_external_model(const std::string& model_path, cv::Size working_size) {
  if (!std::filesystem::exists(model_path))
    throw Error(ErrorCode::ModelLoadFailure, "no model file at '" + model_path + "'");
  if (working_size.area() <= 0) throw Error(ErrorCode::InvalidArgument, "working size must be non-empty");
  cv::dnn::Net net;
  try {
    net = cv::dnn::readNetFromONNX(model_path);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::ModelLoadFailure, "cannot parse '" + model_path + "': " + e.what());
  }
  if (net.empty()) throw Error(ErrorCode::ModelLoadFailure, "empty network in '" + model_path + "'");

  auto model = std::make_shared<ExternalFlowModel>(std::move(net), working_size);
  const cv::Mat probe = to_nhwc_blob(cv::Mat(working_size, CV_8UC3, cv::Scalar::all(0)));
  try {
    model->run(probe, probe);
  } catch (const Error& e) {
    throw Error(ErrorCode::SignatureMismatch, e.what());
  }
  return model;
}

std::shared_ptr<const FlowEstimator> make_estimator(const FlowEstimatorSpec& spec, cv::Size roi_size) {
  spec.validate();
  if (spec.kind == EstimatorKind::external_model) return load_external_model(*spec.model_path, roi_size);
  return std::make_shared<ReferenceBlockMatcher>(spec.search_radius, spec.block_size);
}

DisplacementField estimate_flow(const ingest::RoiKeyframe& prev, const ingest::RoiKeyframe& next,
                                const FlowEstimator& estimator) {
  if (prev.pixels.size() != next.pixels.size())
    throw Error(ErrorCode::DimensionMismatch, "ROI keyframes differ in size");
  if (next.i != prev.i + 1) throw Error(ErrorCode::DimensionMismatch, "ROI keyframes are not consecutive");
  return DisplacementField(prev.i, estimator.estimate(prev.pixels, next.pixels));
}

}  // namespace sentinel::flow
