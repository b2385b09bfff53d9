#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include <opencv2/imgproc.hpp>

#include "oracles.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/flow.hpp"
#include "test_support.hpp"

using namespace sentinel;
using namespace sentinel::flow;
namespace ts = testing_support;

namespace {

cv::Mat shifted(const cv::Mat& img, int dx, int dy) {
  cv::Mat out(img.size(), img.type(), cv::Scalar::all(0));
  const cv::Mat m = (cv::Mat_<double>(2, 3) << 1, 0, dx, 0, 1, dy);
  cv::warpAffine(img, out, m, img.size(), cv::INTER_NEAREST, cv::BORDER_CONSTANT, cv::Scalar::all(0));
  return out;
}

ingest::RoiKeyframe roi_kf(const cv::Mat& px, int i) {
  ingest::RoiKeyframe kf;
  kf.i = i;
  kf.pixels = px;
  return kf;
}

}  // namespace

TEST(BlockMatch, AgreesWithExhaustiveOracle) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> dim(3, 20);
  std::uniform_int_distribution<int> rad(1, 3);
  for (int c = 0; c < 40; ++c) {
    const cv::Size size(dim(rng), dim(rng));
    const int r = rad(rng);
    const int block = 3 + 2 * (c % 2);
    const cv::Mat prev = ts::noise_image(size, rng);
    // Mix of pure noise and shifted content so both random and structured
    // minima are exercised.
    const cv::Mat next = c % 3 == 0 ? ts::noise_image(size, rng) : shifted(prev, c % 5 - 2, c % 3 - 1);
    const cv::Mat2f got = reference_block_match(prev, next, r, block);
    const cv::Mat2f want = oracle::block_match(prev, next, r, block);
    ASSERT_EQ(cv::norm(got, want, cv::NORM_INF), 0.0) << "case " << c << " size " << size << " r " << r;
  }
}

TEST(BlockMatch, TiesPreferSmallestDisplacement) {
  const cv::Mat flat(9, 9, CV_8UC3, cv::Scalar::all(100));
  const cv::Mat2f f = reference_block_match(flat, flat, 3, 3);
  // Interior pixels see identical blocks everywhere in the window except
  // where padding enters; zero motion must win.
  EXPECT_EQ(f(4, 4), cv::Vec2f(0, 0));
}

TEST(BlockMatch, RecoversIntegerTranslation) {
  std::mt19937 rng(3);
  const cv::Mat prev = ts::noise_image({40, 30}, rng);
  for (auto [dx, dy] : {std::pair{2, -1}, std::pair{-3, 0}, std::pair{0, 4}}) {
    const cv::Mat next = shifted(prev, dx, dy);
    const cv::Mat2f f = reference_block_match(prev, next, 5, 7);
    for (int y = 8; y < 22; ++y)
      for (int x = 8; x < 32; ++x) ASSERT_EQ(f(y, x), cv::Vec2f(dx, dy)) << x << "," << y;
  }
}

TEST(BlockMatch, RejectsBadInput) {
  const cv::Mat a(8, 8, CV_8UC3, cv::Scalar::all(0));
  const cv::Mat b(8, 9, CV_8UC3, cv::Scalar::all(0));
  EXPECT_THROW(reference_block_match(a, b, 2, 3), Error);
  EXPECT_THROW(reference_block_match(a, a, 0, 3), Error);
  EXPECT_THROW(reference_block_match(a, a, 2, 4), Error);
}

TEST(EstimateFlow, RequiresConsecutiveSameSizedKeyframes) {
  const ReferenceBlockMatcher m(2, 3);
  const cv::Mat a(8, 8, CV_8UC3, cv::Scalar::all(0));
  const auto field = estimate_flow(roi_kf(a, 4), roi_kf(a, 5), m);
  EXPECT_EQ(field.ordinal(), 4);
  EXPECT_EQ(field.size(), cv::Size(8, 8));
  try {
    estimate_flow(roi_kf(a, 4), roi_kf(a, 6), m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(estimate_flow(roi_kf(a, 1), roi_kf(cv::Mat(8, 9, CV_8UC3), 2), m), Error);
}

TEST(FlowSpec, Validation) {
  FlowEstimatorSpec s;
  EXPECT_NO_THROW(s.validate());
  s.kind = EstimatorKind::external_model;
  EXPECT_THROW(s.validate(), Error);
  EXPECT_EQ(parse_estimator_kind("external_model"), EstimatorKind::external_model);
  EXPECT_THROW(parse_estimator_kind("raft"), Error);
}

TEST(ExternalModel, MissingFileFailsToLoad) {
  try {
    load_external_model("/nonexistent.onnx", {32, 24});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModelLoadFailure);
  }
}

TEST(ExternalModel, GarbageFileFailsToLoad) {
  ts::TempDir dir;
  std::ofstream(dir / "bad.onnx") << "not a protobuf";
  EXPECT_THROW(load_external_model((dir / "bad.onnx").string(), {32, 24}), Error);
}

TEST(ExternalModel, WrongOutputShapeIsSignatureMismatch) {
  try {
    load_external_model((ts::data_dir() / "flow_bad_32x24.onnx").string(), {32, 24});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SignatureMismatch);
  }
}

TEST(ExternalModel, RunsFixtureModel) {
  // The fixture outputs (next - prev) of the R and G channels in [0, 1].
  auto model = load_external_model((ts::data_dir() / "flow_diff_32x24.onnx").string(), {32, 24});
  cv::Mat prev(24, 32, CV_8UC3, cv::Scalar(0, 0, 0));
  cv::Mat next(24, 32, CV_8UC3, cv::Scalar(10, 51, 255));  // BGR
  const cv::Mat2f f = model->estimate(prev, next);
  ASSERT_EQ(f.size(), cv::Size(32, 24));
  EXPECT_NEAR(f(3, 5)[0], 1.0, 1e-6);
  EXPECT_NEAR(f(3, 5)[1], 0.2, 1e-6);
  EXPECT_THROW(model->estimate(cv::Mat(10, 10, CV_8UC3), cv::Mat(10, 10, CV_8UC3)), Error);
}

TEST(ExternalModel, FactoryUsesRoiSize) {
  FlowEstimatorSpec spec;
  spec.kind = EstimatorKind::external_model;
  spec.model_path = (ts::data_dir() / "flow_diff_32x24.onnx").string();
  const auto estimator = make_estimator(spec, {32, 24});
  EXPECT_EQ(estimator->estimate(cv::Mat(24, 32, CV_8UC3, cv::Scalar::all(0)), cv::Mat(24, 32, CV_8UC3, cv::Scalar::all(0)))
                .size(),
            cv::Size(32, 24));
  EXPECT_THROW(estimator->estimate(cv::Mat(24, 40, CV_8UC3), cv::Mat(24, 40, CV_8UC3)), Error);
}

TEST(NhwcBlob, ConvertsBgrBytesToRgbFloats) {
  cv::Mat img(2, 3, CV_8UC3, cv::Scalar(0, 128, 255));
  const cv::Mat blob = to_nhwc_blob(img);
  ASSERT_EQ(blob.dims, 4);
  EXPECT_EQ(blob.size[1], 2);
  EXPECT_EQ(blob.size[2], 3);
  const float* p = blob.ptr<float>();
  EXPECT_FLOAT_EQ(p[0], 1.0f);
  EXPECT_FLOAT_EQ(p[1], 128.0f / 255.0f);
  EXPECT_FLOAT_EQ(p[2], 0.0f);
}
