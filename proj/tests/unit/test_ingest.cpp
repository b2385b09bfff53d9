#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "sentinel/errors.hpp"
#include "sentinel/ingest.hpp"
#include "test_support.hpp"

using namespace sentinel;
using namespace sentinel::ingest;
namespace ts = testing_support;

namespace {

std::unique_ptr<FrameStream> counter_stream(double fps, std::int64_t frames, cv::Size size = {64, 48},
                                            Rational scale = {1, 1}) {
  GeneratedSource s;
  s.fps = fps;
  s.size = size;
  s.frame_count = frames;
  s.downscale = scale;
  s.render = [size](std::int64_t f) { return cv::Mat(size, CV_8UC3, cv::Scalar::all(static_cast<double>(f % 256))); };
  return make_generated_stream(std::move(s));
}

}  // namespace

TEST(Rational, ParsesFractionsAndDecimals) {
  const auto half = Rational::parse("1/2");
  EXPECT_EQ(half.num, 1);
  EXPECT_EQ(half.den, 2);
  const auto dec = Rational::parse("0.25");
  EXPECT_EQ(dec.num, 1);
  EXPECT_EQ(dec.den, 4);
  EXPECT_THROW(Rational::parse("abc"), Error);
  EXPECT_THROW(Rational::parse("1/0"), Error);
  EXPECT_FALSE(Rational::parse("3/2").valid());
}

TEST(Rational, DimensionsFloorCoordinatesRound) {
  const Rational half{1, 2};
  EXPECT_EQ(half.scale_dim(1015), 507);
  EXPECT_EQ(half.scale_coord(375), 188);
  EXPECT_EQ(half.scale_coord(374), 187);
}

TEST(TickSchedule, PicksFirstFrameAtOrAfterEachTick) {
  TickSchedule s(2.0);
  std::vector<double> ticks;
  for (int f = 0; f < 250; ++f)
    if (auto t = s.accept(f / 25.0)) ticks.push_back(*t);
  ASSERT_EQ(ticks.size(), 5u);
  for (std::size_t k = 0; k < ticks.size(); ++k) EXPECT_DOUBLE_EQ(ticks[k], 2.0 * k);
}

TEST(TickSchedule, IrregularTimestampsSkipMissedTicks) {
  TickSchedule s(2.0, 0.5);
  EXPECT_FALSE(s.accept(0.0));
  EXPECT_EQ(s.accept(0.7), 0.5);
  EXPECT_FALSE(s.accept(1.0));
  EXPECT_EQ(s.accept(5.0), 2.5);  // 4.5 also passed; it is folded into this frame
  EXPECT_FALSE(s.accept(6.0));
  EXPECT_EQ(s.accept(6.5), 6.5);
}

TEST(TickSchedule, RejectsBadArguments) {
  EXPECT_THROW(TickSchedule(0.0), Error);
  EXPECT_THROW(TickSchedule(2.0, -1.0), Error);
}

TEST(SampleKeyframes, TenSecondsAtTwentyFiveFps) {
  auto stream = counter_stream(25.0, 250);
  const auto kfs = sample_keyframes(*stream, 2.0);
  ASSERT_EQ(kfs.size(), 5u);
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    EXPECT_EQ(kfs[k].frame_index, static_cast<std::int64_t>(50 * k));
    EXPECT_EQ(kfs[k].pixels.at<cv::Vec3b>(0, 0)[0], (50 * k) % 256);
  }
}

TEST(SampleKeyframes, NonIntegerFps) {
  auto stream = counter_stream(29.97, 310);
  const auto kfs = sample_keyframes(*stream, 2.0);
  ASSERT_EQ(kfs.size(), 6u);
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    const double t = kfs[k].frame_index / 29.97;
    EXPECT_GE(t + 1e-9, 2.0 * k);
    EXPECT_LT(t, 2.0 * k + 1 / 29.97 + 1e-9);
  }
}

TEST(KeyframeSampler, MatchesSynchronousSampling) {
  KeyframeSampler sampler(counter_stream(25.0, 260), {2.0, 0.0, 4});
  std::vector<std::int64_t> got;
  while (auto kf = sampler.next()) got.push_back(kf->frame_index);
  EXPECT_EQ(got, (std::vector<std::int64_t>{0, 50, 100, 150, 200, 250}));
}

TEST(KeyframeSampler, SlowConsumerNeverLosesKeyframes) {
  KeyframeSampler sampler(counter_stream(25.0, 400), {2.0, 0.0, 2});
  std::vector<std::int64_t> got;
  while (auto kf = sampler.next()) {
    got.push_back(kf->frame_index);
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ASSERT_EQ(got.size(), 8u);
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_EQ(got[k], static_cast<std::int64_t>(50 * k));
}

TEST(KeyframeSampler, AcquisitionFailureSurfaces) {
  GeneratedSource s;
  s.size = {32, 32};
  s.frame_count = 100;
  s.render = [](std::int64_t f) {
    if (f == 60) return cv::Mat(8, 8, CV_8UC3);
    return cv::Mat(32, 32, CV_8UC3, cv::Scalar::all(0));
  };
  KeyframeSampler sampler(make_generated_stream(s), {2.0, 0.0, 8});
  EXPECT_TRUE(sampler.next());
  EXPECT_TRUE(sampler.next());
  EXPECT_THROW(sampler.next(), Error);
}

TEST(FrameQueue, DropsOldestNonKeyframeWhenFull) {
  FrameQueue q(3);
  auto item = [](std::int64_t i, bool key) {
    FrameQueue::Item it;
    it.frame.index = i;
    if (key) it.tick = static_cast<double>(i);
    return it;
  };
  q.push(item(0, true));
  q.push(item(1, false));
  q.push(item(2, false));
  q.push(item(3, true));
  EXPECT_EQ(q.dropped(), 1u);
  std::vector<std::int64_t> order;
  q.close();
  while (auto it = q.pop()) order.push_back(it->frame.index);
  EXPECT_EQ(order, (std::vector<std::int64_t>{0, 2, 3}));
}

TEST(Downscale, HalvesFramesAndScalesRoi) {
  auto stream = counter_stream(25.0, 2, {1015, 400}, {1, 2});
  EXPECT_EQ(stream->frame_size(), cv::Size(507, 200));
  const auto f = stream->next();
  ASSERT_TRUE(f);
  EXPECT_EQ(f->pixels.size(), cv::Size(507, 200));
  const RoiSpec roi{{375, 549}, {1015, 400}};
  const auto s = RoiSpec{{0, 0}, {1015, 400}}.scaled({1, 2}, stream->frame_size());
  EXPECT_EQ(s.bottom_right, (PixelPoint{507, 200}));
  EXPECT_EQ(roi.scaled({1, 2}, {2000, 2000}).top_left, (PixelPoint{188, 275}));
}

TEST(Roi, ValidateAndCrop) {
  const RoiSpec roi{{10, 5}, {30, 25}};
  EXPECT_NO_THROW(roi.validate({64, 48}));
  EXPECT_THROW((RoiSpec{{10, 5}, {70, 25}}).validate({64, 48}), Error);
  EXPECT_THROW((RoiSpec{{10, 5}, {10, 25}}).validate({64, 48}), Error);
  try {
    (RoiSpec{{-1, 0}, {5, 5}}).validate({64, 48});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RoiOutOfBounds);
  }

  Keyframe kf;
  kf.pixels = cv::Mat(48, 64, CV_8UC3);
  cv::randu(kf.pixels, 0, 255);
  kf.frame_index = 7;
  RoiCropper cropper(roi);
  const auto a = cropper.crop(kf);
  const auto b = cropper.crop(kf);
  EXPECT_EQ(a.i, 1);
  EXPECT_EQ(b.i, 2);
  EXPECT_EQ(a.pixels.size(), cv::Size(20, 20));
  EXPECT_EQ(cv::norm(a.pixels, kf.pixels(roi.rect()), cv::NORM_INF), 0.0);
  EXPECT_EQ(a.frame_index, 7);
}

TEST(OpenSource, MissingFileIsUnavailable) {
  FrameSource s;
  s.path_or_url = "/nonexistent/video.mkv";
  try {
    open_source(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SourceUnavailable);
  }
}

TEST(OpenSource, GarbageFileIsDecodeFailure) {
  ts::TempDir dir;
  const auto path = dir / "junk.mkv";
  std::ofstream(path) << "definitely not a video";
  FrameSource s;
  s.path_or_url = path.string();
  try {
    open_source(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DecodeFailure);
  }
}

TEST(OpenSource, ReplaysLosslessVideo) {
  ts::TempDir dir;
  const auto path = dir / "clip.mkv";
  ts::write_video(path, "FFV1", 25.0, {96, 64}, 60, [](std::int64_t f) { return ts::moving_scene({96, 64}, f); });
  FrameSource s;
  s.path_or_url = path.string();
  s.realtime = false;
  s.downscale = {1, 1};
  auto stream = open_source(s);
  EXPECT_EQ(stream->native_size(), cv::Size(96, 64));
  EXPECT_NEAR(stream->fps(), 25.0, 1e-6);
  const auto kfs = sample_keyframes(*stream, 2.0);
  ASSERT_EQ(kfs.size(), 2u);
  EXPECT_EQ(kfs[1].frame_index, 50);
  EXPECT_EQ(cv::norm(kfs[1].pixels, ts::moving_scene({96, 64}, 50), cv::NORM_INF), 0.0);
}

TEST(FrameSource, ValidateRejectsBadValues) {
  FrameSource s;
  s.downscale = {3, 2};
  EXPECT_THROW(s.validate(), Error);
  s.downscale = {1, 2};
  s.open_attempts = 0;
  EXPECT_THROW(s.validate(), Error);
}
