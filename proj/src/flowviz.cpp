#include "sentinel/flowviz.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include <opencv2/imgcodecs.hpp>

#include "sentinel/errors.hpp"

namespace sentinel::flowviz {

PolarFlow to_polar(const flow::DisplacementField& field) {
  PolarFlow polar{cv::Mat1d(field.size()), cv::Mat1d(field.size()), cv::Mat1d(field.size())};
  for (int y = 0; y < field.height(); ++y) {
    const auto* src = field.vectors().ptr<cv::Vec2f>(y);
    auto* theta = polar.theta.ptr<double>(y);
    auto* mag = polar.mag.ptr<double>(y);
    auto* sq = polar.mag_sq.ptr<double>(y);
    for (int x = 0; x < field.width(); ++x) {
      const double u = src[x][0];
      const double v = src[x][1];
      if (!std::isfinite(u) || !std::isfinite(v))
        throw Error(ErrorCode::InvalidArgument, "displacement field has non-finite entries");
      sq[x] = u * u + v * v;
      mag[x] = std::sqrt(sq[x]);
      // atan2 returns (-pi, pi]; zero vectors get theta 0.
      theta[x] = sq[x] > 0.0 ? std::atan2(v, u) / M_PI : 0.0;
    }
  }
  return polar;
}

ColorWheel::ColorWheel() {
  int col = 0;
  auto ramp = [](int k, int n) { return std::floor(255.0 * k / n); };
  for (int k = 0; k < RY; ++k) anchors_[col++] = {255.0, ramp(k, RY), 0.0};
  for (int k = 0; k < YG; ++k) anchors_[col++] = {255.0 - ramp(k, YG), 255.0, 0.0};
  for (int k = 0; k < GC; ++k) anchors_[col++] = {0.0, 255.0, ramp(k, GC)};
  for (int k = 0; k < CB; ++k) anchors_[col++] = {0.0, 255.0 - ramp(k, CB), 255.0};
  for (int k = 0; k < BM; ++k) anchors_[col++] = {ramp(k, BM), 0.0, 255.0};
  for (int k = 0; k < MR; ++k) anchors_[col++] = {255.0, 0.0, 255.0 - ramp(k, MR)};
}

cv::Vec3d ColorWheel::hue(double theta) const {
  const double half_turns = theta / 2.0;
  const double position = (half_turns - std::floor(half_turns)) * (kColumns - 1);
  const int k0 = static_cast<int>(std::floor(position));
  const int k1 = (k0 + 1) % kColumns;
  const double f = position - k0;
  return ((1.0 - f) * anchors_[static_cast<std::size_t>(k0)] + f * anchors_[static_cast<std::size_t>(k1)]) / 255.0;
}

cv::Vec3b ColorWheel::color(double theta, double rad) const {
  const cv::Vec3d h = hue(theta);
  cv::Vec3b rgb;
  for (int c = 0; c < 3; ++c) {
    const double value = 255.0 * (1.0 - rad * (1.0 - h[c]));
    rgb[c] = static_cast<std::uint8_t>(std::clamp(std::floor(value + 0.5), 0.0, 255.0));
  }
  return rgb;
}

MotionMap render_mim(const PolarFlow& polar, const ColorWheel& wheel, int ordinal) {
  double max_sq = 0.0;
  cv::minMaxLoc(polar.mag_sq, nullptr, &max_sq);
  const bool still = std::sqrt(max_sq) <= kStillSceneEpsilon;

  MotionMap mim{ordinal, cv::Mat(polar.theta.size(), CV_8UC3, cv::Scalar::all(255))};
  if (still) return mim;
  for (int y = 0; y < mim.pixels.rows; ++y) {
    const auto* theta = polar.theta.ptr<double>(y);
    const auto* sq = polar.mag_sq.ptr<double>(y);
    auto* out = mim.pixels.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mim.pixels.cols; ++x) {
      const double rad = std::min(1.0, std::sqrt(sq[x] / max_sq));
      const cv::Vec3b rgb = wheel.color(theta[x], rad);
      out[x] = cv::Vec3b(rgb[2], rgb[1], rgb[0]);
    }
  }
  return mim;
}

MotionMap render_mim(const flow::DisplacementField& field, const ColorWheel& wheel) {
  return render_mim(to_polar(field), wheel, field.ordinal());
}

std::string write_mim_png(const MotionMap& mim, const std::string& dir) {
  std::filesystem::create_directories(dir);
  char name[32];
  std::snprintf(name, sizeof(name), "mim_%06d.png", mim.i);
  const auto path = (std::filesystem::path(dir) / name).string();
  if (!cv::imwrite(path, mim.pixels)) throw Error(ErrorCode::IoFailure, "cannot write " + path);
  return path;
}

}  // namespace sentinel::flowviz
