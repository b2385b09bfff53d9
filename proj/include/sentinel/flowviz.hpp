#pragma once

#include <array>
#include <string>

#include <opencv2/core.hpp>

#include "sentinel/flow.hpp"

namespace sentinel::flowviz {

// theta in units of pi radians, range (-1, 1]; mag in pixels. mag_sq is
// u^2 + v^2 before the square root, used for normalization so that scaling a
// field by c leaves its rendering bit-identical.
struct PolarFlow {
  cv::Mat1d theta;
  cv::Mat1d mag;
  cv::Mat1d mag_sq;
};

PolarFlow to_polar(const flow::DisplacementField& field);

// Hue circle of interpolated RGB anchors, built from the standard segment
// lengths red-yellow, yellow-green, green-cyan, cyan-blue, blue-magenta,
// magenta-red.
class ColorWheel {
 public:
  static constexpr int RY = 15;
  static constexpr int YG = 6;
  static constexpr int GC = 4;
  static constexpr int CB = 11;
  static constexpr int BM = 13;
  static constexpr int MR = 6;
  static constexpr int kColumns = RY + YG + GC + CB + BM + MR;

  ColorWheel();

  int ncols() const { return kColumns; }
  // RGB in [0, 255].
  const cv::Vec3d& anchor(int index) const { return anchors_[static_cast<std::size_t>(index)]; }
  // Fully saturated RGB in [0, 1] for a direction; red at theta 0.
  cv::Vec3d hue(double theta) const;
  // RGB bytes for direction theta and normalized magnitude rad in [0, 1].
  cv::Vec3b color(double theta, double rad) const;

 private:
  std::array<cv::Vec3d, kColumns> anchors_;
};

// Color-wheel rendering of a displacement field (stored BGR like every
// other image here).
struct MotionMap {
  int i = 0;
  cv::Mat pixels;
};

constexpr double kStillSceneEpsilon = 1e-9;

// Magnitudes are normalized by the field's own maximum, so zero motion is
// white and the fastest vector is fully saturated.
MotionMap render_mim(const PolarFlow& polar, const ColorWheel& wheel, int ordinal);
MotionMap render_mim(const flow::DisplacementField& field, const ColorWheel& wheel = ColorWheel());

// Debug dump as mim_{i:06}.png under `dir`; returns the written path.
std::string write_mim_png(const MotionMap& mim, const std::string& dir);

}  // namespace sentinel::flowviz
