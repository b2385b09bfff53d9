#pragma once

#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "sentinel/flowviz.hpp"

namespace sentinel::patching {

struct GridSpec {
  int rows = 1;  // n
  int cols = 1;  // m

  int cells() const { return rows * cols; }
  void validate() const;
  // Warning text when a ground cell would be at most one meter on a side.
  std::optional<std::string> ground_cell_warning(cv::Size roi, double px_per_meter) const;

  bool operator==(const GridSpec&) const = default;
};

// Half-open pixel rectangle [x0, x1) x [y0, y1) in ROI coordinates.
struct PatchRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  int area() const { return width() * height(); }
  cv::Rect cv() const { return {x0, y0, width(), height()}; }

  bool operator==(const PatchRect&) const = default;
};

struct MimPatch {
  int i = 0;
  int k = 0;  // 1..n*m, row-major
  PatchRect rect;
  cv::Mat pixels;
};

// Row-major, base cell floor(w/m) x floor(h/n); the last row and column take
// the remainder pixels.
PatchRect patch_rect(const GridSpec& grid, cv::Size dims, int k);

std::vector<MimPatch> split(const flowviz::MotionMap& mim, const GridSpec& grid);

}  // namespace sentinel::patching
