#pragma once

// Deliberately naive reference implementations used to check the library.
// None of them share code with src/.

#include <cstdint>
#include <vector>

#include <opencv2/core.hpp>

namespace oracle {

// Exhaustive per-pixel SAD search with zero padding. Ties go to the smallest
// |u|+|v|, then smallest v, then smallest u.
cv::Mat2f block_match(const cv::Mat& prev, const cv::Mat& next, int radius, int block);

// Middlebury-style wheel computed straight from (u, v); returns BGR bytes.
cv::Mat render_wheel(const cv::Mat2f& field);

// Pixel-enumeration answers for disk/rect geometry.
bool center_in_rect(double cx, double cy, int x0, int y0, int x1, int y1);
bool disk_hits_rect(double cx, double cy, double r, int x0, int y0, int x1, int y1);

struct Ped {
  double cx;
  double cy;
  bool pushing;
};

// 0 non_pushing, 1 pushing, 2 discarded.
int patch_label(const std::vector<Ped>& peds, double r, int x0, int y0, int x1, int y1);

// P(pos > neg) + 0.5 P(tie) over all pairs.
double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg);

// Direct (2r+1)^2 box average with clamped coordinates, rounded.
cv::Mat box_blur(const cv::Mat& image, int r);

// Which grid cell (1-based, row-major) owns pixel (x, y).
int owning_cell(int x, int y, int w, int h, int rows, int cols);

}  // namespace oracle
