#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace oracle {

namespace {

int px(const cv::Mat& img, int x, int y, int c) {
  if (x < 0 || y < 0 || x >= img.cols || y >= img.rows) return 0;
  return img.at<cv::Vec3b>(y, x)[c];
}

}  // namespace

cv::Mat2f block_match(const cv::Mat& prev, const cv::Mat& next, int radius, int block) {
  const int half = block / 2;
  cv::Mat2f out(prev.size());
  for (int y = 0; y < prev.rows; ++y) {
    for (int x = 0; x < prev.cols; ++x) {
      std::tuple<long, int, int, int> best{std::numeric_limits<long>::max(), 0, 0, 0};
      for (int v = -radius; v <= radius; ++v) {
        for (int u = -radius; u <= radius; ++u) {
          long sad = 0;
          for (int dy = -half; dy <= half; ++dy)
            for (int dx = -half; dx <= half; ++dx)
              for (int c = 0; c < 3; ++c)
                sad += std::abs(px(prev, x + dx, y + dy, c) - px(next, x + dx + u, y + dy + v, c));
          const std::tuple<long, int, int, int> cand{sad, std::abs(u) + std::abs(v), v, u};
          if (cand < best) best = cand;
        }
      }
      out(y, x) = cv::Vec2f(static_cast<float>(std::get<3>(best)), static_cast<float>(std::get<2>(best)));
    }
  }
  return out;
}

cv::Mat render_wheel(const cv::Mat2f& field) {
  // Anchor table: segment lengths and the channel each one ramps.
  const int lengths[6] = {15, 6, 4, 11, 13, 6};
  std::vector<std::vector<double>> wheel;
  for (int seg = 0; seg < 6; ++seg) {
    for (int k = 0; k < lengths[seg]; ++k) {
      const double up = std::floor(255.0 * k / lengths[seg]);
      const double down = 255.0 - up;
      switch (seg) {
        case 0: wheel.push_back({255, up, 0}); break;
        case 1: wheel.push_back({down, 255, 0}); break;
        case 2: wheel.push_back({0, 255, up}); break;
        case 3: wheel.push_back({0, down, 255}); break;
        case 4: wheel.push_back({up, 0, 255}); break;
        default: wheel.push_back({255, 0, down}); break;
      }
    }
  }
  const int n = static_cast<int>(wheel.size());

  double max_mag = 0.0;
  for (int y = 0; y < field.rows; ++y)
    for (int x = 0; x < field.cols; ++x) max_mag = std::max(max_mag, std::hypot(static_cast<double>(field(y, x)[0]), static_cast<double>(field(y, x)[1])));

  cv::Mat out(field.size(), CV_8UC3, cv::Scalar::all(255));
  if (max_mag == 0.0) return out;
  for (int y = 0; y < field.rows; ++y) {
    for (int x = 0; x < field.cols; ++x) {
      const double u = field(y, x)[0];
      const double v = field(y, x)[1];
      double turn = std::atan2(v, u) / (2.0 * M_PI);
      if (turn < 0) turn += 1.0;
      const double pos = turn * (n - 1);
      const int k0 = static_cast<int>(pos);
      const int k1 = (k0 + 1) % n;
      const double f = pos - k0;
      const double rad = std::hypot(u, v) / max_mag;
      cv::Vec3b bgr;
      for (int c = 0; c < 3; ++c) {
        const double hue = ((1 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
        const double val = 1.0 - rad * (1.0 - hue);
        bgr[2 - c] = static_cast<unsigned char>(std::lround(255.0 * val));
      }
      out.at<cv::Vec3b>(y, x) = bgr;
    }
  }
  return out;
}

bool center_in_rect(double cx, double cy, int x0, int y0, int x1, int y1) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      if (cx >= x && cx < x + 1 && cy >= y && cy < y + 1) return true;
  return false;
}

bool disk_hits_rect(double cx, double cy, double r, int x0, int y0, int x1, int y1) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r * r) return true;
    }
  return false;
}

int patch_label(const std::vector<Ped>& peds, double r, int x0, int y0, int x1, int y1) {
  int inside = 0;
  int touching = 0;
  for (const auto& p : peds) {
    if (!p.pushing) continue;
    if (center_in_rect(p.cx, p.cy, x0, y0, x1, y1)) ++inside;
    else if (disk_hits_rect(p.cx, p.cy, r, x0, y0, x1, y1)) ++touching;
  }
  if (inside > 0) return 1;
  return touching > 0 ? 2 : 0;
}

double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

cv::Mat box_blur(const cv::Mat& image, int r) {
  cv::Mat out(image.size(), image.type());
  const int ch = image.channels();
  const double area = (2.0 * r + 1) * (2.0 * r + 1);
  for (int y = 0; y < image.rows; ++y)
    for (int x = 0; x < image.cols; ++x)
      for (int c = 0; c < ch; ++c) {
        double sum = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = std::clamp(y + dy, 0, image.rows - 1);
            const int xx = std::clamp(x + dx, 0, image.cols - 1);
            sum += image.ptr<unsigned char>(yy)[xx * ch + c];
          }
        out.ptr<unsigned char>(y)[x * ch + c] = static_cast<unsigned char>(std::lround(sum / area));
      }
  return out;
}

int owning_cell(int x, int y, int w, int h, int rows, int cols) {
  const int col = std::min(x / (w / cols), cols - 1);
  const int row = std::min(y / (h / rows), rows - 1);
  return row * cols + col + 1;
}

}  // namespace oracle
