#include "sentinel/patching.hpp"

#include <sstream>

#include "sentinel/errors.hpp"

namespace sentinel::patching {

void GridSpec::validate() const {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidArgument, "grid rows and cols must be >= 1");
}

std::optional<std::string> GridSpec::ground_cell_warning(cv::Size roi, double px_per_meter) const {
  if (!(px_per_meter > 0.0)) return std::nullopt;
  const double cell_w = roi.width / static_cast<double>(cols) / px_per_meter;
  const double cell_h = roi.height / static_cast<double>(rows) / px_per_meter;
  if (cell_w > 1.0 && cell_h > 1.0) return std::nullopt;
  std::ostringstream msg;
  msg << "grid " << rows << "x" << cols << " gives ground cells of " << cell_w << " m x " << cell_h
      << " m; cells should exceed 1 m per side";
  return msg.str();
}

namespace {
void check_fits(const GridSpec& grid, cv::Size dims) {
  grid.validate();
  if (dims.width / grid.cols == 0 || dims.height / grid.rows == 0) {
    throw Error(ErrorCode::GridLargerThanImage, "grid " + std::to_string(grid.rows) + "x" +
                                                    std::to_string(grid.cols) + " does not fit " +
                                                    std::to_string(dims.width) + "x" + std::to_string(dims.height));
  }
}
}  // namespace

PatchRect patch_rect(const GridSpec& grid, cv::Size dims, int k) {
  check_fits(grid, dims);
  if (k < 1 || k > grid.cells())
    throw Error(ErrorCode::IndexOutOfRange,
                "patch " + std::to_string(k) + " outside 1.." + std::to_string(grid.cells()));
  const int base_w = dims.width / grid.cols;
  const int base_h = dims.height / grid.rows;
  const int row = (k - 1) / grid.cols;
  const int col = (k - 1) % grid.cols;
  PatchRect r;
  r.x0 = col * base_w;
  r.y0 = row * base_h;
  r.x1 = col == grid.cols - 1 ? dims.width : r.x0 + base_w;
  r.y1 = row == grid.rows - 1 ? dims.height : r.y0 + base_h;
  return r;
}

std::vector<MimPatch> split(const flowviz::MotionMap& mim, const GridSpec& grid) {
  if (mim.pixels.empty()) throw Error(ErrorCode::InvalidArgument, "motion map is empty");
  check_fits(grid, mim.pixels.size());
  std::vector<MimPatch> patches;
  patches.reserve(static_cast<std::size_t>(grid.cells()));
  for (int k = 1; k <= grid.cells(); ++k) {
    const PatchRect rect = patch_rect(grid, mim.pixels.size(), k);
    patches.push_back({mim.i, k, rect, mim.pixels(rect.cv()).clone()});
  }
  return patches;
}

}  // namespace sentinel::patching
