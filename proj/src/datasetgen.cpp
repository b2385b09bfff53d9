#include "sentinel/datasetgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "sentinel/errors.hpp"
#include "sentinel/flowviz.hpp"

namespace sentinel::datasetgen {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

}  // namespace

std::vector<TrajectoryRecord> parse_trajectories(std::istream& in) {
  std::vector<TrajectoryRecord> out;
  std::map<std::pair<int, std::int64_t>, int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    TrajectoryRecord r;
    if (!(fields >> r.pedestrian_id >> r.frame_index >> r.x >> r.y))
      throw Error(ErrorCode::ParseError, "trajectory line " + std::to_string(line_no) + " needs 'id frame x y [z]'");
    double z = 0.0;
    if (fields >> z) r.z = z;
    std::string rest;
    if (fields >> rest) throw Error(ErrorCode::ParseError, "trajectory line " + std::to_string(line_no) + " has extra fields");
    if (!seen.emplace(std::make_pair(r.pedestrian_id, r.frame_index), line_no).second)
      throw Error(ErrorCode::ParseError, "duplicate (id, frame) on trajectory line " + std::to_string(line_no));
    out.push_back(r);
  }
  return out;
}

std::vector<GroundTruthRecord> parse_ground_truth(std::istream& in) {
  std::vector<GroundTruthRecord> out;
  std::map<std::pair<int, std::int64_t>, int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (line_no == 1 && !cells.empty() && cells[0] == "id") continue;
    if (cells.size() != 3)
      throw Error(ErrorCode::ParseError, "ground truth line " + std::to_string(line_no) + " needs 'id,frame,label'");
    GroundTruthRecord r;
    try {
      r.pedestrian_id = std::stoi(cells[0]);
      r.frame_index = std::stoll(cells[1]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "ground truth line " + std::to_string(line_no) + " has a bad id or frame");
    }
    r.behavior = detector::parse_label(cells[2]);
    if (!seen.emplace(std::make_pair(r.pedestrian_id, r.frame_index), line_no).second)
      throw Error(ErrorCode::ParseError, "duplicate (id, frame) on ground truth line " + std::to_string(line_no));
    out.push_back(r);
  }
  return out;
}

std::vector<TrajectoryRecord> load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  return parse_trajectories(in);
}

std::vector<GroundTruthRecord> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  return parse_ground_truth(in);
}

std::string to_string(PatchLabel label) {
  switch (label) {
    case PatchLabel::pushing:
      return "pushing";
    case PatchLabel::non_pushing:
      return "non_pushing";
    case PatchLabel::discarded:
      return "discarded";
  }
  return "?";
}

bool center_inside(double cx, double cy, const patching::PatchRect& rect) {
  return cx >= rect.x0 && cx < rect.x1 && cy >= rect.y0 && cy < rect.y1;
}

bool disk_touches(double cx, double cy, double radius, const patching::PatchRect& rect) {
  if (rect.width() <= 0 || rect.height() <= 0 || radius < 0.0) return false;
  // The nearest pixel center along each axis is the one containing the
  // coordinate, clamped to the rect.
  const double px = std::clamp(std::floor(cx), static_cast<double>(rect.x0), static_cast<double>(rect.x1 - 1)) + 0.5;
  const double py = std::clamp(std::floor(cy), static_cast<double>(rect.y0), static_cast<double>(rect.y1 - 1)) + 0.5;
  const double dx = px - cx;
  const double dy = py - cy;
  return dx * dx + dy * dy <= radius * radius;
}

PatchLabel label_patch(const patching::PatchRect& rect, std::span<const Pedestrian> pedestrians, double radius) {
  bool partial = false;
  for (const auto& p : pedestrians) {
    if (!p.pushing) continue;
    if (center_inside(p.cx, p.cy, rect)) return PatchLabel::pushing;
    if (disk_touches(p.cx, p.cy, radius, rect)) partial = true;
  }
  return partial ? PatchLabel::discarded : PatchLabel::non_pushing;
}

SceneIndex::SceneIndex(std::span<const TrajectoryRecord> trajectories,
                       std::span<const GroundTruthRecord> ground_truth) {
  for (const auto& t : trajectories) by_frame_[t.frame_index].push_back(t);
  for (const auto& g : ground_truth) behavior_[{g.pedestrian_id, g.frame_index}] = g.behavior;
}

std::vector<Pedestrian> SceneIndex::pedestrians_at(std::int64_t frame, const RoiPlacement& placement) const {
  std::vector<Pedestrian> out;
  const auto it = by_frame_.find(frame);
  if (it == by_frame_.end()) return out;
  for (const auto& t : it->second) {
    const auto b = behavior_.find({t.pedestrian_id, frame});
    if (b == behavior_.end())
      throw Error(ErrorCode::MissingGroundTruth, "pedestrian " + std::to_string(t.pedestrian_id) +
                                                     " has no behavior at frame " + std::to_string(frame));
    out.push_back({t.pedestrian_id, placement.to_roi_x(t.x), placement.to_roi_y(t.y),
                   b->second == detector::Label::pushing});
  }
  return out;
}

PatchLabel label_patch(const patching::PatchRect& rect, std::int64_t frame, const SceneIndex& scene,
                       const RoiPlacement& placement, double radius_px) {
  const auto peds = scene.pedestrians_at(frame, placement);
  return label_patch(rect, peds, radius_px * placement.scale);
}

void validate_offsets(std::span<const double> offsets, double interval_s) {
  if (offsets.empty()) throw Error(ErrorCode::InvalidArgument, "at least one pass offset is required");
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    if (!(offsets[j] >= 0.0 && offsets[j] < interval_s))
      throw Error(ErrorCode::InvalidArgument, "pass offsets must lie in [0, interval)");
    if (j > 0 && !(offsets[j] > offsets[j - 1]))
      throw Error(ErrorCode::InvalidArgument, "pass offsets must be strictly increasing");
  }
}

RoiPlacement generate_passes(const StreamFactory& open, const PassConfig& config,
                             const std::function<void(PassPatch)>& sink) {
  validate_offsets(config.offsets, config.interval_s);
  config.grid.validate();
  RoiPlacement placement;
  std::shared_ptr<const flow::FlowEstimator> estimator;
  const flowviz::ColorWheel wheel;

  for (double offset : config.offsets) {
    auto stream = open();
    const auto factor = stream->downscale();
    const auto roi = config.roi.scaled(factor, stream->frame_size());
    roi.validate(stream->frame_size());
    placement = {roi.top_left, factor.value()};
    if (!estimator) estimator = flow::make_estimator(config.flow, {roi.width(), roi.height()});

    const auto keyframes = ingest::sample_keyframes(*stream, config.interval_s, offset);
    ingest::RoiCropper cropper(roi);
    std::optional<ingest::RoiKeyframe> prev;
    for (const auto& kf : keyframes) {
      auto cur = cropper.crop(kf);
      if (prev) {
        const auto field = flow::estimate_flow(*prev, cur, *estimator);
        const auto mim = flowviz::render_mim(field, wheel);
        for (auto& patch : patching::split(mim, config.grid)) {
          Provenance prov{config.video_id, offset, patch.i, patch.k, prev->frame_index};
          sink({std::move(patch), std::move(prov)});
        }
      }
      prev = std::move(cur);
    }
  }
  return placement;
}

std::vector<LabeledPatch> generate_dataset(const StreamFactory& open, const PassConfig& config, const SceneIndex& scene,
                                           double ped_radius_px) {
  std::vector<PassPatch> raw;
  const auto placement = generate_passes(open, config, [&](PassPatch p) { raw.push_back(std::move(p)); });
  std::vector<LabeledPatch> out;
  out.reserve(raw.size());
  for (auto& p : raw) {
    const auto label = label_patch(p.patch.rect, p.provenance.frame_index, scene, placement, ped_radius_px);
    out.push_back({std::move(p.patch.pixels), label, std::move(p.provenance)});
  }
  return out;
}

void SplitRatios::validate() const {
  if (train < 0.0 || val < 0.0 || test < 0.0 || std::abs(train + val + test - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "split ratios must be non-negative and sum to 1");
}

StratumSizes stratum_sizes(std::size_t n, const SplitRatios& ratios, bool tie_to_val) {
  ratios.validate();
  constexpr double kSlack = 1e-9;
  StratumSizes s;
  s.train = std::min(n, static_cast<std::size_t>(std::ceil(static_cast<double>(n) * ratios.train - kSlack)));
  const std::size_t rest = n - s.train;
  const double share = ratios.val + ratios.test;
  if (rest == 0 || share <= 0.0) {
    s.train = n;
    return s;
  }
  const double exact_val = static_cast<double>(rest) * ratios.val / share;
  const double whole = std::floor(exact_val + kSlack);
  const double frac = exact_val - whole;
  if (std::abs(frac - 0.5) < kSlack) {
    s.val = static_cast<std::size_t>(whole) + (tie_to_val ? 1 : 0);
  } else {
    s.val = static_cast<std::size_t>(std::llround(exact_val));
  }
  s.val = std::min(s.val, rest);
  s.test = rest - s.val;
  return s;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Unbiased draw from [0, bound), independent of the standard library's
// distribution implementations so splits are portable.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return x % bound;
}

}  // namespace

DatasetSplits split_dataset(std::vector<LabeledPatch> labeled, const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  std::map<std::pair<std::string, PatchLabel>, std::vector<LabeledPatch>> strata;
  bool any_pushing = false;
  bool any_non_pushing = false;
  for (auto& p : labeled) {
    if (p.label == PatchLabel::discarded) continue;
    any_pushing |= p.label == PatchLabel::pushing;
    any_non_pushing |= p.label == PatchLabel::non_pushing;
    strata[{p.provenance.video, p.label}].push_back(std::move(p));
  }
  if (!any_pushing || !any_non_pushing)
    throw Error(ErrorCode::EmptyClass, std::string("corpus has no ") + (any_pushing ? "non_pushing" : "pushing") +
                                           " samples");

  DatasetSplits out;
  for (auto& [key, items] : strata) {
    std::mt19937_64 rng(splitmix64(seed ^ fnv1a(key.first + "/" + to_string(key.second))));
    for (std::size_t j = items.size(); j > 1; --j) std::swap(items[j - 1], items[draw_below(rng, j)]);
    const auto sizes = stratum_sizes(items.size(), ratios, (rng() & 1U) != 0);
    auto it = std::make_move_iterator(items.begin());
    out.train.insert(out.train.end(), it, it + static_cast<std::ptrdiff_t>(sizes.train));
    it += static_cast<std::ptrdiff_t>(sizes.train);
    out.val.insert(out.val.end(), it, it + static_cast<std::ptrdiff_t>(sizes.val));
    it += static_cast<std::ptrdiff_t>(sizes.val);
    out.test.insert(out.test.end(), it, it + static_cast<std::ptrdiff_t>(sizes.test));
  }
  return out;
}

std::vector<SplitCountRow> tabulate(const DatasetSplits& splits) {
  std::map<std::pair<std::string, PatchLabel>, StratumSizes> table;
  for (const auto& p : splits.train) ++table[{p.provenance.video, p.label}].train;
  for (const auto& p : splits.val) ++table[{p.provenance.video, p.label}].val;
  for (const auto& p : splits.test) ++table[{p.provenance.video, p.label}].test;
  std::vector<SplitCountRow> rows;
  for (const auto& [key, sizes] : table) rows.push_back({key.first, key.second, sizes});
  return rows;
}

std::size_t export_dataset(const DatasetSplits& splits, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  const std::pair<const char*, const std::vector<LabeledPatch>*> sets[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out.string() + ": " + ec.message());
  for (const auto& [name, items] : sets) {
    fs::remove_all(out / name, ec);
    for (const char* cls : {"pushing", "non_pushing"}) {
      fs::create_directories(out / name / cls, ec);
      if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + (out / name / cls).string() + ": " + ec.message());
    }
  }

  std::ostringstream manifest;
  manifest << "split,label,file,video,pass_offset_s,i,k,frame_index\n";
  std::size_t written = 0;
  for (const auto& [name, items] : sets) {
    std::size_t counter[2] = {0, 0};
    for (const auto& p : *items) {
      if (p.label == PatchLabel::discarded) continue;
      const bool pushing = p.label == PatchLabel::pushing;
      char file[32];
      std::snprintf(file, sizeof(file), "img_%06zu.png", counter[pushing ? 1 : 0]++);
      const std::string rel = std::string(name) + "/" + to_string(p.label) + "/" + file;
      std::vector<std::uint8_t> png;
      if (p.image.empty() || !cv::imencode(".png", p.image, png))
        throw Error(ErrorCode::IoFailure, "cannot encode " + rel);
      std::ofstream f(out / rel, std::ios::binary | std::ios::trunc);
      f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
      if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + (out / rel).string());
      manifest << name << ',' << to_string(p.label) << ',' << rel << ',' << p.provenance.video << ','
               << p.provenance.pass_offset_s << ',' << p.provenance.i << ',' << p.provenance.k << ','
               << p.provenance.frame_index << '\n';
      ++written;
    }
  }
  std::ofstream m(out / "manifest.csv", std::ios::binary | std::ios::trunc);
  m << manifest.str();
  if (!m) throw Error(ErrorCode::IoFailure, "cannot write " + (out / "manifest.csv").string());
  return written;
}

}  // namespace sentinel::datasetgen
