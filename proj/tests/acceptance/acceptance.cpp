// Runs every primary acceptance criterion and prints one PASS/FAIL line each.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "oracles.hpp"
#include "sentinel/annotator.hpp"
#include "sentinel/datasetgen.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/flow.hpp"
#include "sentinel/flowviz.hpp"
#include "sentinel/metrics.hpp"
#include "sentinel/patching.hpp"
#include "sentinel/pipeline.hpp"
#include "test_support.hpp"

using namespace sentinel;
namespace ts = testing_support;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

cv::Mat shifted(const cv::Mat& img, int dx, int dy) {
  cv::Mat out;
  const cv::Mat m = (cv::Mat_<double>(2, 3) << 1, 0, dx, 0, 1, dy);
  cv::warpAffine(img, out, m, img.size(), cv::INTER_NEAREST, cv::BORDER_CONSTANT, cv::Scalar::all(0));
  return out;
}

Outcome flow_math() {
  Outcome o;
  const auto start = Clock::now();

  cv::Mat2f vectors(1, 6);
  vectors(0, 0) = {1, 0};
  vectors(0, 1) = {0, 1};
  vectors(0, 2) = {-1, 0};
  vectors(0, 3) = {0, -1};
  vectors(0, 4) = {3, 4};
  vectors(0, 5) = {-3, -4};
  const auto polar = flowviz::to_polar(flow::DisplacementField(1, vectors));
  const double want_theta[] = {0.0, 0.5, 1.0, -0.5, std::atan2(4.0, 3.0) / M_PI, std::atan2(-4.0, -3.0) / M_PI};
  const double want_mag[] = {1, 1, 1, 1, 5, 5};
  for (int x = 0; x < 6; ++x) {
    o.require(std::abs(polar.theta(0, x) - want_theta[x]) < 1e-12, "theta mismatch at case " + std::to_string(x));
    o.require(std::abs(polar.mag(0, x) - want_mag[x]) < 1e-12, "magnitude mismatch at case " + std::to_string(x));
  }

  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> dim(2, 32);
  std::uniform_int_distribution<int> rad(1, 3);
  std::uniform_int_distribution<int> blk(1, 2);
  std::uniform_int_distribution<int> shift(-3, 3);
  const int cases = 200;
  for (int c = 0; c < cases && o.pass; ++c) {
    const cv::Size size(dim(rng), dim(rng));
    const int r = rad(rng);
    const int block = 2 * blk(rng) + 1;
    const cv::Mat prev = ts::noise_image(size, rng);
    const cv::Mat next = c % 2 ? ts::noise_image(size, rng) : shifted(prev, shift(rng), shift(rng));
    const cv::Mat2f got = flow::reference_block_match(prev, next, r, block);
    const cv::Mat2f want = oracle::block_match(prev, next, r, block);
    o.require(cv::norm(got, want, cv::NORM_INF) == 0.0, "oracle disagreement on case " + std::to_string(c));
  }

  const cv::Mat base = ts::noise_image({48, 40}, rng);
  for (int dy = -3; dy <= 3 && o.pass; ++dy)
    for (int dx = -3; dx <= 3; ++dx) {
      const cv::Mat2f f = flow::reference_block_match(base, shifted(base, dx, dy), 4, 5);
      for (int y = 8; y < 32; ++y)
        for (int x = 8; x < 40; ++x)
          if (f(y, x) != cv::Vec2f(static_cast<float>(dx), static_cast<float>(dy)))
            o.require(false, "translation (" + std::to_string(dx) + "," + std::to_string(dy) + ") not recovered");
    }

  const double secs = elapsed(start);
  o.require(secs < 60.0, "runtime " + std::to_string(secs) + " s");
  if (o.pass) o.detail = std::to_string(cases) + " oracle cases, 49 translations, " + std::to_string(secs) + " s";
  return o;
}

Outcome color_wheel() {
  Outcome o;
  std::mt19937 rng(77);
  std::uniform_int_distribution<int> dim(1, 24);
  std::uniform_real_distribution<float> scale(0.01f, 50.0f);
  int worst = 0;
  for (int c = 0; c < 1000 && o.pass; ++c) {
    const cv::Size size(dim(rng), dim(rng));
    const float s = scale(rng);
    std::uniform_real_distribution<float> comp(-s, s);
    cv::Mat2f f(size);
    for (int y = 0; y < size.height; ++y)
      for (int x = 0; x < size.width; ++x) f(y, x) = cv::Vec2f(comp(rng), comp(rng));
    const auto mim = flowviz::render_mim(flow::DisplacementField(1, f));
    const int diff = static_cast<int>(cv::norm(mim.pixels, oracle::render_wheel(f), cv::NORM_INF));
    worst = std::max(worst, diff);
    o.require(diff <= 1, "field " + std::to_string(c) + " off by " + std::to_string(diff));
  }

  const auto white = flowviz::render_mim(flow::DisplacementField(1, cv::Mat2f(16, 16, cv::Vec2f(0, 0))));
  o.require(cv::countNonZero(white.pixels.reshape(1) != 255) == 0, "zero field is not white");

  std::uniform_int_distribution<int> quarter(-128, 128);
  for (int c = 0; c < 100 && o.pass; ++c) {
    cv::Mat2f f(12, 12);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) f(y, x) = cv::Vec2f(quarter(rng) / 4.0f, quarter(rng) / 4.0f);
    const auto ref = flowviz::render_mim(flow::DisplacementField(1, f));
    for (float k : {0.5f, 2.0f, 10.0f}) {
      const auto scaled = flowviz::render_mim(flow::DisplacementField(1, cv::Mat2f(f * k)));
      o.require(cv::norm(ref.pixels, scaled.pixels, cv::NORM_INF) == 0.0,
                "scale " + std::to_string(k) + " changes field " + std::to_string(c));
    }
  }
  if (o.pass) o.detail = "1000 fields, max deviation " + std::to_string(worst) + "/255; scale invariance exact";
  return o;
}

bool tiles_exactly(const patching::GridSpec& g, cv::Size dims, cv::Mat& scratch) {
  flowviz::MotionMap mim{1, cv::Mat(dims, CV_8UC3)};
  cv::randu(mim.pixels, 0, 255);
  const auto patches = patching::split(mim, g);
  if (patches.size() != static_cast<std::size_t>(g.cells())) return false;
  cv::Mat1i owner(dims, 0);
  scratch = cv::Mat(dims, CV_8UC3, cv::Scalar::all(0));
  for (const auto& p : patches) {
    for (int y = p.rect.y0; y < p.rect.y1; ++y)
      for (int x = p.rect.x0; x < p.rect.x1; ++x) {
        if (owner(y, x) != 0) return false;
        owner(y, x) = p.k;
      }
    p.pixels.copyTo(scratch(p.rect.cv()));
  }
  for (int y = 0; y < dims.height; ++y)
    for (int x = 0; x < dims.width; ++x)
      if (owner(y, x) != oracle::owning_cell(x, y, dims.width, dims.height, g.rows, g.cols)) return false;
  return cv::norm(scratch, mim.pixels, cv::NORM_INF) == 0.0;
}

Outcome patching_invariants() {
  Outcome o;
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> dim(6, 200);
  cv::Mat scratch;
  int checked = 0;
  for (int c = 0; c < 100 && o.pass; ++c) {
    const cv::Size dims(dim(rng), dim(rng));
    for (int n = 1; n <= 6; ++n)
      for (int m = 1; m <= 6; ++m) {
        ++checked;
        o.require(tiles_exactly({n, m}, dims, scratch),
                  std::to_string(n) + "x" + std::to_string(m) + " over " + std::to_string(dims.width) + "x" +
                      std::to_string(dims.height));
      }
  }
  const std::vector<std::pair<cv::Size, patching::GridSpec>> scenes{{{1008, 316}, {1, 3}},
                                                                    {{1014, 1050}, {3, 3}},
                                                                    {{1016, 740}, {2, 3}},
                                                                    {{1016, 740}, {2, 3}},
                                                                    {{1124, 430}, {2, 4}}};
  for (const auto& [dims, g] : scenes) {
    ++checked;
    o.require(tiles_exactly(g, dims, scratch), "scene configuration " + std::to_string(dims.width) + "x" +
                                                   std::to_string(dims.height));
  }
  if (o.pass) o.detail = std::to_string(checked) + " grid/dimension pairs tile and round-trip";
  return o;
}

Outcome dataset_generation(const std::filesystem::path& work) {
  Outcome o;
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> coord(-15.0, 90.0);
  std::uniform_real_distribution<double> radius(0.0, 15.0);
  std::uniform_int_distribution<int> count(0, 6);
  std::uniform_int_distribution<int> corner(0, 40);
  std::uniform_int_distribution<int> extent(1, 40);
  std::bernoulli_distribution pushing(0.5);
  int tally[3] = {0, 0, 0};
  for (int c = 0; c < 500 && o.pass; ++c) {
    const int x0 = corner(rng);
    const int y0 = corner(rng);
    const patching::PatchRect rect{x0, y0, x0 + extent(rng), y0 + extent(rng)};
    const double r = radius(rng);
    std::vector<datasetgen::Pedestrian> peds;
    std::vector<oracle::Ped> oracle_peds;
    const int n = count(rng);
    for (int j = 0; j < n; ++j) {
      const double cx = coord(rng);
      const double cy = coord(rng);
      const bool p = pushing(rng);
      peds.push_back({j, cx, cy, p});
      oracle_peds.push_back({cx, cy, p});
    }
    const int want = oracle::patch_label(oracle_peds, r, rect.x0, rect.y0, rect.x1, rect.y1);
    const auto got = datasetgen::label_patch(rect, peds, r);
    const int got_code = got == datasetgen::PatchLabel::pushing ? 1 : got == datasetgen::PatchLabel::discarded ? 2 : 0;
    ++tally[want];
    o.require(got_code == want, "label mismatch on configuration " + std::to_string(c));
  }

  const auto splits = datasetgen::split_dataset(ts::reference_corpus(), {}, 2023);
  const auto rows = datasetgen::tabulate(splits);
  for (const auto& want : ts::reference_split_table()) {
    bool found = false;
    for (const auto& row : rows) {
      if (row.video != want.video || row.label != want.label) continue;
      found = true;
      auto close = [](std::size_t a, std::size_t b) { return (a > b ? a - b : b - a) <= 1; };
      o.require(close(row.sizes.train, want.train) && close(row.sizes.val, want.val) && close(row.sizes.test, want.test),
                "stratum " + want.video + "/" + datasetgen::to_string(want.label) + " is " +
                    std::to_string(row.sizes.train) + "/" + std::to_string(row.sizes.val) + "/" +
                    std::to_string(row.sizes.test));
    }
    o.require(found, "stratum " + want.video + " missing");
  }
  const std::string split_line = std::to_string(splits.train.size()) + "/" + std::to_string(splits.val.size()) + "/" +
                                 std::to_string(splits.test.size());

  // Full regeneration from a replayed video, twice.
  const cv::Size size(120, 80);
  const auto video = work / "dataset.mkv";
  ts::write_video(video, "FFV1", 25.0, size, 250, [&](std::int64_t f) { return ts::moving_scene(size, f); });
  std::vector<datasetgen::TrajectoryRecord> traj;
  std::vector<datasetgen::GroundTruthRecord> gt;
  for (std::int64_t f = 0; f < 250; ++f) {
    traj.push_back({1, f, 20.0 + 0.2 * static_cast<double>(f), 20.0, std::nullopt});
    traj.push_back({2, f, 90.0, 60.0 - 0.1 * static_cast<double>(f), std::nullopt});
    gt.push_back({1, f, detector::Label::pushing});
    gt.push_back({2, f, f % 100 < 50 ? detector::Label::pushing : detector::Label::non_pushing});
  }
  const datasetgen::SceneIndex scene(traj, gt);
  datasetgen::PassConfig pass;
  pass.video_id = "synthetic";
  pass.roi = {{0, 0}, {size.width, size.height}};
  pass.grid = {2, 3};
  pass.flow.search_radius = 3;
  pass.flow.block_size = 5;
  auto generate = [&](const std::filesystem::path& out) {
    ingest::FrameSource src;
    src.path_or_url = video.string();
    src.realtime = false;
    src.downscale = {1, 1};
    auto labeled = datasetgen::generate_dataset([&] { return ingest::open_source(src); }, pass, scene, 6.0);
    return datasetgen::export_dataset(datasetgen::split_dataset(std::move(labeled), {}, 11), out);
  };
  const auto written_a = generate(work / "export_a");
  const auto written_b = generate(work / "export_b");
  const auto hash_a = ts::sha256_tree(work / "export_a");
  const auto hash_b = ts::sha256_tree(work / "export_b");
  o.require(written_a == written_b && written_a > 0, "regeneration wrote different counts");
  o.require(hash_a == hash_b, "regenerated export differs");
  if (o.pass)
    o.detail = "500 label configurations (" + std::to_string(tally[0]) + " NP/" + std::to_string(tally[1]) + " P/" +
               std::to_string(tally[2]) + " discarded); 3941 -> " + split_line + "; export sha256 " +
               hash_a.substr(0, 12) + " twice";
  return o;
}

Outcome metrics_suite() {
  Outcome o;
  const metrics::ConfusionCounts c{8, 6, 2, 4};
  const auto report = metrics::report_from_counts(c);
  auto near = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };
  o.require(near(report.accuracy, 0.700, 5e-4), "accuracy");
  o.require(near(report.pushing.precision, 0.8, 5e-4), "precision P");
  o.require(near(report.pushing.recall, 0.6667, 5e-4), "recall P");
  o.require(near(report.pushing.f1, 0.7273, 5e-4), "F1 P");
  o.require(near(report.non_pushing.precision, 0.6, 5e-4), "precision NP");
  o.require(near(report.non_pushing.recall, 0.75, 5e-4), "recall NP");
  o.require(near(report.non_pushing.f1, 0.6667, 5e-4), "F1 NP");
  o.require(near(report.macro_f1, 0.6970, 5e-4), "macro F1");

  std::mt19937 rng(31);
  std::uniform_int_distribution<int> size(2, 120);
  std::uniform_int_distribution<int> coarse(0, 20);
  std::uniform_real_distribution<double> fine(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int s = 0; s < 200 && o.pass; ++s) {
    std::vector<metrics::ScoredSample> samples;
    std::vector<double> pos;
    std::vector<double> neg;
    const int n = size(rng);
    for (int j = 0; j < n; ++j) {
      const double d = s % 3 == 0 ? coarse(rng) / 20.0 : fine(rng);
      const bool p = j == 0 ? true : j == 1 ? false : coin(rng);
      samples.push_back({d, p ? detector::Label::pushing : detector::Label::non_pushing});
      (p ? pos : neg).push_back(d);
    }
    const double diff = std::abs(metrics::roc_auc(samples).auc - oracle::pairwise_auc(pos, neg));
    worst = std::max(worst, diff);
    o.require(diff <= 1e-9, "AUC off on set " + std::to_string(s));
  }
  std::vector<metrics::ScoredSample> ties;
  for (int j = 0; j < 10; ++j) ties.push_back({0.42, j % 3 ? detector::Label::pushing : detector::Label::non_pushing});
  o.require(metrics::roc_auc(ties).auc == 0.5, "all-tie AUC is not 0.5");
  if (o.pass) {
    std::ostringstream d;
    d << "acc " << report.accuracy << ", macro F1 " << report.macro_f1 << ", 200 AUC sets max err " << worst;
    o.detail = d.str();
  }
  return o;
}

service::PipelineConfig latency_config(const std::filesystem::path& video) {
  service::PipelineConfig c;
  c.source.source_id = "scene110";
  c.source.path_or_url = video.string();
  c.source.downscale = {1, 1};
  c.source.realtime = true;
  // Native 1920x1440 ROI (375,549)-(1383,865) at half resolution.
  c.roi = {{187, 274}, {691, 432}};
  c.grid = {1, 3};
  c.interval_s = 2.0;
  c.segment_deadline_s = 2.0;
  return c;
}

Outcome latency_budget(const std::filesystem::path& work) {
  Outcome o;
  const cv::Size size(960, 720);
  const double fps = 5.0;
  const int segments = 20;
  const auto video = work / "latency.avi";
  ts::write_video(video, "MJPG", fps, size, static_cast<int>(fps * 2.0 * (segments + 1)) + 1,
                  [&](std::int64_t f) { return ts::moving_scene(size, f); });

  const auto results = service::run_pipeline(latency_config(video));
  std::vector<double> processing;
  double worst_latency = 0.0;
  for (const auto& r : results) {
    o.require(r.status == service::SegmentStatus::ok, "segment " + std::to_string(r.i) + " not ok: " + r.error);
    processing.push_back(r.processing_s);
    worst_latency = std::max(worst_latency, r.latency_s);
  }
  o.require(static_cast<int>(results.size()) >= segments, "only " + std::to_string(results.size()) + " segments");
  const auto stats = metrics::summarize(processing);
  o.require(stats.mean < 2.0, "mean processing " + std::to_string(stats.mean) + " s");
  o.require(worst_latency <= 4.0, "mask emitted " + std::to_string(worst_latency) + " s after segment start");

  // Fault injection: one segment overruns the deadline, the next recovers.
  service::PipelineHooks hooks;
  hooks.before_stage = [](int i, service::Stage stage) {
    if (i == 2 && stage == service::Stage::detect) std::this_thread::sleep_for(std::chrono::milliseconds(2500));
  };
  const auto fault_cfg = latency_config(video);
  service::Pipeline faulty(fault_cfg, ingest::open_source(fault_cfg.source), nullptr, hooks);
  faulty.start();
  // Four segments are enough; stop early to keep the run short.
  while (faulty.results().size() < 4 && !faulty.finished()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  faulty.stop();
  faulty.wait();
  const auto fr = faulty.results();
  o.require(fr.size() >= 3, "fault run produced too few segments");
  if (fr.size() >= 3) {
    o.require(fr[1].i == 2 && fr[1].status == service::SegmentStatus::dropped_deadline && !fr[1].mask,
              "overrun segment was not dropped");
    o.require(fr[2].status == service::SegmentStatus::ok, "segment after the overrun failed");
  }
  if (o.pass) {
    std::ostringstream d;
    d << results.size() << " segments, mean " << stats.mean << " s, max " << stats.max << " s, worst emission "
      << worst_latency << " s after segment start; injected 2.5 s overrun dropped";
    o.detail = d.str();
  }
  return o;
}

Outcome determinism(const std::filesystem::path& work) {
  Outcome o;
  const cv::Size size(320, 240);
  const auto video = work / "determinism.mkv";
  ts::write_video(video, "FFV1", 25.0, size, 300, [&](std::int64_t f) { return ts::moving_scene(size, f); });

  auto run = [&](const std::string& name) {
    const auto root = work / name;
    std::filesystem::create_directories(root);
    service::PipelineConfig c;
    c.source.source_id = "det";
    c.source.path_or_url = video.string();
    c.source.realtime = false;
    c.source.downscale = {1, 1};
    c.roi = {{20, 30}, {300, 210}};
    c.grid = {2, 3};
    c.classifier.threshold = 0.05;
    c.segment_deadline_s = 60.0;
    c.store.kind = service::StoreKind::local;
    c.store.root = root;
    auto results = service::run_pipeline(c);
    std::vector<annotator::AnnotationMask> masks;
    for (const auto& r : results) masks.push_back(r.mask.value_or(annotator::AnnotationMask{}));
    std::vector<std::string> sidecars;
    annotator::LocalDirectoryStore store(root);
    for (const auto& key : store.list("det/"))
      if (key.ends_with(".json")) {
        const auto bytes = store.get(key);
        sidecars.emplace_back(bytes.begin(), bytes.end());
      }
    return std::make_pair(masks, sidecars);
  };
  const auto [masks_a, side_a] = run("archive_a");
  const auto [masks_b, side_b] = run("archive_b");
  o.require(masks_a.size() == 5, "expected 5 segments, got " + std::to_string(masks_a.size()));
  o.require(masks_a == masks_b, "mask sequences differ");
  o.require(side_a.size() == masks_a.size(), "sidecar count differs from segment count");
  o.require(side_a == side_b, "archived sidecars differ");
  int pushing = 0;
  for (const auto& m : masks_a) pushing += m.pushing_count();
  if (o.pass)
    o.detail = std::to_string(masks_a.size()) + " masks (" + std::to_string(pushing) +
               " pushing cells) and sidecars identical across runs";
  return o;
}

}  // namespace

int main() {
  ts::TempDir work;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"flow-math", flow_math},
      {"color-wheel", color_wheel},
      {"patching", patching_invariants},
      {"dataset-generation", [&] { return dataset_generation(work.path()); }},
      {"metrics", metrics_suite},
      {"latency-budget", [&] { return latency_budget(work.path()); }},
      {"determinism", [&] { return determinism(work.path()); }},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
