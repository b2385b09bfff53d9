// Command-line entry point: serve, run, eval, datasetgen.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "sentinel/config.hpp"
#include "sentinel/datasetgen.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/metrics.hpp"
#include "sentinel/pipeline.hpp"
#include "sentinel/server.hpp"

namespace {

using namespace sentinel;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::vector<int> parse_ints(const std::string& text, char sep) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(std::stoi(part));
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stod(part));
  return out;
}

int serve(const std::string& config_path) {
  auto config = service::load_config(config_path, service::sentinel_environment());
  auto pipeline = std::make_shared<service::Pipeline>(config);
  service::ControlServer server;
  const auto [host, port] = service::split_listen(config.listen);
  const int bound = server.bind(host, port);
  server.add_stream(pipeline);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start();
  spdlog::info("serving stream '{}' on {}:{}", pipeline->stream_id(), host, bound);
  pipeline->start();
  bool announced_end = false;
  while (!g_interrupted) {
    if (pipeline->finished() && !announced_end) {
      spdlog::info("stream ended ({}); still serving the archive, Ctrl-C to quit",
                   pipeline->end_reason().value_or("?"));
      announced_end = true;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  pipeline->stop();
  pipeline->wait();
  server.stop();
  return 0;
}

int run_offline(const std::string& config_path, bool realtime) {
  auto config = service::load_config(config_path, service::sentinel_environment());
  config.source.realtime = realtime;
  auto hub = std::make_shared<service::EventHub>(1 << 16);
  service::Pipeline pipeline(config, hub);
  auto sub = hub->subscribe();
  pipeline.start();
  while (!sub->finished()) {
    if (auto ev = sub->pop(std::chrono::milliseconds(200))) std::cout << ev->dump() << '\n' << std::flush;
  }
  pipeline.wait();
  const auto reason = pipeline.end_reason().value_or("");
  return reason.rfind("source_lost", 0) == 0 ? 3 : 0;
}

int eval(const std::string& predictions, const std::string& labels, double threshold, bool as_json) {
  std::ifstream pred(predictions);
  std::ifstream gt(labels);
  if (!pred) throw Error(ErrorCode::IoFailure, "cannot read " + predictions);
  if (!gt) throw Error(ErrorCode::IoFailure, "cannot read " + labels);
  const auto samples = metrics::join_predictions(pred, gt);
  const auto report = metrics::evaluate(samples, threshold);
  if (as_json) {
    std::cout << metrics::to_json(report).dump(2) << '\n';
  } else {
    std::cout << metrics::to_text(report);
  }
  return 0;
}

struct DatasetArgs {
  std::string video;
  std::string video_id;
  std::string trajectories;
  std::string groundtruth;
  std::string roi;
  std::string grid = "1x1";
  std::string offsets = "0,0.5,1,1.5";
  std::string downscale = "1";
  double interval_s = 2.0;
  double ped_radius_px = 12.0;
  std::uint64_t seed = 0;
  std::string out;
};

int datasetgen_cmd(const DatasetArgs& a) {
  const auto roi = parse_ints(a.roi, ',');
  if (roi.size() != 4) throw Error(ErrorCode::InvalidArgument, "--roi expects x0,y0,x1,y1");
  const auto grid = parse_ints(a.grid, 'x');
  if (grid.size() != 2) throw Error(ErrorCode::InvalidArgument, "--grid expects NxM");

  datasetgen::PassConfig pass;
  pass.video_id = a.video_id.empty() ? std::filesystem::path(a.video).stem().string() : a.video_id;
  pass.roi = {{roi[0], roi[1]}, {roi[2], roi[3]}};
  pass.grid = {grid[0], grid[1]};
  pass.offsets = parse_doubles(a.offsets);
  pass.interval_s = a.interval_s;

  ingest::FrameSource source;
  source.path_or_url = a.video;
  source.realtime = false;
  source.downscale = ingest::Rational::parse(a.downscale);
  source.validate();

  const auto trajectories = datasetgen::load_trajectories(a.trajectories);
  const auto truth = datasetgen::load_ground_truth(a.groundtruth);
  const datasetgen::SceneIndex scene(trajectories, truth);
  auto labeled = datasetgen::generate_dataset([&] { return ingest::open_source(source); }, pass, scene,
                                              a.ped_radius_px);
  std::size_t discarded = 0;
  for (const auto& p : labeled) discarded += p.label == datasetgen::PatchLabel::discarded ? 1 : 0;
  const auto splits = datasetgen::split_dataset(std::move(labeled), {}, a.seed);
  const auto written = datasetgen::export_dataset(splits, a.out);

  std::cout << "video,label,train,val,test\n";
  for (const auto& row : datasetgen::tabulate(splits)) {
    std::cout << row.video << ',' << datasetgen::to_string(row.label) << ',' << row.sizes.train << ','
              << row.sizes.val << ',' << row.sizes.test << '\n';
  }
  std::cout << "written " << written << " images, discarded " << discarded << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pushing-behavior detection service and tools"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve_cmd = app.add_subcommand("serve", "Run the live pipeline and the HTTP event/control server");
  serve_cmd->add_option("--config", config_path, "TOML configuration")->required()->check(CLI::ExistingFile);

  bool realtime = false;
  auto* run_cmd = app.add_subcommand("run", "Process a source once and print events as NDJSON");
  run_cmd->add_option("--config", config_path, "TOML configuration")->required()->check(CLI::ExistingFile);
  run_cmd->add_flag("--realtime", realtime, "Pace file replay at the native frame rate");

  std::string predictions;
  std::string labels;
  double threshold = 0.5;
  bool as_json = false;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against labels");
  eval_cmd->add_option("--predictions", predictions, "CSV id,delta")->required();
  eval_cmd->add_option("--labels", labels, "CSV id,label")->required();
  eval_cmd->add_option("--threshold", threshold, "Decision threshold on delta");
  eval_cmd->add_flag("--json", as_json, "Emit JSON instead of a table");

  DatasetArgs ds;
  auto* ds_cmd = app.add_subcommand("datasetgen", "Generate labeled MIM patches from a video");
  ds_cmd->add_option("--video", ds.video)->required()->check(CLI::ExistingFile);
  ds_cmd->add_option("--video-id", ds.video_id, "Name recorded in the manifest (default: file stem)");
  ds_cmd->add_option("--trajectories", ds.trajectories, "id frame x y [z] per line")->required();
  ds_cmd->add_option("--groundtruth", ds.groundtruth, "CSV id,frame,label")->required();
  ds_cmd->add_option("--roi", ds.roi, "x0,y0,x1,y1 in native pixels")->required();
  ds_cmd->add_option("--grid", ds.grid, "NxM (rows x cols)");
  ds_cmd->add_option("--offsets", ds.offsets, "Pass start offsets in seconds");
  ds_cmd->add_option("--interval", ds.interval_s, "Keyframe interval in seconds");
  ds_cmd->add_option("--downscale", ds.downscale, "Frame scale factor, e.g. 1/2");
  ds_cmd->add_option("--ped-radius", ds.ped_radius_px, "Pedestrian footprint radius in native pixels");
  ds_cmd->add_option("--seed", ds.seed, "Split seed");
  ds_cmd->add_option("--out", ds.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return serve(config_path);
    if (*run_cmd) return run_offline(config_path, realtime);
    if (*eval_cmd) return eval(predictions, labels, threshold, as_json);
    if (*ds_cmd) return datasetgen_cmd(ds);
  } catch (const ConfigError& e) {
    for (const auto& f : e.fields()) std::cerr << "config: " << f.field << ": " << f.reason << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
