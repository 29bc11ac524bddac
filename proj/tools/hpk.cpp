// Command-line front end for the highway perception pipeline.
//
// Exit codes: 0 success, 1 validation/configuration error, 2 numeric error.

#include <CLI11.hpp>

#include <iostream>

#include "hpk/gradcheck.hpp"
#include "hpk/pipeline.hpp"

namespace {

hpk::RunConfig load_config_or_default(const std::string& path, std::uint64_t seed_override,
                                      bool has_seed) {
  hpk::RunConfig cfg = path.empty() ? hpk::default_run_config() : hpk::load_run_config(path);
  if (has_seed) cfg.seed = seed_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hpk: dense highway vehicle/lane detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 0;
  bool has_seed = false;
  app.add_option("--config", config_path, "run configuration JSON");
  app.add_option("--seed", seed, "override the configured seed")->each([&](const std::string&) {
    has_seed = true;
  });
  app.add_option("--out", out_dir, "output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene");

  auto* autolabel = app.add_subcommand("autolabel", "fit lane boundaries from a point cloud");
  std::string cloud_path, traj_path, manifest_path;
  autolabel->add_option("--cloud", cloud_path, "point cloud (csv or hpkc)")->required();
  autolabel->add_option("--trajectory", traj_path, "ego trajectory csv")->required();
  autolabel->add_option("--manifest", manifest_path, "optional manifest to re-label");

  auto* train = app.add_subcommand("train", "train the detector");
  std::string train_manifest, resume;
  train->add_option("--manifest", train_manifest, "training manifest")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");

  auto* infer = app.add_subcommand("infer", "run detection over a manifest");
  std::string infer_manifest, checkpoint;
  infer->add_option("--manifest", infer_manifest, "input manifest")->required();
  infer->add_option("--checkpoint", checkpoint, "weights file")->required();

  auto* eval = app.add_subcommand("eval", "score detections against ground truth");
  std::string eval_manifest, detections;
  eval->add_option("--manifest", eval_manifest, "ground-truth manifest")->required();
  eval->add_option("--detections", detections, "detections jsonl")->required();

  auto* bench = app.add_subcommand("bench", "measure per-stage inference timings");
  std::string bench_manifest, bench_checkpoint;
  int repeat = 3;
  bench->add_option("--manifest", bench_manifest, "input manifest")->required();
  bench->add_option("--checkpoint", bench_checkpoint, "weights file")->required();
  bench->add_option("--repeat", repeat, "passes over the manifest");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");

  CLI11_PARSE(app, argc, argv);

  try {
    const hpk::RunConfig cfg = load_config_or_default(config_path, seed, has_seed);
    if (synth->parsed()) {
      hpk::run_synth(cfg, cfg.seed, out_dir);
      std::cout << "synth: wrote scene to " << out_dir << "\n";
    } else if (autolabel->parsed()) {
      const auto boundaries = hpk::run_autolabel(cfg, cloud_path, traj_path, manifest_path, out_dir);
      std::cout << "autolabel: fitted " << boundaries.size() << " boundaries\n";
    } else if (train->parsed()) {
      const hpk::TrainResult res = hpk::run_train(cfg, train_manifest, out_dir, resume, &std::cout);
      std::cout << "train: " << res.steps << " steps, final loss "
                << (res.epoch_loss.empty() ? 0.0 : res.epoch_loss.back()) << ", checkpoint "
                << res.checkpoint << "\n";
    } else if (infer->parsed()) {
      const auto dets = hpk::run_infer(cfg, checkpoint, infer_manifest, out_dir);
      std::cout << "infer: " << dets.size() << " frames -> " << out_dir << "/detections.jsonl\n";
    } else if (eval->parsed()) {
      const hpk::EvalSummary sum = hpk::run_eval(cfg, detections, eval_manifest, out_dir);
      const hpk::Counts veh = sum.vehicles.global;
      const hpk::Counts ego = sum.lanes.range_total(15.0, 50.0, 2);
      std::cout << "eval: vehicle F1 " << veh.f1() << ", ego-lane F1 (15-50 m) " << ego.f1()
                << ", reports in " << out_dir << "\n";
    } else if (bench->parsed()) {
      const hpk::json j = hpk::run_bench(cfg, bench_checkpoint, bench_manifest, repeat, out_dir);
      std::cout << "bench: " << j["per_frame"]["mean_ms"] << " ms/frame ("
                << j["hz"] << " Hz) -> " << out_dir << "/bench.json\n";
    } else if (gradcheck->parsed()) {
      hpk::Network<double> net = hpk::make_network<double>(cfg.architecture, 3, cfg.seed);
      const int w = 2 * net.stride, h = 2 * net.stride;
      const hpk::GridGeometry geom = hpk::grid_geometry(net, w, h);
      std::mt19937_64 rng(cfg.seed);
      hpk::Tensor<double> input({3, h, w});
      input.fill_uniform(rng, 0.0, 1.0);
      std::vector<hpk::VehicleBox> boxes{{{8.0, 8.0, w - 8.0, h - 8.0}, 20.0, 1.0}};
      const hpk::GridLabel label = hpk::rasterize_labels(boxes, {}, geom);
      const double err = hpk::grad_check(net, input, label, geom);
      std::cout << "gradcheck: max relative error " << err << "\n";
      if (err > 1e-3) return 2;
    }
    return 0;
  } catch (const hpk::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const hpk::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
