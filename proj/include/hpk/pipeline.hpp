#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <thread>

#include "hpk/config.hpp"
#include "hpk/postprocess.hpp"

namespace hpk {

inline int worker_count(const RunConfig& cfg) {
  if (const char* env = std::getenv("HPK_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return cfg.workers;
}

// Index-ordered parallel loop; results must be written to per-index slots so
// the outcome is independent of scheduling.
template <typename F>
void parallel_for(int n, int workers, F&& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::scoped_lock lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct StageStats {
  double mean = 0, median = 0, p95 = 0;
};

inline StageStats stage_stats(std::vector<double> ms) {
  StageStats s;
  if (ms.empty()) return s;
  double sum = 0;
  for (double v : ms) sum += v;
  s.mean = sum / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  s.median = ms[ms.size() / 2];
  s.p95 = ms[std::min(ms.size() - 1, static_cast<std::size_t>(0.95 * static_cast<double>(ms.size())))];
  return s;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xbf58476d1ce4e5b9ULL);
  h ^= h >> 31;
  h *= 0x94d049bb133111ebULL;
  return h ^ (h >> 29);
}

}  // namespace detail

// --- synth -------------------------------------------------------------------

// Renders a synthetic scene to disk: frames, manifest, point cloud, ego
// trajectory and the exact 3D boundary truth.
inline SynthScene run_synth(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const SynthScene scene = synth_scene(cfg.synth, cfg.camera, cfg.image_w, cfg.image_h, seed);
  fs::create_directories(fs::path(out_dir) / "images");

  std::mt19937_64 radar_rng(seed ^ 0x7ada7u);
  std::vector<FrameRecord> records;
  for (std::size_t f = 0; f < scene.images.size(); ++f) {
    char name[64];
    std::snprintf(name, sizeof(name), "images/frame_%04zu.ppm", f);
    write_ppm((fs::path(out_dir) / name).string(), scene.images[f]);
    FrameRecord rec;
    rec.frame_id = static_cast<int>(f);
    rec.image = name;
    rec.pose_t = scene.frame_poses[f].t;
    rec.vehicles = scene.truth[f].vehicles;
    rec.lanes = scene.truth[f].lanes;
    // Radar-style returns: one per visible vehicle, with occasional misses.
    for (std::size_t v = 0; v < rec.vehicles.size(); ++v) {
      if ((f + v) % 5 == 4) continue;
      const Vec2 c = rec.vehicles[v].rect.center();
      rec.radar.push_back({{c.x + uniform(radar_rng, -2.0, 2.0), c.y + uniform(radar_rng, -2.0, 2.0)},
                           rec.vehicles[v].depth + uniform(radar_rng, -0.5, 0.5)});
    }
    records.push_back(std::move(rec));
  }
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), records);
  write_cloud_csv((fs::path(out_dir) / "cloud.csv").string(), scene.cloud);
  write_trajectory_csv((fs::path(out_dir) / "trajectory.csv").string(), scene.trajectory);
  std::ofstream os((fs::path(out_dir) / "boundaries_truth.json").string());
  os << boundaries_to_json(scene.boundaries).dump(2) << "\n";
  return scene;
}

// --- autolabel ----------------------------------------------------------------

inline std::vector<BoundaryPolyline> run_autolabel(const RunConfig& cfg,
                                                   const std::string& cloud_path,
                                                   const std::string& traj_path,
                                                   const std::string& manifest_in,
                                                   const std::string& out_dir) {
  namespace fs = std::filesystem;
  const std::vector<LidarPoint> cloud = load_cloud(cloud_path);
  const Trajectory traj = load_trajectory(traj_path);
  const FilteredPoints filtered = filter_points(cloud, traj, cfg.autolabel.filter);
  const BoundaryPolyline left =
      fit_boundary(filtered.left, traj, cfg.autolabel.knot_spacing_m, "left");
  const BoundaryPolyline right =
      fit_boundary(filtered.right, traj, cfg.autolabel.knot_spacing_m, "right");
  std::vector<BoundaryPolyline> boundaries = replicate_boundaries(
      left, right, cfg.autolabel.lanes_left, cfg.autolabel.lanes_right, traj);
  if (!cfg.autolabel.corrections.empty())
    apply_corrections(boundaries, load_corrections(cfg.autolabel.corrections));

  fs::create_directories(out_dir);
  std::ofstream os((fs::path(out_dir) / "boundaries.json").string());
  os << boundaries_to_json(boundaries).dump(2) << "\n";

  if (!manifest_in.empty()) {
    std::vector<FrameRecord> records = load_manifest(manifest_in);
    for (FrameRecord& rec : records) {
      if (rec.pose_t < 0) throw ConfigError("manifest frame lacks pose_t; cannot project labels");
      const Pose pose = pose_at_time(traj, rec.pose_t);
      const FrameTruth truth =
          project_labels(boundaries, {}, pose, cfg.camera, cfg.image_w, cfg.image_h);
      rec.lanes = truth.lanes;
    }
    // Keep image paths valid from the new location by copying them over.
    const fs::path src_base = fs::path(manifest_in).parent_path();
    for (const FrameRecord& rec : records) {
      const fs::path dst = fs::path(out_dir) / rec.image;
      fs::create_directories(dst.parent_path());
      fs::copy_file(src_base / rec.image, dst, fs::copy_options::overwrite_existing);
    }
    write_manifest((fs::path(out_dir) / "autolabel_manifest.jsonl").string(), records);
  }
  return boundaries;
}

// --- training -------------------------------------------------------------------

struct TrainResult {
  std::vector<double> epoch_loss;
  long steps = 0;
  std::string checkpoint;
};

namespace detail {

// Deterministic augmentation pick: 0 = raw, 1 = translation, 2..8 = the seven
// perspective presets.
inline int augment_variant(std::uint64_t seed, int epoch, int frame) {
  return static_cast<int>(mix_seed(seed, static_cast<std::uint64_t>(epoch) + 1,
                                   static_cast<std::uint64_t>(frame) + 1) %
                          9);
}

}  // namespace detail

inline TrainResult run_train(const RunConfig& cfg, const std::string& manifest_path,
                             const std::string& out_dir, const std::string& resume = "",
                             std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  Network<float> net = make_network<float>(cfg.architecture, 3, cfg.seed);
  const GridGeometry geom = grid_geometry(net, cfg.image_w, cfg.image_h);

  const std::vector<FrameRecord> records = load_manifest(manifest_path);
  if (records.empty()) throw ConfigError("training manifest is empty");
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<ImageU8> images;
  for (const FrameRecord& rec : records) {
    ImageU8 img = read_ppm((base / rec.image).string());
    if (img.w != cfg.image_w || img.h != cfg.image_h)
      throw ConfigError("image size mismatch for " + rec.image);
    images.push_back(std::move(img));
  }

  OptimState<float> opt;
  if (!resume.empty()) load_network(resume, net, &opt);
  MomentumSchedule schedule;
  schedule.enabled = cfg.train.momentum_schedule;
  schedule.mu_max = cfg.train.momentum_max;
  schedule.ramp_steps = cfg.train.momentum_ramp_steps;
  schedule.fixed = cfg.train.momentum_fixed;

  auto params = parameters(net);
  const int n = static_cast<int>(records.size());
  const int workers = worker_count(cfg);
  TrainResult result;
  result.steps = opt.step_count;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    opt.learning_rate = lr_at_epoch(cfg.train.lr, epoch, cfg.train.lr_decay,
                                    cfg.train.lr_decay_every);
    double epoch_loss = 0;
    int epoch_steps = 0;
    for (int start = 0; start < n; start += cfg.train.batch_size) {
      const int batch_n = std::min(cfg.train.batch_size, n - start);
      std::vector<Gradients<float>> item_grads(static_cast<std::size_t>(batch_n));
      std::vector<double> item_loss(static_cast<std::size_t>(batch_n), 0.0);

      parallel_for(batch_n, workers, [&](int bi) {
        const int fi = start + bi;
        ImageU8 img = images[static_cast<std::size_t>(fi)];
        FrameRecord rec = records[static_cast<std::size_t>(fi)];
        if (cfg.train.augment == "all") {
          const int variant = detail::augment_variant(cfg.train.seed, epoch, fi);
          if (variant == 1) {
            std::tie(img, rec) =
                augment(img, rec, AugmentMode::translation, 0,
                        detail::mix_seed(cfg.train.seed, static_cast<std::uint64_t>(epoch),
                                         static_cast<std::uint64_t>(fi)),
                        cfg.augment_params);
          } else if (variant >= 2) {
            std::tie(img, rec) =
                augment(img, rec, AugmentMode::perspective, variant - 2, 0, cfg.augment_params);
          }
        }
        const GridLabel label =
            rasterize_labels(rec.vehicles, rec.lanes, geom, cfg.thresholds.lane_halfwidth_px);
        const Tensor<float> input = image_to_tensor<float>(img);
        NetCache<float> cache;
        HeadOut<float> heads;
        forward_detect(net, input, geom, &cache, &heads);
        Tensor<float> dcls, dveh, dlane;
        item_loss[static_cast<std::size_t>(bi)] =
            detection_loss_grad(heads, label, geom, cfg.train.lambda_reg,
                                cfg.train.class_weights.data(), dcls, dveh, dlane);
        backward_network(net, cache, dcls, dveh, dlane,
                         item_grads[static_cast<std::size_t>(bi)]);
      });

      Gradients<float> batch_grads;
      for (int bi = 0; bi < batch_n; ++bi)
        batch_grads.add_scaled(item_grads[static_cast<std::size_t>(bi)], 1.0 / batch_n);
      if (cfg.train.clip_norm > 0) {
        double norm2 = 0;
        for (const auto& g : batch_grads.g)
          for (float v : g) norm2 += static_cast<double>(v) * v;
        const double norm = std::sqrt(norm2);
        if (norm > cfg.train.clip_norm) {
          const float scale = static_cast<float>(cfg.train.clip_norm / norm);
          for (auto& g : batch_grads.g)
            for (float& v : g) v *= scale;
        }
      }
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        params[pi].tensor->ensure_grad();
        std::copy(batch_grads.g[pi].begin(), batch_grads.g[pi].end(),
                  params[pi].tensor->grad.begin());
      }
      opt.momentum = schedule.at(opt.step_count);
      sgd_momentum_step(params, opt);
      for (int bi = 0; bi < batch_n; ++bi) epoch_loss += item_loss[static_cast<std::size_t>(bi)];
      ++epoch_steps;
    }
    epoch_loss /= static_cast<double>(n);
    result.epoch_loss.push_back(epoch_loss);
    if (log)
      *log << "epoch " << epoch << " loss " << epoch_loss << " lr " << opt.learning_rate
           << " mu " << opt.momentum << "\n";
  }
  result.steps = opt.step_count;

  fs::create_directories(out_dir);
  result.checkpoint = (fs::path(out_dir) / "checkpoint.hpkw").string();
  save_network(result.checkpoint, net, &opt);
  json log_json{{"epoch_loss", result.epoch_loss}, {"steps", result.steps}};
  std::ofstream os((fs::path(out_dir) / "train_log.json").string());
  os << log_json.dump(2) << "\n";
  return result;
}

// --- inference -------------------------------------------------------------------

inline FrameDetections infer_frame(const Network<float>& net, const GridGeometry& geom,
                                   const RunConfig& cfg, const Tensor<float>& input,
                                   int frame_id) {
  const DetectionGrid grid = forward_detect(net, input, geom);
  const Candidates cands = extract_candidates(grid, cfg.thresholds.activation);
  FrameDetections det;
  det.frame_id = frame_id;
  det.vehicles = merge_boxes(cands.vehicles, cfg.thresholds.merge);
  const std::vector<Lane> lanes =
      cluster_lanes(cands.lanes, cfg.camera, cfg.thresholds.lane_cluster);
  for (const Lane& lane : lanes) det.lanes.push_back({lane.id, lane.knots_px});
  return det;
}

inline std::vector<FrameDetections> run_infer(const RunConfig& cfg,
                                              const std::string& checkpoint,
                                              const std::string& manifest_path,
                                              const std::string& out_dir) {
  namespace fs = std::filesystem;
  Network<float> net = make_network<float>(cfg.architecture, 3, cfg.seed);
  load_network(checkpoint, net);
  const GridGeometry geom = grid_geometry(net, cfg.image_w, cfg.image_h);
  const std::vector<FrameRecord> records = load_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  std::vector<FrameDetections> dets(records.size());
  parallel_for(static_cast<int>(records.size()), worker_count(cfg), [&](int i) {
    const ImageU8 img = read_ppm((base / records[static_cast<std::size_t>(i)].image).string());
    if (img.w != cfg.image_w || img.h != cfg.image_h)
      throw ConfigError("image size mismatch for " + records[static_cast<std::size_t>(i)].image);
    dets[static_cast<std::size_t>(i)] =
        infer_frame(net, geom, cfg, image_to_tensor<float>(img),
                    records[static_cast<std::size_t>(i)].frame_id);
  });

  fs::create_directories(out_dir);
  write_detections((fs::path(out_dir) / "detections.jsonl").string(), dets);
  return dets;
}

// --- evaluation -------------------------------------------------------------------

struct EvalSummary {
  DepthBinAccumulator vehicles;
  LaneEvalGrid lanes;
  Counts radar;
  bool has_radar = false;
  std::vector<DepthPair> depth_pairs;
};

inline std::vector<Vec3> lift_knots(const std::vector<Vec3>& knots, const CameraModel& cam) {
  std::vector<Vec3> out;
  out.reserve(knots.size());
  for (const Vec3& k : knots) out.push_back(ipm_to_3d(k.x, k.y, std::max(k.z, 1e-6), cam));
  return out;
}

inline EvalSummary evaluate_detections(const RunConfig& cfg,
                                       const std::vector<FrameDetections>& dets,
                                       const std::vector<FrameRecord>& records) {
  std::map<int, const FrameRecord*> by_id;
  for (const FrameRecord& rec : records) by_id[rec.frame_id] = &rec;

  EvalSummary sum;
  sum.vehicles.bin_width_m = cfg.thresholds.depth_bin_m;
  for (const FrameDetections& det : dets) {
    const auto it = by_id.find(det.frame_id);
    if (it == by_id.end())
      throw ConfigError("detections reference unknown frame_id " + std::to_string(det.frame_id));
    const FrameRecord& rec = *it->second;

    const MatchResult m = match_vehicles(det.vehicles, rec.vehicles, cfg.thresholds.eval_iou);
    sum.vehicles.add_frame(m, det.vehicles, rec.vehicles);
    for (const auto& [p, g] : m.pairs)
      sum.depth_pairs.push_back({det.vehicles[static_cast<std::size_t>(p)].depth,
                                 rec.vehicles[static_cast<std::size_t>(g)].depth});
    if (!rec.radar.empty()) {
      sum.has_radar = true;
      sum.radar += radar_baseline(rec.radar, rec.vehicles);
    }

    std::array<std::optional<std::vector<Vec3>>, kLaneEvalBoundaries> gt;
    for (const LaneAnnotation& lane : rec.lanes) {
      const auto slot = lane_eval_slot(lane.boundary_id);
      if (!slot) continue;
      gt[static_cast<std::size_t>(*slot)] = lift_knots(lane.knots, cfg.camera);
    }
    std::vector<std::vector<Vec3>> preds;
    for (const LaneDetection& lane : det.lanes)
      preds.push_back(lift_knots(lane.knots, cfg.camera));
    sum.lanes += lane_eval(preds, gt, cfg.thresholds.lane_tol_m);
  }
  return sum;
}

namespace detail {

inline json counts_json(const Counts& c) {
  return {{"tp", c.tp},       {"fp", c.fp},           {"fn", c.fn},
          {"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()}};
}

}  // namespace detail

inline json eval_report_json(const RunConfig& cfg, const EvalSummary& sum,
                             const std::string& dataset_id) {
  json j;
  j["dataset"] = dataset_id;
  j["thresholds"] = {{"iou_min", cfg.thresholds.eval_iou},
                     {"lane_tol_m", cfg.thresholds.lane_tol_m},
                     {"depth_bin_m", cfg.thresholds.depth_bin_m}};
  const EvalReport veh = sum.vehicles.report();
  j["vehicles"]["global"] = detail::counts_json(veh.global);
  j["vehicles"]["bin_width_m"] = sum.vehicles.bin_width_m;
  j["vehicles"]["bins"] = json::array();
  for (const BinRecord& b : veh.bins) {
    json bj = detail::counts_json(b.counts);
    bj["bin_id"] = b.bin_id;
    j["vehicles"]["bins"].push_back(bj);
  }
  if (sum.has_radar) {
    json rj = detail::counts_json(sum.radar);
    rj["f1"] = sum.radar.recall();  // precision forced to 1 by construction
    rj["precision"] = 1.0;
    j["radar"] = rj;
  }
  j["lanes"]["total"] = detail::counts_json(sum.lanes.total());
  j["lanes"]["ego_15_50"] = detail::counts_json(sum.lanes.range_total(15.0, 50.0, 2));
  j["lanes"]["grid"] = json::array();
  for (int b = 0; b < kLaneEvalBoundaries; ++b)
    for (int i = 0; i < kLaneEvalPositions; ++i) {
      json cj = detail::counts_json(sum.lanes.at[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]);
      cj["boundary"] = b;
      cj["distance_m"] = kLaneEvalFirstM + i * kLaneEvalStepM;
      j["lanes"]["grid"].push_back(cj);
    }
  j["depth"]["bin_width_m"] = cfg.thresholds.depth_bin_m;
  j["depth"]["bins"] = json::array();
  for (const DepthBinStat& s : depth_error_stats(sum.depth_pairs, cfg.thresholds.depth_bin_m)) {
    j["depth"]["bins"].push_back(
        {{"bin_id", s.bin_id}, {"n", s.n}, {"stderr_m", s.stderr_m}, {"valid", s.valid}});
  }
  return j;
}

inline void write_eval_reports(const RunConfig& cfg, const EvalSummary& sum,
                               const std::string& dataset_id, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream os((fs::path(out_dir) / "report.json").string());
    os << eval_report_json(cfg, sum, dataset_id).dump(2) << "\n";
  }
  {
    std::ofstream os((fs::path(out_dir) / "report.csv").string());
    os << "bin_id,depth_lo_m,depth_hi_m,tp,fp,fn,precision,recall,f1\n";
    char buf[256];
    for (const BinRecord& b : sum.vehicles.report().bins) {
      std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,%ld,%ld,%ld,%.6g,%.6g,%.6g\n", b.bin_id,
                    b.bin_id * sum.vehicles.bin_width_m, (b.bin_id + 1) * sum.vehicles.bin_width_m,
                    b.counts.tp, b.counts.fp, b.counts.fn, b.counts.precision(),
                    b.counts.recall(), b.counts.f1());
      os << buf;
    }
  }
  {
    std::ofstream os((fs::path(out_dir) / "lane_report.csv").string());
    os << "boundary,distance_m,tp,fp,fn,precision,recall,f1\n";
    char buf[256];
    for (int b = 0; b < kLaneEvalBoundaries; ++b)
      for (int i = 0; i < kLaneEvalPositions; ++i) {
        const Counts& c = sum.lanes.at[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        std::snprintf(buf, sizeof(buf), "%d,%.6g,%ld,%ld,%ld,%.6g,%.6g,%.6g\n", b,
                      kLaneEvalFirstM + i * kLaneEvalStepM, c.tp, c.fp, c.fn, c.precision(),
                      c.recall(), c.f1());
        os << buf;
      }
  }
}

inline EvalSummary run_eval(const RunConfig& cfg, const std::string& detections_path,
                            const std::string& manifest_path, const std::string& out_dir) {
  const std::vector<FrameDetections> dets = load_detections(detections_path);
  const std::vector<FrameRecord> records = load_manifest(manifest_path, false);
  EvalSummary sum = evaluate_detections(cfg, dets, records);
  write_eval_reports(cfg, sum, manifest_path, out_dir);
  return sum;
}

// --- benchmark -------------------------------------------------------------------

struct MergeSweepPoint {
  int n = 0;
  double ms = 0;
};

// Times the merge step across candidate counts; used to confirm the expected
// O(n^2) growth of the pairwise similarity scan.
inline std::vector<MergeSweepPoint> merge_sweep(const std::vector<int>& sizes, int repeat,
                                                std::uint64_t seed) {
  std::vector<MergeSweepPoint> out;
  MergeParams params;
  params.min_group = 1;
  for (int n : sizes) {
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(n));
    std::vector<VehicleBox> boxes;
    boxes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double x = uniform(rng, 0.0, 4000.0), y = uniform(rng, 0.0, 3000.0);
      const double w = uniform(rng, 20.0, 80.0), h = uniform(rng, 20.0, 60.0);
      boxes.push_back({{x, y, x + w, y + h}, uniform(rng, 5.0, 80.0), 1.0});
    }
    std::vector<double> times;
    for (int r = 0; r < repeat; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      volatile std::size_t sink = merge_boxes(boxes, params).size();
      (void)sink;
      times.push_back(detail::ms_since(t0));
    }
    std::sort(times.begin(), times.end());
    out.push_back({n, times[times.size() / 2]});
  }
  return out;
}

inline json run_bench(const RunConfig& cfg, const std::string& checkpoint,
                      const std::string& manifest_path, int repeat, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (repeat < 1) throw ConfigError("bench repeat must be >= 1");
  Network<float> net = make_network<float>(cfg.architecture, 3, cfg.seed);
  load_network(checkpoint, net);
  const GridGeometry geom = grid_geometry(net, cfg.image_w, cfg.image_h);
  const std::vector<FrameRecord> records = load_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  std::vector<Tensor<float>> inputs;
  for (const FrameRecord& rec : records)
    inputs.push_back(image_to_tensor<float>(read_ppm((base / rec.image).string())));

  std::vector<double> t_forward, t_extract, t_merge, t_lane, t_frame;
  for (int r = 0; r < repeat; ++r) {
    for (const Tensor<float>& input : inputs) {
      const auto f0 = std::chrono::steady_clock::now();
      const DetectionGrid grid = forward_detect(net, input, geom);
      t_forward.push_back(detail::ms_since(f0));

      const auto e0 = std::chrono::steady_clock::now();
      const Candidates cands = extract_candidates(grid, cfg.thresholds.activation);
      t_extract.push_back(detail::ms_since(e0));

      const auto m0 = std::chrono::steady_clock::now();
      volatile std::size_t nm = merge_boxes(cands.vehicles, cfg.thresholds.merge).size();
      (void)nm;
      t_merge.push_back(detail::ms_since(m0));

      const auto l0 = std::chrono::steady_clock::now();
      volatile std::size_t nl =
          cluster_lanes(cands.lanes, cfg.camera, cfg.thresholds.lane_cluster).size();
      (void)nl;
      t_lane.push_back(detail::ms_since(l0));
      t_frame.push_back(detail::ms_since(f0));
    }
  }

  const std::vector<MergeSweepPoint> sweep =
      merge_sweep({400, 800, 1600, 3200}, std::max(3, repeat), cfg.seed);

  auto stage_json = [](const detail::StageStats& s) {
    return json{{"mean_ms", s.mean}, {"median_ms", s.median}, {"p95_ms", s.p95}};
  };
  const detail::StageStats frame_stats = detail::stage_stats(t_frame);
  json j;
  j["frames"] = records.size();
  j["repeat"] = repeat;
  j["stages"] = {{"forward", stage_json(detail::stage_stats(t_forward))},
                 {"extract", stage_json(detail::stage_stats(t_extract))},
                 {"merge", stage_json(detail::stage_stats(t_merge))},
                 {"lane_post", stage_json(detail::stage_stats(t_lane))}};
  j["per_frame"] = stage_json(frame_stats);
  j["hz"] = frame_stats.mean > 0 ? 1000.0 / frame_stats.mean : 0.0;
  j["merge_sweep"] = json::array();
  for (const MergeSweepPoint& p : sweep)
    j["merge_sweep"].push_back({{"n", p.n}, {"ms", p.ms}});
  j["notes"] =
      "Throughput depends entirely on the host; published frame rates for this "
      "pipeline were measured on specific GPU hardware and are not asserted here.";

  fs::create_directories(out_dir);
  std::ofstream os((fs::path(out_dir) / "bench.json").string());
  os << j.dump(2) << "\n";
  return j;
}

}  // namespace hpk
