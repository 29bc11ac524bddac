#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "hpk/augment.hpp"
#include "hpk/dataset.hpp"
#include "hpk/synth.hpp"

namespace hpk {

struct TrainConfig {
  double lr = 0.02;
  int batch_size = 4;
  int epochs = 30;
  double lambda_reg = 1.0;
  bool momentum_schedule = true;
  double momentum_max = 0.95;
  long momentum_ramp_steps = 250;
  double momentum_fixed = 0.9;
  double lr_decay = 0.5;
  int lr_decay_every = 5;  // epochs
  double clip_norm = 0;    // global gradient-norm cap, 0 = off
  std::array<double, kNumClasses> class_weights{1, 1, 1};
  std::string augment = "none";  // "none" or "all"
  std::uint64_t seed = 1;
};

struct Thresholds {
  double activation = 0.5;
  MergeParams merge;
  LaneClusterParams lane_cluster;
  double eval_iou = 0.5;
  double lane_tol_m = 0.5;
  double depth_bin_m = 10.0;
  double lane_halfwidth_px = 2.0;
};

struct AutolabelConfig {
  PointFilterParams filter;
  double knot_spacing_m = 5.0;
  int lanes_left = 1, lanes_right = 1;
  std::string corrections;  // optional JSON file of knot overrides
};

struct RunConfig {
  int image_w = 640, image_h = 480;
  std::vector<LayerSpec> architecture;
  TrainConfig train;
  Thresholds thresholds;
  CameraModel camera;
  SynthConfig synth;
  AutolabelConfig autolabel;
  AugmentParams augment_params;
  int workers = 1;
  std::uint64_t seed = 7;
};

// Stride-32 stack with a 355-pixel context view: a Krizhevsky-style feature
// extractor whose dense layer is converted to a 6x6 convolution. Channel
// widths are sized for CPU use; the geometry is what matters downstream.
inline std::vector<LayerSpec> reference_architecture() {
  auto conv = [](int k, int s, int ch) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.kernel = k;
    l.stride = s;
    l.out_channels = ch;
    return l;
  };
  auto pool = [](int k, int s) {
    LayerSpec l;
    l.kind = LayerKind::maxpool;
    l.kernel = k;
    l.stride = s;
    return l;
  };
  auto relu = [] {
    LayerSpec l;
    l.kind = LayerKind::relu;
    return l;
  };
  auto head = [] {
    LayerSpec l;
    l.kind = LayerKind::softmax_grid;
    l.out_channels = kNumClasses;
    return l;
  };
  return {conv(11, 4, 48), relu(), pool(3, 2),  conv(5, 1, 96),  relu(), pool(3, 2),
          conv(3, 1, 128), relu(), conv(3, 1, 128), relu(), conv(3, 1, 96), relu(),
          pool(3, 2),      conv(6, 1, 512), relu(), head()};
}

inline json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = layer_kind_name(l.kind);
  if (l.spatial()) {
    j["kernel"] = l.kernel;
    j["stride"] = l.stride;
    if (l.padding != kPadSame) j["padding"] = l.padding;
  }
  if (l.kind == LayerKind::conv || l.kind == LayerKind::softmax_grid)
    j["out_channels"] = l.out_channels;
  return j;
}

inline LayerSpec layer_from_json(const json& j, const std::string& where) {
  detail::check_keys(j, {"kind", "kernel", "stride", "padding", "out_channels"}, where);
  LayerSpec l;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv") l.kind = LayerKind::conv;
  else if (kind == "maxpool") l.kind = LayerKind::maxpool;
  else if (kind == "relu") l.kind = LayerKind::relu;
  else if (kind == "softmax-grid") l.kind = LayerKind::softmax_grid;
  else throw ConfigError(where + ": unknown layer kind '" + kind + "'");
  l.kernel = j.value("kernel", 1);
  l.stride = j.value("stride", 1);
  if (j.contains("padding")) {
    if (j["padding"].is_string()) {
      if (j["padding"].get<std::string>() != "same")
        throw ConfigError(where + ": padding must be an integer or \"same\"");
      l.padding = kPadSame;
    } else {
      l.padding = j["padding"].get<int>();
    }
  }
  l.out_channels = j.value("out_channels", l.kind == LayerKind::softmax_grid ? kNumClasses : 0);
  l.validate();
  return l;
}

inline json run_config_to_json(const RunConfig& c) {
  json j;
  j["image"] = {{"width", c.image_w}, {"height", c.image_h}};
  j["architecture"] = json::array();
  for (const LayerSpec& l : c.architecture) j["architecture"].push_back(layer_to_json(l));
  j["train"] = {{"lr", c.train.lr},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"lambda_reg", c.train.lambda_reg},
                {"momentum_schedule", c.train.momentum_schedule},
                {"momentum_max", c.train.momentum_max},
                {"momentum_ramp_steps", c.train.momentum_ramp_steps},
                {"momentum_fixed", c.train.momentum_fixed},
                {"lr_decay", c.train.lr_decay},
                {"lr_decay_every", c.train.lr_decay_every},
                {"clip_norm", c.train.clip_norm},
                {"class_weights", c.train.class_weights},
                {"augment", c.train.augment},
                {"seed", c.train.seed}};
  j["thresholds"] = {{"activation", c.thresholds.activation},
                     {"merge_eps", c.thresholds.merge.eps},
                     {"merge_min_group", c.thresholds.merge.min_group},
                     {"dbscan_eps", c.thresholds.lane_cluster.eps},
                     {"dbscan_min_pts", c.thresholds.lane_cluster.min_pts},
                     {"dbscan_space", c.thresholds.lane_cluster.space},
                     {"eval_iou", c.thresholds.eval_iou},
                     {"lane_tol_m", c.thresholds.lane_tol_m},
                     {"depth_bin_m", c.thresholds.depth_bin_m},
                     {"lane_halfwidth_px", c.thresholds.lane_halfwidth_px}};
  j["camera"] = {{"focal", c.camera.focal},
                 {"cu", c.camera.cu},
                 {"cv", c.camera.cv},
                 {"height", c.camera.height},
                 {"pitch", c.camera.pitch}};
  j["synth"] = {{"n_frames", c.synth.n_frames},
                {"frame_spacing_m", c.synth.frame_spacing_m},
                {"road_length_m", c.synth.road_length_m},
                {"curvature", c.synth.curvature},
                {"lane_width_m", c.synth.lane_width_m},
                {"lanes_left", c.synth.lanes_left},
                {"lanes_right", c.synth.lanes_right},
                {"n_vehicles", c.synth.n_vehicles},
                {"paint_noise_m", c.synth.paint_noise_m},
                {"road_points", c.synth.road_points},
                {"sign_posts", c.synth.sign_posts},
                {"gt_max_dist_m", c.synth.gt_max_dist_m},
                {"drop_subcell_boxes", c.synth.drop_subcell_boxes}};
  j["autolabel"] = {{"intensity_min", c.autolabel.filter.intensity_min},
                    {"ground_tol_m", c.autolabel.filter.ground_tol_m},
                    {"lat_min_m", c.autolabel.filter.lat_min_m},
                    {"lat_max_m", c.autolabel.filter.lat_max_m},
                    {"knot_spacing_m", c.autolabel.knot_spacing_m},
                    {"lanes_left", c.autolabel.lanes_left},
                    {"lanes_right", c.autolabel.lanes_right},
                    {"corrections", c.autolabel.corrections}};
  j["augmentation"] = {{"translate_max_x", c.augment_params.translate_max_x},
                       {"translate_max_y", c.augment_params.translate_max_y}};
  j["workers"] = c.workers;
  j["seed"] = c.seed;
  return j;
}

inline RunConfig run_config_from_json(const json& j, const std::string& where) {
  detail::check_keys(j,
                     {"image", "architecture", "train", "thresholds", "camera", "synth",
                      "autolabel", "augmentation", "workers", "seed"},
                     where);
  RunConfig c;
  c.architecture = reference_architecture();
  if (j.contains("image")) {
    detail::check_keys(j["image"], {"width", "height"}, where + ".image");
    c.image_w = j["image"].value("width", c.image_w);
    c.image_h = j["image"].value("height", c.image_h);
    if (c.image_w < 32 || c.image_h < 32) throw ConfigError(where + ": image too small");
  }
  if (j.contains("architecture")) {
    c.architecture.clear();
    int idx = 0;
    for (const json& l : j["architecture"])
      c.architecture.push_back(layer_from_json(l, where + ".architecture[" + std::to_string(idx++) + "]"));
    if (c.architecture.empty()) throw ConfigError(where + ": empty architecture");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    detail::check_keys(t,
                       {"lr", "batch_size", "epochs", "lambda_reg", "momentum_schedule",
                        "momentum_max", "momentum_ramp_steps", "momentum_fixed", "lr_decay",
                        "lr_decay_every", "clip_norm", "class_weights", "augment", "seed"},
                       where + ".train");
    c.train.lr = t.value("lr", c.train.lr);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.lambda_reg = t.value("lambda_reg", c.train.lambda_reg);
    c.train.momentum_schedule = t.value("momentum_schedule", c.train.momentum_schedule);
    c.train.momentum_max = t.value("momentum_max", c.train.momentum_max);
    c.train.momentum_ramp_steps = t.value("momentum_ramp_steps", c.train.momentum_ramp_steps);
    c.train.momentum_fixed = t.value("momentum_fixed", c.train.momentum_fixed);
    c.train.lr_decay = t.value("lr_decay", c.train.lr_decay);
    c.train.lr_decay_every = t.value("lr_decay_every", c.train.lr_decay_every);
    c.train.clip_norm = t.value("clip_norm", c.train.clip_norm);
    if (t.contains("class_weights")) {
      const auto w = t["class_weights"].get<std::vector<double>>();
      if (w.size() != kNumClasses) throw ConfigError(where + ": class_weights needs 3 entries");
      std::copy(w.begin(), w.end(), c.train.class_weights.begin());
    }
    c.train.augment = t.value("augment", c.train.augment);
    if (c.train.augment != "none" && c.train.augment != "all")
      throw ConfigError(where + ": train.augment must be 'none' or 'all'");
    c.train.seed = t.value("seed", c.train.seed);
    if (c.train.batch_size < 1 || c.train.epochs < 1 || c.train.lr <= 0)
      throw ConfigError(where + ": invalid training hyperparameters");
  }
  if (j.contains("thresholds")) {
    const json& t = j["thresholds"];
    detail::check_keys(t,
                       {"activation", "merge_eps", "merge_min_group", "dbscan_eps",
                        "dbscan_min_pts", "dbscan_space", "eval_iou", "lane_tol_m",
                        "depth_bin_m", "lane_halfwidth_px"},
                       where + ".thresholds");
    c.thresholds.activation = t.value("activation", c.thresholds.activation);
    c.thresholds.merge.eps = t.value("merge_eps", c.thresholds.merge.eps);
    c.thresholds.merge.min_group = t.value("merge_min_group", c.thresholds.merge.min_group);
    c.thresholds.lane_cluster.eps = t.value("dbscan_eps", c.thresholds.lane_cluster.eps);
    c.thresholds.lane_cluster.min_pts =
        t.value("dbscan_min_pts", c.thresholds.lane_cluster.min_pts);
    c.thresholds.lane_cluster.space = t.value("dbscan_space", c.thresholds.lane_cluster.space);
    c.thresholds.eval_iou = t.value("eval_iou", c.thresholds.eval_iou);
    c.thresholds.lane_tol_m = t.value("lane_tol_m", c.thresholds.lane_tol_m);
    c.thresholds.depth_bin_m = t.value("depth_bin_m", c.thresholds.depth_bin_m);
    c.thresholds.lane_halfwidth_px =
        t.value("lane_halfwidth_px", c.thresholds.lane_halfwidth_px);
    c.thresholds.merge.validate();
    c.thresholds.lane_cluster.validate();
  }
  if (j.contains("camera")) {
    detail::check_keys(j["camera"], {"focal", "cu", "cv", "height", "pitch"}, where + ".camera");
    c.camera.focal = j["camera"].value("focal", c.camera.focal);
    c.camera.cu = j["camera"].value("cu", c.camera.cu);
    c.camera.cv = j["camera"].value("cv", c.camera.cv);
    c.camera.height = j["camera"].value("height", c.camera.height);
    c.camera.pitch = j["camera"].value("pitch", c.camera.pitch);
    c.camera.validate();
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    detail::check_keys(s,
                       {"n_frames", "frame_spacing_m", "road_length_m", "curvature",
                        "lane_width_m", "lanes_left", "lanes_right", "n_vehicles",
                        "paint_noise_m", "road_points", "sign_posts", "gt_max_dist_m",
                        "drop_subcell_boxes"},
                       where + ".synth");
    c.synth.n_frames = s.value("n_frames", c.synth.n_frames);
    c.synth.frame_spacing_m = s.value("frame_spacing_m", c.synth.frame_spacing_m);
    c.synth.road_length_m = s.value("road_length_m", c.synth.road_length_m);
    c.synth.curvature = s.value("curvature", c.synth.curvature);
    c.synth.lane_width_m = s.value("lane_width_m", c.synth.lane_width_m);
    c.synth.lanes_left = s.value("lanes_left", c.synth.lanes_left);
    c.synth.lanes_right = s.value("lanes_right", c.synth.lanes_right);
    c.synth.n_vehicles = s.value("n_vehicles", c.synth.n_vehicles);
    c.synth.paint_noise_m = s.value("paint_noise_m", c.synth.paint_noise_m);
    c.synth.road_points = s.value("road_points", c.synth.road_points);
    c.synth.sign_posts = s.value("sign_posts", c.synth.sign_posts);
    c.synth.gt_max_dist_m = s.value("gt_max_dist_m", c.synth.gt_max_dist_m);
    c.synth.drop_subcell_boxes = s.value("drop_subcell_boxes", c.synth.drop_subcell_boxes);
    c.synth.validate();
  }
  if (j.contains("autolabel")) {
    const json& a = j["autolabel"];
    detail::check_keys(a,
                       {"intensity_min", "ground_tol_m", "lat_min_m", "lat_max_m",
                        "knot_spacing_m", "lanes_left", "lanes_right", "corrections"},
                       where + ".autolabel");
    c.autolabel.filter.intensity_min = a.value("intensity_min", c.autolabel.filter.intensity_min);
    c.autolabel.filter.ground_tol_m = a.value("ground_tol_m", c.autolabel.filter.ground_tol_m);
    c.autolabel.filter.lat_min_m = a.value("lat_min_m", c.autolabel.filter.lat_min_m);
    c.autolabel.filter.lat_max_m = a.value("lat_max_m", c.autolabel.filter.lat_max_m);
    c.autolabel.knot_spacing_m = a.value("knot_spacing_m", c.autolabel.knot_spacing_m);
    c.autolabel.lanes_left = a.value("lanes_left", c.autolabel.lanes_left);
    c.autolabel.lanes_right = a.value("lanes_right", c.autolabel.lanes_right);
    c.autolabel.corrections = a.value("corrections", c.autolabel.corrections);
  }
  if (j.contains("augmentation")) {
    detail::check_keys(j["augmentation"], {"translate_max_x", "translate_max_y"},
                       where + ".augmentation");
    c.augment_params.translate_max_x =
        j["augmentation"].value("translate_max_x", c.augment_params.translate_max_x);
    c.augment_params.translate_max_y =
        j["augmentation"].value("translate_max_y", c.augment_params.translate_max_y);
  }
  c.workers = j.value("workers", c.workers);
  if (c.workers < 1) throw ConfigError(where + ": workers must be >= 1");
  c.seed = j.value("seed", c.seed);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": malformed JSON (" + std::string(e.what()) + ")");
  }
  return run_config_from_json(j, path);
}

inline RunConfig default_run_config() {
  RunConfig c;
  c.architecture = reference_architecture();
  return c;
}

}  // namespace hpk
