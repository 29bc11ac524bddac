// Acceptance suite: runs every release criterion and prints one line each.
// Exits nonzero if any criterion fails.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "hpk/gradcheck.hpp"
#include "hpk/pipeline.hpp"
#include "oracles.hpp"

using namespace hpk;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void run(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
  try {
    const auto [pass, detail] = fn();
    report(id, name, pass, detail);
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return "<missing:" + path + ">";
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

LayerSpec conv(int k, int s, int ch, int pad = kPadSame) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.kernel = k;
  l.stride = s;
  l.padding = pad;
  l.out_channels = ch;
  return l;
}

LayerSpec pool(int k, int s, int pad = kPadSame) {
  LayerSpec l;
  l.kind = LayerKind::maxpool;
  l.kernel = k;
  l.stride = s;
  l.padding = pad;
  return l;
}

LayerSpec relu() {
  LayerSpec l;
  l.kind = LayerKind::relu;
  return l;
}

// Reduced stride-16 stack used for the end-to-end training criterion.
RunConfig overfit_config() {
  RunConfig cfg;
  cfg.architecture = {conv(5, 2, 12), relu(), pool(2, 2), conv(3, 1, 24), relu(), pool(2, 2),
                      conv(3, 1, 32), relu(), pool(2, 2), conv(5, 1, 48), relu()};
  cfg.image_w = 320;
  cfg.image_h = 240;
  cfg.camera.focal = 280;
  cfg.camera.cu = 160;
  cfg.camera.cv = 120;
  cfg.camera.height = 1.25;
  cfg.camera.pitch = 0.035;
  cfg.synth.n_frames = 12;
  cfg.synth.frame_spacing_m = 7.0;
  cfg.synth.road_length_m = 220;
  cfg.synth.n_vehicles = 4;
  cfg.synth.road_points = 2500;
  cfg.train.epochs = 220;
  cfg.train.batch_size = 4;
  cfg.train.lr = 0.02;
  cfg.train.lr_decay = 0.65;
  cfg.train.lr_decay_every = 40;
  cfg.train.lambda_reg = 1.0;
  cfg.train.class_weights = {1, 8, 8};
  cfg.train.augment = "none";
  cfg.thresholds.activation = 0.5;
  cfg.thresholds.lane_cluster.space = "pixel";
  cfg.thresholds.lane_cluster.eps = 9.0;
  cfg.thresholds.lane_cluster.min_pts = 2;
  cfg.seed = 2024;
  return cfg;
}

RunConfig pipeline_config() {
  RunConfig cfg;
  cfg.architecture = {conv(5, 2, 6), relu(), pool(2, 2), conv(3, 1, 12), relu(), pool(2, 2),
                      conv(3, 1, 16), relu()};
  cfg.image_w = 128;
  cfg.image_h = 96;
  cfg.camera.focal = 120;
  cfg.camera.cu = 64;
  cfg.camera.cv = 48;
  cfg.camera.height = 1.2;
  cfg.camera.pitch = 0.03;
  cfg.synth.n_frames = 3;
  cfg.synth.road_length_m = 150;
  cfg.synth.n_vehicles = 2;
  cfg.synth.road_points = 800;
  cfg.synth.drop_subcell_boxes = false;  // 128x96 boxes are all tiny
  cfg.train.epochs = 2;
  cfg.train.batch_size = 2;
  cfg.train.class_weights = {1, 4, 4};
  cfg.thresholds.lane_cluster.space = "pixel";
  cfg.thresholds.lane_cluster.eps = 6.0;
  cfg.thresholds.lane_cluster.min_pts = 2;
  cfg.seed = 5;
  return cfg;
}

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("hpk_accept_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string sub(const std::string& name) const { return (dir / name).string(); }
};

// --- criterion 1 ------------------------------------------------------------

std::pair<bool, std::string> architecture_constants() {
  const auto arch = reference_architecture();
  const ReceptiveField rf = receptive_field(arch);
  if (rf.stride != 32 || rf.context != 355)
    return {false, "stride/context = " + std::to_string(rf.stride) + "/" +
                       std::to_string(rf.context)};
  const GridSize g = dense_output_grid(640, 480, arch);
  if (g.w != 20 || g.h != 15)
    return {false, "grid " + std::to_string(g.w) + "x" + std::to_string(g.h)};
  const GridGeometry geom = make_grid_geometry(32, 355, 640, 480);
  if (geom.cells_x != 160 || geom.cells_y != 120) return {false, "mask grid size"};
  // Cells partition the image: count membership exhaustively.
  std::vector<int> hits(640 * 480, 0);
  for (int fy = 0; fy < geom.feat_h; ++fy)
    for (int fx = 0; fx < geom.feat_w; ++fx)
      for (int sy = 0; sy < 8; ++sy)
        for (int sx = 0; sx < 8; ++sx) {
          const MaskCell cell = cell_pixel_region(fx, fy, sx, sy);
          for (int y = static_cast<int>(cell.pixel_rect.y1); y < cell.pixel_rect.y2; ++y)
            for (int x = static_cast<int>(cell.pixel_rect.x1); x < cell.pixel_rect.x2; ++x)
              ++hits[static_cast<std::size_t>(y * 640 + x)];
        }
  for (int h : hits)
    if (h != 1) return {false, "cells do not partition the image"};
  return {true, "stride 32, context 355, 20x15 features, 160x120 cells"};
}

// --- criterion 2 ------------------------------------------------------------

std::pair<bool, std::string> gradient_suite() {
  std::mt19937_64 rng(314);
  const double eps = 1e-3;
  double worst = 0;
  auto update = [&](double rel) { worst = std::max(worst, rel); };

  // conv2d on five random shapes: input, weight and bias gradients.
  for (int trial = 0; trial < 5; ++trial) {
    const int C = 1 + uniform_int(rng, 3), O = 1 + uniform_int(rng, 3);
    const int H = 5 + uniform_int(rng, 4), W = 5 + uniform_int(rng, 4);
    const int k = 2 + uniform_int(rng, 3), s = 1 + uniform_int(rng, 2);
    LayerSpec spec = conv(k, s, O, uniform_int(rng, 2));
    Tensor<double> in({C, H, W}), w({O, C, k, k}), b({O});
    in.fill_uniform(rng, -1, 1);
    w.fill_uniform(rng, -1, 1);
    b.fill_uniform(rng, -1, 1);
    const Tensor<double> out0 = conv2d(in, w, b, spec);
    Tensor<double> proj(out0.shape);
    proj.fill_uniform(rng, -1, 1);
    auto loss = [&]() {
      const Tensor<double> out = conv2d(in, w, b, spec);
      double l = 0;
      for (std::size_t i = 0; i < out.size(); ++i) l += out[i] * proj[i];
      return l;
    };
    Tensor<double> din(in.shape), dw(w.shape), db(b.shape);
    conv2d_backward(in.ptr(), C, H, W, w.ptr(), O, k, s, resolve_padding(W, spec),
                    resolve_padding(H, spec), proj.ptr(), out0.dim(1), out0.dim(2), din.ptr(),
                    dw.ptr(), db.ptr());
    auto probe = [&](Tensor<double>& t, const Tensor<double>& analytic, int count) {
      for (int c = 0; c < count; ++c) {
        const std::size_t i = rng() % t.size();
        const double saved = t[i];
        t[i] = saved + eps;
        const double up = loss();
        t[i] = saved - eps;
        const double dn = loss();
        t[i] = saved;
        const double fd = (up - dn) / (2 * eps);
        update(std::abs(fd - analytic[i]) /
               std::max({std::abs(fd), std::abs(analytic[i]), 1e-6}));
      }
    };
    probe(in, din, 10);
    probe(w, dw, 10);
    probe(b, db, 3);
  }

  // maxpool on five random shapes, skipping argmax flips.
  for (int trial = 0; trial < 5; ++trial) {
    const int C = 1 + uniform_int(rng, 2), H = 6 + uniform_int(rng, 4),
              W = 6 + uniform_int(rng, 4);
    LayerSpec spec = pool(2 + uniform_int(rng, 2), 2, 0);
    Tensor<double> in({C, H, W});
    in.fill_uniform(rng, -1, 1);
    const int OH = out_extent(H, spec), OW = out_extent(W, spec);
    Tensor<double> proj({C, OH, OW});
    proj.fill_uniform(rng, -1, 1);
    auto eval = [&](std::vector<int>* arg) {
      Tensor<double> o({C, OH, OW});
      std::vector<int> a(o.size());
      maxpool2d_forward(in.ptr(), C, H, W, spec.kernel, spec.stride, resolve_padding(W, spec),
                        resolve_padding(H, spec), o.ptr(), OH, OW, a.data());
      if (arg) *arg = a;
      double l = 0;
      for (std::size_t q = 0; q < o.size(); ++q) l += o[q] * proj[q];
      return l;
    };
    std::vector<int> arg0;
    eval(&arg0);
    Tensor<double> din(in.shape);
    maxpool2d_backward(arg0.data(), C, H, W, proj.ptr(), OH, OW, din.ptr());
    for (int c = 0; c < 10; ++c) {
      const std::size_t i = rng() % in.size();
      const double saved = in[i];
      std::vector<int> au, ad;
      in[i] = saved + eps;
      const double up = eval(&au);
      in[i] = saved - eps;
      const double dn = eval(&ad);
      in[i] = saved;
      if (au != ad) continue;
      update(std::abs((up - dn) / (2 * eps) - din[i]) /
             std::max({std::abs(din[i]), std::abs((up - dn) / (2 * eps)), 1e-6}));
    }
  }

  // softmax cross entropy, L1 and L2 on five random shapes each.
  for (int trial = 0; trial < 5; ++trial) {
    const int k = 2 + uniform_int(rng, 6);
    Tensor<double> logits({k}), grad;
    logits.fill_uniform(rng, -3, 3);
    const int target = uniform_int(rng, k);
    softmax_cross_entropy(logits, target, &grad);
    for (int i = 0; i < k; ++i) {
      Tensor<double> up = logits, dn = logits;
      up[static_cast<std::size_t>(i)] += eps;
      dn[static_cast<std::size_t>(i)] -= eps;
      const double fd =
          (softmax_cross_entropy(up, target) - softmax_cross_entropy(dn, target)) / (2 * eps);
      update(std::abs(fd - grad[static_cast<std::size_t>(i)]) /
             std::max({std::abs(fd), std::abs(grad[static_cast<std::size_t>(i)]), 1e-6}));
    }

    const int n = 4 + uniform_int(rng, 8);
    Tensor<double> p({n}), t({n}), m({n}), g1, g2;
    p.fill_uniform(rng, -2, 2);
    t.fill_uniform(rng, -2, 2);
    for (auto& v : m.data) v = uniform01(rng) < 0.7 ? 1.0 : 0.0;
    l1_loss(p, t, m, &g1);
    l2_loss(p, t, m, &g2);
    for (int i = 0; i < n; ++i) {
      if (std::abs(p[static_cast<std::size_t>(i)] - t[static_cast<std::size_t>(i)]) <= 1e-3)
        continue;  // L1 kink exclusion
      Tensor<double> up = p, dn = p;
      up[static_cast<std::size_t>(i)] += eps;
      dn[static_cast<std::size_t>(i)] -= eps;
      const double fd1 = (l1_loss(up, t, m) - l1_loss(dn, t, m)) / (2 * eps);
      const double fd2 = (l2_loss(up, t, m) - l2_loss(dn, t, m)) / (2 * eps);
      if (std::abs(fd1) > 1e-12 || std::abs(g1[static_cast<std::size_t>(i)]) > 1e-12)
        update(std::abs(fd1 - g1[static_cast<std::size_t>(i)]) /
               std::max({std::abs(fd1), std::abs(g1[static_cast<std::size_t>(i)]), 1e-6}));
      if (std::abs(fd2) > 1e-12 || std::abs(g2[static_cast<std::size_t>(i)]) > 1e-12)
        update(std::abs(fd2 - g2[static_cast<std::size_t>(i)]) /
               std::max({std::abs(fd2), std::abs(g2[static_cast<std::size_t>(i)]), 1e-6}));
    }
  }

  // Full network through the detection loss, five random shapes.
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<LayerSpec> arch{conv(3, 2, 3 + uniform_int(rng, 3)), relu(), pool(2, 2),
                                conv(3, 1, 4 + uniform_int(rng, 4)), relu()};
    Network<double> net = make_network<double>(arch, 3, rng());
    const int w = 16, h = 16;
    const GridGeometry geom = grid_geometry(net, w, h);
    Tensor<double> input({3, h, w});
    input.fill_uniform(rng, 0, 1);
    std::vector<VehicleBox> boxes{{{2.0 + uniform(rng, 0, 2), 2.0, 14.0, 13.0}, 25.0, 1.0}};
    std::vector<LaneAnnotation> lanes{{1, {{1, 1, 5}, {15, 14, 40}}, {}}};
    const GridLabel label = rasterize_labels(boxes, lanes, geom);
    update(grad_check(net, input, label, geom, eps, rng(), 100));
  }

  char buf[64];
  std::snprintf(buf, sizeof(buf), "max relative error %.3g", worst);
  return {worst <= 1e-3, buf};
}

// --- criterion 3 ------------------------------------------------------------

std::pair<bool, std::string> receptive_field_oracle() {
  std::mt19937_64 rng(2718);
  for (int arch_i = 0; arch_i < 3; ++arch_i) {
    std::vector<LayerSpec> layers;
    const int depth = 2 + uniform_int(rng, 2);
    for (int d = 0; d < depth; ++d) {
      const int k = 2 + uniform_int(rng, 3);
      const int s = 1 + uniform_int(rng, std::min(k, 2));
      const int pad_mode = uniform_int(rng, 3);
      if (d > 0 && uniform01(rng) < 0.4) {
        layers.push_back(pool(k, s, pad_mode == 0 ? kPadSame : pad_mode - 1));
      } else {
        layers.push_back(conv(k, s, 1 + uniform_int(rng, 2),
                              pad_mode == 0 ? kPadSame : pad_mode - 1));
      }
    }
    const int w = 18 + uniform_int(rng, 10);
    const int h = 18 + uniform_int(rng, 10);
    if (!verify_receptive_field(layers, w, h, rng())) {
      return {false, "mismatch on architecture " + std::to_string(arch_i)};
    }
  }
  return {true, "3 architectures, exhaustive pixel sweeps"};
}

// --- criterion 4 ------------------------------------------------------------

std::pair<bool, std::string> label_round_trip() {
  const GridGeometry geom = make_grid_geometry(32, 355, 640, 480);
  std::mt19937_64 rng(11);
  std::vector<VehicleBox> boxes;
  // Varied synthetic boxes, all large enough to own at least one cell.
  for (int i = 0; i < 12; ++i) {
    const double w = uniform(rng, 34, 180), h = uniform(rng, 34, 140);
    const double x = uniform(rng, 0, 640 - w), y = uniform(rng, 0, 480 - h);
    VehicleBox b{{x, y, x + w, y + h}, uniform(rng, 8, 70), 1.0};
    if (!shrunk_box_covers_cell(b.rect)) {
      --i;
      continue;
    }
    bool overlaps = false;  // keep clusters unambiguous for the merge step
    for (const VehicleBox& other : boxes)
      if (iou(b.rect, other.rect) > 0.05) overlaps = true;
    if (overlaps) {
      --i;
      continue;
    }
    boxes.push_back(b);
  }
  const GridLabel label = rasterize_labels(boxes, {}, geom);
  if (label.dropped_boxes != 0) return {false, "unexpected dropped boxes"};

  DetectionGrid grid;
  grid.w = label.w;
  grid.h = label.h;
  grid.prob.assign(geom.n_cells() * kNumClasses, 0.f);
  grid.veh = label.veh_targets;
  grid.lane = label.lane_targets;
  for (std::size_t ci = 0; ci < geom.n_cells(); ++ci)
    grid.prob[ci * kNumClasses + label.cell_class[ci]] = 1.f;

  const Candidates cands = extract_candidates(grid, 0.5);
  MergeParams mp;
  mp.min_group = 1;
  const std::vector<VehicleBox> merged = merge_boxes(cands.vehicles, mp);
  if (merged.size() != boxes.size())
    return {false, "recovered " + std::to_string(merged.size()) + " of " +
                       std::to_string(boxes.size())};
  double worst = 1.0;
  for (const VehicleBox& gt : boxes) {
    double best = 0;
    for (const VehicleBox& m : merged) best = std::max(best, iou(m.rect, gt.rect));
    worst = std::min(worst, best);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%zu boxes, worst IOU %.4f", boxes.size(), worst);
  return {worst >= 0.99, buf};
}

// --- criterion 5 ------------------------------------------------------------

std::pair<bool, std::string> merging_criterion() {
  std::mt19937_64 rng(21);
  MergeParams params;  // eps 0.2, min_group 2
  std::vector<VehicleBox> input;
  std::vector<Rect> cluster_means(10);
  const int copies = 8;
  for (int k = 0; k < 10; ++k) {
    const double cx = 500.0 * (k % 5) + 100, cy = 600.0 * (k / 5) + 100;
    const double w = uniform(rng, 60, 110), h = uniform(rng, 40, 90);
    Rect mean_acc{0, 0, 0, 0};
    for (int c = 0; c < copies; ++c) {
      const double jit = params.eps * 0.35 * 0.5 * (w + h);
      VehicleBox b{{cx + uniform(rng, -jit, jit), cy + uniform(rng, -jit, jit),
                    cx + w + uniform(rng, -jit, jit), cy + h + uniform(rng, -jit, jit)},
                   20.0, 1.0};
      mean_acc.x1 += b.rect.x1 / copies;
      mean_acc.y1 += b.rect.y1 / copies;
      mean_acc.x2 += b.rect.x2 / copies;
      mean_acc.y2 += b.rect.y2 / copies;
      input.push_back(b);
    }
    cluster_means[static_cast<std::size_t>(k)] = mean_acc;
  }
  // Isolated singletons that must disappear.
  for (int i = 0; i < 5; ++i)
    input.push_back({{3000.0 + 400 * i, 2000.0, 3060.0 + 400 * i, 2040.0}, 10.0, 1.0});

  const std::vector<VehicleBox> merged = merge_boxes(input, params);
  if (merged.size() != 10) return {false, "got " + std::to_string(merged.size()) + " outputs"};
  double worst = 0;
  for (const Rect& mean : cluster_means) {
    double best = 1e30;
    for (const VehicleBox& m : merged) {
      const double d = std::max({std::abs(m.rect.x1 - mean.x1), std::abs(m.rect.y1 - mean.y1),
                                 std::abs(m.rect.x2 - mean.x2), std::abs(m.rect.y2 - mean.y2)});
      best = std::min(best, d);
    }
    worst = std::max(worst, best);
  }
  char buf[80];
  std::snprintf(buf, sizeof(buf), "10 clusters, singletons dropped, max mean offset %.3g px",
                worst);
  return {worst <= 2.0, buf};
}

// --- criterion 6 ------------------------------------------------------------

std::pair<bool, std::string> dbscan_equivalence() {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed * 1013 + 5);
    std::vector<Vec3> pts;
    for (int i = 0; i < 200; ++i)
      pts.push_back({uniform(rng, 0, 60), uniform(rng, 0, 60), uniform(rng, -1, 1)});
    const double eps = uniform(rng, 1.5, 4.0);
    const int min_pts = 2 + uniform_int(rng, 4);
    const auto mine = oracle::canonical_labels(dbscan(pts, eps, min_pts));
    const auto ref = oracle::canonical_labels(oracle::dbscan_reference(pts, eps, min_pts));
    if (mine != ref) return {false, "label mismatch at seed " + std::to_string(seed)};
  }
  return {true, "20 seeds x 200 points identical to brute force"};
}

// --- criterion 7 ------------------------------------------------------------

std::pair<bool, std::string> ipm_round_trip() {
  CameraModel cam;
  cam.focal = 350;
  cam.cu = 320;
  cam.cv = 240;
  cam.height = 1.25;
  cam.pitch = 0.04;
  std::mt19937_64 rng(7);
  int tested = 0;
  double worst = 0;
  while (tested < 1000) {
    const Vec3 p{uniform(rng, 1.5, 150), uniform(rng, -40, 40), uniform(rng, -2, 5)};
    const auto px = project(p, cam);
    if (!px) continue;
    const Vec3 back = ipm_to_3d(px->u, px->v, px->depth, cam);
    worst = std::max(worst, dist(back, p) / std::max(1.0, norm(p)));
    ++tested;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "1000 points, max relative error %.3g", worst);
  return {worst <= 1e-6, buf};
}

// --- criterion 8 ------------------------------------------------------------

std::pair<bool, std::string> autolabel_accuracy() {
  CameraModel cam;
  cam.focal = 280;
  cam.cu = 160;
  cam.cv = 120;
  cam.height = 1.25;
  cam.pitch = 0.035;
  const double curvatures[5] = {0.0, 0.0, 1.0 / 500.0, -1.0 / 400.0, 1.0 / 300.0};
  double worst_rms = 0;
  for (int i = 0; i < 5; ++i) {
    SynthConfig sc;
    sc.n_frames = 1;
    sc.road_length_m = 220;
    sc.curvature = curvatures[i];
    sc.paint_noise_m = 0.02;
    const SynthScene scene = synth_scene(sc, cam, 320, 240, 100 + static_cast<std::uint64_t>(i));
    const FilteredPoints f = filter_points(scene.cloud, scene.trajectory, {});
    for (const std::string side : {"left", "right"}) {
      const BoundaryPolyline b =
          fit_boundary(side == "left" ? f.left : f.right, scene.trajectory, 5.0, side);
      const double want = (side == "left" ? -1.0 : 1.0) * sc.lane_width_m / 2;
      double rms = 0;
      for (double lat : b.laterals) rms += sq(lat - want);
      worst_rms = std::max(worst_rms, std::sqrt(rms / static_cast<double>(b.laterals.size())));
    }
  }
  if (worst_rms > 0.1) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "RMS %.3f m", worst_rms);
    return {false, buf};
  }

  // Exact lateral band: strict rejection at 1.4 and 2.2, acceptance inside.
  Trajectory traj;
  for (double s = 0; s <= 60; s += 2) traj.poses.push_back({s / 25, s, 0, 0, 0});
  traj.build();
  auto count = [&](double lateral) {
    const FilteredPoints f = filter_points({{30, -lateral, 0, 220}}, traj, {});
    return f.left.size() + f.right.size();
  };
  if (count(1.4) != 0 || count(2.2) != 0) return {false, "band edges not strict"};
  if (count(1.4 + 1e-6) != 1 || count(2.2 - 1e-6) != 1) return {false, "interior rejected"};
  if (count(1.0) != 0 || count(2.5) != 0) return {false, "band not enforced"};
  char buf[80];
  std::snprintf(buf, sizeof(buf), "5 scenes, worst RMS %.3f m, strict (1.4, 2.2) band",
                worst_rms);
  return {true, buf};
}

// --- criterion 9 ------------------------------------------------------------

std::pair<bool, std::string> eval_oracles() {
  // Vehicle bins with hand-counted outcomes.
  auto vb = [](double x, double depth) {
    return VehicleBox{{x, 0, x + 10, 10}, depth, 1.0};
  };
  const std::vector<VehicleBox> gts{vb(0, 15), vb(20, 35), vb(40, 38)};
  const std::vector<VehicleBox> preds{vb(0, 14), vb(20, 36), vb(100, 17)};
  DepthBinAccumulator acc;
  acc.add_frame(match_vehicles(preds, gts, 0.5), preds, gts);
  const EvalReport rep = acc.report();
  if (rep.global.tp != 2 || rep.global.fp != 1 || rep.global.fn != 1)
    return {false, "vehicle counts wrong"};
  if (rep.bins.size() != 2 || rep.bins[0].bin_id != 1 || rep.bins[0].counts.tp != 1 ||
      rep.bins[0].counts.fp != 1 || rep.bins[1].counts.tp != 1 || rep.bins[1].counts.fn != 1)
    return {false, "per-bin counts wrong"};

  // Lane rule: a pair at 0.6 m charges both sides; 0.4 m is a hit.
  auto lane = [](double lateral) {
    std::vector<Vec3> pts;
    for (double x = 5; x <= 90; x += 5) pts.push_back({x, lateral, 0});
    return pts;
  };
  std::array<std::optional<std::vector<Vec3>>, kLaneEvalBoundaries> gt;
  gt[0] = lane(1.8);
  const Counts wide = lane_eval({lane(2.4)}, gt).total();
  if (wide.fp != kLaneEvalPositions || wide.fn != kLaneEvalPositions || wide.tp != 0)
    return {false, "0.6 m rule broken"};
  const Counts close = lane_eval({lane(2.2)}, gt).total();
  if (close.tp != kLaneEvalPositions || close.fp != 0) return {false, "0.4 m rule broken"};

  // Radar: half coverage means recall 0.5 and f1 = recall.
  const Counts radar = radar_baseline({{{5, 5}, 15}}, {vb(0, 15), vb(200, 40)});
  if (radar.fp != 0 || radar.tp != 1 || radar.fn != 1) return {false, "radar counts wrong"};
  if (radar.recall() != 0.5) return {false, "radar recall wrong"};
  return {true, "per-bin fixtures, 0.5 m lane rule, radar f1 = recall"};
}

// --- criterion 10 ------------------------------------------------------------

std::pair<bool, std::string> end_to_end_overfit(const Scratch& scratch) {
  const RunConfig cfg = overfit_config();
  const std::string scene_dir = scratch.sub("overfit_scene");
  run_synth(cfg, cfg.seed, scene_dir);
  const std::string manifest = scene_dir + "/manifest.jsonl";

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult train = run_train(cfg, manifest, scratch.sub("overfit_run"));
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

  const auto dets = run_infer(cfg, train.checkpoint, manifest, scratch.sub("overfit_infer"));
  const EvalSummary sum = evaluate_detections(cfg, dets, load_manifest(manifest, false));
  write_eval_reports(cfg, sum, manifest, scratch.sub("overfit_eval"));

  const double veh_f1 = sum.vehicles.global.f1();
  const double ego_f1 = sum.lanes.range_total(15.0, 50.0, 2).f1();
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "12 frames, %.1f min train, vehicle F1 %.3f, ego-lane F1 (15-50 m) %.3f",
                minutes, veh_f1, ego_f1);
  return {veh_f1 >= 0.9 && ego_f1 >= 0.9 && minutes <= 30.0, buf};
}

// --- criterion 11 ------------------------------------------------------------

std::pair<bool, std::string> bench_protocol(const Scratch& scratch) {
  const RunConfig cfg = pipeline_config();
  const std::string scene_dir = scratch.sub("bench_scene");
  run_synth(cfg, 17, scene_dir);
  Network<float> net = make_network<float>(cfg.architecture, 3, cfg.seed);
  const std::string ckpt = scratch.sub("bench_ckpt.hpkw");
  save_network(ckpt, net);
  const json bench =
      run_bench(cfg, ckpt, scene_dir + "/manifest.jsonl", 2, scratch.sub("bench_out"));
  for (const char* stage : {"forward", "extract", "merge", "lane_post"})
    if (!bench["stages"].contains(stage)) return {false, "missing stage timing"};
  const std::string notes = bench["notes"].get<std::string>();
  if (notes.find("hardware") == std::string::npos)
    return {false, "notes must state throughput is hardware-bound"};

  const auto sweep = merge_sweep({500, 1000, 2000, 4000}, 5, 99);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const MergeSweepPoint& p : sweep) {
    const double x = std::log(static_cast<double>(p.n));
    const double y = std::log(std::max(p.ms, 1e-6));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(sweep.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "merge sweep exponent %.2f (<= 2.2), stage timings present",
                slope);
  return {slope <= 2.2, buf};
}

// --- criterion 12 ------------------------------------------------------------

std::pair<bool, std::string> determinism(const Scratch& scratch) {
  const RunConfig cfg = pipeline_config();
  const std::string cfg_path = scratch.sub("determinism_cfg.json");
  {
    std::ofstream os(cfg_path);
    os << run_config_to_json(cfg).dump(2) << "\n";
  }
  auto run_once = [&](const std::string& tag) {
    const std::string base = scratch.sub(tag);
    auto cli = [&](const std::string& args) {
      const std::string cmd = std::string(HPK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
      return std::system(cmd.c_str());
    };
    if (cli("synth --config " + cfg_path + " --out " + base + "/scene")) return false;
    if (cli("autolabel --config " + cfg_path + " --cloud " + base + "/scene/cloud.csv" +
            " --trajectory " + base + "/scene/trajectory.csv --out " + base + "/auto"))
      return false;
    if (cli("train --config " + cfg_path + " --manifest " + base + "/scene/manifest.jsonl" +
            " --out " + base + "/run"))
      return false;
    if (cli("infer --config " + cfg_path + " --checkpoint " + base + "/run/checkpoint.hpkw" +
            " --manifest " + base + "/scene/manifest.jsonl --out " + base + "/infer"))
      return false;
    if (cli("eval --config " + cfg_path + " --detections " + base + "/infer/detections.jsonl" +
            " --manifest " + base + "/scene/manifest.jsonl --out " + base + "/eval"))
      return false;
    return true;
  };
  if (!run_once("det_a")) return {false, "pipeline run A failed"};
  if (!run_once("det_b")) return {false, "pipeline run B failed"};
  const char* files[] = {"scene/manifest.jsonl", "scene/cloud.csv",   "auto/boundaries.json",
                         "run/checkpoint.hpkw",  "infer/detections.jsonl", "eval/report.json",
                         "eval/report.csv",      "eval/lane_report.csv"};
  for (const char* f : files) {
    if (slurp(scratch.sub("det_a/") + f) != slurp(scratch.sub("det_b/") + f))
      return {false, std::string("byte mismatch in ") + f};
  }
  return {true, "synth/autolabel/train/infer/eval byte-identical across runs"};
}

}  // namespace

int main() {
  Scratch scratch;
  run(1, "architecture constants", architecture_constants);
  run(2, "gradient suite", gradient_suite);
  run(3, "receptive-field oracle", receptive_field_oracle);
  run(4, "label round trip", label_round_trip);
  run(5, "box merging", merging_criterion);
  run(6, "dbscan equivalence", dbscan_equivalence);
  run(7, "ipm round trip", ipm_round_trip);
  run(8, "auto-labeling accuracy", autolabel_accuracy);
  run(9, "evaluation oracles", eval_oracles);
  run(10, "end-to-end overfit", [&] { return end_to_end_overfit(scratch); });
  run(11, "benchmark protocol", [&] { return bench_protocol(scratch); });
  run(12, "pipeline determinism", [&] { return determinism(scratch); });
  if (g_failures) std::printf("%d criterion(s) failed\n", g_failures);
  else std::printf("all criteria passed\n");
  return g_failures == 0 ? 0 : 1;
}
