#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "hpk/loss.hpp"
#include "hpk/net.hpp"

namespace hpk {

enum class CellClass : std::uint8_t { background = 0, vehicle = 1, lane = 2 };

struct VehicleBox {
  Rect rect;
  double depth = 0;  // meters
  double score = 1;
};

struct LaneSegmentDet {
  Vec2 a, b;  // pixel endpoints, a is the nearer one
  double depth_a = 0, depth_b = 0;
  double score = 1;
};

// Ground-truth lane boundary in image space: knots carry (u, v, depth).
// Boundary ids: -1/+1 ego left/right, -2/+2 adjacent-lane outer boundaries.
struct LaneAnnotation {
  int boundary_id = 0;
  std::vector<Vec3> knots;
  std::vector<std::uint8_t> occluded;  // optional, parallel to knots
};

struct GridGeometry {
  int img_w = 0, img_h = 0;
  int stride = 0, context = 0, sub = 0;
  int feat_w = 0, feat_h = 0;
  int cells_x = 0, cells_y = 0;

  std::size_t n_cells() const { return static_cast<std::size_t>(cells_x) * cells_y; }
  std::size_t cell_index(int cx, int cy) const {
    return static_cast<std::size_t>(cy) * cells_x + cx;
  }
};

inline GridGeometry make_grid_geometry(int stride, int context, int img_w, int img_h) {
  if (stride < kCellPx || stride % kCellPx != 0)
    throw ConfigError("detector stride must be a positive multiple of 4");
  if (img_w % stride != 0 || img_h % stride != 0)
    throw ConfigError("image size must be a multiple of the detector stride");
  GridGeometry g;
  g.img_w = img_w;
  g.img_h = img_h;
  g.stride = stride;
  g.context = context;
  g.sub = stride / kCellPx;
  g.feat_w = img_w / stride;
  g.feat_h = img_h / stride;
  g.cells_x = img_w / kCellPx;
  g.cells_y = img_h / kCellPx;
  return g;
}

template <typename T>
GridGeometry grid_geometry(const Network<T>& net, int img_w, int img_h) {
  return make_grid_geometry(net.stride, net.context, img_w, img_h);
}

inline Vec2 cell_center(int cx, int cy) {
  return {cx * kCellPx + kCellPx / 2.0, cy * kCellPx + kCellPx / 2.0};
}

// Contracts a rectangle about its center, retaining (1 - factor) of each
// linear dimension. factor 0.75 keeps the central quarter-size core.
inline Rect shrink_box(const Rect& r, double factor = 0.75) {
  const Vec2 c = r.center();
  const double hw = 0.5 * (1.0 - factor) * r.width();
  const double hh = 0.5 * (1.0 - factor) * r.height();
  return {c.x - hw, c.y - hh, c.x + hw, c.y + hh};
}

// True when the shrunk core of a box spans at least one grid-aligned cell,
// i.e. the box can activate the mask at all.
inline bool shrunk_box_covers_cell(const Rect& rect, double factor = 0.75) {
  const Rect s = shrink_box(rect, factor);
  const double x0 = std::ceil(s.x1 / kCellPx) * kCellPx;
  const double y0 = std::ceil(s.y1 / kCellPx) * kCellPx;
  return x0 + kCellPx <= s.x2 && y0 + kCellPx <= s.y2;
}

// Per-cell detector output, decoded to pixel/meter units.
struct DetectionGrid {
  int w = 0, h = 0;
  std::vector<float> prob;  // kNumClasses per cell
  std::vector<float> veh;   // kVehicleDims per cell: x1,y1,x2,y2,depth
  std::vector<float> lane;  // kLaneDims per cell: xa,ya,xb,yb,depth_a,depth_b
};

struct GridLabel {
  int w = 0, h = 0;
  std::vector<std::uint8_t> cell_class;
  std::vector<float> veh_targets;      // kVehicleDims per cell, pixel/meter units
  std::vector<float> lane_targets;     // kLaneDims per cell
  std::vector<std::uint8_t> reg_mask;  // CellClass of the supervised head, 0 = none
  int dropped_boxes = 0;               // ground-truth boxes that activated no cell
};

namespace detail {

inline double point_segment_dist2(const Vec2& p, const Vec2& a, const Vec2& b, double& t_out) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = 0;
  if (len2 > 0) t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0);
  t_out = t;
  return sq(p.x - (a.x + t * vx)) + sq(p.y - (a.y + t * vy));
}

}  // namespace detail

// Rasterizes ground truth into per-cell labels.
//
// A cell is vehicle-active iff its 4x4 region lies fully inside some shrunk
// box; contested cells go to the box with the nearest center. Regression
// targets always point at the unshrunk box. Lane cells activate where the
// cell center passes within `lane_halfwidth_px` of a boundary polyline and
// regress the nearest polyline edge (endpoints ordered near-to-far).
// Vehicle labels take precedence on cells claimed by both.
inline GridLabel rasterize_labels(const std::vector<VehicleBox>& boxes,
                                  const std::vector<LaneAnnotation>& lanes,
                                  const GridGeometry& g, double lane_halfwidth_px = 2.0) {
  GridLabel label;
  label.w = g.cells_x;
  label.h = g.cells_y;
  const std::size_t n = g.n_cells();
  label.cell_class.assign(n, 0);
  label.veh_targets.assign(n * kVehicleDims, 0.f);
  label.lane_targets.assign(n * kLaneDims, 0.f);
  label.reg_mask.assign(n, 0);

  std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());
  std::vector<int> best_box(n, -1);
  for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
    const Rect shrunk = shrink_box(boxes[bi].rect);
    const Vec2 bc = boxes[bi].rect.center();
    const int cx0 = std::max(0, static_cast<int>(std::floor(shrunk.x1 / kCellPx)));
    const int cx1 = std::min(g.cells_x - 1, static_cast<int>(std::ceil(shrunk.x2 / kCellPx)));
    const int cy0 = std::max(0, static_cast<int>(std::floor(shrunk.y1 / kCellPx)));
    const int cy1 = std::min(g.cells_y - 1, static_cast<int>(std::ceil(shrunk.y2 / kCellPx)));
    for (int cy = cy0; cy <= cy1; ++cy) {
      for (int cx = cx0; cx <= cx1; ++cx) {
        const Rect cell{static_cast<double>(cx * kCellPx), static_cast<double>(cy * kCellPx),
                        static_cast<double>(cx * kCellPx + kCellPx),
                        static_cast<double>(cy * kCellPx + kCellPx)};
        if (!shrunk.contains(cell)) continue;
        const Vec2 cc = cell_center(cx, cy);
        const double d2 = sq(cc.x - bc.x) + sq(cc.y - bc.y);
        const std::size_t ci = g.cell_index(cx, cy);
        if (d2 < best_d2[ci]) {
          best_d2[ci] = d2;
          best_box[ci] = static_cast<int>(bi);
        }
      }
    }
  }

  std::vector<bool> box_used(boxes.size(), false);
  for (std::size_t ci = 0; ci < n; ++ci) {
    if (best_box[ci] < 0) continue;
    const VehicleBox& b = boxes[static_cast<std::size_t>(best_box[ci])];
    box_used[static_cast<std::size_t>(best_box[ci])] = true;
    label.cell_class[ci] = static_cast<std::uint8_t>(CellClass::vehicle);
    label.reg_mask[ci] = static_cast<std::uint8_t>(CellClass::vehicle);
    float* t = label.veh_targets.data() + ci * kVehicleDims;
    t[0] = static_cast<float>(b.rect.x1);
    t[1] = static_cast<float>(b.rect.y1);
    t[2] = static_cast<float>(b.rect.x2);
    t[3] = static_cast<float>(b.rect.y2);
    t[4] = static_cast<float>(b.depth);
  }
  for (bool used : box_used)
    if (!used) ++label.dropped_boxes;

  // Lane strips: nearest-edge assignment within the halfwidth.
  std::vector<double> lane_d2(n, std::numeric_limits<double>::infinity());
  const double max_d2 = sq(lane_halfwidth_px);
  for (const LaneAnnotation& lane : lanes) {
    for (std::size_t e = 0; e + 1 < lane.knots.size(); ++e) {
      Vec3 ka = lane.knots[e], kb = lane.knots[e + 1];
      if (ka.z > kb.z) std::swap(ka, kb);  // near endpoint first
      const double margin = lane_halfwidth_px + kCellPx;
      const int cx0 = std::max(
          0, static_cast<int>(std::floor((std::min(ka.x, kb.x) - margin) / kCellPx)));
      const int cx1 = std::min(
          g.cells_x - 1, static_cast<int>(std::ceil((std::max(ka.x, kb.x) + margin) / kCellPx)));
      const int cy0 = std::max(
          0, static_cast<int>(std::floor((std::min(ka.y, kb.y) - margin) / kCellPx)));
      const int cy1 = std::min(
          g.cells_y - 1, static_cast<int>(std::ceil((std::max(ka.y, kb.y) + margin) / kCellPx)));
      for (int cy = cy0; cy <= cy1; ++cy) {
        for (int cx = cx0; cx <= cx1; ++cx) {
          const std::size_t ci = g.cell_index(cx, cy);
          if (label.cell_class[ci] == static_cast<std::uint8_t>(CellClass::vehicle)) continue;
          double t;
          const double d2 = detail::point_segment_dist2(cell_center(cx, cy), {ka.x, ka.y},
                                                        {kb.x, kb.y}, t);
          if (d2 > max_d2 || d2 >= lane_d2[ci]) continue;
          lane_d2[ci] = d2;
          label.cell_class[ci] = static_cast<std::uint8_t>(CellClass::lane);
          label.reg_mask[ci] = static_cast<std::uint8_t>(CellClass::lane);
          float* tgt = label.lane_targets.data() + ci * kLaneDims;
          tgt[0] = static_cast<float>(ka.x);
          tgt[1] = static_cast<float>(ka.y);
          tgt[2] = static_cast<float>(kb.x);
          tgt[3] = static_cast<float>(kb.y);
          tgt[4] = static_cast<float>(ka.z);
          tgt[5] = static_cast<float>(kb.z);
        }
      }
    }
  }
  return label;
}

// --- regression parameterization ----------------------------------------
//
// Raw head channels store box/segment coordinates as offsets from the cell
// center normalized by the context size, and depths as meters/100. Decoding
// inverts exactly.

inline void decode_vehicle(const float* raw, int cx, int cy, int context, float* out) {
  const Vec2 c = cell_center(cx, cy);
  out[0] = static_cast<float>(c.x + raw[0] * context);
  out[1] = static_cast<float>(c.y + raw[1] * context);
  out[2] = static_cast<float>(c.x + raw[2] * context);
  out[3] = static_cast<float>(c.y + raw[3] * context);
  out[4] = raw[4] * 100.f;
}

inline void encode_vehicle(const float* px, int cx, int cy, int context, float* raw) {
  const Vec2 c = cell_center(cx, cy);
  raw[0] = static_cast<float>((px[0] - c.x) / context);
  raw[1] = static_cast<float>((px[1] - c.y) / context);
  raw[2] = static_cast<float>((px[2] - c.x) / context);
  raw[3] = static_cast<float>((px[3] - c.y) / context);
  raw[4] = px[4] / 100.f;
}

inline void decode_lane(const float* raw, int cx, int cy, int context, float* out) {
  const Vec2 c = cell_center(cx, cy);
  out[0] = static_cast<float>(c.x + raw[0] * context);
  out[1] = static_cast<float>(c.y + raw[1] * context);
  out[2] = static_cast<float>(c.x + raw[2] * context);
  out[3] = static_cast<float>(c.y + raw[3] * context);
  out[4] = raw[4] * 100.f;
  out[5] = raw[5] * 100.f;
}

inline void encode_lane(const float* px, int cx, int cy, int context, float* raw) {
  const Vec2 c = cell_center(cx, cy);
  raw[0] = static_cast<float>((px[0] - c.x) / context);
  raw[1] = static_cast<float>((px[1] - c.y) / context);
  raw[2] = static_cast<float>((px[2] - c.x) / context);
  raw[3] = static_cast<float>((px[3] - c.y) / context);
  raw[4] = px[4] / 100.f;
  raw[5] = px[5] / 100.f;
}

namespace detail {

// Channel layout of head tensors: channel = dim * sub^2 + sy * sub + sx.
inline std::size_t head_channel_index(int dim, int sx, int sy, int sub, int fx, int fy,
                                      int feat_w, int feat_h) {
  const std::size_t plane = static_cast<std::size_t>(feat_w) * feat_h;
  const int ch = dim * sub * sub + sy * sub + sx;
  return static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(fy) * feat_w + fx;
}

}  // namespace detail

// Single dense forward pass over the whole image; decodes every cell.
template <typename T>
DetectionGrid forward_detect(const Network<T>& net, const Tensor<T>& image,
                             const GridGeometry& g, NetCache<T>* cache = nullptr,
                             HeadOut<T>* raw_out = nullptr) {
  if (image.shape.size() != 3 || image.dim(1) != g.img_h || image.dim(2) != g.img_w)
    throw ConfigError("forward_detect: image size does not match detector geometry");
  HeadOut<T> heads = forward_network(net, image, cache);
  if (heads.cls.dim(1) != g.feat_h || heads.cls.dim(2) != g.feat_w)
    throw ConfigError("forward_detect: feature grid does not match geometry");

  DetectionGrid grid;
  grid.w = g.cells_x;
  grid.h = g.cells_y;
  grid.prob.assign(g.n_cells() * kNumClasses, 0.f);
  grid.veh.assign(g.n_cells() * kVehicleDims, 0.f);
  grid.lane.assign(g.n_cells() * kLaneDims, 0.f);

  const int sub = g.sub;
  float logits[kNumClasses], probs[kNumClasses];
  float raw[kLaneDims];
  for (int cy = 0; cy < g.cells_y; ++cy) {
    const int fy = cy / sub, sy = cy % sub;
    for (int cx = 0; cx < g.cells_x; ++cx) {
      const int fx = cx / sub, sx = cx % sub;
      const std::size_t ci = g.cell_index(cx, cy);
      for (int k = 0; k < kNumClasses; ++k)
        logits[k] = static_cast<float>(
            heads.cls[detail::head_channel_index(k, sx, sy, sub, fx, fy, g.feat_w, g.feat_h)]);
      softmax(logits, kNumClasses, probs);
      for (int k = 0; k < kNumClasses; ++k) grid.prob[ci * kNumClasses + k] = probs[k];

      for (int d = 0; d < kVehicleDims; ++d)
        raw[d] = static_cast<float>(
            heads.veh[detail::head_channel_index(d, sx, sy, sub, fx, fy, g.feat_w, g.feat_h)]);
      decode_vehicle(raw, cx, cy, g.context, grid.veh.data() + ci * kVehicleDims);

      for (int d = 0; d < kLaneDims; ++d)
        raw[d] = static_cast<float>(
            heads.lane[detail::head_channel_index(d, sx, sy, sub, fx, fy, g.feat_w, g.feat_h)]);
      decode_lane(raw, cx, cy, g.context, grid.lane.data() + ci * kLaneDims);
    }
  }
  check_finite(grid.prob, "detection grid probabilities");
  check_finite(grid.veh, "detection grid vehicle regression");
  check_finite(grid.lane, "detection grid lane regression");
  if (raw_out) *raw_out = std::move(heads);
  return grid;
}

struct DetectionLossParts {
  double classification = 0;
  double veh_regression = 0;   // already averaged per masked element
  double lane_regression = 0;
  double total(double lambda_reg) const {
    return classification + lambda_reg * (veh_regression + lane_regression);
  }
};

// Mean per-cell softmax cross-entropy plus masked L1 on the regression
// channels in pixel/meter units, each normalized by its masked element
// count. `class_weights` multiply each cell's cross-entropy term by its true
// class; all-ones weights give the plain mean.
inline DetectionLossParts detection_loss_parts(const DetectionGrid& grid, const GridLabel& label,
                                               const double class_weights[kNumClasses]) {
  if (grid.w != label.w || grid.h != label.h)
    throw ConfigError("detection_loss: grid/label size mismatch");
  DetectionLossParts parts;
  const std::size_t n = static_cast<std::size_t>(grid.w) * grid.h;
  double ce = 0;
  double veh_sum = 0, lane_sum = 0;
  std::size_t n_veh = 0, n_lane = 0;
  for (std::size_t ci = 0; ci < n; ++ci) {
    const int cls = label.cell_class[ci];
    const double w = class_weights[cls];
    const double p = std::max(static_cast<double>(grid.prob[ci * kNumClasses + cls]), 1e-30);
    ce += -w * std::log(p);
    if (label.reg_mask[ci] == static_cast<std::uint8_t>(CellClass::vehicle)) {
      ++n_veh;
      for (int d = 0; d < kVehicleDims; ++d)
        veh_sum += std::abs(static_cast<double>(grid.veh[ci * kVehicleDims + d]) -
                            static_cast<double>(label.veh_targets[ci * kVehicleDims + d]));
    } else if (label.reg_mask[ci] == static_cast<std::uint8_t>(CellClass::lane)) {
      ++n_lane;
      for (int d = 0; d < kLaneDims; ++d)
        lane_sum += std::abs(static_cast<double>(grid.lane[ci * kLaneDims + d]) -
                             static_cast<double>(label.lane_targets[ci * kLaneDims + d]));
    }
  }
  parts.classification = n > 0 ? ce / static_cast<double>(n) : 0.0;
  parts.veh_regression = n_veh > 0 ? veh_sum / (kVehicleDims * static_cast<double>(n_veh)) : 0.0;
  parts.lane_regression =
      n_lane > 0 ? lane_sum / (kLaneDims * static_cast<double>(n_lane)) : 0.0;
  return parts;
}

inline double detection_loss(const DetectionGrid& grid, const GridLabel& label,
                             double lambda_reg = 1.0,
                             const double* class_weights = nullptr) {
  const double ones[kNumClasses] = {1, 1, 1};
  return detection_loss_parts(grid, label, class_weights ? class_weights : ones)
      .total(lambda_reg);
}

// Training-path loss: identical value to detection_loss on the decoded grid,
// plus gradients with respect to the raw head activations.
template <typename T>
double detection_loss_grad(const HeadOut<T>& heads, const GridLabel& label,
                           const GridGeometry& g, double lambda_reg,
                           const double class_weights[kNumClasses], Tensor<T>& dcls,
                           Tensor<T>& dveh, Tensor<T>& dlane) {
  dcls = Tensor<T>(heads.cls.shape);
  dveh = Tensor<T>(heads.veh.shape);
  dlane = Tensor<T>(heads.lane.shape);

  const std::size_t n = g.n_cells();
  std::size_t n_veh = 0, n_lane = 0;
  for (std::size_t ci = 0; ci < n; ++ci) {
    if (label.reg_mask[ci] == static_cast<std::uint8_t>(CellClass::vehicle)) ++n_veh;
    if (label.reg_mask[ci] == static_cast<std::uint8_t>(CellClass::lane)) ++n_lane;
  }

  double ce = 0, veh_sum = 0, lane_sum = 0;
  const int sub = g.sub;
  T logits[kNumClasses], dlogits[kNumClasses];
  for (int cy = 0; cy < g.cells_y; ++cy) {
    const int fy = cy / sub, sy = cy % sub;
    for (int cx = 0; cx < g.cells_x; ++cx) {
      const int fx = cx / sub, sx = cx % sub;
      const std::size_t ci = g.cell_index(cx, cy);
      const int target = label.cell_class[ci];
      const double w = class_weights[target];

      std::size_t idx[kLaneDims];
      for (int k = 0; k < kNumClasses; ++k) {
        idx[k] = detail::head_channel_index(k, sx, sy, sub, fx, fy, g.feat_w, g.feat_h);
        logits[k] = heads.cls[idx[k]];
      }
      ce += w * softmax_cross_entropy(logits, kNumClasses, target, dlogits);
      for (int k = 0; k < kNumClasses; ++k)
        dcls[idx[k]] =
            static_cast<T>(w / static_cast<double>(n) * static_cast<double>(dlogits[k]));

      if (label.reg_mask[ci] == static_cast<std::uint8_t>(CellClass::vehicle)) {
        const Vec2 c = cell_center(cx, cy);
        const double denom = kVehicleDims * static_cast<double>(n_veh);
        for (int d = 0; d < kVehicleDims; ++d) {
          const std::size_t ii =
              detail::head_channel_index(d, sx, sy, sub, fx, fy, g.feat_w, g.feat_h);
          const double scale = d == 4 ? 100.0 : static_cast<double>(g.context);
          const double center = d == 4 ? 0.0 : (d % 2 == 0 ? c.x : c.y);
          const double pred_px = center + static_cast<double>(heads.veh[ii]) * scale;
          const double diff = pred_px - static_cast<double>(label.veh_targets[ci * kVehicleDims + d]);
          veh_sum += std::abs(diff);
          const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          dveh[ii] = static_cast<T>(lambda_reg * sign * scale / denom);
        }
      }
      if (label.reg_mask[ci] == static_cast<std::uint8_t>(CellClass::lane)) {
        const Vec2 c = cell_center(cx, cy);
        const double denom = kLaneDims * static_cast<double>(n_lane);
        for (int d = 0; d < kLaneDims; ++d) {
          const std::size_t ii =
              detail::head_channel_index(d, sx, sy, sub, fx, fy, g.feat_w, g.feat_h);
          const double scale = d >= 4 ? 100.0 : static_cast<double>(g.context);
          const double center = d >= 4 ? 0.0 : (d % 2 == 0 ? c.x : c.y);
          const double pred_px = center + static_cast<double>(heads.lane[ii]) * scale;
          const double diff = pred_px - static_cast<double>(label.lane_targets[ci * kLaneDims + d]);
          lane_sum += std::abs(diff);
          const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          dlane[ii] = static_cast<T>(lambda_reg * sign * scale / denom);
        }
      }
    }
  }

  double loss = n > 0 ? ce / static_cast<double>(n) : 0.0;
  if (n_veh > 0) loss += lambda_reg * veh_sum / (kVehicleDims * static_cast<double>(n_veh));
  if (n_lane > 0) loss += lambda_reg * lane_sum / (kLaneDims * static_cast<double>(n_lane));
  return loss;
}

}  // namespace hpk
