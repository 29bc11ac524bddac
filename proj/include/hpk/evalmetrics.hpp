#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "hpk/detect.hpp"
#include "hpk/postprocess.hpp"

namespace hpk {

inline double iou(const Rect& a, const Rect& b) {
  const double inter = intersect(a, b).area();
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct Counts {
  long tp = 0, fp = 0, fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  double precision() const { return tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0; }
  double recall() const { return tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
};

struct MatchResult {
  Counts counts;
  std::vector<std::pair<int, int>> pairs;  // (pred index, gt index)
  std::vector<int> unmatched_pred, unmatched_gt;
};

// Greedy one-to-one matching in descending IOU order; ties prefer the lower
// gt index, then the lower prediction index.
inline MatchResult match_vehicles(const std::vector<VehicleBox>& preds,
                                  const std::vector<VehicleBox>& gts, double iou_min = 0.5) {
  struct Cand {
    double iou;
    int pred, gt;
  };
  std::vector<Cand> cands;
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(preds[p].rect, gts[g].rect);
      if (v >= iou_min) cands.push_back({v, static_cast<int>(p), static_cast<int>(g)});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.gt != b.gt) return a.gt < b.gt;
    return a.pred < b.pred;
  });

  MatchResult res;
  std::vector<bool> pred_used(preds.size(), false), gt_used(gts.size(), false);
  for (const Cand& c : cands) {
    if (pred_used[static_cast<std::size_t>(c.pred)] || gt_used[static_cast<std::size_t>(c.gt)])
      continue;
    pred_used[static_cast<std::size_t>(c.pred)] = true;
    gt_used[static_cast<std::size_t>(c.gt)] = true;
    res.pairs.push_back({c.pred, c.gt});
  }
  for (std::size_t p = 0; p < preds.size(); ++p)
    if (!pred_used[p]) res.unmatched_pred.push_back(static_cast<int>(p));
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!gt_used[g]) res.unmatched_gt.push_back(static_cast<int>(g));
  res.counts.tp = static_cast<long>(res.pairs.size());
  res.counts.fp = static_cast<long>(res.unmatched_pred.size());
  res.counts.fn = static_cast<long>(res.unmatched_gt.size());
  return res;
}

struct BinRecord {
  int bin_id = 0;
  Counts counts;
};

struct EvalReport {
  std::vector<BinRecord> bins;  // sorted by bin_id, empty bins omitted
  Counts global;
};

// Accumulates detection counts into depth bins. Matched pairs and misses bin
// by ground-truth depth; spurious predictions bin by their own depth.
struct DepthBinAccumulator {
  double bin_width_m = 10.0;
  std::map<int, Counts> bins;
  Counts global;

  int bin_of(double depth) const {
    return static_cast<int>(std::floor(std::max(0.0, depth) / bin_width_m));
  }

  void add_frame(const MatchResult& m, const std::vector<VehicleBox>& preds,
                 const std::vector<VehicleBox>& gts) {
    for (const auto& [p, g] : m.pairs) {
      ++bins[bin_of(gts[static_cast<std::size_t>(g)].depth)].tp;
      ++global.tp;
    }
    for (int g : m.unmatched_gt) {
      ++bins[bin_of(gts[static_cast<std::size_t>(g)].depth)].fn;
      ++global.fn;
    }
    for (int p : m.unmatched_pred) {
      ++bins[bin_of(preds[static_cast<std::size_t>(p)].depth)].fp;
      ++global.fp;
    }
  }

  EvalReport report() const {
    EvalReport r;
    r.global = global;
    for (const auto& [id, c] : bins) r.bins.push_back({id, c});
    return r;
  }
};

struct RadarReturn {
  Vec2 pixel;
  double depth = 0;
};

// Radar comparison mode: every return is credited to its nearest ground-truth
// box (by center distance), forcing precision to 1; F1 therefore equals
// recall. Unclaimed ground truth counts as missed.
inline Counts radar_baseline(const std::vector<RadarReturn>& returns,
                             const std::vector<VehicleBox>& gts) {
  Counts c;
  std::vector<bool> hit(gts.size(), false);
  for (const RadarReturn& r : returns) {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const Vec2 gc = gts[g].rect.center();
      const double d2 = sq(gc.x - r.pixel.x) + sq(gc.y - r.pixel.y);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) hit[static_cast<std::size_t>(best)] = true;
  }
  for (bool h : hit) (h ? c.tp : c.fn)++;
  return c;  // fp stays 0 by construction; report f1 as recall
}

// --- lane evaluation ------------------------------------------------------

inline constexpr int kLaneEvalBoundaries = 4;   // ego pair + adjacent outers
inline constexpr int kLaneEvalPositions = 14;   // 15..80 m, 5 m apart
inline constexpr double kLaneEvalFirstM = 15.0;
inline constexpr double kLaneEvalStepM = 5.0;

struct LaneEvalGrid {
  std::array<std::array<Counts, kLaneEvalPositions>, kLaneEvalBoundaries> at{};

  LaneEvalGrid& operator+=(const LaneEvalGrid& o) {
    for (int b = 0; b < kLaneEvalBoundaries; ++b)
      for (int i = 0; i < kLaneEvalPositions; ++i) at[b][i] += o.at[b][i];
    return *this;
  }
  Counts total() const {
    Counts c;
    for (const auto& row : at)
      for (const Counts& cell : row) c += cell;
    return c;
  }
  Counts range_total(double min_dist_m, double max_dist_m,
                     std::optional<int> only_boundary_lt = std::nullopt) const {
    Counts c;
    for (int b = 0; b < kLaneEvalBoundaries; ++b) {
      if (only_boundary_lt && b >= *only_boundary_lt) continue;
      for (int i = 0; i < kLaneEvalPositions; ++i) {
        const double d = kLaneEvalFirstM + i * kLaneEvalStepM;
        if (d >= min_dist_m - 1e-9 && d <= max_dist_m + 1e-9) c += at[b][i];
      }
    }
    return c;
  }
};

// Boundary slots: 0 = ego left, 1 = ego right, 2 = adjacent-left outer,
// 3 = adjacent-right outer (ids -1, +1, -2, +2).
inline std::optional<int> lane_eval_slot(int boundary_id) {
  switch (boundary_id) {
    case -1: return 0;
    case 1: return 1;
    case -2: return 2;
    case 2: return 3;
    default: return std::nullopt;
  }
}

// Lateral (y) position of a vehicle-frame polyline at longitudinal distance x,
// linearly interpolated; empty when x is outside the covered range.
inline std::optional<double> lateral_at(const std::vector<Vec3>& polyline, double x) {
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    const Vec3& a = polyline[i];
    const Vec3& b = polyline[i + 1];
    const double lo = std::min(a.x, b.x), hi = std::max(a.x, b.x);
    if (x < lo || x > hi || hi - lo < 1e-12) continue;
    const double t = (x - a.x) / (b.x - a.x);
    return a.y + t * (b.y - a.y);
  }
  return std::nullopt;
}

// Per-position scoring: at each longitudinal distance, sampled prediction and
// ground-truth laterals pair up greedily by gap. A pair within `tol_m` is a
// true positive; a wider pair charges both a false positive and a false
// negative. Leftover samples count on their own side (spare predictions are
// attributed to the boundary they sit closest to).
inline LaneEvalGrid lane_eval(const std::vector<std::vector<Vec3>>& pred_polylines,
                              const std::array<std::optional<std::vector<Vec3>>,
                                               kLaneEvalBoundaries>& gt_boundaries,
                              double tol_m = 0.5) {
  LaneEvalGrid grid;
  for (int pi = 0; pi < kLaneEvalPositions; ++pi) {
    const double x = kLaneEvalFirstM + pi * kLaneEvalStepM;
    struct Sample {
      double y;
      int slot;  // gt boundary slot, or -1 for predictions
    };
    std::vector<Sample> gt, pred;
    for (int b = 0; b < kLaneEvalBoundaries; ++b) {
      if (!gt_boundaries[static_cast<std::size_t>(b)]) continue;
      if (auto y = lateral_at(*gt_boundaries[static_cast<std::size_t>(b)], x))
        gt.push_back({*y, b});
    }
    for (const auto& poly : pred_polylines)
      if (auto y = lateral_at(poly, x)) pred.push_back({*y, -1});

    struct Pair {
      double gap;
      std::size_t p, g;
    };
    std::vector<Pair> cands;
    for (std::size_t p = 0; p < pred.size(); ++p)
      for (std::size_t g = 0; g < gt.size(); ++g)
        cands.push_back({std::abs(pred[p].y - gt[g].y), p, g});
    std::sort(cands.begin(), cands.end(), [](const Pair& a, const Pair& b) {
      if (a.gap != b.gap) return a.gap < b.gap;
      if (a.g != b.g) return a.g < b.g;
      return a.p < b.p;
    });
    std::vector<bool> p_used(pred.size(), false), g_used(gt.size(), false);
    for (const Pair& c : cands) {
      if (p_used[c.p] || g_used[c.g]) continue;
      p_used[c.p] = true;
      g_used[c.g] = true;
      Counts& cell = grid.at[static_cast<std::size_t>(gt[c.g].slot)][static_cast<std::size_t>(pi)];
      if (c.gap < tol_m) {
        ++cell.tp;
      } else {
        ++cell.fp;
        ++cell.fn;
      }
    }
    for (std::size_t g = 0; g < gt.size(); ++g)
      if (!g_used[g]) ++grid.at[static_cast<std::size_t>(gt[g].slot)][static_cast<std::size_t>(pi)].fn;
    for (std::size_t p = 0; p < pred.size(); ++p) {
      if (p_used[p]) continue;
      // Attribute the spare prediction to the nearest boundary slot.
      int slot = 0;
      double best = std::numeric_limits<double>::infinity();
      for (const Sample& s : gt) {
        const double d = std::abs(pred[p].y - s.y);
        if (d < best) {
          best = d;
          slot = s.slot;
        }
      }
      ++grid.at[static_cast<std::size_t>(slot)][static_cast<std::size_t>(pi)].fp;
    }
  }
  return grid;
}

// --- depth accuracy --------------------------------------------------------

struct DepthPair {
  double predicted = 0, truth = 0;
};

struct DepthBinStat {
  int bin_id = 0;
  int n = 0;
  double stderr_m = 0;  // sample stddev / sqrt(n)
  bool valid = false;   // false when n < 2 (flagged, excluded from summaries)
};

inline std::vector<DepthBinStat> depth_error_stats(const std::vector<DepthPair>& pairs,
                                                   double bin_width_m = 10.0) {
  std::map<int, std::vector<double>> errs;
  for (const DepthPair& p : pairs) {
    const int bin = static_cast<int>(std::floor(std::max(0.0, p.truth) / bin_width_m));
    errs[bin].push_back(p.predicted - p.truth);
  }
  std::vector<DepthBinStat> out;
  for (const auto& [bin, e] : errs) {
    DepthBinStat s;
    s.bin_id = bin;
    s.n = static_cast<int>(e.size());
    if (s.n >= 2) {
      double mean = 0;
      for (double v : e) mean += v;
      mean /= s.n;
      double var = 0;
      for (double v : e) var += sq(v - mean);
      var /= (s.n - 1);
      s.stderr_m = std::sqrt(var) / std::sqrt(static_cast<double>(s.n));
      s.valid = true;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace hpk
