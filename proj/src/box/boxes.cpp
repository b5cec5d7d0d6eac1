#include "svga/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace svga {

double normalize_angle(double a) {
  if (!std::isfinite(a)) throw NumericError("normalize_angle: non-finite angle");
  const double two_pi = 2.0 * M_PI;
  double r = std::fmod(a + M_PI, two_pi);
  if (r <= 0.0) r += two_pi;
  return r - M_PI;
}

const char* class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::Car: return "Car";
    case ObjectClass::Pedestrian: return "Pedestrian";
    case ObjectClass::Cyclist: return "Cyclist";
    default: return "DontCare";
  }
}

ObjectClass class_from_name(const std::string& name) {
  if (name == "Car") return ObjectClass::Car;
  if (name == "Pedestrian") return ObjectClass::Pedestrian;
  if (name == "Cyclist") return ObjectClass::Cyclist;
  return ObjectClass::DontCare;
}

namespace {

void check_anchor(const Box7& a, const char* op) {
  if (a.l <= 0 || a.w <= 0 || a.h <= 0)
    throw InvalidArgumentError(std::string(op) + ": anchor extents must be positive");
}

}  // namespace

Residual7 encode_residual(const Box7& gt, const Box7& anchor) {
  check_anchor(anchor, "encode_residual");
  if (gt.l <= 0 || gt.w <= 0 || gt.h <= 0)
    throw InvalidArgumentError("encode_residual: box extents must be positive");
  const double da = std::sqrt(anchor.w * anchor.w + anchor.l * anchor.l);
  Residual7 r;
  r.dx = (gt.x - anchor.x) / da;
  r.dy = (gt.y - anchor.y) / da;
  r.dz = (gt.z - anchor.z) / anchor.h;
  r.dw = std::log(gt.w / anchor.w);
  r.dl = std::log(gt.l / anchor.l);
  r.dh = std::log(gt.h / anchor.h);
  r.dtheta = std::sin(gt.theta - anchor.theta);
  return r;
}

Box7 decode_residual(const Residual7& res, const Box7& anchor, int* clamped) {
  check_anchor(anchor, "decode_residual");
  const double da = std::sqrt(anchor.w * anchor.w + anchor.l * anchor.l);
  double dt = res.dtheta;
  if (dt < -1.0 || dt > 1.0) {
    dt = std::clamp(dt, -1.0, 1.0);
    if (clamped) ++*clamped;
  }
  Box7 b;
  b.x = res.dx * da + anchor.x;
  b.y = res.dy * da + anchor.y;
  b.z = res.dz * anchor.h + anchor.z;
  b.w = anchor.w * std::exp(res.dw);
  b.l = anchor.l * std::exp(res.dl);
  b.h = anchor.h * std::exp(res.dh);
  b.theta = normalize_angle(anchor.theta + std::asin(dt));
  return b;
}

std::array<std::array<double, 2>, 4> box_corners_bev(const Box7& b) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double hl = b.l / 2.0, hw = b.w / 2.0;
  // Counter-clockwise.
  const double lx[4] = {hl, -hl, -hl, hl};
  const double ly[4] = {hw, hw, -hw, -hw};
  std::array<std::array<double, 2>, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i][0] = b.x + c * lx[i] - s * ly[i];
    out[i][1] = b.y + s * lx[i] + c * ly[i];
  }
  return out;
}

namespace {

using Poly = std::vector<std::array<double, 2>>;

double polygon_area(const Poly& p) {
  double a = 0.0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = p[i];
    const auto& v = p[(i + 1) % n];
    a += u[0] * v[1] - v[0] * u[1];
  }
  return std::abs(a) / 2.0;
}

// Clips a convex polygon against the half-plane left of edge a->b.
Poly clip_edge(const Poly& poly, const std::array<double, 2>& a, const std::array<double, 2>& b) {
  Poly out;
  const std::size_t n = poly.size();
  auto side = [&](const std::array<double, 2>& p) {
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cur = poly[i];
    const auto& nxt = poly[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back({cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
    }
  }
  return out;
}

double rect_intersection_area(const Box7& a, const Box7& b) {
  const auto ca = box_corners_bev(a);
  const auto cb = box_corners_bev(b);
  Poly poly(ca.begin(), ca.end());
  for (int e = 0; e < 4 && !poly.empty(); ++e) poly = clip_edge(poly, cb[e], cb[(e + 1) % 4]);
  if (poly.size() < 3) return 0.0;
  return polygon_area(poly);
}

}  // namespace

double iou_bev(const Box7& a, const Box7& b) {
  const double area_a = a.l * a.w, area_b = b.l * b.w;
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double inter = rect_intersection_area(a, b);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box7& a, const Box7& b) {
  const double vol_a = a.l * a.w * a.h, vol_b = b.l * b.w * b.h;
  if (vol_a <= 0.0 || vol_b <= 0.0) return 0.0;
  const double inter_area = rect_intersection_area(a, b);
  const double z_lo = std::max(a.z - a.h / 2.0, b.z - b.h / 2.0);
  const double z_hi = std::min(a.z + a.h / 2.0, b.z + b.h / 2.0);
  const double inter = inter_area * std::max(0.0, z_hi - z_lo);
  const double uni = vol_a + vol_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<int> nms(const std::vector<Box7>& boxes, const std::vector<double>& scores,
                     double iou_thresh, bool use_3d_iou) {
  if (boxes.size() != scores.size())
    throw InvalidArgumentError("nms: " + std::to_string(scores.size()) + " scores for " +
                               std::to_string(boxes.size()) + " boxes");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(j)]; });
  std::vector<int> kept;
  for (int idx : order) {
    bool suppressed = false;
    for (int k : kept) {
      const double iou = use_3d_iou ? iou_3d(boxes[static_cast<std::size_t>(idx)], boxes[static_cast<std::size_t>(k)])
                                    : iou_bev(boxes[static_cast<std::size_t>(idx)], boxes[static_cast<std::size_t>(k)]);
      if (iou > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

AnchorGrid build_anchor_grid(double x_min, double y_min, double cell_size, int h1, int w1,
                             const std::vector<AnchorSpec>& specs) {
  if (h1 <= 0 || w1 <= 0) throw InvalidArgumentError("anchor grid: extents must be positive");
  if (cell_size <= 0) throw InvalidArgumentError("anchor grid: cell size must be positive");
  if (specs.empty()) throw InvalidArgumentError("anchor grid: no anchor specs");
  AnchorGrid g;
  g.h1 = h1;
  g.w1 = w1;
  g.specs = specs;
  g.boxes.reserve(static_cast<std::size_t>(h1) * w1 * specs.size());
  g.classes.reserve(g.boxes.capacity());
  for (int i = 0; i < h1; ++i)
    for (int j = 0; j < w1; ++j)
      for (const auto& s : specs) {
        Box7 b;
        b.x = x_min + (j + 0.5) * cell_size;
        b.y = y_min + (i + 0.5) * cell_size;
        b.z = s.z;
        b.l = s.l;
        b.w = s.w;
        b.h = s.h;
        b.theta = normalize_angle(s.theta);
        g.boxes.push_back(b);
        g.classes.push_back(s.cls);
      }
  return g;
}

AnchorAssignment match_anchors(const AnchorGrid& grid, const std::vector<LabeledBox>& gts,
                               double pos_thresh, double neg_thresh) {
  if (!(0.0 <= neg_thresh && neg_thresh < pos_thresh && pos_thresh <= 1.0))
    throw InvalidArgumentError("match_anchors: need 0 <= neg < pos <= 1");
  const std::size_t n = grid.size();
  AnchorAssignment out;
  out.gt_of_anchor.assign(n, AnchorAssignment::kNegative);

  std::vector<std::size_t> real_gts;
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (gts[g].cls != ObjectClass::DontCare) real_gts.push_back(g);

  if (!real_gts.empty()) {
    // IoU rows per ground truth; zero where classes differ.
    std::vector<std::vector<double>> iou(real_gts.size(), std::vector<double>(n, 0.0));
    for (std::size_t gi = 0; gi < real_gts.size(); ++gi) {
      const auto& gt = gts[real_gts[gi]];
      for (std::size_t a = 0; a < n; ++a)
        if (grid.classes[a] == gt.cls) iou[gi][a] = iou_bev(grid.boxes[a], gt.box);
    }
    for (std::size_t a = 0; a < n; ++a) {
      double best = 0.0;
      int best_gt = -1;
      for (std::size_t gi = 0; gi < real_gts.size(); ++gi)
        if (iou[gi][a] > best) {
          best = iou[gi][a];
          best_gt = static_cast<int>(real_gts[gi]);
        }
      if (best >= pos_thresh)
        out.gt_of_anchor[a] = best_gt;
      else if (best >= neg_thresh)
        out.gt_of_anchor[a] = AnchorAssignment::kIgnore;
    }
    // Every ground truth claims its best-overlap anchor as a positive; ties go
    // to the nearer anchor center, then the lower index. An anchor already
    // claimed by an earlier ground truth is skipped.
    std::vector<char> forced(n, 0);
    for (std::size_t gi = 0; gi < real_gts.size(); ++gi) {
      const auto& gt = gts[real_gts[gi]];
      std::size_t best_a = n;
      double best = -1.0, best_d = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        if (forced[a] || grid.classes[a] != gt.cls) continue;
        const double v = iou[gi][a];
        const auto& box = grid.boxes[a];
        const double dist = (box.x - gt.box.x) * (box.x - gt.box.x) + (box.y - gt.box.y) * (box.y - gt.box.y);
        if (v > best || (v == best && dist < best_d)) {
          best = v;
          best_d = dist;
          best_a = a;
        }
      }
      if (best_a < n) {
        forced[best_a] = 1;
        out.gt_of_anchor[best_a] = static_cast<int>(real_gts[gi]);
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (out.gt_of_anchor[a] >= 0)
      ++out.n_pos;
    else if (out.gt_of_anchor[a] == AnchorAssignment::kNegative)
      ++out.n_neg;
    else
      ++out.n_ignore;
  }
  return out;
}

}  // namespace svga
