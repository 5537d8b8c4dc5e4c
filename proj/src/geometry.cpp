#include "bootplace/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bootplace {

Corners to_corners(const Box& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

Box from_corners(double x0, double y0, double x1, double y1) {
  if (x1 < x0 || y1 < y0) {
    throw std::invalid_argument("from_corners: inverted corners");
  }
  return Box{0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

Box from_corners_clipped(double x0, double y0, double x1, double y1) {
  auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return from_corners(clip(x0), clip(y0), clip(x1), clip(y1));
}

namespace {

struct Overlap {
  double inter;
  double uni;
  double hull;
};

Overlap overlap(const Box& a, const Box& b) {
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double iw = std::max(0.0, std::min(ca[2], cb[2]) - std::max(ca[0], cb[0]));
  const double ih = std::max(0.0, std::min(ca[3], cb[3]) - std::max(ca[1], cb[1]));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double hw = std::max(ca[2], cb[2]) - std::min(ca[0], cb[0]);
  const double hh = std::max(ca[3], cb[3]) - std::min(ca[1], cb[1]);
  return {inter, uni, hw * hh};
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const Overlap o = overlap(a, b);
  if (o.uni <= 0.0) return 0.0;
  return o.inter / o.uni;
}

double giou(const Box& a, const Box& b) {
  const Overlap o = overlap(a, b);
  const double iou_val = o.uni > 0.0 ? o.inter / o.uni : 0.0;
  if (o.hull <= 0.0) return iou_val;
  return iou_val - (o.hull - o.uni) / o.hull;
}

double box_loss(const Box& pred, const Box& gt, const BoxLossWeights& w) {
  const double l1 = std::abs(pred.cx - gt.cx) + std::abs(pred.cy - gt.cy) +
                    std::abs(pred.w - gt.w) + std::abs(pred.h - gt.h);
  return w.l1 * l1 + w.giou * (1.0 - giou(pred, gt));
}

}  // namespace bootplace
