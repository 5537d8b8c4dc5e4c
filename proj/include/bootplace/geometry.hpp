#pragma once

#include <array>

namespace bootplace {

// Axis-aligned rectangle in normalized center-size form. Coordinates are
// relative to the image extent, so a full-frame box is (0.5, 0.5, 1, 1).
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  bool operator==(const Box&) const = default;
};

// Corner form (x0, y0, x1, y1) with x0 <= x1 and y0 <= y1.
using Corners = std::array<double, 4>;

Corners to_corners(const Box& b);

// Throws std::invalid_argument on inverted corners.
Box from_corners(double x0, double y0, double x1, double y1);

// from_corners with the corner coordinates clamped to [0, 1] first.
Box from_corners_clipped(double x0, double y0, double x1, double y1);

// Intersection over union in [0, 1]; 0 when the union has zero area.
double iou(const Box& a, const Box& b);

// Generalized IoU in (-1, 1]: iou minus the fraction of the enclosing hull
// not covered by the union.
double giou(const Box& a, const Box& b);

struct BoxLossWeights {
  double l1 = 1.0;
  double giou = 0.4;
};

// Regression penalty used both in the matching cost and the training loss:
// l1 * sum(|pred - gt|) + giou_weight * (1 - giou(pred, gt)).
double box_loss(const Box& pred, const Box& gt, const BoxLossWeights& w = {});

}  // namespace bootplace
