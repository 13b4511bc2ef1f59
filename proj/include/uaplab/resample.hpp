#pragma once

#include <cmath>

#include "uaplab/errors.hpp"
#include "uaplab/grid.hpp"
#include "uaplab/rng.hpp"

namespace uaplab {

// Geometry of one random crop-and-resize. Output pixel (r, c) of an
// Hout x Wout grid samples the source at
//   y = oy + r * sy,   x = ox + c * sx
// with bilinear interpolation. Corner-aligned: sy = (span_y - 1) / (Hout - 1),
// so a full-frame crop (span == source extent, origin 0) reproduces the source
// exactly. Every output is a convex combination of source pixels, which keeps
// the map non-expanding in the max norm — resized perturbations never exceed
// the budget of the original.
struct CropGeom {
  double oy = 0.0, ox = 0.0; // top-left sample position, source pixel coords
  double sy = 1.0, sx = 1.0; // per-output-pixel step, source pixel coords

  static CropGeom identity() { return CropGeom{}; }
};

// Sample a crop window: area fraction uniform in [area_lo, area_hi], aspect
// preserved, offset uniform over valid placements. Out-of-range bounds throw.
inline CropGeom draw_crop(Rng& rng, int src_h, int src_w, int out_h, int out_w,
                          double area_lo, double area_hi) {
  if (src_h < 2 || src_w < 2 || out_h < 2 || out_w < 2)
    throw ContractError("draw_crop: grids must be at least 2x2");
  if (!(area_lo > 0.0) || area_lo > area_hi || area_hi > 1.0)
    throw ContractError("draw_crop: area range must satisfy 0 < lo <= hi <= 1");
  double area = rng.uniform(area_lo, area_hi);
  double s = std::sqrt(area);
  double span_y = std::max(2.0, s * src_h); // keep at least one pixel gap
  double span_x = std::max(2.0, s * src_w);
  CropGeom g;
  g.oy = rng.uniform(0.0, static_cast<double>(src_h) - span_y);
  g.ox = rng.uniform(0.0, static_cast<double>(src_w) - span_x);
  g.sy = (span_y - 1.0) / (out_h - 1);
  g.sx = (span_x - 1.0) / (out_w - 1);
  return g;
}

namespace detail {

struct Tap {
  int i0, i1;
  double w0, w1;
};

inline Tap tap_at(double pos, int n) {
  // Clamp guards float roundoff at the borders; valid geometries stay inside.
  if (pos < 0.0) pos = 0.0;
  double hi = static_cast<double>(n - 1);
  if (pos > hi) pos = hi;
  int i0 = static_cast<int>(pos);
  if (i0 > n - 2) i0 = n - 2;
  double f = pos - i0;
  return Tap{i0, i0 + 1, 1.0 - f, f};
}

} // namespace detail

// Bilinear crop-and-resize. Works on any scalar grid so the float64 gradient
// checks exercise the same code path as the float32 runtime.
template <class T>
Grid<T> crop_resize(const Grid<T>& src, const CropGeom& g, int out_h, int out_w) {
  if (src.h < 2 || src.w < 2) throw ContractError("crop_resize: source must be at least 2x2");
  Grid<T> out(out_h, out_w, src.c);
  for (int r = 0; r < out_h; ++r) {
    auto ty = detail::tap_at(g.oy + r * g.sy, src.h);
    for (int c = 0; c < out_w; ++c) {
      auto tx = detail::tap_at(g.ox + c * g.sx, src.w);
      for (int ch = 0; ch < src.c; ++ch) {
        double v = ty.w0 * (tx.w0 * src.at(ty.i0, tx.i0, ch) + tx.w1 * src.at(ty.i0, tx.i1, ch)) +
                   ty.w1 * (tx.w0 * src.at(ty.i1, tx.i0, ch) + tx.w1 * src.at(ty.i1, tx.i1, ch));
        out.at(r, c, ch) = static_cast<T>(v);
      }
    }
  }
  return out;
}

// Transpose of crop_resize: scatters output-space gradients back onto the
// source grid with the same bilinear weights.
template <class T>
Grid<T> crop_resize_adjoint(const Grid<T>& gout, const CropGeom& g, int src_h, int src_w) {
  Grid<T> gsrc(src_h, src_w, gout.c);
  for (int r = 0; r < gout.h; ++r) {
    auto ty = detail::tap_at(g.oy + r * g.sy, src_h);
    for (int c = 0; c < gout.w; ++c) {
      auto tx = detail::tap_at(g.ox + c * g.sx, src_w);
      for (int ch = 0; ch < gout.c; ++ch) {
        double v = gout.at(r, c, ch);
        gsrc.at(ty.i0, tx.i0, ch) += static_cast<T>(ty.w0 * tx.w0 * v);
        gsrc.at(ty.i0, tx.i1, ch) += static_cast<T>(ty.w0 * tx.w1 * v);
        gsrc.at(ty.i1, tx.i0, ch) += static_cast<T>(ty.w1 * tx.w0 * v);
        gsrc.at(ty.i1, tx.i1, ch) += static_cast<T>(ty.w1 * tx.w1 * v);
      }
    }
  }
  return gsrc;
}

// Plain full-frame resize (corner-aligned), for rescaling perturbations
// between image shapes.
template <class T>
Grid<T> resize_bilinear(const Grid<T>& src, int out_h, int out_w) {
  if (out_h < 2 || out_w < 2) throw ContractError("resize_bilinear: output must be at least 2x2");
  CropGeom g;
  g.sy = static_cast<double>(src.h - 1) / (out_h - 1);
  g.sx = static_cast<double>(src.w - 1) / (out_w - 1);
  return crop_resize(src, g, out_h, out_w);
}

} // namespace uaplab
