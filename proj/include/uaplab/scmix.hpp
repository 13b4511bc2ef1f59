#pragma once

#include <cstdint>
#include <vector>

#include "uaplab/errors.hpp"
#include "uaplab/grid.hpp"
#include "uaplab/resample.hpp"
#include "uaplab/rng.hpp"

namespace uaplab {

// Knobs for the two-stage mix augmentation: self-mix blends two rescaled
// crops of the same image with a Beta-drawn weight, cross-mix then folds in a
// batch partner at a fixed dominant/subordinate ratio.
struct MixParams {
  double alpha = 4.0;    // Beta(alpha, alpha) shape for the self-mix weight
  double beta1 = 0.8;    // master weight in the cross stage
  double beta2 = 0.2;    // slave weight in the cross stage
  double area_lo = 0.4;  // self-mix crop area fraction, lower bound
  double area_hi = 1.0;  // upper bound

  void validate() const;
};

// One frozen draw of the augmentation's randomness. Geometry and weights are
// recorded so the same mix can be replayed on perturbed pixels, and so the
// target embedding p can be computed from the unmixed crops.
struct ScMixDraw {
  CropGeom crop1;
  CropGeom crop2;
  double eta = 1.0;  // self-mix weight, in [0.5, 1] by construction
  int partner = 0;   // batch position of the cross-mix partner
};

// Samples crops, eta = max(e, 1-e) with e ~ Beta(alpha, alpha), and a partner
// position uniform over the batch excluding self_ix. A batch of one is its own
// partner (the cross stage then degenerates to pure scaling).
ScMixDraw draw_scmix(Rng& rng, const MixParams& p, int src_h, int src_w,
                     int batch_size, int self_ix);

// Fixed draw that reduces the whole pipeline to the identity on the self
// image: full-frame crops, eta = 1, partner = self.
ScMixDraw identity_scmix_draw(int self_ix = 0);

// eta * a + (1 - eta) * b, written as b + eta*(a - b) so identical inputs
// reduce to themselves exactly.
template <typename T>
Grid<T> blend_crops(const Grid<T>& a, const Grid<T>& b, double eta) {
  if (!a.same_shape(b)) throw ContractError("blend_crops: shape mismatch");
  const T e = static_cast<T>(eta);
  Grid<T> out = b;
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = b.v[i] + e * (a.v[i] - b.v[i]);
  return out;
}

// eta * crop1(x) + (1 - eta) * crop2(x), resized back to the source shape.
template <typename T>
Grid<T> self_mix(const Grid<T>& x, const ScMixDraw& d) {
  Grid<T> a = crop_resize(x, d.crop1, x.h, x.w);
  Grid<T> b = crop_resize(x, d.crop2, x.h, x.w);
  return blend_crops(a, b, d.eta);
}

// beta1 * xhat + beta2 * partner; clipped to [0, 1] only when the weights are
// superconvex (the defaults sum to one, so the clip is a no-op branch).
template <typename T>
Grid<T> cross_mix(const Grid<T>& xhat, const Grid<T>& partner,
                  const MixParams& p) {
  if (!xhat.same_shape(partner))
    throw ContractError("cross_mix: shape mismatch");
  const T b1 = static_cast<T>(p.beta1);
  const T b2 = static_cast<T>(p.beta2);
  Grid<T> out = xhat;
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = b1 * xhat.v[i] + b2 * partner.v[i];
  if (p.beta1 + p.beta2 > 1.0) {
    for (T& v : out.v) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  }
  return out;
}

// Full pixel pipeline for one image given a frozen draw.
template <typename T>
Grid<T> scmix_image(const Grid<T>& x, const Grid<T>& partner,
                    const MixParams& p, const ScMixDraw& d) {
  return cross_mix(self_mix(x, d), partner, p);
}

}  // namespace uaplab
