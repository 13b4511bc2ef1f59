#include "uaplab/scmix.hpp"

namespace uaplab {

void MixParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("mix: alpha must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("mix: beta1 and beta2 must lie in [0, 1)");
  if (!(beta1 > beta2))
    throw ConfigError("mix: master weight beta1 must exceed beta2");
  if (!(area_lo > 0.0 && area_lo <= area_hi && area_hi <= 1.0))
    throw ConfigError("mix: crop area range must satisfy 0 < lo <= hi <= 1");
}

ScMixDraw draw_scmix(Rng& rng, const MixParams& p, int src_h, int src_w,
                     int batch_size, int self_ix) {
  p.validate();
  if (batch_size < 1) throw ContractError("draw_scmix: empty batch");
  if (self_ix < 0 || self_ix >= batch_size)
    throw ContractError("draw_scmix: self index outside batch");
  ScMixDraw d;
  d.crop1 = draw_crop(rng, src_h, src_w, src_h, src_w, p.area_lo, p.area_hi);
  d.crop2 = draw_crop(rng, src_h, src_w, src_h, src_w, p.area_lo, p.area_hi);
  const double e = rng.beta(p.alpha, p.alpha);
  d.eta = e < 0.5 ? 1.0 - e : e;
  if (batch_size == 1) {
    d.partner = self_ix;
  } else {
    int j = static_cast<int>(rng.uniform_int(0, batch_size - 2));
    if (j >= self_ix) ++j;
    d.partner = j;
  }
  return d;
}

ScMixDraw identity_scmix_draw(int self_ix) {
  ScMixDraw d;
  d.crop1 = CropGeom::identity();
  d.crop2 = CropGeom::identity();
  d.eta = 1.0;
  d.partner = self_ix;
  return d;
}

}  // namespace uaplab
