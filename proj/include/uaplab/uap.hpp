#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "uaplab/grid.hpp"
#include "uaplab/resample.hpp"
#include "uaplab/rng.hpp"

namespace uaplab {

// Max-norm budget, kept as an exact integer ratio (e.g. 12/255) so files and
// reports never accumulate float formatting drift.
struct EpsRational {
  uint32_t num = 12, den = 255;

  float value() const;
  std::string str() const; // "12/255"
  static EpsRational parse(const std::string& s); // "12/255" or "12" (den 255)
};

// A universal perturbation: one pixel field applied to every image, bounded
// in max norm by eps. provenance carries the recipe that produced it.
struct Uap {
  Grid<float> delta; // h x w x 3
  EpsRational eps;
  nlohmann::json provenance = nlohmann::json::object();
};

// Uniform init in [-eps, +eps]; with eps = 0 this is exactly the zero field.
Uap init_uap(int h, int w, EpsRational eps, Rng& rng);

// Clamp every element into [-eps, +eps].
void project_budget(Uap& u);

bool within_budget(const Grid<float>& delta, float eps); // incl. 2-ulp slack

// The local transform family: a random sub-window of the perturbation,
// bilinearly resized back to full extent. Convex resampling weights keep the
// result within the same max-norm budget.
CropGeom draw_local_geom(Rng& rng, int h, int w, double area_lo, double area_hi);

template <class T>
Grid<T> apply_local(const Grid<T>& delta, const CropGeom& g) {
  return crop_resize(delta, g, delta.h, delta.w);
}

// Adversarial image: clamp(x + delta, 0, 1). The synthetic corpus leaves
// budget-sized headroom at both ends, so the clamp is a no-op there and
// pixel gradients stay exact; clipped() reports whether it ever engaged.
template <class T>
Grid<T> apply_uap(const Grid<T>& x, const Grid<T>& delta, bool* clipped = nullptr) {
  if (!x.same_shape(delta)) throw ContractError("apply_uap: shape mismatch");
  Grid<T> out(x.h, x.w, x.c);
  bool any = false;
  for (size_t i = 0; i < x.v.size(); ++i) {
    T v = x.v[i] + delta.v[i];
    if (v < T(0)) { v = T(0); any = true; }
    if (v > T(1)) { v = T(1); any = true; }
    out.v[i] = v;
  }
  if (clipped) *clipped = any;
  return out;
}

// Rescale a perturbation to another image geometry (budget is preserved by
// the convex interpolation weights).
Uap resize_uap(const Uap& u, int h, int w);

// UAPF container: "UAPF" magic, u16 version, JSON provenance, u32 h/w/c,
// u32 eps num/den, float32 payload. Loading re-checks the budget and rejects
// files whose payload exceeds their declared eps.
void save_uap(const Uap& u, const std::string& path);
Uap load_uap(const std::string& path);

std::string describe(const Uap& u);

} // namespace uaplab
