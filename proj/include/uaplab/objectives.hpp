#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uaplab/data.hpp"
#include "uaplab/encoders.hpp"
#include "uaplab/scmix.hpp"
#include "uaplab/uap.hpp"

namespace uaplab {

// Which way the softmax divergence points. TargetToAdv scores how much mass
// the clean representation puts where the adversarial one does not; the
// gradient always flows through the adversarial side only.
enum class KlDirection { TargetToAdv, AdvToTarget };

KlDirection kl_direction_from_string(const std::string& s);
std::string to_string(KlDirection d);

// The five optimized method variants plus the noise baseline. Term gating is
// the only difference between them; everything else is shared.
enum class Variant { RandomNoise, UniA, MulA, EtuL, EtuS, Etu };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct TermSet {
  bool base = false;           // adversarial image vs clean image + caption
  bool base_text = false;      // include the caption half of the base term
  bool local = false;          // locally resampled perturbation term
  bool mixed = false;          // mixed-image term with its frozen target p
  bool mixed_on_delta = false; // mixed term sees delta itself, not As(delta)
};

TermSet variant_terms(Variant v);

struct ObjectiveSettings {
  TermSet terms;
  KlDirection dir = KlDirection::TargetToAdv;
  double tau = 1.0;
  MixParams mix;
  double local_area_lo = 0.25; // crop window for the perturbation transform
  double local_area_hi = 1.0;
};

// Per-target sub-values of each term (already divided by batch size).
struct TermParts {
  double img_img = 0.0; // against the clean image embedding
  double img_txt = 0.0; // against the paired caption embedding
  double img_mix = 0.0; // against the frozen mixed target p
};

struct LossBreakdown {
  TermParts p1, p2, p3;
  double l1 = 0.0, l2 = 0.0, l3 = 0.0;
  double total = 0.0; // always l1 + l2 + l3, fixed accumulation order
};

namespace objdetail {

template <class T>
void log_softmax(const VecT<T>& z, T tau, VecT<T>& logp, VecT<T>& p) {
  VecT<T> u = z / tau;
  u.array() -= u.maxCoeff();
  const T lse = std::log(u.array().exp().sum());
  logp = (u.array() - lse).matrix();
  p = logp.array().exp().matrix();
}

// Divergence between softmax-tempered embeddings; the target side is a
// constant. Loss-only and gradient callers share this one implementation so
// their values agree bitwise.
template <class T>
T divergence_impl(const VecT<T>& adv, const VecT<T>& target, T tau,
                  KlDirection dir, VecT<T>* grad_adv) {
  if (adv.size() == 0 || adv.size() != target.size())
    throw ContractError("repr_divergence: embedding size mismatch");
  if (!(tau > T(0))) throw ConfigError("repr_divergence: tau must be positive");
  VecT<T> logq, q, logp, p;
  log_softmax(adv, tau, logq, q);
  log_softmax(target, tau, logp, p);
  T v;
  if (dir == KlDirection::TargetToAdv) {
    v = (p.array() * (logp - logq).array()).sum();
    if (grad_adv) *grad_adv = (q - p) / tau;
  } else {
    const VecT<T> s = logq - logp;
    v = (q.array() * s.array()).sum();
    if (grad_adv) *grad_adv = (q.array() * (s.array() - v)).matrix() / tau;
  }
  if (!std::isfinite(static_cast<double>(v)))
    throw NumericError("repr_divergence: non-finite value");
  if (grad_adv && !grad_adv->allFinite())
    throw NumericError("repr_divergence: non-finite gradient");
  return v < T(0) ? T(0) : v; // clip float dust; true KL is non-negative
}

} // namespace objdetail

template <class T>
T repr_divergence(const VecT<T>& adv, const VecT<T>& target, T tau,
                  KlDirection dir = KlDirection::TargetToAdv) {
  return objdetail::divergence_impl(adv, target, tau, dir, static_cast<VecT<T>*>(nullptr));
}

template <class T>
T repr_divergence_grad(const VecT<T>& adv, const VecT<T>& target, T tau,
                       KlDirection dir, VecT<T>& grad_adv) {
  return objdetail::divergence_impl(adv, target, tau, dir, &grad_adv);
}

// Everything random or target-like for one optimization step, frozen before
// any gradient work: the batch images, their clean embeddings, the mixed
// images with their targets, and the crop geometries for the perturbation
// transform. Gradients treat all of it as constants.
template <class T>
struct StepEntry {
  int image = 0, caption = 0;
  Grid<T> x;
  VecT<T> f_img, f_txt;
  ScMixDraw mix_draw;
  Grid<T> x_mixed; // built only when the mixed term is active
  VecT<T> p_mixed;
};

template <class T>
struct StepPlan {
  std::vector<StepEntry<T>> entries;
  CropGeom local_g = CropGeom::identity(); // one draw shared across the batch
  CropGeom mixed_g = CropGeom::identity(); // independent draw for the mixed term
};

// Clean embeddings never change while a model is frozen; cache them per image
// and per (image, caption) slot across steps.
template <class T>
struct CleanCache {
  int k = 0;
  std::vector<VecT<T>> img, txt;

  void reset(const Dataset& ds) {
    k = ds.captions_per_image();
    img.assign(ds.samples.size(), VecT<T>());
    txt.assign(ds.samples.size() * static_cast<std::size_t>(k), VecT<T>());
  }
};

// Draw order is fixed (per-entry mix draws in batch order, then the shared
// local geometry, then the mixed-term geometry) so plans are reproducible
// from the rng seed alone.
template <class T>
StepPlan<T> build_step_plan(EncoderPair<T>& enc, const Dataset& ds,
                            const std::vector<PairRef>& batch,
                            const ObjectiveSettings& s, Rng& rng,
                            CleanCache<T>* cache = nullptr) {
  const int h = ds.height(), w = ds.width();
  if (enc.image->input_h() != h || enc.image->input_w() != w)
    throw ContractError("build_step_plan: model input shape differs from dataset");
  if (cache && cache->img.size() != ds.samples.size())
    throw ContractError("build_step_plan: clean cache belongs to another dataset");

  StepPlan<T> plan;
  const int m = static_cast<int>(batch.size());
  plan.entries.reserve(batch.size());
  for (const PairRef& pr : batch) {
    if (pr.img < 0 || pr.img >= static_cast<int>(ds.samples.size()))
      throw ContractError("build_step_plan: image index out of range");
    const Sample& smp = ds.samples[pr.img];
    if (pr.cap < 0 || pr.cap >= static_cast<int>(smp.tokens.size()))
      throw ContractError("build_step_plan: caption index out of range");
    StepEntry<T> e;
    e.image = pr.img;
    e.caption = pr.cap;
    e.x = smp.image.template cast<T>();
    if (cache) {
      VecT<T>& ci = cache->img[pr.img];
      if (ci.size() == 0) ci = enc.encode_image(e.x);
      e.f_img = ci;
      VecT<T>& ct = cache->txt[pr.img * static_cast<std::size_t>(cache->k) + pr.cap];
      if (ct.size() == 0) ct = enc.encode_text(smp.tokens[pr.cap]);
      e.f_txt = ct;
    } else {
      e.f_img = enc.encode_image(e.x);
      e.f_txt = enc.encode_text(smp.tokens[pr.cap]);
    }
    plan.entries.push_back(std::move(e));
  }

  if (s.terms.mixed) {
    for (int i = 0; i < m; ++i) {
      StepEntry<T>& e = plan.entries[i];
      e.mix_draw = draw_scmix(rng, s.mix, h, w, m, i);
      Grid<T> c1 = crop_resize(e.x, e.mix_draw.crop1, h, w);
      Grid<T> c2 = crop_resize(e.x, e.mix_draw.crop2, h, w);
      const VecT<T> e1 = enc.encode_image(c1);
      const VecT<T> e2 = enc.encode_image(c2);
      const T eta = static_cast<T>(e.mix_draw.eta);
      e.p_mixed = e1 * eta + e2 * (T(1) - eta);
      e.x_mixed =
          cross_mix(blend_crops(c1, c2, e.mix_draw.eta),
                    plan.entries[e.mix_draw.partner].x, s.mix);
    }
  }
  if (s.terms.local)
    plan.local_g = draw_local_geom(rng, h, w, s.local_area_lo, s.local_area_hi);
  if (s.terms.mixed && !s.terms.mixed_on_delta)
    plan.mixed_g = draw_local_geom(rng, h, w, s.local_area_lo, s.local_area_hi);
  return plan;
}

namespace objdetail {

// x + d with a hard guarantee that no pixel saturates: the synthetic corpus
// leaves budget-sized headroom, so a clamp would only hide a config error
// (and would silently zero gradients in the saturated pixels).
template <class T>
Grid<T> add_in_unit_range(const Grid<T>& x, const Grid<T>& d) {
  if (!x.same_shape(d))
    throw ContractError("objective: perturbation shape differs from image");
  Grid<T> out(x.h, x.w, x.c);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    const T v = x.v[i] + d.v[i];
    if (!(v >= T(0) && v <= T(1)))
      throw ContractError(
          "objective: perturbed pixel left [0,1]; the synthetic corpus "
          "supports budgets up to 16/255 only");
    out.v[i] = v;
  }
  return out;
}

template <class T>
LossBreakdown objective_core(EncoderPair<T>& enc, const StepPlan<T>& plan,
                             const Grid<T>& delta, const ObjectiveSettings& s,
                             Grid<T>* gdelta) {
  LossBreakdown out;
  if (gdelta) *gdelta = Grid<T>(delta.h, delta.w, delta.c);
  const int m = static_cast<int>(plan.entries.size());
  if (m == 0) return out;

  const T tau = static_cast<T>(s.tau);
  Grid<T> g_direct(delta.h, delta.w, delta.c);
  Grid<T> g_local(delta.h, delta.w, delta.c);
  Grid<T> g_mixed(delta.h, delta.w, delta.c);

  // The transformed perturbations are shared across the batch: one local
  // draw per step, plus the independent draw (or delta itself) for the
  // mixed term.
  Grid<T> d_local, d_mixed;
  if (s.terms.local) d_local = apply_local(delta, plan.local_g);
  if (s.terms.mixed)
    d_mixed = s.terms.mixed_on_delta ? delta : apply_local(delta, plan.mixed_g);

  double s1_ii = 0, s1_it = 0, s2_ii = 0, s2_it = 0;
  double s3_ip = 0, s3_ii = 0, s3_it = 0;

  // One backward pass per encoder forward: per-target embedding gradients
  // are summed before propagating to pixels.
  auto accumulate = [&](const Grid<T>& input, const StepEntry<T>& e,
                        bool with_p, double& acc_ip, double& acc_ii,
                        double& acc_it, Grid<T>& gsink) {
    const VecT<T> adv = enc.image->forward(input);
    VecT<T> gsum = VecT<T>::Zero(adv.size());
    VecT<T> g(adv.size());
    if (with_p) {
      acc_ip += static_cast<double>(repr_divergence_grad(adv, e.p_mixed, tau, s.dir, g));
      if (gdelta) gsum += g;
    }
    acc_ii += static_cast<double>(repr_divergence_grad(adv, e.f_img, tau, s.dir, g));
    if (gdelta) gsum += g;
    if (s.terms.base_text || with_p) {
      acc_it += static_cast<double>(repr_divergence_grad(adv, e.f_txt, tau, s.dir, g));
      if (gdelta) gsum += g;
    }
    if (gdelta) {
      const Grid<T> gx = enc.image->backward(gsum);
      for (std::size_t i = 0; i < gsink.v.size(); ++i) gsink.v[i] += gx.v[i];
    }
  };

  for (const StepEntry<T>& e : plan.entries) {
    if (s.terms.base)
      accumulate(add_in_unit_range(e.x, delta), e, false, s3_ip, s1_ii, s1_it,
                 g_direct);
    if (s.terms.local)
      accumulate(add_in_unit_range(e.x, d_local), e, false, s3_ip, s2_ii,
                 s2_it, g_local);
    if (s.terms.mixed) {
      if (e.x_mixed.v.empty())
        throw ContractError("objective: plan was built without mixed inputs");
      accumulate(add_in_unit_range(e.x_mixed, d_mixed), e, true, s3_ip, s3_ii,
                 s3_it, g_mixed);
    }
  }

  const double inv_m = 1.0 / m;
  out.p1.img_img = s1_ii * inv_m;
  out.p1.img_txt = s1_it * inv_m;
  out.p2.img_img = s2_ii * inv_m;
  out.p2.img_txt = s2_it * inv_m;
  out.p3.img_mix = s3_ip * inv_m;
  out.p3.img_img = s3_ii * inv_m;
  out.p3.img_txt = s3_it * inv_m;
  out.l1 = out.p1.img_img + out.p1.img_txt;
  out.l2 = out.p2.img_img + out.p2.img_txt;
  out.l3 = out.p3.img_mix + out.p3.img_img + out.p3.img_txt;
  out.total = out.l1 + out.l2 + out.l3;
  if (!std::isfinite(out.total)) throw NumericError("objective: non-finite loss");

  if (gdelta) {
    Grid<T> ad_local, ad_mixed;
    if (s.terms.local)
      ad_local = crop_resize_adjoint(g_local, plan.local_g, delta.h, delta.w);
    if (s.terms.mixed)
      ad_mixed = s.terms.mixed_on_delta
                     ? g_mixed
                     : crop_resize_adjoint(g_mixed, plan.mixed_g, delta.h, delta.w);
    const T tm = static_cast<T>(inv_m);
    for (std::size_t i = 0; i < gdelta->v.size(); ++i) {
      T g = g_direct.v[i];
      if (s.terms.local) g += ad_local.v[i];
      if (s.terms.mixed) g += ad_mixed.v[i];
      gdelta->v[i] = g * tm;
      if (!std::isfinite(static_cast<double>(gdelta->v[i])))
        throw NumericError("objective: non-finite gradient");
    }
  }
  return out;
}

} // namespace objdetail

// Batch-mean loss under the gated terms. Disabled terms are exact zeros in
// both the breakdown and the gradient.
template <class T>
LossBreakdown objective_loss(EncoderPair<T>& enc, const StepPlan<T>& plan,
                             const Grid<T>& delta, const ObjectiveSettings& s) {
  return objdetail::objective_core(enc, plan, delta, s, static_cast<Grid<T>*>(nullptr));
}

template <class T>
LossBreakdown objective_loss_and_grad(EncoderPair<T>& enc, const StepPlan<T>& plan,
                                      const Grid<T>& delta,
                                      const ObjectiveSettings& s, Grid<T>& gdelta) {
  return objdetail::objective_core(enc, plan, delta, s, &gdelta);
}

} // namespace uaplab
