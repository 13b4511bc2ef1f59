#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uaplab/objectives.hpp"

namespace uaplab {

struct AttackConfig {
  Variant variant = Variant::Etu;
  EpsRational eps{12, 255};
  int steps = 100; // mini-batch update count T
  int batch = 16;  // (image, caption) pairs per step
  uint64_t seed = 1;
  KlDirection kl_dir = KlDirection::TargetToAdv;
  MixParams mix;
  double local_area_lo = 0.25; // crop window of the perturbation transform
  double local_area_hi = 1.0;
  double tau = 1.0;
  double step_scale = 1.25; // step size = eps / steps * step_scale

  void validate() const;
  double step_size() const;
  ObjectiveSettings objective_settings() const;
};

// One diagnostic row per optimization step; linf is measured after the
// step's projection.
struct StepTrace {
  int step = 0;
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, total = 0.0;
  double linf = 0.0;
};

std::string to_json_line(const StepTrace& t);

struct AttackResult {
  Uap uap;
  std::vector<StepTrace> trace; // one row per performed step
  double seconds = 0.0;
};

using StepCallback = std::function<void(const StepTrace&)>;

// delta <- project(delta + step * sign(grad)); sign(0) is 0, so dead
// coordinates hold still. Non-finite gradients abort the step.
void pgd_step(Uap& u, const Grid<float>& grad, float step_size);

// Full optimization loop: uniform init inside the budget box, then `steps`
// rounds of (sample batch, freeze plan, ascend, project). The random-noise
// variant returns the initialization untouched with an empty trace. The
// callback fires after every step so callers can stream the trace even if a
// later step aborts.
AttackResult run_attack(ModelPair& model, const Dataset& data,
                        const AttackConfig& cfg,
                        const StepCallback& on_step = {});

} // namespace uaplab
