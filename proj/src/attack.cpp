#include "uaplab/attack.hpp"

#include <chrono>
#include <cmath>

#include "json.hpp"

namespace uaplab {

void AttackConfig::validate() const {
  if (!(eps.value() > 0.0f)) throw ConfigError("attack: eps must be positive");
  if (steps <= 0) throw ConfigError("attack: steps must be positive");
  if (batch <= 0) throw ConfigError("attack: batch must be positive");
  if (!(tau > 0.0)) throw ConfigError("attack: tau must be positive");
  if (!(step_scale > 0.0)) throw ConfigError("attack: step scale must be positive");
  if (!(local_area_lo > 0.0 && local_area_lo <= local_area_hi && local_area_hi <= 1.0))
    throw ConfigError("attack: local crop area range must satisfy 0 < lo <= hi <= 1");
  mix.validate();
}

double AttackConfig::step_size() const {
  return static_cast<double>(eps.value()) / steps * step_scale;
}

ObjectiveSettings AttackConfig::objective_settings() const {
  ObjectiveSettings s;
  s.terms = variant_terms(variant);
  s.dir = kl_dir;
  s.tau = tau;
  s.mix = mix;
  s.local_area_lo = local_area_lo;
  s.local_area_hi = local_area_hi;
  return s;
}

std::string to_json_line(const StepTrace& t) {
  nlohmann::ordered_json j;
  j["step"] = t.step;
  j["l1"] = t.l1;
  j["l2"] = t.l2;
  j["l3"] = t.l3;
  j["total"] = t.total;
  j["linf"] = t.linf;
  return j.dump();
}

void pgd_step(Uap& u, const Grid<float>& grad, float step_size) {
  if (!u.delta.same_shape(grad))
    throw ContractError("pgd_step: gradient shape differs from perturbation");
  const float e = u.eps.value();
  for (std::size_t i = 0; i < u.delta.v.size(); ++i) {
    const float g = grad.v[i];
    if (!std::isfinite(g)) throw NumericError("pgd_step: non-finite gradient");
    const float s = g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
    u.delta.v[i] = std::clamp(u.delta.v[i] + step_size * s, -e, e);
  }
}

AttackResult run_attack(ModelPair& model, const Dataset& data,
                        const AttackConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (data.samples.empty()) throw DataError("run_attack: empty dataset");
  if (model.meta.h != data.height() || model.meta.w != data.width())
    throw ContractError("run_attack: model input shape differs from dataset");
  if (!(model.meta.vocab == data.vocab))
    throw ContractError("run_attack: model and dataset vocabularies differ");

  const auto t0 = std::chrono::steady_clock::now();
  Rng root(cfg.seed);
  Rng init_rng = root.derive(0x1417, 0, 0);
  Uap u = init_uap(data.height(), data.width(), cfg.eps, init_rng);
  const bool optimized = cfg.variant != Variant::RandomNoise;
  u.provenance = {
      {"variant", to_string(cfg.variant)},
      {"eps", cfg.eps.str()},
      {"steps", optimized ? cfg.steps : 0},
      {"batch", cfg.batch},
      {"seed", cfg.seed},
      {"kl_direction", to_string(cfg.kl_dir)},
      {"model",
       {{"name", model.meta.name},
        {"arch", to_string(model.meta.arch)},
        {"digest", model_digest(model)}}},
      {"data",
       {{"name", data.name},
        {"seed", data.seed},
        {"digest", dataset_digest(data)}}},
  };

  AttackResult res;
  if (optimized) {
    const ObjectiveSettings s = cfg.objective_settings();
    const auto step = static_cast<float>(cfg.step_size());
    CleanCache<float> cache;
    cache.reset(data);
    zero_grads(model.image->params());
    zero_grads(model.text->params());
    res.trace.reserve(static_cast<std::size_t>(cfg.steps));
    for (int t = 0; t < cfg.steps; ++t) {
      Rng srng = root.derive(0x57e9, static_cast<uint64_t>(t), 0);
      std::vector<PairRef> batch(static_cast<std::size_t>(cfg.batch));
      for (PairRef& b : batch) b = sample_pair(srng, data);
      const StepPlan<float> plan =
          build_step_plan(model, data, batch, s, srng, &cache);
      Grid<float> grad;
      const LossBreakdown lb = objective_loss_and_grad(model, plan, u.delta, s, grad);
      pgd_step(u, grad, step);
      if (!within_budget(u.delta, cfg.eps.value()))
        throw ContractError("run_attack: budget violated after projection");
      StepTrace tr;
      tr.step = t;
      tr.l1 = lb.l1;
      tr.l2 = lb.l2;
      tr.l3 = lb.l3;
      tr.total = lb.total;
      tr.linf = static_cast<double>(u.delta.max_abs());
      if (on_step) on_step(tr);
      res.trace.push_back(tr);
    }
  }
  res.uap = std::move(u);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

} // namespace uaplab
