// Command-line front end: dataset generation, contrastive pretraining, UAP
// crafting, and the transfer-evaluation grid. Every subcommand is seeded and
// writes self-describing artifacts, so full pipelines replay bit-identically.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "uaplab/attack.hpp"
#include "uaplab/eval.hpp"
#include "uaplab/pretrain.hpp"

using namespace uaplab;

namespace {

std::vector<int> parse_ks(const std::string& csv) {
  std::vector<int> ks;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) ks.push_back(std::stoi(tok));
  if (ks.empty()) throw ConfigError("--k: expected a list like 1,5,10");
  return ks;
}

std::vector<EpsRational> parse_eps_list(const std::string& csv) {
  std::vector<EpsRational> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(EpsRational::parse(tok));
  if (out.empty()) throw ConfigError("--eps: expected a list like 4,8,12,16");
  return out;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << body;
  if (!f.good()) throw IoError("short write on " + path);
}

AttackResult craft(ModelPair& model, const Dataset& ds, const AttackConfig& cfg,
                   const std::string& out) {
  std::ofstream trace(out + ".trace.jsonl", std::ios::binary);
  if (!trace) throw IoError("cannot write " + out + ".trace.jsonl");
  AttackResult res = run_attack(model, ds, cfg, [&](const StepTrace& t) {
    trace << to_json_line(t) << '\n';
    trace.flush(); // keep the partial trace on divergence aborts
  });
  save_uap(res.uap, out);
  std::fprintf(stderr, "wrote %s (%s, %d steps, %.1fs)\n", out.c_str(),
               to_string(cfg.variant).c_str(), cfg.steps, res.seconds);
  return res;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"toy dual-encoder lab: universal adversarial perturbations "
               "against image-text retrieval"};
  app.require_subcommand(1);

  // ---- data gen / data inspect ----
  auto* data_cmd = app.add_subcommand("data", "synthetic corpus tools");
  data_cmd->require_subcommand(1);

  struct {
    std::string preset = "A", out, spec_json;
    int n = 256;
    uint64_t seed = 1;
  } dg;
  auto* gen = data_cmd->add_subcommand("gen", "generate a paired corpus");
  gen->add_option("--preset", dg.preset, "attribute palette, A or B");
  gen->add_option("--n", dg.n, "number of images");
  gen->add_option("--seed", dg.seed, "generation seed");
  gen->add_option("--spec", dg.spec_json, "JSON spec file (overrides preset)");
  gen->add_option("--out", dg.out, "output .uapd file")->required();
  gen->callback([&] {
    SyntheticSpec spec = dg.spec_json.empty()
                             ? SyntheticSpec::preset(dg.preset, dg.n)
                             : SyntheticSpec::from_json_file(dg.spec_json);
    Dataset ds = generate_dataset(spec, dg.seed);
    save_dataset(ds, dg.out);
    std::cout << describe(ds) << '\n';
  });

  std::string inspect_path;
  auto* ins = data_cmd->add_subcommand("inspect", "describe a corpus file");
  ins->add_option("path", inspect_path, ".uapd file")->required();
  ins->callback([&] { std::cout << describe(load_dataset(inspect_path)) << '\n'; });

  // ---- pretrain ----
  struct {
    std::vector<std::string> data;
    std::string arch = "conv-small", out;
    PretrainConfig cfg;
  } pt;
  auto* tr = app.add_subcommand("pretrain", "contrastive-train a dual encoder");
  tr->add_option("--data", pt.data, ".uapd corpora (concatenated)")
      ->required()
      ->expected(-1);
  tr->add_option("--arch", pt.arch, "conv-small | conv-wide | patch-attn");
  tr->add_option("--seed", pt.cfg.seed, "init + batch sampling seed");
  tr->add_option("--epochs", pt.cfg.epochs, "training epochs");
  tr->add_option("--batch", pt.cfg.batch, "contrastive batch size");
  tr->add_option("--lr", pt.cfg.lr, "Adam learning rate");
  tr->add_option("--r1-floor", pt.cfg.r1_floor, "required clean recall@1");
  tr->add_flag("--verbose", pt.cfg.verbose, "per-epoch loss to stderr");
  tr->add_option("--out", pt.out, "output .uapm checkpoint")->required();
  tr->callback([&] {
    Dataset ds = load_dataset(pt.data.front());
    for (std::size_t i = 1; i < pt.data.size(); ++i)
      ds = concat(ds, load_dataset(pt.data[i]));
    ModelPair m = make_model(arch_from_string(pt.arch), ds.height(), ds.width(),
                             ds.vocab);
    m.meta.name = pt.arch + "-s" + std::to_string(pt.cfg.seed);
    PretrainStats st = pretrain(m, ds, pt.cfg);
    save_model(m, pt.out);
    std::fprintf(stderr, "wrote %s (clean R@1 %.3f over %zu images)\n",
                 pt.out.c_str(), st.final_r1, ds.samples.size());
  });

  // ---- attack ----
  struct {
    std::string data, model, variant = "etu", eps = "12/255", out;
    AttackConfig cfg;
  } at;
  auto* ak = app.add_subcommand("attack", "craft a universal perturbation");
  ak->add_option("--data", at.data, "training corpus (.uapd)")->required();
  ak->add_option("--model", at.model, "surrogate checkpoint (.uapm)")->required();
  ak->add_option("--variant", at.variant,
                 "random-noise | unia | mula | etu-l | etu-s | etu");
  ak->add_option("--eps", at.eps, "budget, e.g. 12/255");
  ak->add_option("--steps", at.cfg.steps, "PGD steps");
  ak->add_option("--batch", at.cfg.batch, "mini-batch size");
  ak->add_option("--seed", at.cfg.seed, "attack seed");
  ak->add_option("--tau", at.cfg.tau, "divergence softmax temperature");
  ak->add_option("--out", at.out, "output .uapf file")->required();
  ak->callback([&] {
    at.cfg.variant = variant_from_string(at.variant);
    at.cfg.eps = EpsRational::parse(at.eps);
    Dataset ds = load_dataset(at.data);
    ModelPair m = load_model(at.model);
    craft(m, ds, at.cfg, at.out);
  });

  // ---- uap show ----
  auto* uap_cmd = app.add_subcommand("uap", "perturbation file tools");
  uap_cmd->require_subcommand(1);
  std::string show_path;
  auto* show = uap_cmd->add_subcommand("show", "describe a .uapf file");
  show->add_option("path", show_path)->required();
  show->callback([&] { std::cout << describe(load_uap(show_path)) << '\n'; });

  // ---- eval ----
  struct {
    std::vector<std::string> uaps, models, data;
    std::string ks = "1,5,10", out = "eval-out";
  } ev;
  auto* evc = app.add_subcommand("eval", "transfer grid for crafted UAPs");
  evc->add_option("--uap", ev.uaps, ".uapf files")->required()->expected(-1);
  evc->add_option("--models", ev.models, "target checkpoints")
      ->required()
      ->expected(-1);
  evc->add_option("--data", ev.data, "evaluation corpora")
      ->required()
      ->expected(-1);
  evc->add_option("--k", ev.ks, "comma-separated recall cutoffs");
  evc->add_option("--out", ev.out, "report directory");
  evc->callback([&] {
    const std::vector<int> ks = parse_ks(ev.ks);
    std::vector<ModelPair> models;
    std::vector<ModelPair*> mp;
    for (const auto& p : ev.models) models.push_back(load_model(p));
    for (auto& m : models) mp.push_back(&m);
    std::vector<Dataset> data;
    std::vector<const Dataset*> dp;
    for (const auto& p : ev.data) data.push_back(load_dataset(p));
    for (auto& d : data) dp.push_back(&d);

    std::vector<std::pair<std::string, double>> bars;
    for (const auto& path : ev.uaps) {
      const Uap uap = load_uap(path);
      EvalReport rep = transfer_matrix(uap, mp, dp, ks);
      const std::string stem =
          std::filesystem::path(path).stem().string();
      emit_report(rep, ev.out, stem);
      std::cout << report_csv(rep);

      // black-box mean ASR@1 across non-source cells, for the variant chart
      double acc = 0;
      int cnt = 0;
      for (const EvalCell& c : rep.cells)
        if (!c.white_box && c.per_k.front().asr) {
          acc += *c.per_k.front().asr;
          ++cnt;
        }
      if (cnt)
        bars.emplace_back(
            uap.provenance.value("variant", stem), acc / cnt);
    }
    if (bars.size() > 1)
      write_text(ev.out + "/asr_by_uap.svg",
                 bar_chart_svg("black-box mean ASR@1", bars));
  });

  // ---- sweep-eps ----
  struct {
    std::string data, model, variant = "etu", eps = "4,8,12,16", out = "sweep-out";
    std::vector<std::string> eval_models, eval_data;
    AttackConfig cfg;
    std::string ks = "1,5,10";
  } sw;
  auto* swc = app.add_subcommand("sweep-eps", "re-craft at several budgets");
  swc->add_option("--data", sw.data, "attack corpus")->required();
  swc->add_option("--model", sw.model, "surrogate checkpoint")->required();
  swc->add_option("--eps", sw.eps, "comma-separated budgets (N or N/D)");
  swc->add_option("--variant", sw.variant, "attack variant");
  swc->add_option("--steps", sw.cfg.steps, "PGD steps");
  swc->add_option("--batch", sw.cfg.batch, "mini-batch size");
  swc->add_option("--seed", sw.cfg.seed, "attack seed");
  swc->add_option("--models", sw.eval_models, "eval checkpoints (default: surrogate)")
      ->expected(-1);
  swc->add_option("--eval-data", sw.eval_data, "eval corpora (default: attack corpus)")
      ->expected(-1);
  swc->add_option("--k", sw.ks, "recall cutoffs");
  swc->add_option("--out", sw.out, "output directory");
  swc->callback([&] {
    std::filesystem::create_directories(sw.out);
    sw.cfg.variant = variant_from_string(sw.variant);
    Dataset ds = load_dataset(sw.data);
    ModelPair m = load_model(sw.model);

    std::vector<ModelPair> models;
    for (const auto& p : sw.eval_models) models.push_back(load_model(p));
    std::vector<ModelPair*> mp;
    if (models.empty()) mp.push_back(&m);
    for (auto& em : models) mp.push_back(&em);
    std::vector<Dataset> data;
    for (const auto& p : sw.eval_data) data.push_back(load_dataset(p));
    std::vector<const Dataset*> dp;
    if (data.empty()) dp.push_back(&ds);
    for (auto& d : data) dp.push_back(&d);

    std::vector<std::pair<std::string, double>> bars;
    for (const EpsRational& e : parse_eps_list(sw.eps)) {
      AttackConfig cfg = sw.cfg;
      cfg.eps = e;
      const std::string tag = std::to_string(e.num) + "_" + std::to_string(e.den);
      AttackResult res = craft(m, ds, cfg, sw.out + "/uap_eps" + tag + ".uapf");
      EvalReport rep = transfer_matrix(res.uap, mp, dp, parse_ks(sw.ks));
      emit_report(rep, sw.out, "report_eps" + tag);
      // white-box i2t ASR@1 is the headline number for the sweep plot
      for (const EvalCell& c : rep.cells)
        if (c.white_box && c.dir == Direction::ImageToText) {
          bars.emplace_back(e.str(), c.per_k.front().asr.value_or(0.0));
          break;
        }
    }
    write_text(sw.out + "/asr_vs_eps.svg",
               bar_chart_svg("white-box ASR@1 vs budget", bars));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
