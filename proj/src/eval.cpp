#include "uaplab/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace uaplab {

namespace {

bool groups_intersect(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return true;
    (a[i] < b[j]) ? ++i : ++j;
  }
  return false;
}

// One dataset pass under one model: every image (perturbed if uap is given)
// and every caption, plus the token-identity grouping shared by both
// retrieval directions.
struct DatasetEmbeds {
  MatT<float> img;                          // n x d
  MatT<float> txt;                          // (n*k) x d
  std::vector<int> cap_group;               // per caption row
  std::vector<std::vector<int>> img_groups; // per image: sorted unique groups
};

DatasetEmbeds embed_dataset(ModelPair& model, const Dataset& data,
                            const Uap* uap) {
  if (data.samples.empty()) throw DataError("eval: empty dataset");
  if (model.meta.h != data.height() || model.meta.w != data.width())
    throw ContractError("eval: model and dataset shapes disagree");
  if (!(model.meta.vocab == data.vocab))
    throw ContractError("eval: model and dataset vocabularies disagree");

  Uap resized;
  const Grid<float>* delta = nullptr;
  if (uap) {
    if (uap->delta.h != data.height() || uap->delta.w != data.width()) {
      resized = resize_uap(*uap, data.height(), data.width());
      delta = &resized.delta;
    } else {
      delta = &uap->delta;
    }
  }

  const int n = static_cast<int>(data.samples.size());
  const int k = data.captions_per_image();
  DatasetEmbeds out;
  std::map<TokenSeq, int> group_of;
  std::vector<VecT<float>> img_rows, txt_rows;
  img_rows.reserve(n);
  txt_rows.reserve(static_cast<std::size_t>(n) * k);

  for (int i = 0; i < n; ++i) {
    const Sample& s = data.samples[i];
    if (static_cast<int>(s.tokens.size()) != k)
      throw DataError("eval: ragged caption count at image " + std::to_string(i));
    img_rows.push_back(delta ? model.encode_image(apply_uap(s.image, *delta))
                             : model.encode_image(s.image));
    std::vector<int> mine;
    for (const TokenSeq& t : s.tokens) {
      auto it = group_of.find(t);
      if (it == group_of.end())
        it = group_of.emplace(t, static_cast<int>(group_of.size())).first;
      out.cap_group.push_back(it->second);
      mine.push_back(it->second);
      txt_rows.push_back(model.encode_text(t));
    }
    std::sort(mine.begin(), mine.end());
    mine.erase(std::unique(mine.begin(), mine.end()), mine.end());
    out.img_groups.push_back(std::move(mine));
  }

  const auto d = img_rows.front().size();
  out.img.resize(n, d);
  for (int i = 0; i < n; ++i) out.img.row(i) = img_rows[i].transpose();
  out.txt.resize(static_cast<Eigen::Index>(txt_rows.size()), d);
  for (std::size_t r = 0; r < txt_rows.size(); ++r)
    out.txt.row(static_cast<Eigen::Index>(r)) = txt_rows[r].transpose();
  return out;
}

RetrievalTask assemble_task(Direction dir, const DatasetEmbeds& e) {
  RetrievalTask t;
  t.index.dir = dir;
  if (dir == Direction::ImageToText) {
    t.index.gallery = e.txt;
    for (int g : e.cap_group) t.index.row_groups.push_back({g});
    t.queries.embed = e.img;
    t.queries.truth = e.img_groups;
  } else {
    t.index.gallery = e.img;
    t.index.row_groups = e.img_groups;
    t.queries.embed = e.txt;
    for (int g : e.cap_group) t.queries.truth.push_back({g});
  }
  return t;
}

// Adversarial tasks reuse the clean pass where the perturbation cannot reach:
// i2t keeps the clean caption gallery, t2i keeps the clean caption queries.
RetrievalTask assemble_adv_task(Direction dir, const DatasetEmbeds& clean,
                                const MatT<float>& img_adv) {
  DatasetEmbeds mixed = clean;
  mixed.img = img_adv;
  return assemble_task(dir, mixed);
}

std::vector<int> canonical_ks(std::vector<int> ks) {
  if (ks.empty()) throw ConfigError("eval: need at least one k");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() < 1) throw ConfigError("eval: k must be >= 1");
  return ks;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

} // namespace

Direction direction_from_string(const std::string& s) {
  if (s == "i2t" || s == "image-to-text") return Direction::ImageToText;
  if (s == "t2i" || s == "text-to-image") return Direction::TextToImage;
  throw ConfigError("unknown retrieval direction '" + s + "'");
}

std::string to_string(Direction d) {
  return d == Direction::ImageToText ? "image-to-text" : "text-to-image";
}

std::string short_name(Direction d) {
  return d == Direction::ImageToText ? "i2t" : "t2i";
}

RetrievalTask build_index(ModelPair& model, const Dataset& data, Direction dir,
                          const Uap* uap) {
  return assemble_task(dir, embed_dataset(model, data, uap));
}

std::vector<int> retrieve(const RetrievalIndex& index, const VecT<float>& query,
                          int k) {
  const Eigen::Index n = index.gallery.rows();
  if (k < 1 || k > n) throw ContractError("retrieve: k outside [1, gallery size]");
  if (query.size() != index.gallery.cols())
    throw ContractError("retrieve: query dimension mismatch");
  const VecT<float> scores = index.gallery * query;
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(),
                    [&](int a, int b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  ids.resize(static_cast<std::size_t>(k));
  return ids;
}

HitTable hits_at(const RetrievalTask& task, const std::vector<int>& ks) {
  HitTable out;
  out.ks = canonical_ks(ks);
  const int kmax = out.ks.back();
  if (kmax > task.index.gallery.rows())
    throw ContractError("hits_at: k exceeds gallery size");
  if (static_cast<Eigen::Index>(task.queries.truth.size()) !=
      task.queries.embed.rows())
    throw ContractError("hits_at: truth/query count mismatch");
  if (static_cast<Eigen::Index>(task.index.row_groups.size()) !=
      task.index.gallery.rows())
    throw ContractError("hits_at: row_groups/gallery count mismatch");

  const Eigen::Index q = task.queries.embed.rows();
  out.hit.resize(static_cast<std::size_t>(q));
  for (Eigen::Index i = 0; i < q; ++i) {
    const auto& truth = task.queries.truth[static_cast<std::size_t>(i)];
    bool reachable = false;
    for (const auto& g : task.index.row_groups)
      if (groups_intersect(g, truth)) { reachable = true; break; }
    if (truth.empty() || !reachable)
      throw DataError("hits_at: query " + std::to_string(i) +
                      " has no ground-truth gallery item");

    const std::vector<int> top =
        retrieve(task.index, task.queries.embed.row(i).transpose(), kmax);
    auto& row = out.hit[static_cast<std::size_t>(i)];
    row.assign(out.ks.size(), 0);
    bool hit = false;
    std::size_t next = 0;
    for (int r = 0; r < kmax; ++r) {
      if (!hit && groups_intersect(task.index.row_groups[top[r]], truth))
        hit = true;
      while (next < out.ks.size() && out.ks[next] == r + 1)
        row[next++] = hit ? 1 : 0;
    }
  }
  return out;
}

double recall_at_k(const RetrievalTask& task, int k) {
  const HitTable t = hits_at(task, {k});
  if (t.hit.empty()) throw DataError("recall_at_k: no queries");
  long hits = 0;
  for (const auto& row : t.hit) hits += row[0];
  return static_cast<double>(hits) / static_cast<double>(t.hit.size());
}

AsrCell asr_at(const HitTable& clean, const HitTable& adv, int k) {
  if (clean.hit.size() != adv.hit.size())
    throw ContractError("asr_at: clean and adversarial query sets differ");
  const auto pos_c = std::find(clean.ks.begin(), clean.ks.end(), k);
  const auto pos_a = std::find(adv.ks.begin(), adv.ks.end(), k);
  if (pos_c == clean.ks.end() || pos_a == adv.ks.end())
    throw ContractError("asr_at: k missing from hit tables");
  const std::size_t ic = static_cast<std::size_t>(pos_c - clean.ks.begin());
  const std::size_t ia = static_cast<std::size_t>(pos_a - adv.ks.begin());

  AsrCell cell;
  cell.k = k;
  cell.queries = static_cast<long>(clean.hit.size());
  long adv_hits = 0;
  for (std::size_t q = 0; q < clean.hit.size(); ++q) {
    const bool c = clean.hit[q][ic] != 0;
    const bool a = adv.hit[q][ia] != 0;
    cell.clean_hits += c;
    adv_hits += a;
    cell.flips += (c && !a);
    cell.new_hits += (!c && a);
  }
  if (cell.queries > 0) {
    cell.clean_recall = static_cast<double>(cell.clean_hits) / cell.queries;
    cell.adv_recall = static_cast<double>(adv_hits) / cell.queries;
  }
  if (cell.clean_hits > 0)
    cell.asr = static_cast<double>(cell.flips) / cell.clean_hits;
  return cell;
}

EvalReport transfer_matrix(const Uap& uap,
                           const std::vector<ModelPair*>& models,
                           const std::vector<const Dataset*>& datasets,
                           const std::vector<int>& ks) {
  if (models.empty()) throw ConfigError("transfer_matrix: no models");
  if (datasets.empty()) throw ConfigError("transfer_matrix: no datasets");
  const std::vector<int> kk = canonical_ks(ks);

  EvalReport rep;
  rep.config["eps"] = uap.eps.str();
  rep.config["uap"] = uap.provenance;
  rep.config["ks"] = kk;
  {
    auto& ms = rep.config["models"] = nlohmann::json::array();
    for (ModelPair* m : models)
      ms.push_back({{"name", m->meta.name}, {"digest", model_digest(*m)}});
    auto& dd = rep.config["datasets"] = nlohmann::json::array();
    for (const Dataset* d : datasets)
      dd.push_back({{"name", d->name}, {"digest", dataset_digest(*d)}});
  }

  std::string source_digest;
  if (uap.provenance.contains("model") &&
      uap.provenance["model"].contains("digest"))
    source_digest = uap.provenance["model"]["digest"].get<std::string>();

  for (ModelPair* m : models) {
    const bool wb = !source_digest.empty() && model_digest(*m) == source_digest;
    for (const Dataset* d : datasets) {
      const DatasetEmbeds clean = embed_dataset(*m, *d, nullptr);
      const DatasetEmbeds adv = embed_dataset(*m, *d, &uap);
      for (Direction dir : {Direction::ImageToText, Direction::TextToImage}) {
        const HitTable hc = hits_at(assemble_task(dir, clean), kk);
        const HitTable ha = hits_at(assemble_adv_task(dir, clean, adv.img), kk);
        EvalCell cell;
        cell.model = m->meta.name;
        cell.dataset = d->name;
        cell.dir = dir;
        cell.white_box = wb;
        for (int k : kk) cell.per_k.push_back(asr_at(hc, ha, k));
        rep.cells.push_back(std::move(cell));
      }
    }
  }
  return rep;
}

std::string report_csv(const EvalReport& rep) {
  std::vector<int> kk;
  if (rep.config.contains("ks")) kk = rep.config["ks"].get<std::vector<int>>();
  else if (!rep.cells.empty())
    for (const AsrCell& c : rep.cells.front().per_k) kk.push_back(c.k);

  std::ostringstream os;
  os << "model,dataset,white_box";
  for (const char* dir : {"i2t", "t2i"})
    for (int k : kk)
      os << ',' << dir << "_clean_r" << k << ',' << dir << "_adv_r" << k << ','
         << dir << "_asr" << k;
  os << '\n';

  // One row per model x dataset; the two direction cells arrive adjacent and
  // in a fixed order from transfer_matrix.
  for (std::size_t i = 0; i < rep.cells.size(); i += 2) {
    const EvalCell& a = rep.cells[i];
    if (i + 1 >= rep.cells.size()) throw ContractError("report_csv: odd cell count");
    const EvalCell& b = rep.cells[i + 1];
    if (a.model != b.model || a.dataset != b.dataset || a.dir == b.dir)
      throw ContractError("report_csv: cells not paired by direction");
    const EvalCell& i2t = a.dir == Direction::ImageToText ? a : b;
    const EvalCell& t2i = a.dir == Direction::ImageToText ? b : a;
    os << a.model << ',' << a.dataset << ',' << (a.white_box ? 1 : 0);
    for (const EvalCell* cell : {&i2t, &t2i}) {
      if (cell->per_k.size() != kk.size())
        throw ContractError("report_csv: k grid mismatch");
      for (const AsrCell& c : cell->per_k)
        os << ',' << fmt6(c.clean_recall) << ',' << fmt6(c.adv_recall) << ','
           << (c.asr ? fmt6(*c.asr) : std::string("na"));
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::ordered_json report_json(const EvalReport& rep, bool timestamp) {
  nlohmann::ordered_json j;
  j["schema"] = "uaplab-eval-report/1";
  if (timestamp) {
    const auto now = std::chrono::system_clock::now();
    j["generated_at_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch())
            .count();
  }
  j["config"] = rep.config;
  auto& cells = j["cells"] = nlohmann::json::array();
  for (const EvalCell& c : rep.cells) {
    nlohmann::ordered_json jc;
    jc["model"] = c.model;
    jc["dataset"] = c.dataset;
    jc["direction"] = short_name(c.dir);
    jc["white_box"] = c.white_box;
    auto& per_k = jc["per_k"] = nlohmann::json::array();
    for (const AsrCell& a : c.per_k) {
      nlohmann::ordered_json ja;
      ja["k"] = a.k;
      ja["clean_recall"] = a.clean_recall;
      ja["adv_recall"] = a.adv_recall;
      if (a.asr) ja["asr"] = *a.asr;
      else ja["asr"] = nullptr;
      ja["queries"] = a.queries;
      ja["clean_hits"] = a.clean_hits;
      ja["flips"] = a.flips;
      ja["new_hits"] = a.new_hits;
      per_k.push_back(std::move(ja));
    }
    cells.push_back(std::move(jc));
  }
  return j;
}

void emit_report(const EvalReport& rep, const std::string& out_dir,
                 const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const auto path = std::filesystem::path(out_dir);
  {
    std::ofstream f(path / (stem + ".csv"), std::ios::binary);
    if (!f) throw IoError("emit_report: cannot write " + (path / (stem + ".csv")).string());
    f << report_csv(rep);
    if (!f.good()) throw IoError("emit_report: short write on csv");
  }
  {
    std::ofstream f(path / (stem + ".json"), std::ios::binary);
    if (!f) throw IoError("emit_report: cannot write " + (path / (stem + ".json")).string());
    f << report_json(rep).dump(2) << '\n';
    if (!f.good()) throw IoError("emit_report: short write on json");
  }
}

std::string bar_chart_svg(const std::string& title,
                          const std::vector<std::pair<std::string, double>>& bars) {
  const int bw = 56, gap = 28, left = 64, top = 48, plot_h = 220, bottom = 56;
  const int w = left + 24 + static_cast<int>(bars.size()) * (bw + gap);
  const int h = top + plot_h + bottom;
  double vmax = 1.0;
  for (const auto& b : bars) vmax = std::max(vmax, b.second);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
     << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
     << w - 12 << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = vmax * tick / 4.0;
    const int y = top + plot_h - static_cast<int>(plot_h * tick / 4.0);
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
       << "\" text-anchor=\"end\">" << fmt6(v).substr(0, 4) << "</text>\n";
  }
  int x = left + gap / 2;
  for (const auto& [label, value] : bars) {
    const int bh = static_cast<int>(plot_h * std::clamp(value / vmax, 0.0, 1.0));
    os << "<rect x=\"" << x << "\" y=\"" << top + plot_h - bh << "\" width=\""
       << bw << "\" height=\"" << bh << "\" fill=\"#4878a8\"/>\n"
       << "<text x=\"" << x + bw / 2 << "\" y=\"" << top + plot_h - bh - 6
       << "\" text-anchor=\"middle\">" << fmt6(value).substr(0, 5) << "</text>\n"
       << "<text x=\"" << x + bw / 2 << "\" y=\"" << top + plot_h + 18
       << "\" text-anchor=\"middle\">" << label << "</text>\n";
    x += bw + gap;
  }
  os << "</svg>\n";
  return os.str();
}

} // namespace uaplab
