#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uaplab/data.hpp"
#include "uaplab/encoders.hpp"
#include "uaplab/uap.hpp"

namespace uaplab {

enum class Direction { ImageToText, TextToImage };

Direction direction_from_string(const std::string& s);
std::string to_string(Direction d);   // "image-to-text" / "text-to-image"
std::string short_name(Direction d);  // "i2t" / "t2i" (report columns)

// Captions are grouped by exact token identity. The synthetic corpus repeats
// caption text across images, and token-identical captions embed identically,
// so retrieving an indistinguishable duplicate must count as a hit — group
// membership, not row identity, is the ground truth.
struct RetrievalIndex {
  Direction dir = Direction::ImageToText;
  MatT<float> gallery;                       // N x d, unit rows
  std::vector<std::vector<int>> row_groups;  // groups owned by each row, sorted
};

struct RetrievalQueries {
  MatT<float> embed;                    // Q x d
  std::vector<std::vector<int>> truth;  // per query: sorted group ids
};

struct RetrievalTask {
  RetrievalIndex index;
  RetrievalQueries queries;
};

// Embeds the whole dataset under one model. image-to-text galleries hold all
// n*k caption embeddings and take (possibly perturbed) images as queries;
// text-to-image swaps the roles. A non-null uap perturbs every image (resized
// first if its shape disagrees).
RetrievalTask build_index(ModelPair& model, const Dataset& data, Direction dir,
                          const Uap* uap = nullptr);

// Top-k gallery rows by cosine similarity; ties broken toward the lower row id
// so rankings are total and platform-stable.
std::vector<int> retrieve(const RetrievalIndex& index, const VecT<float>& query,
                          int k);

struct HitTable {
  std::vector<int> ks;                 // ascending, unique
  std::vector<std::vector<char>> hit;  // [query][k index]
};

HitTable hits_at(const RetrievalTask& task, const std::vector<int>& ks);
double recall_at_k(const RetrievalTask& task, int k);

struct AsrCell {
  int k = 1;
  double clean_recall = 0.0;
  double adv_recall = 0.0;
  std::optional<double> asr;  // empty when there were no clean hits
  long queries = 0;
  long clean_hits = 0;
  long flips = 0;      // clean hit -> adversarial miss
  long new_hits = 0;   // clean miss -> adversarial hit
};

// ASR@k = flips / clean hits. Raw counts ride along so other normalizations
// can be recomputed, and so adv_recall == clean_recall*(1-asr) + new_hits/Q
// can be checked exactly.
AsrCell asr_at(const HitTable& clean, const HitTable& adv, int k);

struct EvalCell {
  std::string model;
  std::string dataset;
  Direction dir = Direction::ImageToText;
  bool white_box = false;
  std::vector<AsrCell> per_k;
};

struct EvalReport {
  nlohmann::ordered_json config;
  std::vector<EvalCell> cells;
};

// Full grid over models x datasets x directions x ks for one perturbation.
// A cell is white-box when the evaluation checkpoint digest matches the one
// recorded in the uap's provenance.
EvalReport transfer_matrix(const Uap& uap,
                           const std::vector<ModelPair*>& models,
                           const std::vector<const Dataset*>& datasets,
                           const std::vector<int>& ks);

// CSV is the determinism-bearing artifact: fixed %.6f formatting, no
// timestamps, rows = model x dataset, columns = direction x k. Undefined ASR
// prints as "na". The JSON dump carries counts, config, and a timestamp.
std::string report_csv(const EvalReport& report);
nlohmann::ordered_json report_json(const EvalReport& report,
                                   bool timestamp = true);
void emit_report(const EvalReport& report, const std::string& out_dir,
                 const std::string& stem = "report");

// Minimal self-contained bar chart for ASR-vs-variant / ASR-vs-eps plots.
std::string bar_chart_svg(const std::string& title,
                          const std::vector<std::pair<std::string, double>>& bars);

} // namespace uaplab
