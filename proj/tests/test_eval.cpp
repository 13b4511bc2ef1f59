#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"

#include "uaplab/attack.hpp"
#include "uaplab/eval.hpp"
#include "uaplab/io.hpp"
#include "uaplab/rng.hpp"

using namespace uaplab;

namespace {

// Lattice values k/16 with |k| <= 16: every dot product is an exact dyadic
// rational well inside float range, so scores are identical under any
// summation order and the brute-force oracle can demand bitwise agreement.
MatT<float> lattice_matrix(Rng& rng, int rows, int cols) {
  MatT<float> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m(r, c) = static_cast<float>(rng.uniform_int(-16, 16)) / 16.0f;
  return m;
}

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

bool hit_in(const std::vector<std::vector<int>>& row_groups,
            const std::vector<int>& order, int k, const std::vector<int>& truth) {
  for (int r = 0; r < k; ++r) {
    const auto& g = row_groups[order[r]];
    for (int x : g)
      if (std::binary_search(truth.begin(), truth.end(), x)) return true;
  }
  return false;
}

// Exhaustive-sort oracle for the ranking: double-precision dots, full sort,
// ties toward the lower id.
std::vector<int> brute_rank(const MatT<float>& gallery, const VecT<float>& q) {
  const int n = static_cast<int>(gallery.rows());
  std::vector<double> s(n);
  for (int r = 0; r < n; ++r) {
    double acc = 0;
    for (int c = 0; c < gallery.cols(); ++c)
      acc += static_cast<double>(gallery(r, c)) * static_cast<double>(q[c]);
    s[r] = acc;
  }
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return a < b;
  });
  return ids;
}

RetrievalTask random_task(Rng& rng, int n_groups) {
  const int n = static_cast<int>(rng.uniform_int(2, 100));
  const int d = static_cast<int>(rng.uniform_int(1, 8));
  const int q = static_cast<int>(rng.uniform_int(1, 30));
  RetrievalTask t;
  t.index.gallery = lattice_matrix(rng, n, d);
  for (int r = 0; r < n; ++r) {
    std::vector<int> g;
    const int cnt = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < cnt; ++i)
      g.push_back(static_cast<int>(rng.uniform_int(0, n_groups - 1)));
    t.index.row_groups.push_back(sorted_unique(g));
  }
  t.queries.embed = lattice_matrix(rng, q, d);
  for (int i = 0; i < q; ++i) {
    // draw truth until some gallery row can satisfy it
    for (;;) {
      std::vector<int> truth = {
          static_cast<int>(rng.uniform_int(0, n_groups - 1))};
      if (rng.uniform() < 0.3)
        truth.push_back(static_cast<int>(rng.uniform_int(0, n_groups - 1)));
      truth = sorted_unique(truth);
      bool ok = false;
      for (const auto& g : t.index.row_groups)
        for (int x : g)
          if (std::binary_search(truth.begin(), truth.end(), x)) ok = true;
      if (ok) {
        t.queries.truth.push_back(std::move(truth));
        break;
      }
    }
  }
  return t;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') { out.push_back(cur); cur.clear(); }
    else cur.push_back(ch);
  }
  out.push_back(cur);
  return out;
}

} // namespace

TEST_CASE("retrieve ranks a two-item gallery like the closed form") {
  RetrievalIndex idx;
  idx.gallery = MatT<float>(2, 2);
  idx.gallery << 1, 0, 0, 1;
  idx.row_groups = {{0}, {1}};
  VecT<float> q(2);
  q << 0.9f, 0.1f;
  CHECK(retrieve(idx, q, 1) == std::vector<int>{0});
  CHECK(retrieve(idx, q, 2) == std::vector<int>{0, 1});

  // a query equal to a gallery row puts that row first
  q << 0, 1;
  CHECK(retrieve(idx, q, 1) == std::vector<int>{1});

  CHECK_THROWS_AS(retrieve(idx, q, 0), ContractError);
  CHECK_THROWS_AS(retrieve(idx, q, 3), ContractError);
  VecT<float> bad(3);
  bad.setZero();
  CHECK_THROWS_AS(retrieve(idx, bad, 1), ContractError);
}

TEST_CASE("duplicate gallery rows tie toward the lower id") {
  RetrievalIndex idx;
  idx.gallery = MatT<float>(3, 2);
  idx.gallery << 1, 0, 1, 0, 0, 1;
  idx.row_groups = {{0}, {1}, {2}};
  VecT<float> q(2);
  q << 1, 0;
  CHECK(retrieve(idx, q, 2) == std::vector<int>{0, 1});
}

TEST_CASE("a match ranked third scores r1 zero and r5 one") {
  RetrievalTask t;
  t.index.gallery = MatT<float>(5, 1);
  t.index.gallery << 0.9f, 0.8f, 0.7f, 0.6f, 0.5f;
  t.index.row_groups = {{1}, {2}, {0}, {3}, {4}};
  t.queries.embed = MatT<float>(1, 1);
  t.queries.embed << 1.0f;
  t.queries.truth = {{0}};
  CHECK(recall_at_k(t, 1) == 0.0);
  CHECK(recall_at_k(t, 5) == 1.0);
}

TEST_CASE("ranking, recall, and asr match brute force on random indices") {
  Rng rng(20240814);
  int na_seen = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n_groups = 6;
    RetrievalTask clean = random_task(rng, n_groups);
    RetrievalTask adv = clean;
    adv.index.gallery = lattice_matrix(
        rng, static_cast<int>(clean.index.gallery.rows()),
        static_cast<int>(clean.index.gallery.cols()));

    const int n = static_cast<int>(clean.index.gallery.rows());
    std::vector<int> ks = {1};
    if (n >= 5) ks.push_back(5);
    if (n >= 10) ks.push_back(10);

    // ranking oracle on a few random queries
    const int probe = static_cast<int>(
        rng.uniform_int(0, clean.queries.embed.rows() - 1));
    const VecT<float> q = clean.queries.embed.row(probe).transpose();
    const std::vector<int> want = brute_rank(clean.index.gallery, q);
    const int k = static_cast<int>(rng.uniform_int(1, n));
    const std::vector<int> got = retrieve(clean.index, q, k);
    REQUIRE(std::equal(got.begin(), got.end(), want.begin()));

    const HitTable hc = hits_at(clean, ks);
    const HitTable ha = hits_at(adv, ks);

    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      long hits_c = 0, hits_a = 0, flips = 0, fresh = 0;
      for (Eigen::Index qi = 0; qi < clean.queries.embed.rows(); ++qi) {
        const auto order_c = brute_rank(clean.index.gallery,
                                        clean.queries.embed.row(qi).transpose());
        const auto order_a = brute_rank(adv.index.gallery,
                                        adv.queries.embed.row(qi).transpose());
        const auto& truth = clean.queries.truth[static_cast<std::size_t>(qi)];
        const bool c = hit_in(clean.index.row_groups, order_c, ks[ki], truth);
        const bool a = hit_in(adv.index.row_groups, order_a, ks[ki], truth);
        REQUIRE((hc.hit[static_cast<std::size_t>(qi)][ki] != 0) == c);
        REQUIRE((ha.hit[static_cast<std::size_t>(qi)][ki] != 0) == a);
        hits_c += c;
        hits_a += a;
        flips += (c && !a);
        fresh += (!c && a);
      }
      const double nq = static_cast<double>(clean.queries.embed.rows());
      REQUIRE(recall_at_k(clean, ks[ki]) == hits_c / nq);

      const AsrCell cell = asr_at(hc, ha, ks[ki]);
      REQUIRE(cell.clean_hits == hits_c);
      REQUIRE(cell.flips == flips);
      REQUIRE(cell.new_hits == fresh);
      if (hits_c == 0) {
        REQUIRE(!cell.asr);
        ++na_seen;
      } else {
        REQUIRE(*cell.asr == static_cast<double>(flips) / hits_c);
      }
      // exact bookkeeping identity, in integers
      REQUIRE(cell.adv_recall == static_cast<double>(hits_a) / nq);
      REQUIRE(cell.clean_hits - cell.flips + cell.new_hits == hits_a);
    }
  }
  // the sweep should have exercised the not-applicable branch at least once
  CHECK(na_seen > 0);
}

TEST_CASE("recall is monotone in k and total recall at full gallery") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    RetrievalTask t = random_task(rng, 5);
    const int n = static_cast<int>(t.index.gallery.rows());
    double prev = 0.0;
    for (int k : {1, std::max(1, n / 3), n}) {
      const double r = recall_at_k(t, k);
      CHECK(r >= prev - 1e-12);
      prev = std::max(prev, r);
    }
    CHECK(recall_at_k(t, n) == 1.0);
  }
}

TEST_CASE("hand-counted asr micro-case: five of eight clean hits flip") {
  HitTable clean, adv;
  clean.ks = adv.ks = {1};
  for (int q = 0; q < 10; ++q) {
    clean.hit.push_back({static_cast<char>(q < 8)});
    // q0..q2 survive, q3..q7 flip, q8 becomes a fresh hit, q9 stays a miss
    adv.hit.push_back({static_cast<char>(q < 3 || q == 8)});
  }
  const AsrCell c = asr_at(clean, adv, 1);
  CHECK(c.clean_hits == 8);
  CHECK(c.flips == 5);
  CHECK(c.new_hits == 1);
  REQUIRE(c.asr.has_value());
  CHECK(*c.asr == 0.625);
  CHECK(c.clean_recall == 0.8);
  CHECK(c.adv_recall == 0.4);
  // adv recall = clean * (1 - asr) + new-hit rate, exactly
  CHECK(c.adv_recall == c.clean_recall * (1.0 - *c.asr) +
                            static_cast<double>(c.new_hits) / c.queries);
}

TEST_CASE("asr endpoints and the not-applicable case") {
  HitTable clean;
  clean.ks = {1};
  for (int q = 0; q < 6; ++q) clean.hit.push_back({1});

  CHECK(*asr_at(clean, clean, 1).asr == 0.0); // unchanged ranks

  HitTable all_miss = clean;
  for (auto& row : all_miss.hit) row[0] = 0;
  CHECK(*asr_at(clean, all_miss, 1).asr == 1.0);

  // no clean hits: undefined, never zero
  CHECK(!asr_at(all_miss, clean, 1).asr.has_value());

  HitTable shorter = clean;
  shorter.hit.pop_back();
  CHECK_THROWS_AS(asr_at(clean, shorter, 1), ContractError);
  CHECK_THROWS_AS(asr_at(clean, clean, 5), ContractError);
}

TEST_CASE("queries without reachable ground truth are a data error") {
  RetrievalTask t;
  t.index.gallery = MatT<float>(2, 2);
  t.index.gallery << 1, 0, 0, 1;
  t.index.row_groups = {{0}, {1}};
  t.queries.embed = MatT<float>(1, 2);
  t.queries.embed << 1, 0;
  t.queries.truth = {{7}};
  CHECK_THROWS_AS(hits_at(t, {1}), DataError);
  t.queries.truth = {{}};
  CHECK_THROWS_AS(hits_at(t, {1}), DataError);
  t.queries.truth = {{1}};
  CHECK_NOTHROW(hits_at(t, {1}));
  CHECK_THROWS_AS(hits_at(t, {}), ConfigError);
  CHECK_THROWS_AS(hits_at(t, {3}), ContractError);
}

TEST_CASE("build_index wires galleries, queries, and caption groups") {
  SyntheticSpec spec = SyntheticSpec::preset("A", 10);
  spec.height = spec.width = 32;
  Dataset ds = generate_dataset(spec, 3);
  ModelPair model = make_model(Arch::ConvSmall, 32, 32, ds.vocab);
  init_params(model, 11);

  RetrievalTask i2t = build_index(model, ds, Direction::ImageToText);
  const int n = static_cast<int>(ds.samples.size());
  const int k = ds.captions_per_image();
  REQUIRE(i2t.index.gallery.rows() == n * k);
  REQUIRE(i2t.queries.embed.rows() == n);
  for (Eigen::Index r = 0; r < i2t.index.gallery.rows(); ++r)
    CHECK(std::abs(i2t.index.gallery.row(r).norm() - 1.0f) < 1e-5f);

  // identical token sequences share a group; distinct ones never do
  std::size_t row = 0;
  std::vector<std::pair<TokenSeq, int>> seen;
  for (const Sample& s : ds.samples)
    for (const TokenSeq& t : s.tokens) {
      const int g = i2t.index.row_groups[row++][0];
      for (const auto& [tok, grp] : seen)
        CHECK((tok == t) == (grp == g));
      seen.emplace_back(t, g);
    }

  RetrievalTask t2i = build_index(model, ds, Direction::TextToImage);
  REQUIRE(t2i.index.gallery.rows() == n);
  REQUIRE(t2i.queries.embed.rows() == n * k);
  // clean build is a pure function: rebuild matches bitwise
  RetrievalTask again = build_index(model, ds, Direction::TextToImage);
  CHECK((t2i.index.gallery.array() == again.index.gallery.array()).all());
  CHECK((t2i.queries.embed.array() == again.queries.embed.array()).all());

  // a budget-sized perturbation moves nearly every image embedding
  Rng rng(5);
  Uap uap = init_uap(32, 32, EpsRational{12, 255}, rng);
  RetrievalTask adv = build_index(model, ds, Direction::TextToImage, &uap);
  // captions unaffected
  CHECK((adv.queries.embed.array() == t2i.queries.embed.array()).all());
  int moved = 0;
  for (int r = 0; r < n; ++r)
    moved += (adv.index.gallery.row(r).array() !=
              t2i.index.gallery.row(r).array())
                 .any();
  CHECK(moved >= (n * 99) / 100);

  // perturbations stored at another resolution are resized on the fly
  Uap big = resize_uap(uap, 48, 48);
  CHECK_NOTHROW(build_index(model, ds, Direction::TextToImage, &big));

  Dataset empty;
  CHECK_THROWS_AS(build_index(model, empty, Direction::ImageToText), DataError);
}

TEST_CASE("transfer matrix grid shape, white-box flag, and reports") {
  SyntheticSpec spec = SyntheticSpec::preset("A", 8);
  spec.height = spec.width = 32;
  Dataset ds = generate_dataset(spec, 21);
  ModelPair model = make_model(Arch::ConvSmall, 32, 32, ds.vocab);
  init_params(model, 2);

  AttackConfig cfg;
  cfg.variant = Variant::RandomNoise;
  cfg.seed = 4;
  AttackResult res = run_attack(model, ds, cfg);

  const std::vector<int> ks = {1, 5};
  EvalReport rep = transfer_matrix(res.uap, {&model}, {&ds}, ks);
  REQUIRE(rep.cells.size() == 2); // 1 model x 1 dataset x 2 directions
  for (const EvalCell& c : rep.cells) {
    CHECK(c.white_box); // provenance digest matches the one model
    REQUIRE(c.per_k.size() == 2);
    for (const AsrCell& a : c.per_k) {
      CHECK(a.clean_recall >= 0.0);
      CHECK(a.clean_recall <= 1.0);
      CHECK(a.adv_recall >= 0.0);
      CHECK(a.adv_recall <= 1.0);
      if (a.asr) {
        CHECK(*a.asr >= 0.0);
        CHECK(*a.asr <= 1.0);
      }
      // counts always support the recall identity exactly
      const double lhs = a.adv_recall * a.queries;
      const double rhs = static_cast<double>(a.clean_hits - a.flips + a.new_hits);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }

  // a perturbation of unknown origin is never scored white-box
  Uap anon = res.uap;
  anon.provenance = nlohmann::json::object();
  EvalReport rep2 = transfer_matrix(anon, {&model}, {&ds}, ks);
  CHECK(!rep2.cells.front().white_box);

  // csv: fixed header, one row per model x dataset, bit-stable across runs
  const std::string csv = report_csv(rep);
  std::istringstream is(csv);
  std::string header, row, extra;
  REQUIRE(std::getline(is, header));
  REQUIRE(std::getline(is, row));
  CHECK(!std::getline(is, extra));
  CHECK(header ==
        "model,dataset,white_box,i2t_clean_r1,i2t_adv_r1,i2t_asr1,"
        "i2t_clean_r5,i2t_adv_r5,i2t_asr5,"
        "t2i_clean_r1,t2i_adv_r1,t2i_asr1,t2i_clean_r5,t2i_adv_r5,t2i_asr5");
  CHECK(report_csv(transfer_matrix(res.uap, {&model}, {&ds}, ks)) == csv);

  // csv re-parse equals the json dump
  const nlohmann::ordered_json j = report_json(rep, /*timestamp=*/false);
  const auto fields = split_csv(row);
  REQUIRE(fields.size() == 3 + 2 * 2 * 3);
  CHECK(fields[0] == rep.cells.front().model);
  CHECK(fields[1] == ds.name);
  CHECK(fields[2] == "1");
  std::size_t fi = 3;
  for (const auto& jc : j["cells"])
    for (const auto& ja : jc["per_k"]) {
      CHECK(std::abs(std::stod(fields[fi]) - ja["clean_recall"].get<double>()) <
            5e-7);
      CHECK(std::abs(std::stod(fields[fi + 1]) - ja["adv_recall"].get<double>()) <
            5e-7);
      if (ja["asr"].is_null())
        CHECK(fields[fi + 2] == "na");
      else
        CHECK(std::abs(std::stod(fields[fi + 2]) - ja["asr"].get<double>()) <
              5e-7);
      fi += 3;
    }

  // empty report degrades to a bare header
  CHECK(report_csv(EvalReport{}) == "model,dataset,white_box\n");
}

TEST_CASE("emit_report writes deterministic csv next to the json dump") {
  SyntheticSpec spec = SyntheticSpec::preset("A", 6);
  spec.height = spec.width = 32;
  Dataset ds = generate_dataset(spec, 9);
  ModelPair model = make_model(Arch::ConvSmall, 32, 32, ds.vocab);
  init_params(model, 3);
  Rng rng(8);
  Uap uap = init_uap(32, 32, EpsRational{8, 255}, rng);

  EvalReport rep = transfer_matrix(uap, {&model}, {&ds}, {1});
  const std::string dir = "eval_report_scratch";
  emit_report(rep, dir, "r1");
  emit_report(rep, dir, "r2");
  const auto a = io::read_file_bytes(dir + "/r1.csv");
  const auto b = io::read_file_bytes(dir + "/r2.csv");
  CHECK(a == b);
  CHECK(!io::read_file_bytes(dir + "/r1.json").empty());

  const std::string svg =
      bar_chart_svg("asr by variant", {{"etu", 0.8}, {"unia", 0.3}});
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("etu") != std::string::npos);
  CHECK(svg.rfind("</svg>") != std::string::npos);
}
