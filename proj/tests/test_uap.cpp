#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "uaplab/errors.hpp"
#include "uaplab/uap.hpp"

using namespace uaplab;

namespace {

std::string tmp_path(const char* name) {
  return std::string("uap_test_") + name + ".uapf";
}

struct FileGuard {
  std::string path;
  explicit FileGuard(std::string p) : path(std::move(p)) {}
  ~FileGuard() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("epsilon rationals parse, print, and evaluate") {
  EpsRational e = EpsRational::parse("12/255");
  CHECK(e.num == 12);
  CHECK(e.den == 255);
  CHECK(e.str() == "12/255");
  CHECK(e.value() == doctest::Approx(12.0 / 255.0));

  EpsRational bare = EpsRational::parse("8");
  CHECK(bare.num == 8);
  CHECK(bare.den == 255);

  CHECK_THROWS_AS(EpsRational::parse(""), ConfigError);
  CHECK_THROWS_AS(EpsRational::parse("12/0"), ConfigError);
  CHECK_THROWS_AS(EpsRational::parse("banana"), ConfigError);
}

TEST_CASE("initialization fills the budget box uniformly") {
  Rng rng(5);
  EpsRational eps{12, 255};
  Uap u = init_uap(64, 64, eps, rng);
  const float e = eps.value();
  double sum = 0.0;
  for (float v : u.delta.v) {
    REQUIRE(std::fabs(v) <= e);
    sum += v;
  }
  // Mean of N uniforms on [-e, e]: sigma = e/sqrt(3), allow 4 sigma.
  const double n = static_cast<double>(u.delta.v.size());
  CHECK(std::fabs(sum / n) <= 4.0 * (e / std::sqrt(3.0)) / std::sqrt(n));

  Rng rng0(5);
  Uap z = init_uap(16, 16, EpsRational{0, 255}, rng0);
  for (float v : z.delta.v) REQUIRE(v == 0.0f);
}

TEST_CASE("projection clamps into the box and is idempotent") {
  Uap u;
  u.eps = EpsRational{12, 255};
  u.delta = Grid<float>(4, 4, 3);
  const float e = u.eps.value();
  u.delta.v[0] = 2.0f * e;
  u.delta.v[1] = -3.0f * e;
  u.delta.v[2] = 0.5f * e;
  project_budget(u);
  CHECK(u.delta.v[0] == e);
  CHECK(u.delta.v[1] == -e);
  CHECK(u.delta.v[2] == 0.5f * e);
  auto once = u.delta.v;
  project_budget(u);
  CHECK(u.delta.v == once);
  CHECK(within_budget(u.delta, e));
}

TEST_CASE("local transform keeps the budget without re-projection") {
  Rng rng(6);
  EpsRational eps{12, 255};
  Uap u = init_uap(64, 64, eps, rng);
  const float e = eps.value();
  for (int trial = 0; trial < 1000; ++trial) {
    CropGeom g = draw_local_geom(rng, 64, 64, 0.25, 1.0);
    auto out = apply_local(u.delta, g);
    REQUIRE(out.h == 64);
    REQUIRE(out.w == 64);
    REQUIRE(within_budget(out, e));
    REQUIRE(out.max_abs() <= u.delta.max_abs() + 1e-7f);
  }
}

TEST_CASE("identity-area local transform is the identity") {
  Rng rng(7);
  Uap u = init_uap(32, 32, EpsRational{12, 255}, rng);
  CropGeom g = draw_local_geom(rng, 32, 32, 1.0, 1.0);
  auto out = apply_local(u.delta, g);
  for (size_t i = 0; i < out.v.size(); ++i) REQUIRE(out.v[i] == u.delta.v[i]);
}

TEST_CASE("constant perturbations are invariant under the local transform") {
  Rng rng(8);
  Grid<float> flat(32, 32, 3);
  for (auto& v : flat.v) v = 0.031f;
  for (int trial = 0; trial < 25; ++trial) {
    CropGeom g = draw_local_geom(rng, 32, 32, 0.25, 1.0);
    auto out = apply_local(flat, g);
    for (float v : out.v) REQUIRE(v == doctest::Approx(0.031f).epsilon(1e-6));
  }
}

TEST_CASE("application clamps to the unit range and moves nothing past eps") {
  Rng rng(9);
  EpsRational eps{12, 255};
  Uap u = init_uap(16, 16, eps, rng);

  Grid<float> x(16, 16, 3);
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  bool clipped = false;
  auto adv = apply_uap(x, u.delta, &clipped);
  const float e = eps.value();
  for (size_t i = 0; i < x.v.size(); ++i) {
    REQUIRE(adv.v[i] >= 0.0f);
    REQUIRE(adv.v[i] <= 1.0f);
    REQUIRE(std::fabs(adv.v[i] - x.v[i]) <= e + 1e-7f);
  }

  // Saturated white image: positive entries clamp, output stays at 1.
  Grid<float> white(16, 16, 3);
  for (auto& v : white.v) v = 1.0f;
  auto sat = apply_uap(white, u.delta, &clipped);
  CHECK(clipped);
  for (size_t i = 0; i < sat.v.size(); ++i) {
    if (u.delta.v[i] > 0.0f) REQUIRE(sat.v[i] == 1.0f);
  }

  // Zero perturbation: identity, no clipping.
  Grid<float> zero(16, 16, 3);
  auto same = apply_uap(x, zero, &clipped);
  CHECK_FALSE(clipped);
  for (size_t i = 0; i < x.v.size(); ++i) REQUIRE(same.v[i] == x.v[i]);

  Grid<float> wrong(8, 8, 3);
  CHECK_THROWS_AS(apply_uap(x, wrong, nullptr), ContractError);
}

TEST_CASE("resizing preserves the budget and round-trips with high overlap") {
  Rng rng(10);
  EpsRational eps{12, 255};
  Uap u = init_uap(64, 64, eps, rng);

  Uap same = resize_uap(u, 64, 64);
  for (size_t i = 0; i < u.delta.v.size(); ++i)
    REQUIRE(same.delta.v[i] == u.delta.v[i]);

  Uap up = resize_uap(u, 96, 96);
  CHECK(up.delta.h == 96);
  CHECK(within_budget(up.delta, eps.value()));
  CHECK(up.provenance.contains("resized_from"));

  // Up-and-back round trip keeps most of the structure: cosine > 0.9 over
  // the flattened arrays (empirical floor for i.i.d. uniform fields).
  Uap back = resize_uap(up, 64, 64);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < u.delta.v.size(); ++i) {
    dot += static_cast<double>(u.delta.v[i]) * back.delta.v[i];
    na += static_cast<double>(u.delta.v[i]) * u.delta.v[i];
    nb += static_cast<double>(back.delta.v[i]) * back.delta.v[i];
  }
  CHECK(dot / std::sqrt(na * nb) > 0.9);
}

TEST_CASE("perturbation files round-trip bit-exactly") {
  Rng rng(21);
  Uap u = init_uap(32, 24, EpsRational{12, 255}, rng);
  u.provenance = {{"variant", "etu"}, {"seed", 7}};
  FileGuard f(tmp_path("roundtrip"));
  save_uap(u, f.path);
  Uap r = load_uap(f.path);
  CHECK(r.delta.h == 32);
  CHECK(r.delta.w == 24);
  CHECK(r.eps.num == 12);
  CHECK(r.eps.den == 255);
  CHECK(r.provenance["variant"] == "etu");
  CHECK(r.provenance["seed"] == 7);
  REQUIRE(r.delta.v == u.delta.v);
}

TEST_CASE("saving refuses a perturbation that violates its own budget") {
  Uap u;
  u.eps = EpsRational{12, 255};
  u.delta = Grid<float>(8, 8, 3);
  u.delta.v[5] = 0.5f; // way outside 12/255
  FileGuard f(tmp_path("overbudget"));
  CHECK_THROWS_AS(save_uap(u, f.path), ContractError);
}

TEST_CASE("tampered payloads exceeding the declared budget are rejected") {
  Rng rng(22);
  Uap u = init_uap(16, 16, EpsRational{12, 255}, rng);
  FileGuard f(tmp_path("tampered"));
  save_uap(u, f.path);

  // Overwrite the last float of the payload with an out-of-budget value.
  {
    std::fstream s(f.path, std::ios::in | std::ios::out | std::ios::binary);
    REQUIRE(s.good());
    s.seekp(-4, std::ios::end);
    float bad = 0.9f;
    s.write(reinterpret_cast<const char*>(&bad), 4);
  }
  CHECK_THROWS_AS(load_uap(f.path), FormatError);
}

TEST_CASE("corrupt headers and truncations are rejected") {
  Rng rng(23);
  Uap u = init_uap(16, 16, EpsRational{12, 255}, rng);
  FileGuard f(tmp_path("corrupt"));
  save_uap(u, f.path);

  {
    std::fstream s(f.path, std::ios::in | std::ios::out | std::ios::binary);
    s.seekp(0);
    s.write("NOPE", 4);
  }
  CHECK_THROWS_AS(load_uap(f.path), FormatError);

  // Rewrite, then truncate the payload.
  save_uap(u, f.path);
  {
    std::ifstream in(f.path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 10);
    std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_uap(f.path), FormatError);

  CHECK_THROWS_AS(load_uap("definitely_missing.uapf"), IoError);
}

TEST_CASE("describe mentions the shape, budget, and attained norm") {
  Rng rng(24);
  Uap u = init_uap(64, 64, EpsRational{12, 255}, rng);
  u.provenance["variant"] = "etu";
  std::string d = describe(u);
  CHECK(d.find("64x64x3") != std::string::npos);
  CHECK(d.find("12/255") != std::string::npos);
  CHECK(d.find("etu") != std::string::npos);
}
