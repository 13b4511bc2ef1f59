#include "uaplab/uap.hpp"

#include <cfloat>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uaplab/errors.hpp"
#include "uaplab/io.hpp"

namespace uaplab {

namespace {

constexpr uint16_t kUapVersion = 1;
const char kUapMagic[4] = {'U', 'A', 'P', 'F'};

} // namespace

float EpsRational::value() const {
  if (den == 0) throw ContractError("eps denominator is zero");
  return static_cast<float>(num) / static_cast<float>(den);
}

std::string EpsRational::str() const {
  return std::to_string(num) + "/" + std::to_string(den);
}

EpsRational EpsRational::parse(const std::string& s) {
  EpsRational e;
  size_t slash = s.find('/');
  try {
    if (slash == std::string::npos) {
      e.num = static_cast<uint32_t>(std::stoul(s));
      e.den = 255;
    } else {
      e.num = static_cast<uint32_t>(std::stoul(s.substr(0, slash)));
      e.den = static_cast<uint32_t>(std::stoul(s.substr(slash + 1)));
    }
  } catch (const std::exception&) {
    throw ConfigError("cannot parse eps '" + s + "' (expected e.g. 12/255)");
  }
  if (e.den == 0) throw ConfigError("eps denominator must be non-zero");
  return e;
}

Uap init_uap(int h, int w, EpsRational eps, Rng& rng) {
  if (h < 2 || w < 2) throw ContractError("init_uap: extent too small");
  Uap u;
  u.eps = eps;
  u.delta = Grid<float>(h, w, 3);
  float e = eps.value();
  for (auto& v : u.delta.v) v = static_cast<float>(rng.uniform(-e, e));
  return u;
}

void project_budget(Uap& u) {
  float e = u.eps.value();
  for (auto& v : u.delta.v) v = std::clamp(v, -e, e);
}

bool within_budget(const Grid<float>& delta, float eps) {
  return delta.max_abs() <= eps + 2.0f * FLT_EPSILON;
}

CropGeom draw_local_geom(Rng& rng, int h, int w, double area_lo, double area_hi) {
  return draw_crop(rng, h, w, h, w, area_lo, area_hi);
}

Uap resize_uap(const Uap& u, int h, int w) {
  Uap out;
  out.eps = u.eps;
  out.delta = resize_bilinear(u.delta, h, w);
  out.provenance = u.provenance;
  out.provenance["resized_from"] = {u.delta.h, u.delta.w};
  return out;
}

void save_uap(const Uap& u, const std::string& path) {
  if (!within_budget(u.delta, u.eps.value()))
    throw ContractError("refusing to save a perturbation that exceeds its own budget");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create " + path);
  io::write_magic(f, kUapMagic);
  io::write_u16(f, kUapVersion);
  io::write_json_block(f, u.provenance);
  io::write_u32(f, static_cast<uint32_t>(u.delta.h));
  io::write_u32(f, static_cast<uint32_t>(u.delta.w));
  io::write_u32(f, static_cast<uint32_t>(u.delta.c));
  io::write_u32(f, u.eps.num);
  io::write_u32(f, u.eps.den);
  io::write_f32_array(f, u.delta.v.data(), u.delta.v.size());
  if (!f) throw IoError("write failed for " + path);
}

Uap load_uap(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  io::expect_magic(f, kUapMagic, path);
  uint16_t version = io::read_u16(f);
  if (version != kUapVersion)
    throw FormatError(path + ": unsupported perturbation version " + std::to_string(version));
  Uap u;
  u.provenance = io::read_json_block(f, path);
  uint32_t h = io::read_u32(f), w = io::read_u32(f), c = io::read_u32(f);
  if (h < 2 || w < 2 || c != 3 || h > 4096 || w > 4096)
    throw FormatError(path + ": implausible perturbation shape");
  u.eps.num = io::read_u32(f);
  u.eps.den = io::read_u32(f);
  if (u.eps.den == 0) throw FormatError(path + ": eps denominator is zero");
  u.delta = Grid<float>(static_cast<int>(h), static_cast<int>(w), 3);
  io::read_f32_array(f, u.delta.v.data(), u.delta.v.size());
  for (float v : u.delta.v)
    if (!std::isfinite(v)) throw FormatError(path + ": non-finite perturbation value");
  if (!within_budget(u.delta, u.eps.value()))
    throw FormatError(path + ": payload exceeds its declared budget " + u.eps.str());
  return u;
}

std::string describe(const Uap& u) {
  std::ostringstream out;
  out << "perturbation " << u.delta.h << "x" << u.delta.w << "x" << u.delta.c << ", eps "
      << u.eps.str() << " (" << u.eps.value() << "), max|v| " << u.delta.max_abs() << "\n";
  if (!u.provenance.empty()) out << "provenance: " << u.provenance.dump(2) << "\n";
  return out.str();
}

} // namespace uaplab
