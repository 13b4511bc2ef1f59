#include "uaplab/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "uaplab/errors.hpp"
#include "uaplab/io.hpp"

namespace uaplab {

namespace {

constexpr uint16_t kDatasetVersion = 1;
const char kDatasetMagic[4] = {'U', 'A', 'P', 'D'};

// Canonical word list. Index == token id; <pad> must stay at 0.
const std::vector<std::string>& canonical_words() {
  static const std::vector<std::string> words = {
      "<pad>",
      // filler
      "a", "on", "with", "background", "the", "is",
      // colors
      "red", "green", "blue", "yellow", "orange", "purple", "cyan", "magenta",
      // shapes
      "circle", "square", "triangle", "diamond", "ring", "cross", "hexagon", "bar",
      // backgrounds
      "white", "black", "gray", "navy"};
  return words;
}

struct Rgb {
  float r, g, b;
};

// Every palette entry keeps clear headroom to 0 and 1 so that budget-bounded
// perturbations (up to 16/255 plus the per-image jitter) never saturate the
// valid pixel range — saturation would silently zero gradients.
Rgb palette(const std::string& name) {
  static const std::map<std::string, Rgb> table = {
      {"red", {0.88f, 0.15f, 0.12f}},   {"green", {0.13f, 0.80f, 0.18f}},
      {"blue", {0.12f, 0.25f, 0.88f}},  {"yellow", {0.90f, 0.86f, 0.14f}},
      {"orange", {0.92f, 0.55f, 0.10f}}, {"purple", {0.56f, 0.16f, 0.78f}},
      {"cyan", {0.12f, 0.82f, 0.86f}},  {"magenta", {0.88f, 0.16f, 0.80f}},
      {"white", {0.92f, 0.92f, 0.90f}}, {"black", {0.08f, 0.08f, 0.09f}},
      {"gray", {0.55f, 0.55f, 0.56f}},  {"navy", {0.10f, 0.12f, 0.40f}}};
  auto it = table.find(name);
  if (it == table.end()) throw DataError("no palette entry for color '" + name + "'");
  return it->second;
}

struct Vec2 {
  double x, y;
};

// Inside-positive distance to a convex polygon centred on the origin: the
// smallest distance to any edge line, with normals oriented outward.
double polygon_sdf(const std::vector<Vec2>& verts, Vec2 p) {
  double best = 1e30;
  size_t n = verts.size();
  for (size_t i = 0; i < n; ++i) {
    Vec2 a = verts[i];
    Vec2 b = verts[(i + 1) % n];
    double ex = b.x - a.x, ey = b.y - a.y;
    double len = std::sqrt(ex * ex + ey * ey);
    double nx = ey / len, ny = -ex / len;
    if (nx * a.x + ny * a.y < 0) { nx = -nx; ny = -ny; }
    best = std::min(best, (nx * a.x + ny * a.y) - (nx * p.x + ny * p.y));
  }
  return best;
}

std::vector<Vec2> regular_polygon(int sides, double radius, double phase) {
  std::vector<Vec2> v(static_cast<size_t>(sides));
  for (int i = 0; i < sides; ++i) {
    double ang = phase + 2.0 * M_PI * i / sides;
    v[static_cast<size_t>(i)] = {radius * std::cos(ang), radius * std::sin(ang)};
  }
  return v;
}

double box_sdf(Vec2 p, double hx, double hy) {
  return std::min(hx - std::abs(p.x), hy - std::abs(p.y));
}

// Inside-positive signed distance for every supported shape, in pixels,
// relative to the shape centre (rotation already removed by the caller).
double shape_sdf(const std::string& shape, Vec2 p, double r) {
  double d = std::sqrt(p.x * p.x + p.y * p.y);
  if (shape == "circle") return r - d;
  if (shape == "ring") return std::min(r - d, d - 0.55 * r);
  if (shape == "square") return box_sdf(p, 0.85 * r, 0.85 * r);
  if (shape == "bar") return box_sdf(p, r, 0.30 * r);
  if (shape == "cross") return std::max(box_sdf(p, r, 0.32 * r), box_sdf(p, 0.32 * r, r));
  if (shape == "triangle")
    return polygon_sdf(regular_polygon(3, r, -M_PI / 2.0), p);
  if (shape == "diamond") return polygon_sdf(regular_polygon(4, r, -M_PI / 2.0), p);
  if (shape == "hexagon") return polygon_sdf(regular_polygon(6, r, -M_PI / 2.0), p);
  throw DataError("no renderer for shape '" + shape + "'");
}

Rgb jitter_rgb(Rgb base, Rng& rng, float amp) {
  auto j = [&](float v) {
    float out = v + amp * (2.0f * static_cast<float>(rng.uniform()) - 1.0f);
    return std::min(0.94f, std::max(0.06f, out));
  };
  return Rgb{j(base.r), j(base.g), j(base.b)};
}

ImageTensor render(const Attributes& attrs, int h, int w, Rng& rng) {
  Rgb fg = jitter_rgb(palette(attrs.color), rng, 0.015f);
  Rgb bg = jitter_rgb(palette(attrs.bg), rng, 0.015f);
  double side = std::min(h, w);
  double cx = w * rng.uniform(0.38, 0.62);
  double cy = h * rng.uniform(0.38, 0.62);
  double r = side * rng.uniform(0.20, 0.30);

  ImageTensor img(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Position and size jitter only. Shapes stay axis-aligned: the encoders
      // tell shapes apart largely by edge-orientation statistics, and random
      // rotation would fold those distributions into each other.
      Vec2 p{(x + 0.5) - cx, (y + 0.5) - cy};
      double sdf = shape_sdf(attrs.shape, p, r);
      float alpha = static_cast<float>(std::clamp(sdf + 0.5, 0.0, 1.0)); // 1px soft edge
      img.at(y, x, 0) = alpha * fg.r + (1.0f - alpha) * bg.r;
      img.at(y, x, 1) = alpha * fg.g + (1.0f - alpha) * bg.g;
      img.at(y, x, 2) = alpha * fg.b + (1.0f - alpha) * bg.b;
    }
  }
  return img;
}

std::vector<std::string> make_captions(const Attributes& a) {
  return {
      "a " + a.color + " " + a.shape + " on " + a.bg,
      a.color + " " + a.shape + " with " + a.bg + " background",
      "the " + a.shape + " is " + a.color + " on " + a.bg,
  };
}

} // namespace

Vocab::Vocab(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.empty() || words_[0] != "<pad>")
    throw DataError("vocabulary must start with <pad>");
}

Vocab Vocab::canonical() { return Vocab(canonical_words()); }

int32_t Vocab::id(const std::string& word) const {
  for (size_t i = 0; i < words_.size(); ++i)
    if (words_[i] == word) return static_cast<int32_t>(i);
  throw DataError("word '" + word + "' not in vocabulary");
}

const std::string& Vocab::word(int32_t id) const {
  if (id < 0 || id >= size()) throw DataError("token id " + std::to_string(id) + " out of range");
  return words_[static_cast<size_t>(id)];
}

TokenSeq tokenize(const std::string& caption, const Vocab& vocab) {
  TokenSeq out(kMaxCaptionLen, kPadId);
  std::istringstream ss(caption);
  std::string word;
  int i = 0;
  while (ss >> word) {
    if (i >= kMaxCaptionLen)
      throw DataError("caption longer than " + std::to_string(kMaxCaptionLen) +
                      " tokens: \"" + caption + "\"");
    out[static_cast<size_t>(i++)] = vocab.id(word);
  }
  if (i == 0) throw DataError("empty caption");
  return out;
}

std::string detokenize(const TokenSeq& tokens, const Vocab& vocab) {
  std::string out;
  for (int32_t t : tokens) {
    if (t == kPadId) continue;
    if (!out.empty()) out += ' ';
    out += vocab.word(t);
  }
  return out;
}

SyntheticSpec SyntheticSpec::preset(const std::string& which, int n_images) {
  SyntheticSpec s;
  s.n_images = n_images;
  if (which == "A") {
    s.name = "A";
    s.colors = {"red", "green", "blue", "yellow"};
    s.shapes = {"circle", "square", "triangle", "diamond"};
    s.bgs = {"white", "black"};
  } else if (which == "B") {
    s.name = "B";
    s.colors = {"orange", "purple", "cyan", "magenta"};
    s.shapes = {"ring", "cross", "hexagon", "bar"};
    s.bgs = {"gray", "navy"};
  } else {
    throw ConfigError("unknown preset '" + which + "' (expected A or B)");
  }
  s.validate();
  return s;
}

SyntheticSpec SyntheticSpec::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open spec file " + path);
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("spec file " + path + " is not valid json");
  SyntheticSpec s;
  try {
    s.name = j.at("name").get<std::string>();
    s.n_images = j.at("n_images").get<int>();
    s.height = j.value("height", 64);
    s.width = j.value("width", 64);
    s.colors = j.at("colors").get<std::vector<std::string>>();
    s.shapes = j.at("shapes").get<std::vector<std::string>>();
    s.bgs = j.at("bgs").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("spec file " + path + ": " + e.what());
  }
  s.validate();
  return s;
}

void SyntheticSpec::validate() const {
  if (name.empty()) throw ConfigError("dataset spec needs a name");
  if (n_images < 1) throw ConfigError("n_images must be positive");
  if (height < 16 || width < 16) throw ConfigError("images must be at least 16x16");
  if (colors.empty() || shapes.empty() || bgs.empty())
    throw ConfigError("colors, shapes and bgs must all be non-empty");
  Vocab vocab = Vocab::canonical();
  for (const auto& c : colors) { vocab.id(c); palette(c); }
  for (const auto& b : bgs) { vocab.id(b); palette(b); }
  for (const auto& sh : shapes) { vocab.id(sh); shape_sdf(sh, Vec2{0, 0}, 1.0); }
}

int Dataset::height() const {
  if (samples.empty()) throw DataError("empty dataset");
  return samples[0].image.h;
}

int Dataset::width() const {
  if (samples.empty()) throw DataError("empty dataset");
  return samples[0].image.w;
}

int Dataset::captions_per_image() const {
  if (samples.empty()) throw DataError("empty dataset");
  return static_cast<int>(samples[0].captions.size());
}

Dataset generate_dataset(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.name = spec.name;
  ds.seed = seed;
  ds.vocab = Vocab::canonical();
  ds.samples.reserve(static_cast<size_t>(spec.n_images));
  Rng root(seed);
  for (int i = 0; i < spec.n_images; ++i) {
    // Independent stream per sample: generation order never matters.
    Rng sr(root.derive(0xDA7A, static_cast<uint64_t>(i), 0));
    Sample s;
    s.attrs.color = spec.colors[static_cast<size_t>(
        sr.uniform_int(0, static_cast<int64_t>(spec.colors.size()) - 1))];
    s.attrs.shape = spec.shapes[static_cast<size_t>(
        sr.uniform_int(0, static_cast<int64_t>(spec.shapes.size()) - 1))];
    s.attrs.bg = spec.bgs[static_cast<size_t>(
        sr.uniform_int(0, static_cast<int64_t>(spec.bgs.size()) - 1))];
    s.image = render(s.attrs, spec.height, spec.width, sr);
    s.captions = make_captions(s.attrs);
    for (const auto& cap : s.captions) s.tokens.push_back(tokenize(cap, ds.vocab));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (!(a.vocab == b.vocab)) throw DataError("concat: vocabulary mismatch");
  if (a.height() != b.height() || a.width() != b.width())
    throw DataError("concat: image shape mismatch");
  if (a.captions_per_image() != b.captions_per_image())
    throw DataError("concat: captions-per-image mismatch");
  Dataset out = a;
  out.name = a.name + "+" + b.name;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  return out;
}

std::string dataset_digest(const Dataset& ds) {
  uint64_t h = io::fnv1a64(ds.name.data(), ds.name.size());
  for (const Sample& s : ds.samples) {
    h = io::fnv1a64(s.image.v.data(), s.image.v.size() * sizeof(float), h);
    for (const TokenSeq& t : s.tokens)
      h = io::fnv1a64(t.data(), t.size() * sizeof(int32_t), h);
  }
  return io::hex64(h);
}

std::vector<PairRef> expand_captions(const Dataset& ds) {
  const int k = ds.captions_per_image();
  std::vector<PairRef> pool;
  pool.reserve(ds.samples.size() * static_cast<std::size_t>(k));
  for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i)
    for (int j = 0; j < k; ++j) pool.push_back(PairRef{i, j});
  return pool;
}

PairRef sample_pair(Rng& rng, const Dataset& ds) {
  if (ds.samples.empty()) throw ContractError("sample_pair: empty dataset");
  PairRef p;
  p.img = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(ds.samples.size()) - 1));
  p.cap = static_cast<int>(rng.uniform_int(0, ds.captions_per_image() - 1));
  return p;
}

int sample_other_image(Rng& rng, const Dataset& ds, int avoid) {
  auto n = static_cast<int64_t>(ds.samples.size());
  if (n < 2) throw ContractError("sample_other_image: need at least two images");
  for (;;) {
    int j = static_cast<int>(rng.uniform_int(0, n - 1));
    if (j != avoid) return j;
  }
}

void save_dataset(const Dataset& ds, const std::string& path) {
  if (ds.samples.empty()) throw DataError("refusing to save empty dataset");
  int h = ds.height(), w = ds.width(), k = ds.captions_per_image();
  nlohmann::json hdr;
  hdr["name"] = ds.name;
  hdr["seed"] = ds.seed;
  hdr["n"] = ds.samples.size();
  hdr["height"] = h;
  hdr["width"] = w;
  hdr["channels"] = 3;
  hdr["max_caption_len"] = kMaxCaptionLen;
  hdr["captions_per_image"] = k;
  hdr["vocab"] = ds.vocab.words();
  nlohmann::json meta = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    meta.push_back({{"color", s.attrs.color},
                    {"shape", s.attrs.shape},
                    {"bg", s.attrs.bg},
                    {"captions", s.captions}});
  }
  hdr["samples"] = std::move(meta);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create " + path);
  io::write_magic(f, kDatasetMagic);
  io::write_u16(f, kDatasetVersion);
  io::write_json_block(f, hdr);
  for (const auto& s : ds.samples) {
    if (s.image.h != h || s.image.w != w || s.image.c != 3)
      throw DataError("inconsistent image shape in dataset");
    io::write_f32_array(f, s.image.v.data(), s.image.v.size());
  }
  for (const auto& s : ds.samples) {
    if (static_cast<int>(s.tokens.size()) != k) throw DataError("inconsistent caption count");
    for (const auto& t : s.tokens) {
      if (static_cast<int>(t.size()) != kMaxCaptionLen)
        throw DataError("caption token block has wrong length");
      io::write_i32_array(f, t.data(), t.size());
    }
  }
  if (!f) throw IoError("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  io::expect_magic(f, kDatasetMagic, path);
  uint16_t version = io::read_u16(f);
  if (version != kDatasetVersion)
    throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
  nlohmann::json hdr = io::read_json_block(f, path);

  Dataset ds;
  size_t n;
  int h, w, c, k, lmax;
  try {
    ds.name = hdr.at("name").get<std::string>();
    ds.seed = hdr.at("seed").get<uint64_t>();
    n = hdr.at("n").get<size_t>();
    h = hdr.at("height").get<int>();
    w = hdr.at("width").get<int>();
    c = hdr.at("channels").get<int>();
    lmax = hdr.at("max_caption_len").get<int>();
    k = hdr.at("captions_per_image").get<int>();
    ds.vocab = Vocab(hdr.at("vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad dataset header: " + e.what());
  }
  if (c != 3) throw FormatError(path + ": expected 3 channels, got " + std::to_string(c));
  if (lmax != kMaxCaptionLen)
    throw FormatError(path + ": caption length " + std::to_string(lmax) + " unsupported");
  if (n == 0 || h < 2 || w < 2 || k < 1) throw FormatError(path + ": degenerate header");
  const auto& meta = hdr.at("samples");
  if (meta.size() != n) throw FormatError(path + ": sample metadata count mismatch");

  ds.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto& s = ds.samples[i];
    s.image = ImageTensor(h, w, 3);
    io::read_f32_array(f, s.image.v.data(), s.image.v.size());
    check_unit_range(s.image);
  }
  for (size_t i = 0; i < n; ++i) {
    auto& s = ds.samples[i];
    try {
      s.attrs.color = meta[i].at("color").get<std::string>();
      s.attrs.shape = meta[i].at("shape").get<std::string>();
      s.attrs.bg = meta[i].at("bg").get<std::string>();
      s.captions = meta[i].at("captions").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": bad sample metadata: " + e.what());
    }
    if (static_cast<int>(s.captions.size()) != k)
      throw FormatError(path + ": caption count mismatch at sample " + std::to_string(i));
    s.tokens.resize(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) {
      auto& t = s.tokens[static_cast<size_t>(j)];
      t.assign(kMaxCaptionLen, kPadId);
      io::read_i32_array(f, t.data(), t.size());
      for (int32_t id : t)
        if (id < 0 || id >= ds.vocab.size())
          throw FormatError(path + ": token id out of vocabulary range");
    }
  }
  return ds;
}

std::string describe(const Dataset& ds) {
  std::map<std::string, int> colors, shapes, bgs;
  for (const auto& s : ds.samples) {
    colors[s.attrs.color]++;
    shapes[s.attrs.shape]++;
    bgs[s.attrs.bg]++;
  }
  std::ostringstream out;
  out << "dataset '" << ds.name << "': " << ds.samples.size() << " images " << ds.height() << "x"
      << ds.width() << "x3, " << ds.captions_per_image() << " captions/image, vocab "
      << ds.vocab.size() << " words, seed " << ds.seed << "\n";
  auto dump = [&](const char* label, const std::map<std::string, int>& m) {
    out << "  " << label << ":";
    for (const auto& [k, v] : m) out << " " << k << "=" << v;
    out << "\n";
  };
  dump("colors", colors);
  dump("shapes", shapes);
  dump("backgrounds", bgs);
  out << "  example: \"" << ds.samples[0].captions[0] << "\"\n";
  return out.str();
}

} // namespace uaplab
