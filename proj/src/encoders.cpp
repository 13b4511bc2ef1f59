#include "uaplab/encoders.hpp"

#include <fstream>

#include "json.hpp"

#include "uaplab/io.hpp"

namespace uaplab {

namespace {

constexpr uint16_t kModelVersion = 1;
const char kModelMagic[4] = {'U', 'A', 'P', 'M'};

nlohmann::json block_manifest(const std::vector<ParamBlock<float>>& blocks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& b : blocks)
    out.push_back({{"name", b.name}, {"rows", b.value->rows()}, {"cols", b.value->cols()}});
  return out;
}

void write_blocks(std::ostream& os, const std::vector<ParamBlock<float>>& blocks) {
  for (const auto& b : blocks)
    io::write_f32_array(os, b.value->data(), static_cast<size_t>(b.value->size()));
}

void read_blocks(std::istream& is, const nlohmann::json& manifest,
                 const std::vector<ParamBlock<float>>& blocks, const std::string& path) {
  if (manifest.size() != blocks.size())
    throw FormatError(path + ": checkpoint block count does not match architecture");
  for (size_t i = 0; i < blocks.size(); ++i) {
    const auto& m = manifest[i];
    if (m.at("name").get<std::string>() != blocks[i].name ||
        m.at("rows").get<Eigen::Index>() != blocks[i].value->rows() ||
        m.at("cols").get<Eigen::Index>() != blocks[i].value->cols())
      throw FormatError(path + ": checkpoint block '" + blocks[i].name +
                        "' does not match architecture");
    io::read_f32_array(is, blocks[i].value->data(),
                       static_cast<size_t>(blocks[i].value->size()));
    for (Eigen::Index j = 0; j < blocks[i].value->size(); ++j)
      if (!std::isfinite(blocks[i].value->data()[j]))
        throw FormatError(path + ": non-finite parameter in block '" + blocks[i].name + "'");
  }
}

} // namespace

Arch arch_from_string(const std::string& s) {
  if (s == "conv-small") return Arch::ConvSmall;
  if (s == "conv-wide") return Arch::ConvWide;
  if (s == "patch-attn") return Arch::PatchAttn;
  throw ConfigError("unknown architecture '" + s +
                    "' (expected conv-small, conv-wide or patch-attn)");
}

std::string to_string(Arch a) {
  switch (a) {
    case Arch::ConvSmall: return "conv-small";
    case Arch::ConvWide: return "conv-wide";
    case Arch::PatchAttn: return "patch-attn";
  }
  throw ContractError("unhandled architecture");
}

ModelPair make_model(Arch arch, int h, int w, const Vocab& vocab) {
  ModelPair m;
  m.meta.arch = arch;
  m.meta.h = h;
  m.meta.w = w;
  m.meta.vocab = vocab;
  m.meta.name = to_string(arch);
  m.image = make_image_net<float>(arch, h, w);
  m.text = std::make_unique<TextNet<float>>(vocab.size());
  return m;
}

void init_params(ModelPair& m, uint64_t seed) {
  m.meta.seed = seed;
  m.meta.name = to_string(m.meta.arch) + "-s" + std::to_string(seed);
  Rng rng(seed);
  // init() draws in param-block order, so both towers are seed-stable
  Rng img_rng = rng.derive(0x1473, 0, 0);
  Rng txt_rng = rng.derive(0x7e87, 0, 0);
  m.image->init(img_rng);
  m.text->init(txt_rng);
}

std::string model_digest(ModelPair& m) {
  uint64_t h = io::fnv1a64(m.meta.name.data(), m.meta.name.size());
  auto fold = [&h](const std::vector<ParamBlock<float>>& blocks) {
    for (const auto& b : blocks)
      h = io::fnv1a64(b.value->data(),
                      static_cast<size_t>(b.value->size()) * sizeof(float), h);
  };
  fold(m.image->params());
  fold(m.text->params());
  return io::hex64(h);
}

void save_model(ModelPair& m, const std::string& path) {
  auto img_blocks = m.image->params();
  auto txt_blocks = m.text->params();
  nlohmann::json hdr;
  hdr["name"] = m.meta.name;
  hdr["arch"] = to_string(m.meta.arch);
  hdr["input"] = {{"h", m.meta.h}, {"w", m.meta.w}, {"c", 3}};
  hdr["embed_dim"] = kEmbedDim;
  hdr["seed"] = m.meta.seed;
  hdr["vocab"] = m.meta.vocab.words();
  hdr["image_blocks"] = block_manifest(img_blocks);
  hdr["text_blocks"] = block_manifest(txt_blocks);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create " + path);
  io::write_magic(f, kModelMagic);
  io::write_u16(f, kModelVersion);
  io::write_json_block(f, hdr);
  write_blocks(f, img_blocks);
  write_blocks(f, txt_blocks);
  if (!f) throw IoError("write failed for " + path);
}

ModelPair load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  io::expect_magic(f, kModelMagic, path);
  uint16_t version = io::read_u16(f);
  if (version != kModelVersion)
    throw FormatError(path + ": unsupported model version " + std::to_string(version));
  nlohmann::json hdr = io::read_json_block(f, path);

  ModelPair m;
  try {
    Arch arch = arch_from_string(hdr.at("arch").get<std::string>());
    int h = hdr.at("input").at("h").get<int>();
    int w = hdr.at("input").at("w").get<int>();
    if (hdr.at("embed_dim").get<int>() != kEmbedDim)
      throw FormatError(path + ": embedding width mismatch");
    Vocab vocab(hdr.at("vocab").get<std::vector<std::string>>());
    m = make_model(arch, h, w, vocab);
    m.meta.name = hdr.at("name").get<std::string>();
    m.meta.seed = hdr.at("seed").get<uint64_t>();
    read_blocks(f, hdr.at("image_blocks"), m.image->params(), path);
    read_blocks(f, hdr.at("text_blocks"), m.text->params(), path);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad model header: " + e.what());
  }
  return m;
}

} // namespace uaplab
