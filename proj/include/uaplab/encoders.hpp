#pragma once

#include <memory>
#include <string>

#include "uaplab/data.hpp"
#include "uaplab/nets.hpp"

namespace uaplab {

enum class Arch { ConvSmall, ConvWide, PatchAttn };

Arch arch_from_string(const std::string& s); // throws ConfigError
std::string to_string(Arch a);

template <class T>
std::unique_ptr<ImageNet<T>> make_image_net(Arch arch, int h, int w) {
  switch (arch) {
    case Arch::ConvSmall: return std::make_unique<ConvNet<T>>(h, w, 8, 16, 32);
    case Arch::ConvWide: return std::make_unique<ConvNet<T>>(h, w, 12, 24, 48);
    case Arch::PatchAttn: return std::make_unique<PatchAttnNet<T>>(h, w);
  }
  throw ContractError("unhandled architecture");
}

struct ModelMeta {
  std::string name; // provenance label, e.g. "conv-small-s1"
  Arch arch = Arch::ConvSmall;
  int h = 0, w = 0;
  uint64_t seed = 0; // pretraining seed
  Vocab vocab;
};

// A dual encoder: image tower + text tower mapping into the same unit sphere.
template <class T>
struct EncoderPair {
  ModelMeta meta;
  std::unique_ptr<ImageNet<T>> image;
  std::unique_ptr<TextNet<T>> text;

  VecT<T> encode_image(const Grid<T>& img) { return image->forward(img); }
  VecT<T> encode_text(const TokenSeq& tokens) { return text->forward(tokens); }
};

using ModelPair = EncoderPair<float>;

// Zero-initialized towers; call init_params (fresh training) or load_model.
ModelPair make_model(Arch arch, int h, int w, const Vocab& vocab);

// Deterministic parameter init; image tower draws first, then text tower.
void init_params(ModelPair& m, uint64_t seed);

// Exact copy of a float model at another precision, for float64 oracle runs.
template <class T>
EncoderPair<T> cast_model(ModelPair& src) {
  EncoderPair<T> out;
  out.meta = src.meta;
  out.image = make_image_net<T>(src.meta.arch, src.meta.h, src.meta.w);
  out.text = std::make_unique<TextNet<T>>(src.meta.vocab.size());
  auto copy_blocks = [](auto from, auto to) {
    if (from.size() != to.size()) throw ContractError("cast_model: block count mismatch");
    for (size_t i = 0; i < from.size(); ++i) {
      if (from[i].name != to[i].name || from[i].value->rows() != to[i].value->rows() ||
          from[i].value->cols() != to[i].value->cols())
        throw ContractError("cast_model: block layout mismatch at " + from[i].name);
      *to[i].value = from[i].value->template cast<T>();
    }
  };
  copy_blocks(src.image->params(), out.image->params());
  copy_blocks(src.text->params(), out.text->params());
  return out;
}

// Content fingerprint over both towers' parameters, for provenance records.
std::string model_digest(ModelPair& m);

// UAPM checkpoint: "UAPM" magic, u16 version, JSON header (name, arch, input
// shape, embed dim, seed, vocab, block manifest), then one float32 payload per
// block in manifest order, image tower first.
void save_model(ModelPair& m, const std::string& path);
ModelPair load_model(const std::string& path);

} // namespace uaplab
