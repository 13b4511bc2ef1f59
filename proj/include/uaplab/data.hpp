#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uaplab/grid.hpp"
#include "uaplab/rng.hpp"

namespace uaplab {

// Fixed caption length; shorter captions are padded with id 0.
inline constexpr int kMaxCaptionLen = 8;
inline constexpr int32_t kPadId = 0;

// Closed-world vocabulary shared by every dataset and model in the lab. The
// ordering is part of the on-disk contract: token ids in UAPD files and
// embedding rows in UAPM checkpoints both index into this list.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> words);

  static Vocab canonical();

  int32_t id(const std::string& word) const; // throws DataError on unknown word
  const std::string& word(int32_t id) const; // throws DataError on bad id
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  bool operator==(const Vocab& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
};

using TokenSeq = std::vector<int32_t>; // always kMaxCaptionLen long

TokenSeq tokenize(const std::string& caption, const Vocab& vocab);
std::string detokenize(const TokenSeq& tokens, const Vocab& vocab);

struct Attributes {
  std::string color, shape, bg;
};

struct Sample {
  ImageTensor image; // h x w x 3, values in (0, 1)
  Attributes attrs;
  std::vector<std::string> captions; // one per template
  std::vector<TokenSeq> tokens;      // tokenized captions, padded
};

// Recipe for a synthetic corpus: which attribute values exist and how many
// images to draw. Attribute triples are sampled uniformly per image.
struct SyntheticSpec {
  std::string name;
  int n_images = 0;
  int height = 64, width = 64;
  std::vector<std::string> colors, shapes, bgs;

  static SyntheticSpec preset(const std::string& which, int n_images); // "A" or "B"
  static SyntheticSpec from_json_file(const std::string& path);
  void validate() const; // throws ConfigError
};

struct Dataset {
  std::string name;
  uint64_t seed = 0;
  Vocab vocab;
  std::vector<Sample> samples;

  int height() const;
  int width() const;
  int captions_per_image() const;
};

// Deterministic: same (spec, seed) always yields bit-identical samples.
Dataset generate_dataset(const SyntheticSpec& spec, uint64_t seed);

// Merge corpora that share geometry and vocabulary (e.g. for joint pretraining).
Dataset concat(const Dataset& a, const Dataset& b);

// One (image, caption) pair used as an attack minibatch entry.
struct PairRef {
  int img = 0, cap = 0;
};

// Caption-expanded pool: one entry per (image, caption) pair, image-major.
std::vector<PairRef> expand_captions(const Dataset& ds);

// Content fingerprint over pixels and tokens, for provenance records.
std::string dataset_digest(const Dataset& ds);

PairRef sample_pair(Rng& rng, const Dataset& ds);
int sample_other_image(Rng& rng, const Dataset& ds, int avoid);

// UAPD container: "UAPD" magic, u16 version, length-prefixed JSON header
// (recipe, vocab, per-sample attributes and caption text), then float32 pixel
// payload and int32 token payload in sample order.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::string describe(const Dataset& ds); // human-readable summary for the CLI

} // namespace uaplab
