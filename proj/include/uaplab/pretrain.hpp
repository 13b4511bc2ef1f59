#pragma once

#include <cstdint>
#include <vector>

#include "uaplab/data.hpp"
#include "uaplab/encoders.hpp"

namespace uaplab {

struct PretrainConfig {
  int epochs = 300; // the joint two-corpus task needs the long tail to pass 0.9
  int batch = 64;
  double lr = 3e-3;
  double temperature = 0.07; // contrastive softmax temperature, fixed
  double r1_floor = 0.9;     // required clean image->text recall@1 on the corpus
  uint64_t seed = 1;
  bool verbose = false;

  void validate() const; // throws ConfigError
};

struct PretrainStats {
  std::vector<double> epoch_loss;
  double final_r1 = 0.0;
};

// Symmetric InfoNCE over (image, caption) batches, Adam updates. Initializes
// the model from cfg.seed, so a (model arch, dataset, config) triple fully
// determines the resulting parameters. Throws TrainingDivergenceError if the
// corpus recall@1 floor is not reached, NumericError on non-finite loss.
PretrainStats pretrain(ModelPair& m, const Dataset& ds, const PretrainConfig& cfg);

// Fraction of images whose nearest caption (over every caption in the corpus)
// describes the same attributes, i.e. is token-identical to one of their own.
double corpus_recall_at_1(ModelPair& m, const Dataset& ds);

} // namespace uaplab
