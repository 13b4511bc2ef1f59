#include "uaplab/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "uaplab/errors.hpp"
#include "uaplab/rng.hpp"

namespace uaplab {

namespace {

class Adam {
 public:
  explicit Adam(const std::vector<ParamBlock<float>>& blocks) {
    for (const auto& b : blocks) {
      m_.emplace_back(MatT<float>::Zero(b.value->rows(), b.value->cols()));
      v_.emplace_back(MatT<float>::Zero(b.value->rows(), b.value->cols()));
    }
  }

  void step(const std::vector<ParamBlock<float>>& blocks, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(0.9, t_);
    double bc2 = 1.0 - std::pow(0.999, t_);
    double alpha = lr * std::sqrt(bc2) / bc1;
    for (size_t i = 0; i < blocks.size(); ++i) {
      auto& g = *blocks[i].grad;
      m_[i] = 0.9f * m_[i] + 0.1f * g;
      v_[i] = 0.999f * v_[i] + 0.001f * g.cwiseProduct(g);
      blocks[i].value->array() -=
          static_cast<float>(alpha) * m_[i].array() / (v_[i].array().sqrt() + 1e-8f);
    }
  }

 private:
  long t_ = 0;
  std::vector<MatT<float>> m_, v_;
};

} // namespace

void PretrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("pretrain: epochs must be positive");
  if (batch < 2) throw ConfigError("pretrain: contrastive batches need at least 2 pairs");
  if (!(lr > 0.0)) throw ConfigError("pretrain: learning rate must be positive");
  if (!(temperature > 0.0)) throw ConfigError("pretrain: temperature must be positive");
  if (r1_floor < 0.0 || r1_floor > 1.0) throw ConfigError("pretrain: r1 floor must be in [0,1]");
}

double corpus_recall_at_1(ModelPair& m, const Dataset& ds) {
  int n = static_cast<int>(ds.samples.size());
  int k = ds.captions_per_image();
  MatT<float> caps(static_cast<Eigen::Index>(n) * k, kEmbedDim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      caps.row(static_cast<Eigen::Index>(i) * k + j) =
          m.encode_text(ds.samples[static_cast<size_t>(i)].tokens[static_cast<size_t>(j)])
              .transpose();
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    VecT<float> u = m.encode_image(ds.samples[static_cast<size_t>(i)].image);
    Eigen::Index best;
    (caps * u).maxCoeff(&best);
    const auto& chosen = ds.samples[static_cast<size_t>(best / k)].tokens[
        static_cast<size_t>(best % k)];
    const auto& own = ds.samples[static_cast<size_t>(i)].tokens;
    if (std::find(own.begin(), own.end(), chosen) != own.end()) ++hits;
  }
  return static_cast<double>(hits) / n;
}

PretrainStats pretrain(ModelPair& m, const Dataset& ds, const PretrainConfig& cfg) {
  cfg.validate();
  int n = static_cast<int>(ds.samples.size());
  if (n < cfg.batch)
    throw ConfigError("pretrain: corpus smaller than one batch (" + std::to_string(n) + " < " +
                      std::to_string(cfg.batch) + ")");
  if (!(m.meta.vocab == ds.vocab)) throw ConfigError("pretrain: model/dataset vocabulary mismatch");

  init_params(m, cfg.seed);
  auto img_blocks = m.image->params();
  auto txt_blocks = m.text->params();
  Adam img_opt(img_blocks);
  Adam txt_opt(txt_blocks);

  Rng rng = Rng(cfg.seed).derive(0x9d41, 0, 0);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  int B = cfg.batch;
  float inv_tau = static_cast<float>(1.0 / cfg.temperature);
  PretrainStats stats;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // cosine decay: the contrastive loss plateaus under a constant rate
    double lr = cfg.lr * 0.5 * (1.0 + std::cos(M_PI * epoch / cfg.epochs));
    // Fisher-Yates with our own stream; std::shuffle is not seed-portable.
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(rng.uniform_int(0, i))]);

    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start + B <= n; start += B) {
      MatT<float> U(B, kEmbedDim), V(B, kEmbedDim);
      std::vector<const Sample*> imgs(static_cast<size_t>(B));
      std::vector<const TokenSeq*> caps(static_cast<size_t>(B));
      for (int i = 0; i < B; ++i) {
        const Sample& s = ds.samples[static_cast<size_t>(order[static_cast<size_t>(start + i)])];
        imgs[static_cast<size_t>(i)] = &s;
        caps[static_cast<size_t>(i)] = &s.tokens[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(s.tokens.size()) - 1))];
        U.row(i) = m.encode_image(s.image).transpose();
        V.row(i) = m.encode_text(*caps[static_cast<size_t>(i)]).transpose();
      }

      MatT<float> S = (U * V.transpose()) * inv_tau;
      // row-softmax (image -> text) and column-softmax (text -> image)
      MatT<float> Pr = S, Pc = S;
      for (int i = 0; i < B; ++i) {
        Pr.row(i) = (Pr.row(i).array() - Pr.row(i).maxCoeff()).exp().matrix();
        Pr.row(i) /= Pr.row(i).sum();
      }
      for (int j = 0; j < B; ++j) {
        Pc.col(j) = (Pc.col(j).array() - Pc.col(j).maxCoeff()).exp().matrix();
        Pc.col(j) /= Pc.col(j).sum();
      }
      double loss = 0.0;
      for (int i = 0; i < B; ++i)
        loss -= 0.5 * (std::log(std::max(Pr(i, i), 1e-30f)) +
                       std::log(std::max(Pc(i, i), 1e-30f)));
      loss /= B;
      if (!std::isfinite(loss)) throw NumericError("pretrain: non-finite contrastive loss");
      loss_sum += loss;
      ++batches;

      MatT<float> dS = (Pr + Pc) / (2.0f * static_cast<float>(B));
      for (int i = 0; i < B; ++i) dS(i, i) -= 1.0f / static_cast<float>(B);
      MatT<float> dU = (dS * V) * inv_tau;
      MatT<float> dV = (dS.transpose() * U) * inv_tau;

      zero_grads(img_blocks);
      zero_grads(txt_blocks);
      for (int i = 0; i < B; ++i) {
        // re-forward to restore layer caches, then push the embedding grad
        (void)m.encode_image(imgs[static_cast<size_t>(i)]->image);
        (void)m.image->backward(dU.row(i).transpose());
        (void)m.encode_text(*caps[static_cast<size_t>(i)]);
        m.text->backward(dV.row(i).transpose());
      }
      img_opt.step(img_blocks, lr);
      txt_opt.step(txt_blocks, lr);
    }
    stats.epoch_loss.push_back(loss_sum / std::max(batches, 1));
    if (cfg.verbose)
      std::printf("epoch %3d  loss %.4f\n", epoch + 1, stats.epoch_loss.back());
  }

  stats.final_r1 = corpus_recall_at_1(m, ds);
  if (cfg.verbose) std::printf("corpus R@1 %.3f\n", stats.final_r1);
  if (stats.final_r1 < cfg.r1_floor)
    throw TrainingDivergenceError(
        "pretrained encoder reached R@1 " + std::to_string(stats.final_r1) + " < floor " +
        std::to_string(cfg.r1_floor) + " (arch " + to_string(m.meta.arch) + ", seed " +
        std::to_string(cfg.seed) + ")");
  return stats;
}

} // namespace uaplab
