#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "uaplab/data.hpp"
#include "uaplab/errors.hpp"
#include "uaplab/grid.hpp"
#include "uaplab/rng.hpp"

// Small encoder zoo, templated on the scalar so the float32 runtime and the
// float64 finite-difference checks share one implementation. Backward passes
// are written out layer by layer; each consumes the caches of the immediately
// preceding forward, so nets are strictly single-threaded objects.

namespace uaplab {

inline constexpr int kEmbedDim = 32;

template <class T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Every learnable tensor, exposed for the optimizer and the checkpoint
// serializer. Block order is part of the checkpoint contract.
template <class T>
struct ParamBlock {
  std::string name;
  MatT<T>* value;
  MatT<T>* grad;
};

template <class T>
void zero_grads(const std::vector<ParamBlock<T>>& blocks) {
  for (const auto& b : blocks) b.grad->setZero();
}

template <class T>
size_t param_count(const std::vector<ParamBlock<T>>& blocks) {
  size_t n = 0;
  for (const auto& b : blocks) n += static_cast<size_t>(b.value->size());
  return n;
}

namespace netdetail {

template <class T>
void fill_glorot(MatT<T>& m, Rng& rng, int fan_in, int fan_out) {
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<T>(rng.uniform(-a, a));
}

template <class T>
void fill_normal(MatT<T>& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<T>(stddev * rng.normal());
}

} // namespace netdetail

// -- building blocks ---------------------------------------------------------

// Convolution via im2col + GEMM. Weight layout: (k*k*in_ch) x out_ch, with
// the column index of the unrolled patch ordered (ky, kx, channel) to match
// the HWC grid layout.
template <class T>
class ConvLayer {
 public:
  ConvLayer(int in_ch, int out_ch, int k, int stride, int pad)
      : W(k * k * in_ch, out_ch), gW(k * k * in_ch, out_ch), b(1, out_ch), gb(1, out_ch),
        in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad) {
    b.setZero();
    gW.setZero();
    gb.setZero();
  }

  void init(Rng& rng) { netdetail::fill_glorot(W, rng, k_ * k_ * in_ch_, out_ch_); }

  int out_extent(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Grid<T> forward(const Grid<T>& in) {
    if (in.c != in_ch_) throw ContractError("conv: channel mismatch");
    in_h_ = in.h;
    in_w_ = in.w;
    int oh = out_extent(in.h), ow = out_extent(in.w);
    col_.resize(static_cast<Eigen::Index>(oh) * ow, static_cast<Eigen::Index>(k_) * k_ * in_ch_);
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        Eigen::Index row = static_cast<Eigen::Index>(oy) * ow + ox;
        Eigen::Index cidx = 0;
        for (int ky = 0; ky < k_; ++ky) {
          int y = oy * stride_ - pad_ + ky;
          for (int kx = 0; kx < k_; ++kx) {
            int x = ox * stride_ - pad_ + kx;
            bool inside = y >= 0 && y < in.h && x >= 0 && x < in.w;
            for (int ci = 0; ci < in_ch_; ++ci, ++cidx)
              col_(row, cidx) = inside ? in.at(y, x, ci) : T(0);
          }
        }
      }
    }
    out_mat_.noalias() = col_ * W;
    out_mat_.rowwise() += b.row(0);
    Grid<T> out(oh, ow, out_ch_);
    Eigen::Map<MatT<T>>(out.v.data(), out_mat_.rows(), out_mat_.cols()) = out_mat_;
    return out;
  }

  Grid<T> backward(const Grid<T>& gout) {
    int oh = out_extent(in_h_), ow = out_extent(in_w_);
    if (gout.h != oh || gout.w != ow || gout.c != out_ch_)
      throw ContractError("conv backward: gradient shape mismatch");
    Eigen::Map<const MatT<T>> gmat(gout.v.data(), static_cast<Eigen::Index>(oh) * ow, out_ch_);
    gW.noalias() += col_.transpose() * gmat;
    gb.row(0) += gmat.colwise().sum();
    gcol_.noalias() = gmat * W.transpose();
    Grid<T> gin(in_h_, in_w_, in_ch_);
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        Eigen::Index row = static_cast<Eigen::Index>(oy) * ow + ox;
        Eigen::Index cidx = 0;
        for (int ky = 0; ky < k_; ++ky) {
          int y = oy * stride_ - pad_ + ky;
          for (int kx = 0; kx < k_; ++kx) {
            int x = ox * stride_ - pad_ + kx;
            bool inside = y >= 0 && y < in_h_ && x >= 0 && x < in_w_;
            for (int ci = 0; ci < in_ch_; ++ci, ++cidx)
              if (inside) gin.at(y, x, ci) += gcol_(row, cidx);
          }
        }
      }
    }
    return gin;
  }

  MatT<T> W, gW, b, gb;

 private:
  int in_ch_, out_ch_, k_, stride_, pad_;
  int in_h_ = 0, in_w_ = 0;
  MatT<T> col_, out_mat_, gcol_;
};

template <class T>
class TanhGrid {
 public:
  Grid<T> forward(const Grid<T>& in) {
    y_ = in;
    for (auto& v : y_.v) v = std::tanh(v);
    return y_;
  }
  Grid<T> backward(const Grid<T>& gout) {
    Grid<T> gin(y_.h, y_.w, y_.c);
    for (size_t i = 0; i < y_.v.size(); ++i) gin.v[i] = gout.v[i] * (T(1) - y_.v[i] * y_.v[i]);
    return gin;
  }

 private:
  Grid<T> y_;
};

// Dense y = W^T x + b with W stored (in x out).
template <class T>
class DenseLayer {
 public:
  DenseLayer(int in, int out) : W(in, out), gW(in, out), b(1, out), gb(1, out) {
    b.setZero();
    gW.setZero();
    gb.setZero();
  }

  void init(Rng& rng) {
    netdetail::fill_glorot(W, rng, static_cast<int>(W.rows()), static_cast<int>(W.cols()));
  }

  VecT<T> forward(const VecT<T>& x) {
    x_ = x;
    return W.transpose() * x + b.row(0).transpose();
  }

  VecT<T> backward(const VecT<T>& g) {
    gW.noalias() += x_ * g.transpose();
    gb.row(0) += g.transpose();
    return W * g;
  }

  MatT<T> W, gW, b, gb;

 private:
  VecT<T> x_;
};

template <class T>
class L2Normalize {
 public:
  VecT<T> forward(const VecT<T>& x) {
    T r2 = x.squaredNorm();
    if (!(r2 > T(1e-24))) throw NumericError("cannot normalize a (near-)zero embedding");
    r_ = std::sqrt(r2);
    y_ = x / r_;
    return y_;
  }
  VecT<T> backward(const VecT<T>& g) { return (g - y_ * y_.dot(g)) / r_; }

 private:
  T r_ = T(1);
  VecT<T> y_;
};

// -- image encoders -----------------------------------------------------------

template <class T>
class ImageNet {
 public:
  virtual ~ImageNet() = default;
  virtual void init(Rng& rng) = 0;
  virtual VecT<T> forward(const Grid<T>& img) = 0;
  // Accumulates parameter gradients and returns the gradient w.r.t. pixels.
  virtual Grid<T> backward(const VecT<T>& gemb) = 0;
  virtual std::vector<ParamBlock<T>> params() = 0;
  virtual int input_h() const = 0;
  virtual int input_w() const = 0;
};

// Three strided conv+tanh stages, global average pool, linear head, unit norm.
template <class T>
class ConvNet : public ImageNet<T> {
 public:
  ConvNet(int h, int w, int c1, int c2, int c3)
      : h_(h), w_(w),
        conv1_(3, c1, 5, 2, 2), conv2_(c1, c2, 3, 2, 1), conv3_(c2, c3, 3, 2, 1),
        head_(c3, kEmbedDim) {
    gh_ = conv3_.out_extent(conv2_.out_extent(conv1_.out_extent(h)));
    gw_ = conv3_.out_extent(conv2_.out_extent(conv1_.out_extent(w)));
    c3_ = c3;
  }

  void init(Rng& rng) override {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    head_.init(rng);
  }

  VecT<T> forward(const Grid<T>& img) override {
    if (img.h != h_ || img.w != w_ || img.c != 3) throw ContractError("conv net: bad input shape");
    Grid<T> a = act1_.forward(conv1_.forward(img));
    Grid<T> bgrid = act2_.forward(conv2_.forward(a));
    Grid<T> c = act3_.forward(conv3_.forward(bgrid));
    // global average pool
    VecT<T> pooled = VecT<T>::Zero(c3_);
    for (int y = 0; y < c.h; ++y)
      for (int x = 0; x < c.w; ++x)
        for (int ch = 0; ch < c3_; ++ch) pooled(ch) += c.at(y, x, ch);
    pooled /= T(gh_ * gw_);
    return norm_.forward(head_.forward(pooled));
  }

  Grid<T> backward(const VecT<T>& gemb) override {
    VecT<T> g = head_.backward(norm_.backward(gemb));
    Grid<T> gc(gh_, gw_, c3_);
    T scale = T(1) / T(gh_ * gw_);
    for (int y = 0; y < gh_; ++y)
      for (int x = 0; x < gw_; ++x)
        for (int ch = 0; ch < c3_; ++ch) gc.at(y, x, ch) = g(ch) * scale;
    Grid<T> g3 = conv2_.backward(act2_.backward(conv3_.backward(act3_.backward(gc))));
    return conv1_.backward(act1_.backward(g3));
  }

  std::vector<ParamBlock<T>> params() override {
    return {{"conv1.W", &conv1_.W, &conv1_.gW}, {"conv1.b", &conv1_.b, &conv1_.gb},
            {"conv2.W", &conv2_.W, &conv2_.gW}, {"conv2.b", &conv2_.b, &conv2_.gb},
            {"conv3.W", &conv3_.W, &conv3_.gW}, {"conv3.b", &conv3_.b, &conv3_.gb},
            {"head.W", &head_.W, &head_.gW},    {"head.b", &head_.b, &head_.gb}};
  }

  int input_h() const override { return h_; }
  int input_w() const override { return w_; }

 private:
  int h_, w_, gh_, gw_, c3_;
  ConvLayer<T> conv1_, conv2_, conv3_;
  TanhGrid<T> act1_, act2_, act3_;
  DenseLayer<T> head_;
  L2Normalize<T> norm_;
};

// Patch tokens (8x8 crops -> linear embed + learned position), one softmax
// self-attention block with residual, one tanh MLP with residual, mean pool,
// linear head, unit norm.
template <class T>
class PatchAttnNet : public ImageNet<T> {
 public:
  PatchAttnNet(int h, int w)
      : h_(h), w_(w), embed_(kPatch * kPatch * 3, kEmbedDim),
        wq_(kEmbedDim, kEmbedDim), gwq_(kEmbedDim, kEmbedDim),
        wk_(kEmbedDim, kEmbedDim), gwk_(kEmbedDim, kEmbedDim),
        wv_(kEmbedDim, kEmbedDim), gwv_(kEmbedDim, kEmbedDim),
        mlp1_(kEmbedDim, 2 * kEmbedDim), mlp2_(2 * kEmbedDim, kEmbedDim),
        head_(kEmbedDim, kEmbedDim) {
    if (h % kPatch != 0 || w % kPatch != 0)
      throw ContractError("patch net: input extent must be a multiple of 8");
    ny_ = h / kPatch;
    nx_ = w / kPatch;
    n_ = ny_ * nx_;
    pos_ = MatT<T>::Zero(n_, kEmbedDim);
    gpos_ = MatT<T>::Zero(n_, kEmbedDim);
    gwq_.setZero();
    gwk_.setZero();
    gwv_.setZero();
  }

  void init(Rng& rng) override {
    embed_.init(rng);
    netdetail::fill_normal(pos_, rng, 0.02);
    netdetail::fill_glorot(wq_, rng, kEmbedDim, kEmbedDim);
    netdetail::fill_glorot(wk_, rng, kEmbedDim, kEmbedDim);
    netdetail::fill_glorot(wv_, rng, kEmbedDim, kEmbedDim);
    mlp1_.init(rng);
    mlp2_.init(rng);
    head_.init(rng);
  }

  VecT<T> forward(const Grid<T>& img) override {
    if (img.h != h_ || img.w != w_ || img.c != 3) throw ContractError("patch net: bad input shape");
    patches_.resize(n_, kPatch * kPatch * 3);
    for (int py = 0; py < ny_; ++py)
      for (int px = 0; px < nx_; ++px) {
        Eigen::Index row = static_cast<Eigen::Index>(py) * nx_ + px;
        Eigen::Index c = 0;
        for (int dy = 0; dy < kPatch; ++dy)
          for (int dx = 0; dx < kPatch; ++dx)
            for (int ch = 0; ch < 3; ++ch, ++c)
              patches_(row, c) = img.at(py * kPatch + dy, px * kPatch + dx, ch);
      }
    X_ = patches_ * embed_.W;
    X_.rowwise() += embed_.b.row(0);
    X_ += pos_;

    Q_.noalias() = X_ * wq_;
    K_.noalias() = X_ * wk_;
    V_.noalias() = X_ * wv_;
    A_.noalias() = Q_ * K_.transpose() / std::sqrt(T(kEmbedDim));
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      T m = A_.row(i).maxCoeff();
      A_.row(i) = (A_.row(i).array() - m).exp().matrix();
      A_.row(i) /= A_.row(i).sum();
    }
    Y_.noalias() = X_ + A_ * V_;

    U_ = Y_ * mlp1_.W;
    U_.rowwise() += mlp1_.b.row(0);
    U_ = U_.array().tanh().matrix();
    Z_.noalias() = U_ * mlp2_.W;
    Z_.rowwise() += mlp2_.b.row(0);
    Z_ += Y_;

    VecT<T> pooled = Z_.colwise().mean().transpose();
    return norm_.forward(head_.forward(pooled));
  }

  Grid<T> backward(const VecT<T>& gemb) override {
    VecT<T> gpool = head_.backward(norm_.backward(gemb));
    MatT<T> gZ = MatT<T>::Zero(n_, kEmbedDim);
    gZ.rowwise() += gpool.transpose() / T(n_);

    // MLP block (residual): Z = Y + tanh(Y W1 + b1) W2 + b2
    MatT<T> gU = gZ * mlp2_.W.transpose();
    mlp2_.gW.noalias() += U_.transpose() * gZ;
    mlp2_.gb.row(0) += gZ.colwise().sum();
    MatT<T> gpre = (gU.array() * (T(1) - U_.array().square())).matrix();
    MatT<T> gY = gZ;
    gY.noalias() += gpre * mlp1_.W.transpose();
    mlp1_.gW.noalias() += Y_.transpose() * gpre;
    mlp1_.gb.row(0) += gpre.colwise().sum();

    // attention block (residual): Y = X + softmax(QK^T/sqrt(d)) V
    MatT<T> gV = A_.transpose() * gY;
    MatT<T> gA = gY * V_.transpose();
    MatT<T> gS(n_, n_);
    for (Eigen::Index i = 0; i < gS.rows(); ++i) {
      T dot = gA.row(i).cwiseProduct(A_.row(i)).sum();
      gS.row(i) = (A_.row(i).array() * (gA.row(i).array() - dot)).matrix();
    }
    gS /= std::sqrt(T(kEmbedDim));
    MatT<T> gX = gY;
    gX.noalias() += gS * K_ * wq_.transpose();
    gX.noalias() += gS.transpose() * Q_ * wk_.transpose();
    gX.noalias() += gV * wv_.transpose();
    gwq_.noalias() += X_.transpose() * (gS * K_);
    gwk_.noalias() += X_.transpose() * (gS.transpose() * Q_);
    gwv_.noalias() += X_.transpose() * gV;

    gpos_ += gX;
    embed_.gW.noalias() += patches_.transpose() * gX;
    embed_.gb.row(0) += gX.colwise().sum();
    MatT<T> gpatches = gX * embed_.W.transpose();

    Grid<T> gin(h_, w_, 3);
    for (int py = 0; py < ny_; ++py)
      for (int px = 0; px < nx_; ++px) {
        Eigen::Index row = static_cast<Eigen::Index>(py) * nx_ + px;
        Eigen::Index c = 0;
        for (int dy = 0; dy < kPatch; ++dy)
          for (int dx = 0; dx < kPatch; ++dx)
            for (int ch = 0; ch < 3; ++ch, ++c)
              gin.at(py * kPatch + dy, px * kPatch + dx, ch) = gpatches(row, c);
      }
    return gin;
  }

  std::vector<ParamBlock<T>> params() override {
    return {{"embed.W", &embed_.W, &embed_.gW}, {"embed.b", &embed_.b, &embed_.gb},
            {"pos", &pos_, &gpos_},
            {"attn.wq", &wq_, &gwq_},           {"attn.wk", &wk_, &gwk_},
            {"attn.wv", &wv_, &gwv_},
            {"mlp1.W", &mlp1_.W, &mlp1_.gW},    {"mlp1.b", &mlp1_.b, &mlp1_.gb},
            {"mlp2.W", &mlp2_.W, &mlp2_.gW},    {"mlp2.b", &mlp2_.b, &mlp2_.gb},
            {"head.W", &head_.W, &head_.gW},    {"head.b", &head_.b, &head_.gb}};
  }

  int input_h() const override { return h_; }
  int input_w() const override { return w_; }

 private:
  static constexpr int kPatch = 8;
  int h_, w_, ny_ = 0, nx_ = 0, n_ = 0;
  // DenseLayer is used as a shared per-token linear map here; its x_ cache is
  // unused because token matmuls are done in bulk.
  DenseLayer<T> embed_;
  MatT<T> pos_, gpos_;
  MatT<T> wq_, gwq_, wk_, gwk_, wv_, gwv_;
  DenseLayer<T> mlp1_, mlp2_;
  DenseLayer<T> head_;
  L2Normalize<T> norm_;
  MatT<T> patches_, X_, Q_, K_, V_, A_, Y_, U_, Z_;
};

// Bag-of-words text encoder: embedding table, mean over non-pad tokens, tanh
// dense, linear head, unit norm. Invariant to token order and padding.
template <class T>
class TextNet {
 public:
  explicit TextNet(int vocab_size)
      : vocab_(vocab_size), table_(vocab_size, kEmbedDim), gtable_(vocab_size, kEmbedDim),
        d1_(kEmbedDim, kEmbedDim), d2_(kEmbedDim, kEmbedDim) {
    gtable_.setZero();
  }

  void init(Rng& rng) {
    netdetail::fill_normal(table_, rng, 0.3);
    d1_.init(rng);
    d2_.init(rng);
  }

  VecT<T> forward(const TokenSeq& tokens) {
    tokens_ = tokens;
    nonpad_ = 0;
    VecT<T> mean = VecT<T>::Zero(kEmbedDim);
    for (int32_t t : tokens) {
      if (t == kPadId) continue;
      if (t < 0 || t >= vocab_) throw ContractError("token id outside vocabulary");
      mean += table_.row(t).transpose();
      ++nonpad_;
    }
    if (nonpad_ == 0) throw ContractError("cannot encode an all-pad caption");
    mean /= T(nonpad_);
    h1_ = d1_.forward(mean).array().tanh().matrix();
    return norm_.forward(d2_.forward(h1_));
  }

  void backward(const VecT<T>& gemb) {
    VecT<T> g2 = d2_.backward(norm_.backward(gemb));
    VecT<T> g1 = d1_.backward((g2.array() * (T(1) - h1_.array().square())).matrix());
    g1 /= T(nonpad_);
    for (int32_t t : tokens_) {
      if (t == kPadId) continue;
      gtable_.row(t) += g1.transpose();
    }
  }

  std::vector<ParamBlock<T>> params() {
    return {{"table", &table_, &gtable_},
            {"d1.W", &d1_.W, &d1_.gW}, {"d1.b", &d1_.b, &d1_.gb},
            {"d2.W", &d2_.W, &d2_.gW}, {"d2.b", &d2_.b, &d2_.gb}};
  }

  int vocab_size() const { return vocab_; }

 private:
  int vocab_;
  MatT<T> table_, gtable_;
  DenseLayer<T> d1_, d2_;
  L2Normalize<T> norm_;
  TokenSeq tokens_;
  int nonpad_ = 0;
  VecT<T> h1_;
};

} // namespace uaplab
