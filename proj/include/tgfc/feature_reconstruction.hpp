#pragma once

#include <random>
#include <utility>

#include "tgfc/nn/layers.hpp"
#include "tgfc/tensor.hpp"

namespace tgfc {

/// Channel i from `f_m` where the mask keeps it, otherwise from `f_lq`.
template <typename Scalar>
Tensor<Scalar> fill_missing(const Tensor<Scalar>& f_m, const Tensor<Scalar>& f_lq, const ChannelMask& m) {
  require_same_shape(f_m, f_lq, "fill_missing");
  if (m.length() != f_m.channels()) throw DimensionError("fill_missing: mask length != channels");
  Tensor<Scalar> out = f_m;
  for (Index c = 0; c < out.channels(); ++c)
    if (!m[c]) out.data().row(c) = f_lq.data().row(c);
  return out;
}

/// Relaxed fill used in training: w_i·hq_i + (1 - w_i)·lq_i per channel.
template <typename Scalar>
Tensor<Scalar> blend_channels(const Tensor<Scalar>& hq, const Tensor<Scalar>& lq,
                              const Eigen::Vector<Scalar, Eigen::Dynamic>& w) {
  require_same_shape(hq, lq, "blend_channels");
  Tensor<Scalar> out = hq;
  out.data() = (hq.data().array().colwise() * w.array() + lq.data().array().colwise() * (Scalar(1) - w.array())).matrix();
  return out;
}

struct FrmOptions {
  /// false: condition on the texture features, modulate the recombined tensor.
  /// true: modulate the texture features themselves (literal equation reading).
  bool sft_modulate_lq = false;
  Index attention_reduction = 4;
  double leaky_slope = 0.01;
  double attention_init_bias = 4.0;
};

/// Feature reconstruction: SFT fusion conditioned on texture features, a
/// residual block, a 3×3 conv with LeakyReLU, and squeeze-excitation channel
/// attention. Initialised so that the whole module starts close to identity.
template <typename Scalar>
class FeatureReconstructor {
 public:
  using T = Tensor<Scalar>;
  using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;

  FeatureReconstructor(Index channels, std::mt19937_64& rng, FrmOptions opt = {})
      : C_(channels), opt_(opt),
        cond1_(channels, channels, rng, "frm.sft.fc1"),
        cond_act_(static_cast<Scalar>(opt.leaky_slope)),
        cond2_(channels, 2 * channels, rng, "frm.sft.fc2"),
        res1_(channels, channels, 3, rng, "frm.res.conv1"),
        res_act_(static_cast<Scalar>(opt.leaky_slope)),
        res2_(channels, channels, 3, rng, "frm.res.conv2"),
        post_(channels, channels, 3, rng, "frm.post"),
        post_act_(static_cast<Scalar>(opt.leaky_slope)),
        att1_(channels, std::max<Index>(1, channels / opt.attention_reduction), rng, "frm.att.fc1"),
        att2_(std::max<Index>(1, channels / opt.attention_reduction), channels, rng, "frm.att.fc2") {
    cond2_.weight().value.setZero();
    cond2_.bias().value.topRows(C_).setOnes();
    cond2_.bias().value.bottomRows(C_).setZero();
    res2_.set_zero();
    post_.set_identity();
    att2_.weight().value.setZero();
    att2_.bias().value.setConstant(static_cast<Scalar>(opt.attention_init_bias));
  }

  Index channels() const { return C_; }
  const FrmOptions& options() const { return opt_; }

  /// Per-channel (γ, β) from the conditioning tensor.
  std::pair<Vector, Vector> sft_params(const T& f_lq) const {
    const T gb = cond2_.apply(cond_act_.apply(cond1_.apply(cond_pool_.apply(f_lq))));
    return {gb.data().col(0).head(C_), gb.data().col(0).tail(C_)};
  }

  static T affine(const T& x, const Vector& gamma, const Vector& beta) {
    T y = x;
    y.data() = (x.data().array().colwise() * gamma.array()).matrix().colwise() + beta;
    return y;
  }

  T sft_fuse(const T& f_hq_hat, const T& f_lq) const {
    require_same_shape(f_hq_hat, f_lq, "sft_fuse");
    check(f_hq_hat);
    const auto [gamma, beta] = sft_params(f_lq);
    return affine(opt_.sft_modulate_lq ? f_lq : f_hq_hat, gamma, beta);
  }

  T attention_gate(const T& x) const {
    return gate_.apply(att2_.apply(att_act_.apply(att1_.apply(att_pool_.apply(x)))));
  }

  T enhance(const T& f_fusion) const {
    check(f_fusion);
    T r = res2_.apply(res_act_.apply(res1_.apply(f_fusion)));
    r.data() += f_fusion.data();
    const T p = post_act_.apply(post_.apply(r));
    const T g = attention_gate(p);
    return scale_channels(p, g);
  }

  T reconstruct(const T& f_m, const T& f_lq, const ChannelMask& m) const {
    return enhance(sft_fuse(fill_missing(f_m, f_lq, m), f_lq));
  }

  /// Training forward of enhance(sft_fuse(f_hq_hat, f_lq)); caches for backward.
  T forward(const T& f_hq_hat, const T& f_lq) {
    require_same_shape(f_hq_hat, f_lq, "frm forward");
    check(f_hq_hat);
    x_hq_ = f_hq_hat;
    x_lq_ = f_lq;
    const T gb = cond2_.forward(cond_act_.forward(cond1_.forward(cond_pool_.forward(f_lq))));
    gamma_ = gb.data().col(0).head(C_);
    const Vector beta = gb.data().col(0).tail(C_);
    const T fused = affine(opt_.sft_modulate_lq ? f_lq : f_hq_hat, gamma_, beta);
    T r = res2_.forward(res_act_.forward(res1_.forward(fused)));
    r.data() += fused.data();
    p_ = post_act_.forward(post_.forward(r));
    g_ = gate_.forward(att2_.forward(att_act_.forward(att1_.forward(att_pool_.forward(p_)))));
    return scale_channels(p_, g_);
  }

  /// Returns gradients w.r.t. (f_hq_hat, f_lq) and accumulates parameter gradients.
  std::pair<T, T> backward(const T& grad) {
    // out = p ⊙ gate(p)
    T dgate(C_, 1, 1);
    dgate.data().col(0) = grad.data().cwiseProduct(p_.data()).rowwise().sum();
    T dp = scale_channels(grad, g_);
    const T dp_att = att_pool_.backward(att1_.backward(att_act_.backward(att2_.backward(gate_.backward(dgate)))));
    dp.data() += dp_att.data();
    const T dr = post_.backward(post_act_.backward(dp));
    T dfused = res1_.backward(res_act_.backward(res2_.backward(dr)));
    dfused.data() += dr.data();

    const T& modulated = opt_.sft_modulate_lq ? x_lq_ : x_hq_;
    T dgb(2 * C_, 1, 1);
    dgb.data().col(0).head(C_) = dfused.data().cwiseProduct(modulated.data()).rowwise().sum();
    dgb.data().col(0).tail(C_) = dfused.data().rowwise().sum();
    T dx = dfused;
    dx.data() = dfused.data().array().colwise() * gamma_.array();

    T dlq = cond_pool_.backward(cond1_.backward(cond_act_.backward(cond2_.backward(dgb))));
    if (opt_.sft_modulate_lq) {
      dlq.data() += dx.data();
      return {T(C_, x_hq_.height(), x_hq_.width()), std::move(dlq)};
    }
    return {std::move(dx), std::move(dlq)};
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> out;
    for (nn::Layer<Scalar>* l : std::initializer_list<nn::Layer<Scalar>*>{&cond1_, &cond2_, &res1_, &res2_, &post_, &att1_, &att2_})
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  nn::Linear<Scalar>& sft_output() { return cond2_; }
  nn::Conv2d<Scalar>& res_conv1() { return res1_; }
  nn::Conv2d<Scalar>& res_conv2() { return res2_; }
  nn::Conv2d<Scalar>& post_conv() { return post_; }
  nn::Linear<Scalar>& attention_output() { return att2_; }

 private:
  static T scale_channels(const T& x, const T& gate) {
    T y = x;
    y.data() = x.data().array().colwise() * gate.data().col(0).array();
    return y;
  }
  void check(const T& x) const {
    if (x.channels() != C_) throw DimensionError("FRM built for " + std::to_string(C_) + " channels, got " + x.shape_string());
  }

  Index C_;
  FrmOptions opt_;
  nn::GlobalAvgPool<Scalar> cond_pool_;
  nn::Linear<Scalar> cond1_;
  nn::LeakyReLU<Scalar> cond_act_;
  nn::Linear<Scalar> cond2_;
  nn::Conv2d<Scalar> res1_;
  nn::LeakyReLU<Scalar> res_act_;
  nn::Conv2d<Scalar> res2_;
  nn::Conv2d<Scalar> post_;
  nn::LeakyReLU<Scalar> post_act_;
  nn::GlobalAvgPool<Scalar> att_pool_;
  nn::Linear<Scalar> att1_;
  nn::ReLU<Scalar> att_act_;
  nn::Linear<Scalar> att2_;
  nn::Sigmoid<Scalar> gate_;

  T x_hq_, x_lq_, p_, g_;
  Vector gamma_;
};

}  // namespace tgfc
