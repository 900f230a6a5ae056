#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

#include "tgfc/nn/layers.hpp"
#include "tgfc/tensor.hpp"

namespace tgfc {

struct GumbelConfig {
  double temperature = 1.0;
  bool hard_forward = true;
  /// false: plain argmax of the logits, no sampling (inference mode).
  bool add_noise = true;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("Gumbel temperature must be > 0");
  }
};

/// Uniform draw in the open interval (0,1) from the top 53 bits of a 64-bit engine output.
inline double open_unit(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double gumbel_noise(std::mt19937_64& rng) { return -std::log(-std::log(open_unit(rng))); }

/// Probability of "select" from a two-way softmax at temperature tau.
template <typename Scalar>
Scalar soft_select(Scalar select, Scalar reject, double tau) {
  const Scalar z = (select - reject) / static_cast<Scalar>(tau);
  return z >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-z)) : std::exp(z) / (Scalar(1) + std::exp(z));
}

template <typename Scalar>
struct GumbelSample {
  ChannelMask mask;                           // hard one-hot decision per channel
  Eigen::Vector<Scalar, Eigen::Dynamic> soft;  // relaxed selection probability
  Eigen::Vector<Scalar, Eigen::Dynamic> noise_select, noise_reject;

  /// Per-channel multiplier used in the forward pass: hard bits or soft probabilities.
  Eigen::Vector<Scalar, Eigen::Dynamic> forward_value(bool hard) const {
    if (!hard) return soft;
    Eigen::Vector<Scalar, Eigen::Dynamic> v(mask.length());
    for (Index i = 0; i < mask.length(); ++i) v[i] = mask[i] ? Scalar(1) : Scalar(0);
    return v;
  }
};

/// Two-class Gumbel-Softmax per channel. Noise is drawn for both rows from `rng`.
template <typename Scalar>
GumbelSample<Scalar> gumbel_sample(const ImportanceLogits<Scalar>& l, const GumbelConfig& g, std::mt19937_64& rng) {
  g.validate();
  const Index C = l.length();
  if (l.reject.size() != C) throw DimensionError("select/reject logit lengths differ");
  GumbelSample<Scalar> s{ChannelMask(C), {}, {}, {}};
  s.soft.resize(C);
  s.noise_select.setZero(C);
  s.noise_reject.setZero(C);
  for (Index i = 0; i < C; ++i) {
    if (g.add_noise) {
      s.noise_select[i] = static_cast<Scalar>(gumbel_noise(rng));
      s.noise_reject[i] = static_cast<Scalar>(gumbel_noise(rng));
    }
    const Scalar a = l.select[i] + s.noise_select[i];
    const Scalar b = l.reject[i] + s.noise_reject[i];
    s.soft[i] = soft_select(a, b, g.temperature);
    s.mask.set(i, a > b);
  }
  return s;
}

template <typename Scalar>
GumbelSample<Scalar> gumbel_sample(const ImportanceLogits<Scalar>& l, const GumbelConfig& g) {
  std::mt19937_64 rng(g.rng_seed);
  return gumbel_sample(l, g, rng);
}

/// Gradient of a loss w.r.t. the logits given its gradient w.r.t. the soft
/// probabilities. The hard forward value passes this gradient straight through.
template <typename Scalar>
ImportanceLogits<Scalar> soft_select_backward(const GumbelSample<Scalar>& s,
                                              const Eigen::Vector<Scalar, Eigen::Dynamic>& dsoft, double tau) {
  if (dsoft.size() != s.soft.size()) throw DimensionError("gradient length differs from sample");
  const Eigen::Vector<Scalar, Eigen::Dynamic> dz =
      dsoft.cwiseProduct(s.soft.cwiseProduct((Scalar(1) - s.soft.array()).matrix())) / static_cast<Scalar>(tau);
  return {dz, -dz};
}

/// Deterministic inference mask: keep where select > reject.
template <typename Scalar>
ChannelMask argmax_mask(const ImportanceLogits<Scalar>& l) {
  ChannelMask m(l.length());
  for (Index i = 0; i < l.length(); ++i) m.set(i, l.select[i] > l.reject[i]);
  return m;
}

/// Keeps the k channels with the largest select-minus-reject margin (ties: lower index first).
template <typename Scalar>
ChannelMask top_k_mask(const ImportanceLogits<Scalar>& l, Index k) {
  const Index C = l.length();
  k = std::clamp<Index>(k, 0, C);
  std::vector<Index> order(C);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return l.select[a] - l.reject[a] > l.select[b] - l.reject[b];
  });
  ChannelMask m(C);
  for (Index i = 0; i < k; ++i) m.set(order[i], true);
  return m;
}

/// Channel importance network: global average pool, 1×1 conv, batch norm,
/// ReLU, 1×1 conv to 2C logits (first C = select, last C = reject).
/// Because the input is pooled to C×1×1, the 1×1 convolutions act as dense
/// layers and batches are handled as C×B matrices.
template <typename Scalar>
class ChannelSelector {
 public:
  using Matrix = nn::MatrixX<Scalar>;
  using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;

  ChannelSelector(Index channels, Index hidden, std::mt19937_64& rng)
      : C_(channels), mid_(hidden),
        w1_("csm.conv1.weight", nn::kaiming_uniform<Scalar>(hidden, channels, channels, rng)),
        b1_("csm.conv1.bias", Matrix::Zero(hidden, 1)),
        gamma_("csm.bn.weight", Matrix::Ones(hidden, 1)),
        beta_("csm.bn.bias", Matrix::Zero(hidden, 1)),
        w2_("csm.conv2.weight", nn::kaiming_uniform<Scalar>(2 * channels, hidden, hidden, rng)),
        b2_("csm.conv2.bias", Matrix::Zero(2 * channels, 1)),
        running_mean_("csm.bn.running_mean", Matrix::Zero(hidden, 1)),
        running_var_("csm.bn.running_var", Matrix::Ones(hidden, 1)) {
    // Start biased towards keeping channels.
    b2_.value.topRows(C_).setConstant(Scalar(1));
    b2_.value.bottomRows(C_).setConstant(Scalar(-1));
  }
  ChannelSelector(Index channels, std::mt19937_64& rng) : ChannelSelector(channels, channels, rng) {}

  Index channels() const { return C_; }
  Index hidden() const { return mid_; }

  static Vector pool(const Tensor<Scalar>& f) { return f.data().rowwise().mean(); }

  /// Eval-mode logits (batch norm uses running statistics).
  ImportanceLogits<Scalar> importance(const Tensor<Scalar>& f) const {
    if (f.channels() != C_) {
      throw DimensionError("channel selector built for " + std::to_string(C_) + " channels, got " + f.shape_string());
    }
    const Matrix out = eval_batch(pool(f));
    return {out.col(0).head(C_), out.col(0).tail(C_)};
  }

  Matrix eval_batch(const Matrix& pooled) const {
    Matrix h = (w1_.value * pooled).colwise() + b1_.value.col(0);
    const Vector inv_std = (running_var_.value.col(0).array() + Scalar(eps_)).rsqrt();
    h = ((h.colwise() - running_mean_.value.col(0)).array().colwise() * (inv_std.array() * gamma_.value.col(0).array()))
            .matrix()
            .colwise() +
        beta_.value.col(0);
    h = h.cwiseMax(Scalar(0));
    return (w2_.value * h).colwise() + b2_.value.col(0);
  }

  /// Training-mode forward over a C×B batch of pooled vectors; updates running statistics.
  Matrix forward_train(const Matrix& pooled) {
    const Index B = pooled.cols();
    x_ = pooled;
    const Matrix h = (w1_.value * pooled).colwise() + b1_.value.col(0);
    const Vector mu = h.rowwise().mean();
    const Matrix centered = h.colwise() - mu;
    const Vector var = centered.cwiseProduct(centered).rowwise().mean();
    inv_std_ = (var.array() + Scalar(eps_)).rsqrt();
    xhat_ = centered.array().colwise() * inv_std_.array();
    bn_out_ = (xhat_.array().colwise() * gamma_.value.col(0).array()).matrix().colwise() + beta_.value.col(0);
    relu_out_ = bn_out_.cwiseMax(Scalar(0));
    const Scalar unbias = B > 1 ? Scalar(B) / Scalar(B - 1) : Scalar(1);
    auto rm = running_mean_.value.col(0);
    auto rv = running_var_.value.col(0);
    rm = (Scalar(1) - momentum_) * rm + momentum_ * mu;
    rv = (Scalar(1) - momentum_) * rv + momentum_ * var * unbias;
    return (w2_.value * relu_out_).colwise() + b2_.value.col(0);
  }

  /// Backward for the last forward_train; returns gradient w.r.t. the pooled input.
  Matrix backward(const Matrix& dlogits) {
    const Scalar B = static_cast<Scalar>(x_.cols());
    w2_.grad.noalias() += dlogits * relu_out_.transpose();
    b2_.grad.col(0) += dlogits.rowwise().sum();
    Matrix drelu = w2_.value.transpose() * dlogits;
    drelu = (bn_out_.array() > Scalar(0)).select(drelu, Scalar(0));
    gamma_.grad.col(0) += drelu.cwiseProduct(xhat_).rowwise().sum();
    beta_.grad.col(0) += drelu.rowwise().sum();
    const Matrix dxhat = drelu.array().colwise() * gamma_.value.col(0).array();
    const Vector sum_dxhat = dxhat.rowwise().sum();
    const Vector sum_dxhat_xhat = dxhat.cwiseProduct(xhat_).rowwise().sum();
    Matrix dh = ((dxhat * B).colwise() - sum_dxhat - (xhat_.array().colwise() * sum_dxhat_xhat.array()).matrix());
    dh = (dh.array().colwise() * (inv_std_.array() / B)).matrix();
    w1_.grad.noalias() += dh * x_.transpose();
    b1_.grad.col(0) += dh.rowwise().sum();
    return w1_.value.transpose() * dh;
  }

  nn::ParamList<Scalar> params() { return {&w1_, &b1_, &gamma_, &beta_, &w2_, &b2_}; }
  /// Batch-norm running statistics; saved with checkpoints, never touched by the optimizer.
  nn::ParamList<Scalar> buffers() { return {&running_mean_, &running_var_}; }

  nn::Param<Scalar>& conv1_weight() { return w1_; }
  nn::Param<Scalar>& conv2_weight() { return w2_; }
  nn::Param<Scalar>& conv2_bias() { return b2_; }

 private:
  Index C_, mid_;
  nn::Param<Scalar> w1_, b1_, gamma_, beta_, w2_, b2_;
  nn::Param<Scalar> running_mean_, running_var_;
  Scalar eps_ = Scalar(1e-5);
  Scalar momentum_ = Scalar(0.1);

  Matrix x_, xhat_, bn_out_, relu_out_;
  Vector inv_std_;
};

/// Importance → Gumbel mask → masked tensor.
template <typename Scalar>
std::pair<ChannelMask, Tensor<Scalar>> select_channels(const ChannelSelector<Scalar>& p, const GumbelConfig& g,
                                                       const Tensor<Scalar>& f) {
  const auto logits = p.importance(f);
  ChannelMask m = g.add_noise ? gumbel_sample(logits, g).mask : (g.validate(), argmax_mask(logits));
  Tensor<Scalar> masked = apply_mask(f, m);
  return {std::move(m), std::move(masked)};
}

}  // namespace tgfc
