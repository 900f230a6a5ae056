#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "tgfc/nn/layers.hpp"
#include "tgfc/resample.hpp"
#include "tgfc/tensor.hpp"

namespace tgfc {

struct IrnnConfig {
  Index depth = 4;           // number of down-sampling units
  Index base_width = 64;     // width of the first double-conv unit; doubles per level
  Index upscale = 2;         // output / texture size ratio (sub-pixel shuffle factor)
  Index inject_level = 0;    // encoder level whose spatial size matches the features
  Index feature_channels = 0;
  Index adapter_width = 0;   // 1×1 channel adapter output width; 0 = width of inject level
  bool use_skips = true;
  double leaky_slope = 0.01;

  Index width(Index level) const { return base_width << level; }
  Index adapter() const { return adapter_width > 0 ? adapter_width : width(inject_level); }

  /// Picks the inject level from the texture/feature size ratio, which must be a power of two.
  static Index level_for(Index texture_size, Index feature_size);
  void validate() const;
};

inline Index IrnnConfig::level_for(Index texture_size, Index feature_size) {
  if (feature_size < 1 || texture_size % feature_size) {
    throw ConfigError("texture size " + std::to_string(texture_size) + " is not a multiple of feature size " +
                      std::to_string(feature_size));
  }
  const Index ratio = texture_size / feature_size;
  if (ratio & (ratio - 1)) throw ConfigError("texture/feature size ratio " + std::to_string(ratio) + " is not a power of 2");
  Index level = 0;
  while ((Index{1} << level) < ratio) ++level;
  return level;
}

inline void IrnnConfig::validate() const {
  if (depth < 1) throw ConfigError("IRNN depth must be >= 1");
  if (base_width < 1) throw ConfigError("IRNN base width must be >= 1");
  if (upscale < 1) throw ConfigError("IRNN upscale must be >= 1");
  if (inject_level < 0 || inject_level > depth) throw ConfigError("IRNN inject level outside [0, depth]");
  if (feature_channels < 1) throw ConfigError("IRNN needs feature_channels >= 1");
}

/// Image reconstruction network. Encoder: double-conv units (DCU) and
/// down-sampling units (max-pool + DCU); the feature tensor passes through a 1×1
/// adapter and is concatenated with the input of the DCU at `inject_level`.
/// Decoder: up-sampling units (bilinear ×2 + DCU) whose outputs are added to the
/// encoder output of the same level, then a 3×3 conv + pixel shuffle (USB) and
/// a final 3×3 conv producing a residual added to the bilinearly upsampled texture.
template <typename Scalar>
class ImageReconstructor {
 public:
  using T = Tensor<Scalar>;

  ImageReconstructor(IrnnConfig cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    pools_.resize(static_cast<size_t>(cfg_.depth));
    ups_.assign(static_cast<size_t>(cfg_.depth), nn::BilinearUp<Scalar>(2));
    adapter_ = std::make_unique<nn::Conv2d<Scalar>>(cfg_.feature_channels, cfg_.adapter(), 1, rng, "irnn.adapter");
    for (Index k = 0; k <= cfg_.depth; ++k) {
      Index in = k == 0 ? 3 : cfg_.width(k - 1);
      if (k == cfg_.inject_level) in += cfg_.adapter();
      enc_.push_back(std::make_unique<Dcu>(in, cfg_.width(k), rng, "irnn.enc" + std::to_string(k), slope()));
    }
    for (Index k = 0; k < cfg_.depth; ++k) {
      dec_.push_back(std::make_unique<Dcu>(cfg_.width(k + 1), cfg_.width(k), rng, "irnn.dec" + std::to_string(k), slope()));
    }
    const Index r = cfg_.upscale;
    usb_conv_ = std::make_unique<nn::Conv2d<Scalar>>(cfg_.width(0), cfg_.width(0) * r * r, 3, rng, "irnn.usb");
    shuffle_ = std::make_unique<nn::PixelShuffle<Scalar>>(r);
    final_ = std::make_unique<nn::Conv2d<Scalar>>(cfg_.width(0), 3, 3, rng, "irnn.final");
    // Small residual at start so the network begins near the bilinear upsampler.
    final_->weight().value *= Scalar(0.1);
  }

  const IrnnConfig& config() const { return cfg_; }
  nn::Conv2d<Scalar>& final_conv() { return *final_; }

  void check_inputs(const T& lr, const T& f) const {
    if (lr.channels() != 3) throw DimensionError("IRNN texture must have 3 channels");
    const Index div = Index{1} << cfg_.depth;
    if (lr.height() % div || lr.width() % div) {
      throw ConfigError("texture " + lr.shape_string() + " not divisible by 2^depth");
    }
    const Index fh = lr.height() >> cfg_.inject_level, fw = lr.width() >> cfg_.inject_level;
    if (f.channels() != cfg_.feature_channels || f.height() != fh || f.width() != fw) {
      throw DimensionError("IRNN expects features " + std::to_string(cfg_.feature_channels) + "x" + std::to_string(fh) +
                           "x" + std::to_string(fw) + ", got " + f.shape_string());
    }
  }

  /// Reconstruction before the output clamp.
  T apply_unclamped(const T& lr, const T& f) const {
    check_inputs(lr, f);
    std::vector<T> skips;
    T x = lr;
    for (Index k = 0; k <= cfg_.depth; ++k) {
      if (k > 0) x = pool_.apply(x);
      if (k == cfg_.inject_level) x = concat(x, adapter_->apply(f));
      x = enc_[k]->apply(x);
      skips.push_back(x);
    }
    for (Index k = cfg_.depth - 1; k >= 0; --k) {
      x = dec_[k]->apply(up_.apply(x));
      if (cfg_.use_skips) x.data() += skips[k].data();
    }
    T residual = final_->apply(shuffle_->apply(usb_conv_->apply(x)));
    T out = bilinear_upsample(lr, cfg_.upscale);
    out.data() += residual.data();
    return out;
  }

  T apply(const T& lr, const T& f) const { return clamp01(apply_unclamped(lr, f)); }

  /// Training forward (unclamped), caching activations for backward.
  T forward(const T& lr, const T& f) {
    check_inputs(lr, f);
    T x = lr;
    for (Index k = 0; k <= cfg_.depth; ++k) {
      if (k > 0) x = pools_[k - 1].forward(x);
      if (k == cfg_.inject_level) x = concat(x, adapter_->forward(f));
      x = enc_[k]->forward(x);
    }
    for (Index k = cfg_.depth - 1; k >= 0; --k) {
      x = dec_[k]->forward(ups_[k].forward(x));
      if (cfg_.use_skips) x.data() += enc_[k]->output().data();
    }
    T residual = final_->forward(shuffle_->forward(usb_conv_->forward(x)));
    T out = bilinear_upsample(lr, cfg_.upscale);
    out.data() += residual.data();
    return out;
  }

  /// Backward of the last forward; accumulates parameter gradients and returns
  /// the gradient w.r.t. the feature input.
  T backward(const T& grad) {
    T g = usb_conv_->backward(shuffle_->backward(final_->backward(grad)));
    std::vector<T> skip_grads(static_cast<size_t>(cfg_.depth + 1));
    for (Index k = 0; k < cfg_.depth; ++k) {
      if (cfg_.use_skips) skip_grads[k] = g;
      g = ups_[k].backward(dec_[k]->backward(g));
    }
    T dfeat;
    for (Index k = cfg_.depth; k >= 0; --k) {
      if (k < cfg_.depth && cfg_.use_skips) g.data() += skip_grads[k].data();
      g = enc_[k]->backward(g);
      if (k == cfg_.inject_level) {
        const Index base = g.channels() - cfg_.adapter();
        T ga(g.height(), g.width(), g.data().bottomRows(cfg_.adapter()));
        dfeat = adapter_->backward(ga);
        g = T(g.height(), g.width(), g.data().topRows(base));
      }
      if (k > 0) g = pools_[k - 1].backward(g);
    }
    return dfeat;
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> out = adapter_->params();
    for (auto& d : enc_)
      for (auto* p : d->params()) out.push_back(p);
    for (auto& d : dec_)
      for (auto* p : d->params()) out.push_back(p);
    for (auto* p : usb_conv_->params()) out.push_back(p);
    for (auto* p : final_->params()) out.push_back(p);
    return out;
  }

 private:
  Scalar slope() const { return static_cast<Scalar>(cfg_.leaky_slope); }

  static T concat(const T& a, const T& b) {
    require_spatial(a, b);
    typename T::Matrix m(a.channels() + b.channels(), a.plane_size());
    m << a.data(), b.data();
    return T(a.height(), a.width(), std::move(m));
  }
  static void require_spatial(const T& a, const T& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
      throw DimensionError("concat spatial mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
  }

  /// conv3×3 → LeakyReLU → conv3×3 → LeakyReLU
  class Dcu {
   public:
    Dcu(Index in, Index out, std::mt19937_64& rng, const std::string& name, Scalar slope)
        : c1_(in, out, 3, rng, name + ".conv1"), a1_(slope), c2_(out, out, 3, rng, name + ".conv2"), a2_(slope) {}
    T apply(const T& x) const { return a2_.apply(c2_.apply(a1_.apply(c1_.apply(x)))); }
    T forward(const T& x) {
      out_ = a2_.forward(c2_.forward(a1_.forward(c1_.forward(x))));
      return out_;
    }
    T backward(const T& g) { return c1_.backward(a1_.backward(c2_.backward(a2_.backward(g)))); }
    const T& output() const { return out_; }
    nn::ParamList<Scalar> params() { return {&c1_.weight(), &c1_.bias(), &c2_.weight(), &c2_.bias()}; }

   private:
    nn::Conv2d<Scalar> c1_;
    nn::LeakyReLU<Scalar> a1_;
    nn::Conv2d<Scalar> c2_;
    nn::LeakyReLU<Scalar> a2_;
    T out_;
  };

  IrnnConfig cfg_;
  std::unique_ptr<nn::Conv2d<Scalar>> adapter_;
  std::vector<std::unique_ptr<Dcu>> enc_, dec_;
  std::unique_ptr<nn::Conv2d<Scalar>> usb_conv_, final_;
  std::unique_ptr<nn::PixelShuffle<Scalar>> shuffle_;
  nn::MaxPool2<Scalar> pool_;
  nn::BilinearUp<Scalar> up_{2};
  std::vector<nn::MaxPool2<Scalar>> pools_;
  std::vector<nn::BilinearUp<Scalar>> ups_;
};

/// Mean squared error over all pixels and colour channels.
template <typename Scalar>
Scalar irnn_loss(const Tensor<Scalar>& target, const Tensor<Scalar>& recon) {
  require_same_shape(target, recon, "irnn_loss");
  return (target.data() - recon.data()).squaredNorm() / static_cast<Scalar>(target.size());
}

/// d irnn_loss / d recon = 2 (recon - target) / N.
template <typename Scalar>
Tensor<Scalar> irnn_loss_grad(const Tensor<Scalar>& target, const Tensor<Scalar>& recon) {
  require_same_shape(target, recon, "irnn_loss_grad");
  Tensor<Scalar> g = recon;
  g.data() = (recon.data() - target.data()) * (Scalar(2) / static_cast<Scalar>(target.size()));
  return g;
}

inline double psnr_from_mse8(double mse8) {
  if (mse8 <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse8);
}

/// PSNR in dB on the 8-bit scale (peak 255). Identical images give +inf.
template <typename Scalar>
double psnr(const Tensor<Scalar>& target, const Tensor<Scalar>& recon) {
  return psnr_from_mse8(static_cast<double>(irnn_loss(target, recon)) * 255.0 * 255.0);
}

}  // namespace tgfc
