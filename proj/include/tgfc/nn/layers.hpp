#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tgfc/resample.hpp"
#include "tgfc/tensor.hpp"

namespace tgfc::nn {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct Param {
  std::string name;
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;

  Param() = default;
  Param(std::string n, MatrixX<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(MatrixX<Scalar>::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
using ParamList = std::vector<Param<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& ps) {
  for (auto* p : ps) p->zero_grad();
}

/// FNV-1a over the raw bytes of every parameter value.
template <typename Scalar>
std::uint64_t checksum(const ParamList<Scalar>& ps) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto* p : ps) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (size_t i = 0; i < static_cast<size_t>(p->value.size()) * sizeof(Scalar); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

/// He-style uniform init.
template <typename Scalar>
MatrixX<Scalar> kaiming_uniform(Index rows, Index cols, Index fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  MatrixX<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

/// A differentiable operation on one tensor. `apply` is pure and safe to call
/// concurrently; `forward` additionally remembers its input so a later
/// `backward` can compute input and parameter gradients.
template <typename Scalar>
class Layer {
 public:
  using T = Tensor<Scalar>;
  virtual ~Layer() = default;

  virtual T apply(const T& x) const = 0;
  virtual T backward(const T& grad_out) = 0;
  virtual ParamList<Scalar> params() { return {}; }
  virtual std::string kind() const = 0;

  T forward(const T& x) {
    input_ = x;
    return apply(x);
  }

 protected:
  T input_;
};

template <typename Scalar>
class Conv2d : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  using Cols = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Conv2d(Index in, Index out, Index kernel, std::mt19937_64& rng, const std::string& name = "conv")
      : in_(in), out_(out), k_(kernel),
        weight_(name + ".weight", kaiming_uniform<Scalar>(out, in * kernel * kernel, in * kernel * kernel, rng)),
        bias_(name + ".bias", MatrixX<Scalar>::Zero(out, 1)) {
    if (kernel % 2 == 0) throw ConfigError("conv kernel must be odd");
  }

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }
  Index kernel() const { return k_; }
  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }
  const Param<Scalar>& weight() const { return weight_; }
  const Param<Scalar>& bias() const { return bias_; }

  /// Sets the kernel to pass channel i straight through to output i.
  void set_identity() {
    if (in_ != out_) throw ConfigError("identity conv requires in == out");
    weight_.value.setZero();
    bias_.value.setZero();
    const Index c = k_ / 2;
    for (Index i = 0; i < out_; ++i) weight_.value(i, (i * k_ + c) * k_ + c) = 1;
  }
  void set_zero() {
    weight_.value.setZero();
    bias_.value.setZero();
  }

  T apply(const T& x) const override {
    if (x.channels() != in_) {
      throw DimensionError("conv expects " + std::to_string(in_) + " channels, got " + x.shape_string());
    }
    const Cols cols = im2col(x);
    T y(x.height(), x.width(), typename T::Matrix(weight_.value * cols));
    y.data().colwise() += bias_.value.col(0);
    return y;
  }

  T backward(const T& g) override {
    const T& x = this->input_;
    const Cols cols = im2col(x);
    weight_.grad.noalias() += g.data() * cols.transpose();
    bias_.grad.col(0) += g.data().rowwise().sum();
    const Cols dcols = weight_.value.transpose() * g.data();
    return col2im(dcols, x.height(), x.width());
  }

  ParamList<Scalar> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv" + std::to_string(k_); }

 private:
  Cols im2col(const T& x) const {
    const Index H = x.height(), W = x.width(), p = k_ / 2;
    Cols cols = Cols::Zero(in_ * k_ * k_, H * W);
    for (Index ci = 0; ci < in_; ++ci) {
      const Scalar* src = x.data().row(ci).data();
      for (Index ky = 0; ky < k_; ++ky)
        for (Index kx = 0; kx < k_; ++kx) {
          Scalar* dst = cols.row((ci * k_ + ky) * k_ + kx).data();
          const Index dy = ky - p, dx = kx - p;
          const Index y0 = std::max<Index>(0, -dy), y1 = std::min(H, H - dy);
          const Index x0 = std::max<Index>(0, -dx), x1 = std::min(W, W - dx);
          for (Index y = y0; y < y1; ++y)
            for (Index xx = x0; xx < x1; ++xx) dst[y * W + xx] = src[(y + dy) * W + xx + dx];
        }
    }
    return cols;
  }

  T col2im(const Cols& dcols, Index H, Index W) const {
    const Index p = k_ / 2;
    T dx(in_, H, W);
    for (Index ci = 0; ci < in_; ++ci) {
      Scalar* dst = dx.data().row(ci).data();
      for (Index ky = 0; ky < k_; ++ky)
        for (Index kx = 0; kx < k_; ++kx) {
          const Scalar* src = dcols.row((ci * k_ + ky) * k_ + kx).data();
          const Index dy = ky - p, dxo = kx - p;
          const Index y0 = std::max<Index>(0, -dy), y1 = std::min(H, H - dy);
          const Index x0 = std::max<Index>(0, -dxo), x1 = std::min(W, W - dxo);
          for (Index y = y0; y < y1; ++y)
            for (Index xx = x0; xx < x1; ++xx) dst[(y + dy) * W + xx + dxo] += src[y * W + xx];
        }
    }
    return dx;
  }

  Index in_, out_, k_;
  Param<Scalar> weight_, bias_;
};

/// Fully connected layer over the flattened (channel-major) input; output is N×1×1.
template <typename Scalar>
class Linear : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;

  Linear(Index in, Index out, std::mt19937_64& rng, const std::string& name = "fc")
      : in_(in), out_(out),
        weight_(name + ".weight", kaiming_uniform<Scalar>(out, in, in, rng)),
        bias_(name + ".bias", MatrixX<Scalar>::Zero(out, 1)) {}

  Index in_features() const { return in_; }
  Index out_features() const { return out_; }
  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }

  T apply(const T& x) const override {
    if (x.size() != in_) throw DimensionError("linear expects " + std::to_string(in_) + " inputs, got " + x.shape_string());
    Eigen::Map<const Eigen::Vector<Scalar, Eigen::Dynamic>> v(x.data().data(), in_);
    T y(out_, 1, 1);
    y.data().col(0) = weight_.value * v + bias_.value.col(0);
    return y;
  }

  T backward(const T& g) override {
    const T& x = this->input_;
    Eigen::Map<const Eigen::Vector<Scalar, Eigen::Dynamic>> v(x.data().data(), in_);
    weight_.grad.noalias() += g.data().col(0) * v.transpose();
    bias_.grad.col(0) += g.data().col(0);
    T dx(x.channels(), x.height(), x.width());
    Eigen::Map<Eigen::Vector<Scalar, Eigen::Dynamic>>(dx.data().data(), in_) =
        weight_.value.transpose() * g.data().col(0);
    return dx;
  }

  ParamList<Scalar> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "linear"; }

 private:
  Index in_, out_;
  Param<Scalar> weight_, bias_;
};

template <typename Scalar>
class ReLU : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  T apply(const T& x) const override {
    T y = x;
    y.data() = y.data().cwiseMax(Scalar(0));
    return y;
  }
  T backward(const T& g) override {
    T d = g;
    d.data() = (this->input_.data().array() > Scalar(0)).select(g.data(), Scalar(0));
    return d;
  }
  std::string kind() const override { return "relu"; }
};

template <typename Scalar>
class LeakyReLU : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  explicit LeakyReLU(Scalar slope = Scalar(0.01)) : slope_(slope) {}
  T apply(const T& x) const override {
    T y = x;
    y.data() = (x.data().array() > Scalar(0)).select(x.data(), x.data() * slope_);
    return y;
  }
  T backward(const T& g) override {
    T d = g;
    d.data() = (this->input_.data().array() > Scalar(0)).select(g.data(), g.data() * slope_);
    return d;
  }
  std::string kind() const override { return "leaky_relu"; }

 private:
  Scalar slope_;
};

/// 2×2 max pooling with stride 2 (odd trailing row/column dropped).
template <typename Scalar>
class MaxPool2 : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  T apply(const T& x) const override {
    const Index h = x.height() / 2, w = x.width() / 2;
    if (h < 1 || w < 1) throw DimensionError("max pool input too small: " + x.shape_string());
    T y(x.channels(), h, w);
    for (Index c = 0; c < x.channels(); ++c)
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) y(c, i, j) = x.plane(c).block(2 * i, 2 * j, 2, 2).maxCoeff();
    return y;
  }
  T backward(const T& g) override {
    const T& x = this->input_;
    T d(x.channels(), x.height(), x.width());
    for (Index c = 0; c < x.channels(); ++c)
      for (Index i = 0; i < g.height(); ++i)
        for (Index j = 0; j < g.width(); ++j) {
          Index r, s;
          x.plane(c).block(2 * i, 2 * j, 2, 2).maxCoeff(&r, &s);
          d(c, 2 * i + r, 2 * j + s) += g(c, i, j);
        }
    return d;
  }
  std::string kind() const override { return "maxpool2"; }
};

template <typename Scalar>
class GlobalAvgPool : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  T apply(const T& x) const override {
    T y(x.channels(), 1, 1);
    y.data().col(0) = x.data().rowwise().mean();
    return y;
  }
  T backward(const T& g) override {
    const T& x = this->input_;
    T d(x.channels(), x.height(), x.width());
    const Scalar inv = Scalar(1) / static_cast<Scalar>(x.plane_size());
    for (Index c = 0; c < x.channels(); ++c) d.data().row(c).setConstant(g.data()(c, 0) * inv);
    return d;
  }
  std::string kind() const override { return "global_avg_pool"; }
};

template <typename Scalar>
class Sigmoid : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  T apply(const T& x) const override {
    T y = x;
    y.data() = (Scalar(1) + (-x.data().array()).exp()).inverse().matrix();
    return y;
  }
  T backward(const T& g) override {
    const T y = apply(this->input_);
    T d = g;
    d.data() = (g.data().array() * y.data().array() * (Scalar(1) - y.data().array())).matrix();
    return d;
  }
  std::string kind() const override { return "sigmoid"; }
};

/// Per-channel (x - mean) / std. Not trainable.
template <typename Scalar>
class Normalize : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  Normalize(std::vector<double> mean, std::vector<double> stddev) : mean_(std::move(mean)), std_(std::move(stddev)) {
    if (mean_.size() != std_.size()) throw ConfigError("normalization mean/std length mismatch");
    for (double s : std_)
      if (!(s > 0)) throw ConfigError("normalization std must be positive");
  }
  T apply(const T& x) const override {
    if (static_cast<size_t>(x.channels()) != mean_.size()) throw DimensionError("normalize channel mismatch");
    T y = x;
    for (Index c = 0; c < x.channels(); ++c)
      y.data().row(c) = (x.data().row(c).array() - static_cast<Scalar>(mean_[c])) / static_cast<Scalar>(std_[c]);
    return y;
  }
  T backward(const T& g) override {
    T d = g;
    for (Index c = 0; c < g.channels(); ++c) d.data().row(c) /= static_cast<Scalar>(std_[c]);
    return d;
  }
  std::string kind() const override { return "normalize"; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }

 private:
  std::vector<double> mean_, std_;
};

template <typename Scalar>
class BilinearUp : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  explicit BilinearUp(Index scale) : scale_(scale) {}
  T apply(const T& x) const override { return bilinear_upsample(x, scale_); }
  T backward(const T& g) override { return bilinear_upsample_adjoint(g, scale_); }
  std::string kind() const override { return "bilinear_up"; }

 private:
  Index scale_;
};

/// Rearranges C·r²×H×W into C×rH×rW; output (c, y·r+i, x·r+j) = input (c·r² + i·r + j, y, x).
template <typename Scalar>
class PixelShuffle : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  explicit PixelShuffle(Index factor) : r_(factor) {}
  T apply(const T& x) const override {
    const Index r2 = r_ * r_;
    if (x.channels() % r2) throw DimensionError("pixel shuffle needs channels divisible by r^2");
    const Index C = x.channels() / r2;
    T y(C, x.height() * r_, x.width() * r_);
    for (Index c = 0; c < C; ++c)
      for (Index i = 0; i < r_; ++i)
        for (Index j = 0; j < r_; ++j)
          for (Index yy = 0; yy < x.height(); ++yy)
            for (Index xx = 0; xx < x.width(); ++xx) y(c, yy * r_ + i, xx * r_ + j) = x(c * r2 + i * r_ + j, yy, xx);
    return y;
  }
  T backward(const T& g) override {
    const Index r2 = r_ * r_;
    const Index C = g.channels();
    T d(C * r2, g.height() / r_, g.width() / r_);
    for (Index c = 0; c < C; ++c)
      for (Index i = 0; i < r_; ++i)
        for (Index j = 0; j < r_; ++j)
          for (Index yy = 0; yy < d.height(); ++yy)
            for (Index xx = 0; xx < d.width(); ++xx) d(c * r2 + i * r_ + j, yy, xx) = g(c, yy * r_ + i, xx * r_ + j);
    return d;
  }
  std::string kind() const override { return "pixel_shuffle"; }

 private:
  Index r_;
};

/// Ordered chain of named layers sharing ownership with any split views.
template <typename Scalar>
class Sequential {
 public:
  using T = Tensor<Scalar>;
  using LayerPtr = std::shared_ptr<Layer<Scalar>>;

  void add(std::string name, LayerPtr layer) {
    names_.push_back(std::move(name));
    layers_.push_back(std::move(layer));
  }
  Index size() const { return static_cast<Index>(layers_.size()); }
  bool empty() const { return layers_.empty(); }
  const std::string& name(Index i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Layer<Scalar>& layer(Index i) { return *layers_[i]; }
  const Layer<Scalar>& layer(Index i) const { return *layers_[i]; }
  LayerPtr layer_ptr(Index i) const { return layers_[i]; }

  T apply(T x) const {
    for (const auto& l : layers_) x = l->apply(x);
    return x;
  }
  T forward(T x) {
    for (auto& l : layers_) x = l->forward(x);
    return x;
  }
  T backward(T g) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }
  ParamList<Scalar> params() {
    ParamList<Scalar> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<LayerPtr> layers_;
};

}  // namespace tgfc::nn
