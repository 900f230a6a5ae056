#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tgfc/errors.hpp"

namespace tgfc {

using Index = Eigen::Index;

/// A C×H×W block of real values. Storage is one row per channel, each row a
/// row-major H×W plane, so a channel is a contiguous span.
template <typename Scalar>
class Tensor {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Plane = Eigen::Map<Matrix>;
  using ConstPlane = Eigen::Map<const Matrix>;

  Tensor() = default;
  Tensor(Index channels, Index height, Index width)
      : height_(height), width_(width), data_(Matrix::Zero(checked(channels, height, width), height * width)) {}
  Tensor(Index height, Index width, Matrix data) : height_(height), width_(width), data_(std::move(data)) {
    if (data_.cols() != height * width) throw DimensionError("tensor data does not match H*W");
  }

  static Tensor Zero(Index c, Index h, Index w) { return Tensor(c, h, w); }
  static Tensor Constant(Index c, Index h, Index w, Scalar v) {
    Tensor t(c, h, w);
    t.data_.setConstant(v);
    return t;
  }

  Index channels() const { return data_.rows(); }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index plane_size() const { return height_ * width_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Matrix& data() { return data_; }
  const Matrix& data() const { return data_; }

  Scalar& operator()(Index c, Index y, Index x) { return data_(c, y * width_ + x); }
  Scalar operator()(Index c, Index y, Index x) const { return data_(c, y * width_ + x); }

  Plane plane(Index c) { return Plane(data_.row(c).data(), height_, width_); }
  ConstPlane plane(Index c) const { return ConstPlane(data_.row(c).data(), height_, width_); }

  bool same_shape(const Tensor& o) const {
    return channels() == o.channels() && height_ == o.height_ && width_ == o.width_;
  }
  bool all_finite() const { return data_.allFinite(); }

  std::string shape_string() const {
    return std::to_string(channels()) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(height_, width_, data_.template cast<Other>());
  }

  bool operator==(const Tensor& o) const { return same_shape(o) && data_ == o.data_; }

 private:
  static Index checked(Index c, Index h, Index w) {
    if (c < 1 || h < 1 || w < 1) {
      throw DimensionError("tensor dimensions must be positive, got " + std::to_string(c) + "x" + std::to_string(h) +
                           "x" + std::to_string(w));
    }
    return c;
  }

  Index height_ = 0;
  Index width_ = 0;
  Matrix data_;
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
  }
}

using Real = double;
using FeatureTensor = Tensor<Real>;
/// 3×H×W RGB image, values nominally in [0,1].
using SourceImage = Tensor<Real>;

/// Binary keep/drop vector over feature channels; 1 = channel kept.
class ChannelMask {
 public:
  ChannelMask() = default;
  explicit ChannelMask(Index length, bool value = false) : bits_(static_cast<size_t>(length), value ? 1 : 0) {}
  explicit ChannelMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_) {
      if (b > 1) throw DataError("mask entries must be 0 or 1");
    }
  }
  /// Parses "1010"-style strings, channel 0 first.
  static ChannelMask from_string(const std::string& s) {
    std::vector<std::uint8_t> bits;
    for (char ch : s) {
      if (ch != '0' && ch != '1') throw DataError("mask string must contain only 0/1");
      bits.push_back(ch == '1');
    }
    return ChannelMask(std::move(bits));
  }

  Index length() const { return static_cast<Index>(bits_.size()); }
  bool operator[](Index i) const { return bits_[static_cast<size_t>(i)] != 0; }
  void set(Index i, bool v) { bits_[static_cast<size_t>(i)] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  Index count() const {
    Index n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  std::vector<Index> kept_indices() const {
    std::vector<Index> out;
    for (Index i = 0; i < length(); ++i)
      if ((*this)[i]) out.push_back(i);
    return out;
  }
  std::string to_string() const {
    std::string s;
    for (auto b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }
  bool operator==(const ChannelMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

template <typename Scalar>
struct ImportanceLogits {
  Eigen::Vector<Scalar, Eigen::Dynamic> select;
  Eigen::Vector<Scalar, Eigen::Dynamic> reject;

  Index length() const { return select.size(); }
};

struct QuantRecord {
  Index channel = 0;
  double min_val = 0.0;
  double logmax = 0.0;
  bool operator==(const QuantRecord&) const = default;
};

/// One record per kept channel, ascending channel order.
struct QuantParams {
  std::vector<QuantRecord> records;

  Index size() const { return static_cast<Index>(records.size()); }
  bool operator==(const QuantParams&) const = default;

  /// Throws ConsistencyError unless the records cover exactly the kept channels of `m`.
  void check_against(const ChannelMask& m) const {
    auto kept = m.kept_indices();
    if (kept.size() != records.size()) {
      throw ConsistencyError("quant params cover " + std::to_string(records.size()) +
                             " channels but mask keeps " + std::to_string(kept.size()));
    }
    for (size_t i = 0; i < kept.size(); ++i) {
      if (records[i].channel != kept[i]) throw ConsistencyError("quant param channel order mismatch");
      if (!(records[i].logmax >= 0.0)) throw ConsistencyError("negative logmax");
    }
  }
};

// ---------------------------------------------------------------------------
// Mask algebra

template <typename Scalar>
Tensor<Scalar> apply_mask(const Tensor<Scalar>& f, const ChannelMask& m) {
  if (m.length() != f.channels()) {
    throw DimensionError("mask length " + std::to_string(m.length()) + " != channels " +
                         std::to_string(f.channels()));
  }
  Tensor<Scalar> out = f;
  for (Index c = 0; c < f.channels(); ++c)
    if (!m[c]) out.data().row(c).setZero();
  return out;
}

inline ChannelMask complement_mask(const ChannelMask& m) {
  ChannelMask out(m.length());
  for (Index i = 0; i < m.length(); ++i) out.set(i, !m[i]);
  return out;
}

inline double mask_mean(const ChannelMask& m) {
  if (m.length() == 0) return 0.0;
  return static_cast<double>(m.count()) / static_cast<double>(m.length());
}

}  // namespace tgfc
