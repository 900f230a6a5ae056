#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "tgfc/tensor.hpp"

namespace tgfc {

/// 8-bit log-domain channel quantizer:
///   code = round(log2(v - min + 1) / logmax * 255),  logmax = max log2(v - min + 1)
///   v'   = 2^(code * logmax / 255) + min - 1
/// Rounding is half away from zero. A constant channel (logmax == 0) codes to
/// all zeros and dequantizes to min.
///
/// min and logmax are snapped to float32 (min downwards, logmax upwards) so the
/// transmitted side information reproduces the encoder's reconstruction exactly.
struct QuantizedChannel {
  std::vector<std::uint8_t> codes;
  double min_val = 0.0;
  double logmax = 0.0;
};

namespace detail {

inline double log2p1(double x) { return std::log1p(x) / std::numbers::ln2; }

inline double snap_down_f32(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) > v) f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  return f;
}

inline double snap_up_f32(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) < v) f = std::nextafter(f, std::numeric_limits<float>::infinity());
  return f;
}

}  // namespace detail

/// Quantizes with given side information; values below min_val clamp to code 0.
template <typename Scalar>
std::vector<std::uint8_t> quantize_with(std::span<const Scalar> values, double min_val, double logmax) {
  std::vector<std::uint8_t> codes(values.size(), 0);
  if (logmax <= 0.0) return codes;
  for (size_t i = 0; i < values.size(); ++i) {
    const double shifted = std::max(0.0, static_cast<double>(values[i]) - min_val);
    const double q = std::round(detail::log2p1(shifted) / logmax * 255.0);
    codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  return codes;
}

template <typename Scalar>
QuantizedChannel quantize_channel(std::span<const Scalar> values) {
  if (values.empty()) throw DimensionError("cannot quantize an empty channel");
  double lo = std::numeric_limits<double>::infinity();
  for (Scalar v : values) {
    if (!std::isfinite(static_cast<double>(v))) throw DataError("non-finite value in channel");
    lo = std::min(lo, static_cast<double>(v));
  }
  QuantizedChannel q;
  q.min_val = detail::snap_down_f32(lo);
  double lmax = 0.0;
  for (Scalar v : values) lmax = std::max(lmax, detail::log2p1(static_cast<double>(v) - q.min_val));
  q.logmax = lmax > 0.0 ? detail::snap_up_f32(lmax) : 0.0;
  q.codes = quantize_with(values, q.min_val, q.logmax);
  return q;
}

template <typename Scalar>
QuantizedChannel quantize_channel(const std::vector<Scalar>& values) {
  return quantize_channel(std::span<const Scalar>(values));
}

inline double dequantize_value(std::uint8_t code, double min_val, double logmax) {
  if (logmax <= 0.0) return min_val;
  return std::expm1(static_cast<double>(code) * logmax / 255.0 * std::numbers::ln2) + min_val;
}

inline std::vector<double> dequantize_channel(std::span<const std::uint8_t> codes, double min_val, double logmax) {
  std::vector<double> out(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) out[i] = dequantize_value(codes[i], min_val, logmax);
  return out;
}

/// Largest value dequantization can produce for the given side information.
inline double dequantized_upper_bound(double min_val, double logmax) { return dequantize_value(255, min_val, logmax); }

/// Side information for every kept channel of `f`.
template <typename Scalar>
QuantParams quant_params_for(const Tensor<Scalar>& f, const ChannelMask& m) {
  if (m.length() != f.channels()) throw DimensionError("mask length != channels");
  QuantParams q;
  for (Index c : m.kept_indices()) {
    const auto row = f.data().row(c);
    const auto qc = quantize_channel(std::span<const Scalar>(row.data(), static_cast<size_t>(row.size())));
    q.records.push_back({c, qc.min_val, qc.logmax});
  }
  return q;
}

}  // namespace tgfc
