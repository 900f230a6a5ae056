#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tgfc/backbone.hpp"
#include "tgfc/codec.hpp"
#include "tgfc/dataset.hpp"
#include "tgfc/irnn.hpp"
#include "tgfc/metrics.hpp"
#include "tgfc/training.hpp"

namespace tgfc {

/// Runs fn(0..n-1) on up to `workers` threads. The first exception is rethrown.
void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn);

// ---------------------------------------------------------------------------
// Encode / decode

struct BppBreakdown {
  std::uint64_t feature_payload_bits = 0;
  std::uint64_t texture_payload_bits = 0;
  std::uint64_t side_info_bits = 0;  // container and texture headers, mask, quant params
  Index height = 0, width = 0;

  std::uint64_t total_bits() const { return feature_payload_bits + texture_payload_bits + side_info_bits; }
  double bpp() const { return tgfc::bpp(total_bits(), height, width); }
  std::string describe() const;
};

/// Accounts every byte of both streams. Either stream may be empty (single-stream arms).
BppBreakdown bpp_breakdown(std::span<const std::uint8_t> feature_stream, std::span<const std::uint8_t> texture_stream,
                           Index height, Index width);

struct PipelineOptions {
  Index downsample = 2;
  std::shared_ptr<const CodecBackend> texture_codec = std::make_shared<LossyBackend>(8);
  std::shared_ptr<const CodecBackend> feature_codec = std::make_shared<LosslessBackend>();
  /// Forces exactly this many kept channels (top-k by selection margin).
  std::optional<Index> keep;
};

struct EncodedStreams {
  Bytes features;
  Bytes texture;
  ChannelMask mask;
  BppBreakdown bits;
};

EncodedStreams encode_image(const SplitBackbone& backbone, const FcnnModel& fcnn, const SourceImage& img,
                            const PipelineOptions& opt);

struct DecodedStreams {
  TaskResult task;
  FeatureTensor features;  // reconstructed features fed to the task network
  SourceImage texture;     // decoded low-resolution texture
  SourceImage preview;     // IRNN output, or bilinear upsampling when no IRNN is given
};

/// Machine branch (fill + FRM + task network) and human branch (preview).
/// Streams whose dimensions disagree with the backbone raise FormatError.
DecodedStreams decode_streams(const SplitBackbone& backbone, const FcnnModel& fcnn, const ImageReconstructor<Real>* irnn,
                              std::span<const std::uint8_t> feature_stream, std::span<const std::uint8_t> texture_stream,
                              const CodecRegistry& registry, Index downsample);

// ---------------------------------------------------------------------------
// Rate-accuracy sweep

inline const char* const kArmProposed = "proposed";
inline const char* const kArmFeatureAnchor = "feature-anchor";
inline const char* const kArmImageAnchor = "image-anchor";
inline const char* const kArmTextureOnly = "texture-only";
inline const char* const kArmUncompressed = "uncompressed";

struct RatePoint {
  std::string arm;
  std::string setting;
  double bpp = 0;
  double accuracy = 0;          // top-1 %, or PSNR in dB for quality curves
  double compression_rate = 0;  // mean compressed bytes over raw feature bytes, %
};

struct SweepArm {
  std::string name;
  /// Lossy step per point (feature codec, texture codec or image codec depending on the arm).
  std::vector<int> settings;
};

struct SweepContext {
  const SplitBackbone* backbone = nullptr;
  const FcnnModel* fcnn = nullptr;  // required by the proposed arm
  const Dataset* data = nullptr;
  PipelineOptions pipeline;
  /// When set, the image anchor runs this external codec; "{setting}" in the
  /// command templates is replaced by the point's setting.
  std::optional<ExternalCodecConfig> image_codec;
  int workers = 1;
};

std::vector<RatePoint> run_rate_accuracy(const SweepContext& ctx, const std::vector<SweepArm>& arms);

/// Points of one arm as a curve, ordered by rate.
std::vector<CurvePoint> curve_of(const std::vector<RatePoint>& points, const std::string& arm);

void write_rate_csv(const std::string& path, const std::vector<RatePoint>& points);
std::vector<RatePoint> read_rate_csv(const std::string& path);

/// Static line chart of every arm's curve.
std::string render_svg_plot(const std::vector<RatePoint>& points, const std::string& title, const std::string& y_label);

// ---------------------------------------------------------------------------
// Image reconstruction quality

inline const char* const kArmBicubic = "bicubic";
inline const char* const kArmTextureSr = "texture-sr";
inline const char* const kArmTextureFeatureSr = "texture-feature-sr";

struct PsnrRow {
  std::string arm;
  size_t image = 0;
  double psnr = 0;
};

struct PsnrSummary {
  std::vector<PsnrRow> rows;
  std::map<std::string, double> mean;  // per arm
  /// Texture-Feature-SR minus Texture-SR mean PSNR (signed).
  double feature_gain() const { return mean.at(kArmTextureFeatureSr) - mean.at(kArmTextureSr); }
};

struct PsnrContext {
  const SplitBackbone* backbone = nullptr;
  const FcnnModel* fcnn = nullptr;
  const ImageReconstructor<Real>* irnn_texture = nullptr;  // trained without features
  const ImageReconstructor<Real>* irnn_feature = nullptr;  // trained with features
  const Dataset* data = nullptr;
  PipelineOptions pipeline;
  int workers = 1;
};

/// Bicubic, Texture-SR and Texture-Feature-SR on fully coded streams. Outputs
/// are rounded to 8 bits before measuring.
PsnrSummary run_psnr_eval(const PsnrContext& ctx);

void write_psnr_csv(const std::string& path, const PsnrSummary& s);
std::string format_psnr(double db);  // "inf" for identical images

// ---------------------------------------------------------------------------
// Report tables

struct TableOneRow {
  std::string layer;
  double target = 0;
  std::string method;
  std::optional<double> bpp;
  std::optional<double> compression_rate;
};

/// Lowest-bpp point of `arm` whose accuracy reaches `target`; nullopt if none does.
std::optional<RatePoint> select_operating_point(const std::vector<RatePoint>& points, const std::string& arm,
                                                double target);

std::string table_one_header();
std::string render_table_one_row(const TableOneRow& row);
std::string render_table_one(const std::vector<TableOneRow>& rows);

struct TableTwoRow {
  FcnnVariant variant;
  std::optional<double> accuracy;
  std::optional<double> density;
};

std::string render_table_two(const std::vector<TableTwoRow>& rows);

}  // namespace tgfc
