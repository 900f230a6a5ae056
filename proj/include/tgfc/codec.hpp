#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tgfc/bytes.hpp"
#include "tgfc/quantize.hpp"
#include "tgfc/tensor.hpp"

namespace tgfc {

// ---------------------------------------------------------------------------
// Frames and tiling

/// 8-bit single-plane image, row-major.
struct GrayFrame {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;

  GrayFrame() = default;
  GrayFrame(Index h, Index w) : height(h), width(w), pixels(static_cast<size_t>(h * w), 0) {}
  std::uint8_t& at(Index y, Index x) { return pixels[static_cast<size_t>(y * width + x)]; }
  std::uint8_t at(Index y, Index x) const { return pixels[static_cast<size_t>(y * width + x)]; }
  bool operator==(const GrayFrame&) const = default;
};

struct TileLayout {
  Index grid_cols = 0;
  Index grid_rows = 0;
  Index tile_h = 0;
  Index tile_w = 0;
  Index kept_count = 0;

  Index frame_height() const { return grid_rows * tile_h; }
  Index frame_width() const { return grid_cols * tile_w; }
  bool operator==(const TileLayout&) const = default;

  /// Near-square row-major grid: ceil(sqrt(M)) columns.
  static TileLayout for_channels(Index kept, Index tile_h, Index tile_w);
};

struct TiledFrame {
  TileLayout layout;
  GrayFrame frame;
};

/// Quantizes the kept channels of `f` with `q` and packs them row-major into one frame.
TiledFrame tile(const FeatureTensor& f, const ChannelMask& m, const QuantParams& q);

/// Dequantizes each tile back to its channel index; dropped channels are zero.
FeatureTensor untile(const TiledFrame& frame, const ChannelMask& m, const QuantParams& q);

// ---------------------------------------------------------------------------
// Frame codec backends

enum : std::uint8_t {
  kCodecLossless = 0,
  kCodecLossy = 1,
  kCodecExternal = 2,
};

class CodecBackend {
 public:
  virtual ~CodecBackend() = default;
  virtual std::uint8_t id() const = 0;
  virtual std::string name() const = 0;
  virtual Bytes encode_frame(const GrayFrame& frame) const = 0;
  /// Frame dimensions travel out of band (container header / layout).
  virtual GrayFrame decode_frame(std::span<const std::uint8_t> data, Index height, Index width) const = 0;
};

/// Deflate (zlib) of the raw pixels. Deterministic and exact.
class LosslessBackend : public CodecBackend {
 public:
  std::uint8_t id() const override { return kCodecLossless; }
  std::string name() const override { return "lossless"; }
  Bytes encode_frame(const GrayFrame& frame) const override;
  GrayFrame decode_frame(std::span<const std::uint8_t> data, Index height, Index width) const override;
};

/// Uniform requantization of pixels with step `step` (1 = lossless), then deflate.
/// The step is stored in the payload, so any instance can decode any lossy stream.
class LossyBackend : public CodecBackend {
 public:
  explicit LossyBackend(int step = 8);
  int step() const { return step_; }
  std::uint8_t id() const override { return kCodecLossy; }
  std::string name() const override { return "lossy"; }
  Bytes encode_frame(const GrayFrame& frame) const override;
  GrayFrame decode_frame(std::span<const std::uint8_t> data, Index height, Index width) const override;

 private:
  int step_;
};

struct ExternalCodecConfig {
  /// Shell command templates. Placeholders: {input} {output} {width} {height}.
  /// Encode reads a raw 8-bit gray file and writes the bitstream; decode does the reverse.
  std::string encode_command;
  std::string decode_command;
};

/// Runs user-supplied encoder/decoder binaries. Each call works in its own
/// freshly created temporary directory, removed afterwards.
class ExternalBackend : public CodecBackend {
 public:
  explicit ExternalBackend(ExternalCodecConfig cfg);
  std::uint8_t id() const override { return kCodecExternal; }
  std::string name() const override { return "external"; }
  Bytes encode_frame(const GrayFrame& frame) const override;
  GrayFrame decode_frame(std::span<const std::uint8_t> data, Index height, Index width) const override;

 private:
  ExternalCodecConfig cfg_;
};

/// codec_id → backend lookup used when decoding.
class CodecRegistry {
 public:
  /// Lossless and lossy backends registered.
  static CodecRegistry with_builtins();
  void add(std::shared_ptr<const CodecBackend> backend);
  const CodecBackend& get(std::uint8_t id) const;
  bool contains(std::uint8_t id) const { return backends_.count(id) != 0; }

 private:
  std::map<std::uint8_t, std::shared_ptr<const CodecBackend>> backends_;
};

std::shared_ptr<const CodecBackend> make_backend(const std::string& name, int step = 8,
                                                 const ExternalCodecConfig& ext = {});

// ---------------------------------------------------------------------------
// Feature container
//
//   "TGFC" | version u8 | C u16 | H u16 | W u16 | mask ceil(C/8) bytes, MSB first |
//   per kept channel: min f32, logmax f32 | codec_id u8 | payload_len u32 | payload
// Multi-byte fields little-endian.

inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr size_t kContainerFixedBytes = 4 + 1 + 6 + 1 + 4;

struct ContainerInfo {
  Index channels = 0, height = 0, width = 0;
  ChannelMask mask;
  QuantParams quant;
  std::uint8_t codec_id = 0;
  size_t header_bytes = 0;   // everything except the payload
  size_t payload_bytes = 0;
};

struct DecodedFeatures {
  FeatureTensor tensor;
  ChannelMask mask;
  QuantParams quant;
};

Bytes mask_bitmap(const ChannelMask& m);

/// Serializes header + side information around an already-encoded payload.
Bytes write_container(Index C, Index H, Index W, const ChannelMask& m, const QuantParams& q, std::uint8_t codec_id,
                      std::span<const std::uint8_t> payload);

Bytes encode_container(const FeatureTensor& f, const ChannelMask& m, const CodecBackend& backend);

/// Parses header and side information only; payload is left undecoded.
ContainerInfo parse_container(std::span<const std::uint8_t> data);

DecodedFeatures decode_container(std::span<const std::uint8_t> data, const CodecRegistry& registry);

// ---------------------------------------------------------------------------
// Texture stream: "TGTX" | version u8 | H u16 | W u16 | codec_id u8 | payload_len u32 | payload.
// The RGB image is coded as one planar gray frame of size 3H×W.

inline constexpr size_t kTextureHeaderBytes = 4 + 1 + 4 + 1 + 4;

GrayFrame image_to_planar_frame(const SourceImage& img);
SourceImage planar_frame_to_image(const GrayFrame& frame);

Bytes encode_texture(const SourceImage& img, const CodecBackend& backend);
SourceImage decode_texture(std::span<const std::uint8_t> data, const CodecRegistry& registry);

// ---------------------------------------------------------------------------
// Rate metrics

/// Bits per pixel of the source image.
double bpp(std::uint64_t total_bits, Index img_h, Index img_w);

/// compressed / raw × 100. Raw feature volume convention: C×H×W bytes.
double compression_rate(std::uint64_t compressed_bytes, std::uint64_t raw_bytes);

}  // namespace tgfc
