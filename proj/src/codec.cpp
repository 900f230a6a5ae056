#include "tgfc/codec.hpp"

#include <zlib.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <random>
#include <unistd.h>

namespace tgfc {

namespace fs = std::filesystem;

TileLayout TileLayout::for_channels(Index kept, Index tile_h, Index tile_w) {
  TileLayout l;
  l.kept_count = kept;
  l.tile_h = tile_h;
  l.tile_w = tile_w;
  if (kept > 0) {
    l.grid_cols = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(kept))));
    // Guard against sqrt rounding for perfect squares.
    while (l.grid_cols * l.grid_cols < kept) ++l.grid_cols;
    while (l.grid_cols > 1 && (l.grid_cols - 1) * (l.grid_cols - 1) >= kept) --l.grid_cols;
    l.grid_rows = (kept + l.grid_cols - 1) / l.grid_cols;
  }
  return l;
}

TiledFrame tile(const FeatureTensor& f, const ChannelMask& m, const QuantParams& q) {
  if (m.length() != f.channels()) throw DimensionError("tile: mask length != channels");
  q.check_against(m);
  TiledFrame out;
  out.layout = TileLayout::for_channels(m.count(), f.height(), f.width());
  out.frame = GrayFrame(out.layout.frame_height(), out.layout.frame_width());
  const Index H = f.height(), W = f.width();
  for (Index k = 0; k < q.size(); ++k) {
    const auto& rec = q.records[k];
    const auto row = f.data().row(rec.channel);
    const auto codes = quantize_with(std::span<const Real>(row.data(), static_cast<size_t>(row.size())), rec.min_val, rec.logmax);
    const Index gy = k / out.layout.grid_cols, gx = k % out.layout.grid_cols;
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) out.frame.at(gy * H + y, gx * W + x) = codes[y * W + x];
  }
  return out;
}

FeatureTensor untile(const TiledFrame& tf, const ChannelMask& m, const QuantParams& q) {
  q.check_against(m);
  const auto& l = tf.layout;
  if (l.kept_count != m.count()) throw ConsistencyError("untile: layout holds " + std::to_string(l.kept_count) +
                                                        " tiles, mask keeps " + std::to_string(m.count()));
  if (tf.frame.height != l.frame_height() || tf.frame.width != l.frame_width()) {
    throw ConsistencyError("untile: frame dims do not match layout");
  }
  FeatureTensor out(m.length(), l.tile_h, l.tile_w);
  for (Index k = 0; k < q.size(); ++k) {
    const auto& rec = q.records[k];
    const Index gy = k / l.grid_cols, gx = k % l.grid_cols;
    for (Index y = 0; y < l.tile_h; ++y)
      for (Index x = 0; x < l.tile_w; ++x)
        out(rec.channel, y, x) = dequantize_value(tf.frame.at(gy * l.tile_h + y, gx * l.tile_w + x), rec.min_val, rec.logmax);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Bytes deflate_bytes(std::span<const std::uint8_t> in) {
  uLongf cap = compressBound(static_cast<uLong>(in.size()));
  Bytes out(cap);
  if (compress2(out.data(), &cap, in.data(), static_cast<uLong>(in.size()), 9) != Z_OK) {
    throw std::runtime_error("deflate failed");
  }
  out.resize(cap);
  return out;
}

std::vector<std::uint8_t> inflate_bytes(std::span<const std::uint8_t> in, size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf len = static_cast<uLongf>(expected);
  const int rc = uncompress(out.data(), &len, in.data(), static_cast<uLong>(in.size()));
  if (rc != Z_OK || len != expected) throw FormatError("frame payload failed to inflate (zlib code " + std::to_string(rc) + ")");
  return out;
}

}  // namespace

Bytes LosslessBackend::encode_frame(const GrayFrame& frame) const { return deflate_bytes(frame.pixels); }

GrayFrame LosslessBackend::decode_frame(std::span<const std::uint8_t> data, Index height, Index width) const {
  GrayFrame f;
  f.height = height;
  f.width = width;
  f.pixels = inflate_bytes(data, static_cast<size_t>(height * width));
  return f;
}

LossyBackend::LossyBackend(int step) : step_(step) {
  if (step < 1 || step > 255) throw ConfigError("lossy step must be in [1,255]");
}

Bytes LossyBackend::encode_frame(const GrayFrame& frame) const {
  std::vector<std::uint8_t> idx(frame.pixels.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint8_t>((frame.pixels[i] + step_ / 2) / step_);
  Bytes out{static_cast<std::uint8_t>(step_)};
  const Bytes z = deflate_bytes(idx);
  out.insert(out.end(), z.begin(), z.end());
  return out;
}

GrayFrame LossyBackend::decode_frame(std::span<const std::uint8_t> data, Index height, Index width) const {
  if (data.empty()) throw TruncatedStreamError("lossy payload missing step byte");
  const int step = data[0];
  if (step < 1) throw FormatError("lossy payload has zero step");
  GrayFrame f;
  f.height = height;
  f.width = width;
  f.pixels = inflate_bytes(data.subspan(1), static_cast<size_t>(height * width));
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(std::min(255, p * step));
  return f;
}

// ---------------------------------------------------------------------------

namespace {

std::string substitute(std::string tmpl, const std::map<std::string, std::string>& vars) {
  for (const auto& [key, val] : vars) {
    const std::string pat = "{" + key + "}";
    for (size_t pos = tmpl.find(pat); pos != std::string::npos; pos = tmpl.find(pat, pos + val.size())) {
      tmpl.replace(pos, pat.size(), val);
    }
  }
  return tmpl;
}

/// Unique scratch directory, removed on scope exit.
class ScratchDir {
 public:
  ScratchDir() {
    std::string tmpl = (fs::temp_directory_path() / "tgfc-codec-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("cannot create scratch directory");
    path_ = tmpl;
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void run_command(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw std::runtime_error("external codec command failed (" + std::to_string(rc) + "): " + cmd);
}

}  // namespace

ExternalBackend::ExternalBackend(ExternalCodecConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.encode_command.empty() || cfg_.decode_command.empty()) {
    throw ConfigError("external codec needs both encode and decode commands");
  }
}

Bytes ExternalBackend::encode_frame(const GrayFrame& frame) const {
  ScratchDir dir;
  const auto in = dir.path() / "frame.gray";
  const auto out = dir.path() / "frame.bin";
  write_file(in.string(), frame.pixels);
  run_command(substitute(cfg_.encode_command, {{"input", in.string()},
                                               {"output", out.string()},
                                               {"width", std::to_string(frame.width)},
                                               {"height", std::to_string(frame.height)}}));
  return read_file(out.string());
}

GrayFrame ExternalBackend::decode_frame(std::span<const std::uint8_t> data, Index height, Index width) const {
  ScratchDir dir;
  const auto in = dir.path() / "frame.bin";
  const auto out = dir.path() / "frame.gray";
  write_file(in.string(), data);
  run_command(substitute(cfg_.decode_command, {{"input", in.string()},
                                               {"output", out.string()},
                                               {"width", std::to_string(width)},
                                               {"height", std::to_string(height)}}));
  GrayFrame f;
  f.height = height;
  f.width = width;
  f.pixels = read_file(out.string());
  if (f.pixels.size() != static_cast<size_t>(height * width)) {
    throw FormatError("external decoder produced " + std::to_string(f.pixels.size()) + " bytes, expected " +
                      std::to_string(height * width));
  }
  return f;
}

// ---------------------------------------------------------------------------

CodecRegistry CodecRegistry::with_builtins() {
  CodecRegistry r;
  r.add(std::make_shared<LosslessBackend>());
  r.add(std::make_shared<LossyBackend>());
  return r;
}

void CodecRegistry::add(std::shared_ptr<const CodecBackend> backend) { backends_[backend->id()] = std::move(backend); }

const CodecBackend& CodecRegistry::get(std::uint8_t id) const {
  auto it = backends_.find(id);
  if (it == backends_.end()) throw UnknownCodecError(id);
  return *it->second;
}

std::shared_ptr<const CodecBackend> make_backend(const std::string& name, int step, const ExternalCodecConfig& ext) {
  if (name == "lossless") return std::make_shared<LosslessBackend>();
  if (name == "lossy") return std::make_shared<LossyBackend>(step);
  if (name == "external") return std::make_shared<ExternalBackend>(ext);
  throw ConfigError("unknown codec backend '" + name + "'");
}

// ---------------------------------------------------------------------------

Bytes mask_bitmap(const ChannelMask& m) {
  Bytes out(static_cast<size_t>((m.length() + 7) / 8), 0);
  for (Index i = 0; i < m.length(); ++i)
    if (m[i]) out[static_cast<size_t>(i / 8)] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return out;
}

namespace {

void check_u16(Index v, const char* what) {
  if (v < 1 || v > 0xFFFF) throw CapacityError(std::string(what) + " does not fit the 16-bit header field");
}

}  // namespace

Bytes write_container(Index C, Index H, Index W, const ChannelMask& m, const QuantParams& q, std::uint8_t codec_id,
                      std::span<const std::uint8_t> payload) {
  check_u16(C, "channel count");
  check_u16(H, "feature height");
  check_u16(W, "feature width");
  if (m.length() != C) throw DimensionError("mask length != channels");
  q.check_against(m);
  if (payload.size() > std::numeric_limits<std::uint32_t>::max()) throw CapacityError("payload exceeds 2^32-1 bytes");
  ByteWriter w;
  w.str("TGFC");
  w.u8(kContainerVersion);
  w.u16(static_cast<std::uint16_t>(C));
  w.u16(static_cast<std::uint16_t>(H));
  w.u16(static_cast<std::uint16_t>(W));
  w.raw(mask_bitmap(m));
  for (const auto& r : q.records) {
    w.f32(static_cast<float>(r.min_val));
    w.f32(static_cast<float>(r.logmax));
  }
  w.u8(codec_id);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  return w.take();
}

Bytes encode_container(const FeatureTensor& f, const ChannelMask& m, const CodecBackend& backend) {
  const QuantParams q = quant_params_for(f, m);
  Bytes payload;
  if (m.count() > 0) payload = backend.encode_frame(tile(f, m, q).frame);
  return write_container(f.channels(), f.height(), f.width(), m, q, backend.id(), payload);
}

ContainerInfo parse_container(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  if (data.size() < 4 || r.str(4) != "TGFC") throw BadMagicError("not a feature container (bad magic)");
  const auto version = r.u8();
  if (version != kContainerVersion) throw FormatError("unsupported container version " + std::to_string(version));
  ContainerInfo info;
  info.channels = r.u16();
  info.height = r.u16();
  info.width = r.u16();
  if (info.channels == 0 || info.height == 0 || info.width == 0) throw FormatError("container has a zero dimension");
  const auto bitmap = r.raw(static_cast<size_t>((info.channels + 7) / 8));
  info.mask = ChannelMask(info.channels);
  for (Index i = 0; i < static_cast<Index>(bitmap.size()) * 8; ++i) {
    const bool bit = (bitmap[static_cast<size_t>(i / 8)] >> (7 - i % 8)) & 1u;
    if (i < info.channels) {
      info.mask.set(i, bit);
    } else if (bit) {
      throw FormatError("mask padding bits are set");
    }
  }
  for (Index c : info.mask.kept_indices()) {
    QuantRecord rec{c, r.f32(), r.f32()};
    if (!std::isfinite(rec.min_val) || !std::isfinite(rec.logmax) || rec.logmax < 0) {
      throw FormatError("invalid quantization parameters for channel " + std::to_string(c));
    }
    info.quant.records.push_back(rec);
  }
  info.codec_id = r.u8();
  const std::uint32_t len = r.u32();
  info.header_bytes = r.position();
  if (r.remaining() < len) throw TruncatedStreamError("payload truncated: header says " + std::to_string(len) +
                                                      " bytes, " + std::to_string(r.remaining()) + " present");
  if (r.remaining() > len) throw FormatError("trailing bytes after payload");
  info.payload_bytes = len;
  return info;
}

DecodedFeatures decode_container(std::span<const std::uint8_t> data, const CodecRegistry& registry) {
  ContainerInfo info = parse_container(data);
  const auto& backend = registry.get(info.codec_id);
  TiledFrame tf;
  tf.layout = TileLayout::for_channels(info.mask.count(), info.height, info.width);
  if (info.mask.count() > 0) {
    tf.frame = backend.decode_frame(data.subspan(info.header_bytes, info.payload_bytes), tf.layout.frame_height(),
                                    tf.layout.frame_width());
  } else if (info.payload_bytes != 0) {
    throw FormatError("payload present but no channels kept");
  }
  DecodedFeatures out{untile(tf, info.mask, info.quant), info.mask, info.quant};
  return out;
}

// ---------------------------------------------------------------------------

GrayFrame image_to_planar_frame(const SourceImage& img) {
  if (img.channels() != 3) throw DimensionError("texture must have 3 channels");
  GrayFrame f(3 * img.height(), img.width());
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < img.height(); ++y)
      for (Index x = 0; x < img.width(); ++x) {
        const double v = std::clamp(img(c, y, x), 0.0, 1.0);
        f.at(c * img.height() + y, x) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return f;
}

SourceImage planar_frame_to_image(const GrayFrame& f) {
  if (f.height % 3) throw DimensionError("planar frame height must be a multiple of 3");
  const Index h = f.height / 3;
  SourceImage img(3, h, f.width);
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < f.width; ++x) img(c, y, x) = f.at(c * h + y, x) / 255.0;
  return img;
}

Bytes encode_texture(const SourceImage& img, const CodecBackend& backend) {
  check_u16(img.height(), "texture height");
  check_u16(img.width(), "texture width");
  const Bytes payload = backend.encode_frame(image_to_planar_frame(img));
  if (payload.size() > std::numeric_limits<std::uint32_t>::max()) throw CapacityError("payload exceeds 2^32-1 bytes");
  ByteWriter w;
  w.str("TGTX");
  w.u8(kContainerVersion);
  w.u16(static_cast<std::uint16_t>(img.height()));
  w.u16(static_cast<std::uint16_t>(img.width()));
  w.u8(backend.id());
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  return w.take();
}

SourceImage decode_texture(std::span<const std::uint8_t> data, const CodecRegistry& registry) {
  ByteReader r(data);
  if (data.size() < 4 || r.str(4) != "TGTX") throw BadMagicError("not a texture stream (bad magic)");
  if (r.u8() != kContainerVersion) throw FormatError("unsupported texture stream version");
  const Index h = r.u16(), w = r.u16();
  if (h == 0 || w == 0) throw FormatError("texture stream has a zero dimension");
  const auto id = r.u8();
  const std::uint32_t len = r.u32();
  const auto payload = r.raw(len);
  if (r.remaining() != 0) throw FormatError("trailing bytes after texture payload");
  return planar_frame_to_image(registry.get(id).decode_frame(payload, 3 * h, w));
}

// ---------------------------------------------------------------------------

double bpp(std::uint64_t total_bits, Index img_h, Index img_w) {
  if (img_h < 1 || img_w < 1) throw DimensionError("bpp needs positive image dimensions");
  return static_cast<double>(total_bits) / static_cast<double>(img_h * img_w);
}

double compression_rate(std::uint64_t compressed_bytes, std::uint64_t raw_bytes) {
  if (raw_bytes == 0) throw std::invalid_argument("compression_rate: raw volume is zero");
  return static_cast<double>(compressed_bytes) / static_cast<double>(raw_bytes) * 100.0;
}

}  // namespace tgfc
