#include "tgfc/eval.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace tgfc {

void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
  const size_t w = std::min<size_t>(n, static_cast<size_t>(std::max(1, workers)));
  if (w <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (size_t t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------

std::string BppBreakdown::describe() const {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << "bpp " << bpp() << " (feature payload " << feature_payload_bits
    << " bits, texture payload " << texture_payload_bits << " bits, side info " << side_info_bits << " bits, "
    << height << "x" << width << ")";
  return s.str();
}

BppBreakdown bpp_breakdown(std::span<const std::uint8_t> feature_stream, std::span<const std::uint8_t> texture_stream,
                           Index height, Index width) {
  BppBreakdown b;
  b.height = height;
  b.width = width;
  if (!feature_stream.empty()) {
    const ContainerInfo info = parse_container(feature_stream);
    b.feature_payload_bits = 8ull * info.payload_bytes;
    b.side_info_bits += 8ull * info.header_bytes;
  }
  if (!texture_stream.empty()) {
    if (texture_stream.size() < kTextureHeaderBytes) throw TruncatedStreamError("texture stream shorter than header");
    ByteReader r(texture_stream.subspan(kTextureHeaderBytes - 4, 4));
    const std::uint32_t len = r.u32();
    if (len != texture_stream.size() - kTextureHeaderBytes) throw FormatError("texture payload length mismatch");
    b.texture_payload_bits = 8ull * len;
    b.side_info_bits += 8ull * kTextureHeaderBytes;
  }
  return b;
}

EncodedStreams encode_image(const SplitBackbone& backbone, const FcnnModel& fcnn, const SourceImage& img,
                            const PipelineOptions& opt) {
  const FeatureTensor f_hq = backbone.extract_hq(img);
  EncodedStreams out;
  out.mask = opt.keep ? top_k_mask(fcnn.importance(f_hq), *opt.keep) : fcnn.mask(f_hq);
  out.features = encode_container(f_hq, out.mask, *opt.feature_codec);
  out.texture = encode_texture(box_downsample(img, opt.downsample), *opt.texture_codec);
  out.bits = bpp_breakdown(out.features, out.texture, img.height(), img.width());
  return out;
}

DecodedStreams decode_streams(const SplitBackbone& backbone, const FcnnModel& fcnn, const ImageReconstructor<Real>* irnn,
                              std::span<const std::uint8_t> feature_stream, std::span<const std::uint8_t> texture_stream,
                              const CodecRegistry& registry, Index downsample) {
  DecodedStreams out;
  out.texture = decode_texture(texture_stream, registry);
  const Index in = backbone.config().input_size;
  if (out.texture.height() * downsample != in || out.texture.width() * downsample != in) {
    throw FormatError("texture " + out.texture.shape_string() + " does not match a " + std::to_string(in) +
                      " pixel input at downsample " + std::to_string(downsample));
  }
  const DecodedFeatures dec = decode_container(feature_stream, registry);
  const auto shape = backbone.feature_shape();
  if (dec.tensor.channels() != shape[0] || dec.tensor.height() != shape[1] || dec.tensor.width() != shape[2]) {
    throw FormatError("feature stream " + dec.tensor.shape_string() + " does not match the configured split layer");
  }
  if (dec.tensor.channels() != fcnn.channels()) throw FormatError("feature stream channel count differs from the model");
  const FeatureTensor f_lq = backbone.extract_lq(out.texture, downsample);
  out.features = fcnn.reconstruct(dec.tensor, f_lq, dec.mask);
  out.task = backbone.infer_tail(out.features);
  out.preview = irnn ? irnn->apply(out.texture, out.features) : clamp01(bilinear_upsample(out.texture, downsample));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct ImageResult {
  std::uint64_t bits = 0;
  std::uint64_t compressed_bytes = 0;
  bool correct = false;
};

RatePoint aggregate(const std::string& arm, const std::string& setting, const std::vector<ImageResult>& res,
                    Index h, Index w, std::uint64_t raw_feature_bytes) {
  RatePoint p{arm, setting, 0, 0, 0};
  double bits = 0, bytes = 0, correct = 0;
  for (const auto& r : res) {
    bits += static_cast<double>(r.bits);
    bytes += static_cast<double>(r.compressed_bytes);
    correct += r.correct;
  }
  const double n = static_cast<double>(res.size());
  p.bpp = bits / n / static_cast<double>(h * w);
  p.accuracy = 100.0 * correct / n;
  p.compression_rate = compression_rate(static_cast<std::uint64_t>(std::llround(bytes / n)), raw_feature_bytes);
  return p;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

std::vector<RatePoint> run_rate_accuracy(const SweepContext& ctx, const std::vector<SweepArm>& arms) {
  if (!ctx.backbone || !ctx.data) throw ConfigError("sweep needs a backbone and a dataset");
  if (ctx.data->size() == 0) throw SweepError("sweep dataset is empty");
  const SplitBackbone& bb = *ctx.backbone;
  const Dataset& data = *ctx.data;
  const Index h = data.images.front().height(), w = data.images.front().width();
  const auto fs = bb.feature_shape();
  const std::uint64_t raw_feature_bytes = static_cast<std::uint64_t>(fs[0] * fs[1] * fs[2]);
  const CodecRegistry registry = CodecRegistry::with_builtins();
  const Index ds = ctx.pipeline.downsample;

  std::vector<RatePoint> points;
  for (const auto& arm : arms) {
    if (arm.name == kArmUncompressed) {
      std::vector<ImageResult> res(data.size());
      parallel_for(data.size(), ctx.workers, [&](size_t i) {
        res[i].bits = 8ull * 3ull * static_cast<std::uint64_t>(h * w);
        res[i].compressed_bytes = raw_feature_bytes;
        res[i].correct = bb.full_infer(data.images[i]).predicted_class == data.labels[i];
      });
      points.push_back(aggregate(arm.name, "raw", res, h, w, raw_feature_bytes));
      continue;
    }
    if (arm.settings.size() < 2) throw SweepError("arm '" + arm.name + "' needs at least 2 rate points");
    if (arm.name == kArmProposed && !ctx.fcnn) throw ConfigError("proposed arm needs a trained FCNN");
    if (arm.name != kArmProposed && arm.name != kArmFeatureAnchor && arm.name != kArmImageAnchor &&
        arm.name != kArmTextureOnly) {
      throw ConfigError("unknown sweep arm '" + arm.name + "'");
    }
    for (int setting : arm.settings) {
      std::vector<ImageResult> res(data.size());
      std::shared_ptr<const CodecBackend> codec;
      if (arm.name == kArmImageAnchor && ctx.image_codec) {
        const std::string s = std::to_string(setting);
        codec = std::make_shared<ExternalBackend>(ExternalCodecConfig{replace_all(ctx.image_codec->encode_command, "{setting}", s),
                                                                      replace_all(ctx.image_codec->decode_command, "{setting}", s)});
      } else {
        codec = std::make_shared<LossyBackend>(setting);
      }
      CodecRegistry reg = registry;
      reg.add(codec);

      parallel_for(data.size(), ctx.workers, [&](size_t i) {
        const SourceImage& img = data.images[i];
        const int label = data.labels[i];
        ImageResult& r = res[i];
        if (arm.name == kArmProposed) {
          PipelineOptions opt = ctx.pipeline;
          opt.feature_codec = codec;
          const EncodedStreams enc = encode_image(bb, *ctx.fcnn, img, opt);
          const DecodedStreams dec = decode_streams(bb, *ctx.fcnn, nullptr, enc.features, enc.texture, reg, ds);
          r.bits = enc.bits.total_bits();
          r.compressed_bytes = enc.features.size() + enc.texture.size();
          r.correct = dec.task.predicted_class == label;
        } else if (arm.name == kArmFeatureAnchor) {
          const FeatureTensor f = bb.extract_hq(img);
          const Bytes s = encode_container(f, ChannelMask(f.channels(), true), *codec);
          r.bits = bpp_breakdown(s, {}, h, w).total_bits();
          r.compressed_bytes = s.size();
          r.correct = bb.infer_tail(decode_container(s, reg).tensor).predicted_class == label;
        } else if (arm.name == kArmImageAnchor) {
          const Bytes s = encode_texture(img, *codec);
          r.bits = bpp_breakdown({}, s, h, w).total_bits();
          r.compressed_bytes = s.size();
          r.correct = bb.full_infer(decode_texture(s, reg)).predicted_class == label;
        } else {
          const Bytes s = encode_texture(box_downsample(img, ds), *codec);
          r.bits = bpp_breakdown({}, s, h, w).total_bits();
          r.compressed_bytes = s.size();
          r.correct = bb.infer_tail(bb.extract_lq(decode_texture(s, reg), ds)).predicted_class == label;
        }
      });
      points.push_back(aggregate(arm.name, std::to_string(setting), res, h, w, raw_feature_bytes));
    }
  }
  return points;
}

std::vector<CurvePoint> curve_of(const std::vector<RatePoint>& points, const std::string& arm) {
  std::vector<CurvePoint> c;
  for (const auto& p : points)
    if (p.arm == arm) c.push_back({p.bpp, p.accuracy});
  std::sort(c.begin(), c.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.rate < b.rate; });
  return c;
}

void write_rate_csv(const std::string& path, const std::vector<RatePoint>& points) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "arm,setting,bpp,accuracy,compression_rate\n" << std::setprecision(10);
  for (const auto& p : points)
    out << p.arm << ',' << p.setting << ',' << p.bpp << ',' << p.accuracy << ',' << p.compression_rate << '\n';
}

std::vector<RatePoint> read_rate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("arm,setting,bpp,accuracy", 0) != 0) {
    throw FormatError(path + ": expected header arm,setting,bpp,accuracy");
  }
  std::vector<RatePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    RatePoint p;
    std::string bpp_s, acc_s;
    if (!std::getline(ss, p.arm, ',') || !std::getline(ss, p.setting, ',') || !std::getline(ss, bpp_s, ',') ||
        !std::getline(ss, acc_s, ',')) {
      throw FormatError(path + ": malformed row '" + line + "'");
    }
    p.bpp = std::stod(bpp_s);
    p.accuracy = std::stod(acc_s);
    std::string rate_s;
    if (std::getline(ss, rate_s, ',') && !rate_s.empty()) p.compression_rate = std::stod(rate_s);
    out.push_back(p);
  }
  return out;
}

std::string render_svg_plot(const std::vector<RatePoint>& points, const std::string& title, const std::string& y_label) {
  const double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  std::vector<std::string> arms;
  for (const auto& p : points) {
    x0 = std::min(x0, p.bpp);
    x1 = std::max(x1, p.bpp);
    y0 = std::min(y0, p.accuracy);
    y1 = std::max(y1, p.accuracy);
    if (std::find(arms.begin(), arms.end(), p.arm) == arms.end()) arms.push_back(p.arm);
  }
  if (points.empty()) x0 = y0 = 0, x1 = y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    s << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << std::setprecision(3) << xv << "</text>\n";
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(1) << yv << "</text>\n";
    s << std::setprecision(2);
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">bpp</text>\n";
  s << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\">" << y_label << "</text>\n";
  for (size_t a = 0; a < arms.size(); ++a) {
    const char* col = colors[a % 6];
    std::vector<CurvePoint> c = curve_of(points, arms[a]);
    s << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : c) s << px(p.rate) << ',' << py(p.quality) << ' ';
    s << "\"/>\n";
    for (const auto& p : c) s << "<circle cx=\"" << px(p.rate) << "\" cy=\"" << py(p.quality) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(a);
    s << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly << "\" stroke=\"" << col
      << "\" stroke-width=\"2\"/><text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << arms[a] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

// ---------------------------------------------------------------------------

PsnrSummary run_psnr_eval(const PsnrContext& ctx) {
  if (!ctx.backbone || !ctx.fcnn || !ctx.data) throw ConfigError("PSNR evaluation needs a backbone, FCNN and dataset");
  if (!ctx.irnn_texture) throw ConfigError("missing Texture-SR checkpoint");
  if (!ctx.irnn_feature) throw ConfigError("missing Texture-Feature-SR checkpoint");
  const Dataset& data = *ctx.data;
  const Index ds = ctx.pipeline.downsample;
  CodecRegistry reg = CodecRegistry::with_builtins();
  reg.add(ctx.pipeline.texture_codec);
  reg.add(ctx.pipeline.feature_codec);

  std::vector<std::array<double, 3>> vals(data.size());
  parallel_for(data.size(), ctx.workers, [&](size_t i) {
    const SourceImage& img = data.images[i];
    const EncodedStreams enc = encode_image(*ctx.backbone, *ctx.fcnn, img, ctx.pipeline);
    const DecodedStreams dec = decode_streams(*ctx.backbone, *ctx.fcnn, nullptr, enc.features, enc.texture, reg, ds);
    const FeatureTensor zeros(dec.features.channels(), dec.features.height(), dec.features.width());
    vals[i][0] = psnr(img, quantize_8bit(bicubic_upsample(dec.texture, ds)));
    vals[i][1] = psnr(img, quantize_8bit(ctx.irnn_texture->apply(dec.texture, zeros)));
    vals[i][2] = psnr(img, quantize_8bit(ctx.irnn_feature->apply(dec.texture, dec.features)));
  });

  PsnrSummary s;
  const char* arms[3] = {kArmBicubic, kArmTextureSr, kArmTextureFeatureSr};
  for (int a = 0; a < 3; ++a) {
    double sum = 0;
    for (size_t i = 0; i < data.size(); ++i) {
      s.rows.push_back({arms[a], i, vals[i][a]});
      sum += vals[i][a];
    }
    s.mean[arms[a]] = data.size() ? sum / static_cast<double>(data.size()) : 0.0;
  }
  return s;
}

std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << db;
  return s.str();
}

void write_psnr_csv(const std::string& path, const PsnrSummary& s) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "arm,image,psnr\n";
  for (const auto& r : s.rows) out << r.arm << ',' << r.image << ',' << format_psnr(r.psnr) << '\n';
}

// ---------------------------------------------------------------------------

std::optional<RatePoint> select_operating_point(const std::vector<RatePoint>& points, const std::string& arm,
                                                double target) {
  std::optional<RatePoint> best;
  for (const auto& p : points) {
    if (p.arm != arm || p.accuracy < target) continue;
    if (!best || p.bpp < best->bpp) best = p;
  }
  return best;
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

std::string table_one_header() { return "| Feature Layer | Target Accuracy[%] | Method | BPP | Compression Rate[%] |"; }

std::string render_table_one_row(const TableOneRow& row) {
  std::ostringstream s;
  s << "| " << row.layer << " | ≈" << std::llround(row.target) << " | " << row.method << " | "
    << (row.bpp ? fixed(*row.bpp, 3) : "n/a") << " | " << (row.compression_rate ? fixed(*row.compression_rate, 2) : "n/a")
    << " |";
  return s.str();
}

std::string render_table_one(const std::vector<TableOneRow>& rows) {
  std::ostringstream s;
  s << table_one_header() << "\n|---|---|---|---|---|\n";
  for (const auto& r : rows) s << render_table_one_row(r) << "\n";
  s << "\nOperating point: lowest bpp whose top-1 accuracy reaches the target.\n";
  return s.str();
}

std::string render_table_two(const std::vector<TableTwoRow>& rows) {
  std::ostringstream s;
  s << "| Method | Texture | FRM | Accuracy[%] | Density |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    s << "| " << r.variant.label() << " | " << (r.variant.texture_on ? "✓" : "✗") << " | "
      << (r.variant.frm_on ? "✓" : "✗") << " | " << (r.accuracy ? fixed(*r.accuracy, 2) : "n/a") << " | "
      << (r.density ? fixed(*r.density, 3) : "n/a") << " |\n";
  }
  return s.str();
}

}  // namespace tgfc
