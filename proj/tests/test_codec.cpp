#include <doctest.h>

#include <cstring>

#include "support.hpp"
#include "tgfc/codec.hpp"
#include "tgfc/quantize.hpp"

using namespace tgfc;
using tgfc::testing::random_mask;
using tgfc::testing::random_tensor;

namespace {

FeatureTensor requantized(const FeatureTensor& f, const ChannelMask& m, const QuantParams& q) {
  FeatureTensor out(f.channels(), f.height(), f.width());
  for (const auto& r : q.records) {
    const auto row = f.data().row(r.channel);
    const auto codes = quantize_with(std::span<const double>(row.data(), static_cast<size_t>(row.size())), r.min_val, r.logmax);
    for (Index i = 0; i < f.plane_size(); ++i) out.data()(r.channel, i) = dequantize_value(codes[static_cast<size_t>(i)], r.min_val, r.logmax);
  }
  (void)m;
  return out;
}

}  // namespace

TEST_CASE("quantizing {0,1,3} gives codes {0,128,255}") {
  const auto q = quantize_channel(std::vector<double>{0.0, 1.0, 3.0});
  CHECK(q.min_val == 0.0);
  CHECK(q.logmax == 2.0);
  CHECK(q.codes == std::vector<std::uint8_t>{0, 128, 255});
}

TEST_CASE("dequantizing {0,128,255} with logmax 2") {
  const auto v = dequantize_channel(std::vector<std::uint8_t>{0, 128, 255}, 0.0, 2.0);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == doctest::Approx(1.0054438439172908).epsilon(1e-14));
  CHECK(v[2] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("constant channel quantizes to zeros and returns the constant") {
  const auto q = quantize_channel(std::vector<double>(9, 5.0));
  CHECK(q.logmax == 0.0);
  CHECK(q.codes == std::vector<std::uint8_t>(9, 0));
  CHECK(dequantize_value(0, q.min_val, q.logmax) == 5.0);
}

TEST_CASE("code 0 is exactly min and values at min code to 0") {
  for (double mn : {-3.25, 0.0, 0.1, 17.0}) CHECK(dequantize_value(0, mn, 1.7) == mn);
  const auto q = quantize_channel(std::vector<double>{-2.0, -2.0, 1.0});
  CHECK(q.codes[0] == 0);
  CHECK(q.codes[1] == 0);
}

TEST_CASE("non-finite input is a data error") {
  CHECK_THROWS_AS(quantize_channel(std::vector<double>{0.0, NAN}), DataError);
  CHECK_THROWS_AS(quantize_channel(std::vector<double>{INFINITY}), DataError);
}

TEST_CASE("quantization is idempotent and stays in range") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::exponential_distribution<double> ed(0.5);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(1 + rng() % 200);
    for (auto& x : v) x = t % 3 == 0 ? nd(rng) : ed(rng) * (t % 2 ? 1 : 100);
    const auto q = quantize_channel(v);
    const auto d = dequantize_channel(q.codes, q.min_val, q.logmax);
    CHECK(quantize_with(std::span<const double>(d), q.min_val, q.logmax) == q.codes);
    const double hi = dequantized_upper_bound(q.min_val, q.logmax);
    for (double x : d) {
      CHECK(x >= q.min_val);
      CHECK(x <= hi);
    }
    CHECK(std::abs(hi - (std::exp2(q.logmax) + q.min_val - 1.0)) < 1e-9 * (1.0 + std::abs(hi)));
  }
}

TEST_CASE("reconstruction error is within one log-domain step") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<double> v(500);
  for (auto& x : v) x = u(rng);
  const auto q = quantize_channel(v);
  const double step = q.logmax / 255.0;
  for (size_t i = 0; i < v.size(); ++i) {
    const double lv = std::log2(v[i] - q.min_val + 1.0);
    const double lr = std::log2(dequantize_value(q.codes[i], q.min_val, q.logmax) - q.min_val + 1.0);
    CHECK(std::abs(lv - lr) <= 0.5 * step + 1e-12);
  }
}

TEST_CASE("tile layout arithmetic") {
  const auto l = TileLayout::for_channels(5, 8, 8);
  CHECK(l.grid_cols == 3);
  CHECK(l.grid_rows == 2);
  CHECK(l.frame_height() == 16);
  CHECK(l.frame_width() == 24);
  for (Index m = 1; m <= 300; ++m) {
    const auto t = TileLayout::for_channels(m, 1, 1);
    CHECK(t.grid_cols == static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(m)))));
    CHECK(t.grid_cols * t.grid_rows >= m);
    CHECK((t.grid_rows - 1) * t.grid_cols < m);
  }
}

TEST_CASE("five tiles leave one zero cell") {
  std::mt19937_64 rng(3);
  const FeatureTensor f = random_tensor(5, 8, 8, rng, 1.0, 2.0);
  const ChannelMask m(5, true);
  const auto tf = tile(f, m, quant_params_for(f, m));
  CHECK(tf.frame.height == 16);
  CHECK(tf.frame.width == 24);
  for (Index y = 8; y < 16; ++y)
    for (Index x = 16; x < 24; ++x) CHECK(tf.frame.at(y, x) == 0);
}

TEST_CASE("a single tile is the quantized channel") {
  std::mt19937_64 rng(4);
  const FeatureTensor f = random_tensor(3, 4, 5, rng);
  const ChannelMask m = ChannelMask::from_string("010");
  const QuantParams q = quant_params_for(f, m);
  const auto tf = tile(f, m, q);
  const auto row = f.data().row(1);
  const auto qc = quantize_channel(std::span<const double>(row.data(), 20));
  CHECK(tf.frame.pixels == qc.codes);
}

TEST_CASE("tile and untile invert each other on kept channels") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const Index C = 1 + static_cast<Index>(rng() % 24);
    const FeatureTensor f = random_tensor(C, 1 + rng() % 6, 1 + rng() % 6, rng, -2.0, 5.0);
    const ChannelMask m = random_mask(C, rng, (rng() % 10) / 9.0);
    const QuantParams q = quant_params_for(f, m);
    CHECK(untile(tile(f, m, q), m, q) == requantized(f, m, q));
  }
  const FeatureTensor f = random_tensor(4, 3, 3, rng);
  const ChannelMask none(4, false);
  CHECK(untile(tile(f, none, quant_params_for(f, none)), none, {}) == FeatureTensor(4, 3, 3));
}

TEST_CASE("tile rejects mismatched side information") {
  std::mt19937_64 rng(6);
  const FeatureTensor f = random_tensor(4, 2, 2, rng);
  const QuantParams q = quant_params_for(f, ChannelMask::from_string("1100"));
  CHECK_THROWS_AS(tile(f, ChannelMask::from_string("1010"), q), ConsistencyError);
  CHECK_THROWS_AS(tile(f, ChannelMask(3, true), q), DimensionError);
}

TEST_CASE("container header layout for C=4 mask 1010") {
  std::mt19937_64 rng(7);
  const FeatureTensor f = random_tensor(4, 3, 3, rng);
  const ChannelMask m = ChannelMask::from_string("1010");
  const Bytes s = encode_container(f, m, LosslessBackend());
  CHECK(std::string(s.begin(), s.begin() + 4) == "TGFC");
  CHECK(s[4] == 1);
  CHECK(s[5] == 4);
  CHECK(s[6] == 0);
  CHECK(s[11] == 0b10100000);
  const auto info = parse_container(s);
  CHECK(info.header_bytes == 4 + 1 + 6 + 1 + 2 * 8 + 1 + 4);
  CHECK(info.header_bytes + info.payload_bytes == s.size());
  CHECK(info.codec_id == kCodecLossless);
  CHECK(info.mask == m);
}

TEST_CASE("container round trip reproduces mask and params exactly") {
  std::mt19937_64 rng(8);
  const CodecRegistry reg = CodecRegistry::with_builtins();
  for (int t = 0; t < 100; ++t) {
    const Index C = 1 + static_cast<Index>(rng() % 64);
    const FeatureTensor f = random_tensor(C, 1 + rng() % 8, 1 + rng() % 8, rng, -1.0, 4.0);
    const ChannelMask m = random_mask(C, rng);
    const Bytes s = encode_container(f, m, LosslessBackend());
    const auto d = decode_container(s, reg);
    CHECK(d.mask == m);
    CHECK(d.quant == quant_params_for(f, m));
    CHECK(d.tensor == requantized(f, m, d.quant));
    CHECK(encode_container(f, m, LosslessBackend()) == s);
    CHECK(encode_container(d.tensor, m, LosslessBackend()).size() > 0);
  }
}

TEST_CASE("container error cases") {
  std::mt19937_64 rng(9);
  const FeatureTensor f = random_tensor(6, 4, 4, rng);
  const ChannelMask m = ChannelMask::from_string("110010");
  const Bytes good = encode_container(f, m, LosslessBackend());
  const CodecRegistry reg = CodecRegistry::with_builtins();

  Bytes bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_container(bad, reg), BadMagicError);

  Bytes cut(good.begin(), good.end() - 3);
  CHECK_THROWS_AS(decode_container(cut, reg), TruncatedStreamError);
  Bytes tiny(good.begin(), good.begin() + 8);
  CHECK_THROWS_AS(decode_container(tiny, reg), TruncatedStreamError);

  Bytes unknown = good;
  unknown[parse_container(good).header_bytes - 5] = 0xFF;
  try {
    decode_container(unknown, reg);
    FAIL("expected an unknown-codec error");
  } catch (const UnknownCodecError& e) {
    CHECK(e.codec_id == 0xFF);
    CHECK(std::string(e.what()).find("255") != std::string::npos);
  }

  Bytes padded = good;
  padded[11] |= 0x01;  // padding bit beyond channel 6
  CHECK_THROWS_AS(parse_container(padded), FormatError);

  Bytes trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_container(trailing), FormatError);

  Bytes version = good;
  version[4] = 9;
  CHECK_THROWS_AS(parse_container(version), FormatError);
}

TEST_CASE("an empty mask yields a header-only container") {
  std::mt19937_64 rng(10);
  const FeatureTensor f = random_tensor(512, 2, 2, rng);
  const Bytes s = encode_container(f, ChannelMask(512, false), LosslessBackend());
  CHECK(s.size() == kContainerFixedBytes + 64);
  CHECK(bpp(8 * s.size(), 256, 256) == (16.0 + 64.0) * 8.0 / 65536.0);
  const auto d = decode_container(s, CodecRegistry::with_builtins());
  CHECK(d.tensor == FeatureTensor(512, 2, 2));
}

TEST_CASE("lossy backend keeps the step in its payload") {
  GrayFrame g(4, 4);
  for (size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<std::uint8_t>(i * 16);
  const LossyBackend a(16);
  const Bytes s = a.encode_frame(g);
  CHECK(s[0] == 16);
  const GrayFrame back = LossyBackend(3).decode_frame(s, 4, 4);
  for (size_t i = 0; i < g.pixels.size(); ++i) CHECK(std::abs(int(back.pixels[i]) - int(g.pixels[i])) <= 8);
  CHECK(LossyBackend(1).decode_frame(LossyBackend(1).encode_frame(g), 4, 4) == g);
  CHECK_THROWS_AS(LossyBackend(0), ConfigError);
}

TEST_CASE("external backend runs user commands") {
  const ExternalBackend ext({"cp {input} {output}", "cp {input} {output}"});
  GrayFrame g(3, 5);
  for (size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<std::uint8_t>(7 * i);
  const Bytes s = ext.encode_frame(g);
  CHECK(s == g.pixels);
  CHECK(ext.decode_frame(s, 3, 5) == g);
  CHECK_THROWS_AS(ext.decode_frame(s, 4, 5), FormatError);

  // Width and height reach the command line.
  const ExternalBackend sized({"test {width} -eq 5 && test {height} -eq 3 && cp {input} {output}", "cp {input} {output}"});
  CHECK(sized.encode_frame(g) == g.pixels);
  const ExternalBackend failing({"false", "false"});
  CHECK_THROWS(failing.encode_frame(g));
  CHECK_THROWS_AS(ExternalBackend({"", "cp {input} {output}"}), ConfigError);
}

TEST_CASE("external backend carries a container round trip") {
  std::mt19937_64 rng(11);
  const FeatureTensor f = random_tensor(8, 4, 4, rng);
  const ChannelMask m = ChannelMask::from_string("10110001");
  auto ext = std::make_shared<ExternalBackend>(ExternalCodecConfig{"cp {input} {output}", "cp {input} {output}"});
  CodecRegistry reg = CodecRegistry::with_builtins();
  reg.add(ext);
  const Bytes s = encode_container(f, m, *ext);
  CHECK(parse_container(s).codec_id == kCodecExternal);
  CHECK(decode_container(s, reg).tensor == decode_container(encode_container(f, m, LosslessBackend()), reg).tensor);
}

TEST_CASE("texture stream round trip through the planar frame") {
  std::mt19937_64 rng(12);
  SourceImage img = quantize_8bit(random_tensor(3, 6, 10, rng, 0.0, 1.0));
  const Bytes s = encode_texture(img, LosslessBackend());
  CHECK(std::string(s.begin(), s.begin() + 4) == "TGTX");
  CHECK(s.size() >= kTextureHeaderBytes);
  const SourceImage back = decode_texture(s, CodecRegistry::with_builtins());
  CHECK((back.data() - img.data()).cwiseAbs().maxCoeff() < 1e-12);
  const GrayFrame g = image_to_planar_frame(img);
  CHECK(g.height == 18);
  CHECK(g.width == 10);
  Bytes bad = s;
  bad[1] = 'Q';
  CHECK_THROWS_AS(decode_texture(bad, CodecRegistry::with_builtins()), BadMagicError);
}

TEST_CASE("bpp and compression rate") {
  CHECK(bpp(65536, 256, 256) == 1.0);
  CHECK(compression_rate(10, 100) == 10.0);
  CHECK_THROWS_AS(compression_rate(10, 0), std::invalid_argument);
}

TEST_CASE("lossless coding of noise features is nearly incompressible") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> u(0, 255);
  FeatureTensor f(64, 16, 16);
  for (Index i = 0; i < f.size(); ++i) f.data().data()[i] = std::exp2(u(rng) / 32.0) - 1.0;
  // Values spread evenly in the log domain occupy all 256 codes with equal weight.
  const Bytes s = encode_container(f, ChannelMask(64, true), LosslessBackend());
  const double rate = compression_rate(s.size(), static_cast<std::uint64_t>(f.size()));
  CHECK(rate > 85.0);
  CHECK(rate < 115.0);
}

TEST_CASE("table fixture rows share one raw-volume convention") {
  // (bpp, compression rate %) pairs from the published rate table.
  const double rows[][2] = {{0.999, 26.24}, {0.177, 4.66}, {1.495, 39.27}, {0.245, 6.43}, {0.665, 17.47},
                            {0.215, 5.65},  {1.075, 28.24}, {0.517, 13.59}, {0.130, 3.41}, {0.040, 1.06},
                            {0.205, 5.38},  {0.050, 1.30}};
  const double k = 26.24 / 0.999;
  for (const auto& r : rows) CHECK(r[1] / r[0] == doctest::Approx(k).epsilon(0.03));
}
