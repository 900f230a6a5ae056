#include "tgfc/nn/serialize.hpp"

#include <fstream>
#include <iterator>

#include "tgfc/bytes.hpp"

namespace tgfc {

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace tgfc

namespace tgfc::nn {

namespace {
constexpr std::uint32_t kVersion = 1;
}

void save_params(const std::string& path, const ParamList<double>& params) {
  ByteWriter w;
  w.str("TGFW");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rows()));
    w.u32(static_cast<std::uint32_t>(p->value.cols()));
    for (Index i = 0; i < p->value.size(); ++i) w.f64(p->value.data()[i]);
  }
  write_file(path, w.bytes());
}

void load_params(const std::string& path, const ParamList<double>& params) {
  const Bytes data = read_file(path);
  ByteReader r(data);
  if (r.str(4) != "TGFW") throw BadMagicError(path + ": not a parameter file");
  if (r.u32() != kVersion) throw FormatError(path + ": unsupported parameter file version");
  if (r.u32() != params.size()) throw ConfigError(path + ": parameter count mismatch");
  for (auto* p : params) {
    const std::string name = r.str(r.u32());
    const Index rows = r.u32(), cols = r.u32();
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw ConfigError(path + ": parameter '" + name + "' does not match model parameter '" + p->name + "'");
    }
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = r.f64();
    p->zero_grad();
  }
}

}  // namespace tgfc::nn
