#include "tgfc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "tgfc/bytes.hpp"

namespace tgfc {

namespace fs = std::filesystem;

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw FormatError("truncated image header");
}

}  // namespace

SourceImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open image " + path);
  const std::string magic = header_token(in);
  const bool gray = magic == "P5";
  if (!gray && magic != "P6") throw BadMagicError(path + ": expected binary PPM/PGM");
  const Index w = std::stol(header_token(in));
  const Index h = std::stol(header_token(in));
  const int maxval = std::stoi(header_token(in));
  if (maxval != 255) throw FormatError(path + ": only 8-bit images are supported");
  in.get();
  const size_t n = static_cast<size_t>(w * h * (gray ? 1 : 3));
  std::vector<std::uint8_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) throw TruncatedStreamError(path + ": truncated pixel data");
  SourceImage img(3, h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c) {
        const size_t i = gray ? static_cast<size_t>(y * w + x) : static_cast<size_t>((y * w + x) * 3 + c);
        img(c, y, x) = buf[i] / 255.0;
      }
  return img;
}

void write_ppm(const std::string& path, const SourceImage& img) {
  if (img.channels() != 3) throw DimensionError("write_ppm needs a 3-channel image");
  std::ostringstream hdr;
  hdr << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  ByteWriter w;
  w.str(hdr.str());
  for (Index y = 0; y < img.height(); ++y)
    for (Index x = 0; x < img.width(); ++x)
      for (Index c = 0; c < 3; ++c) w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(img(c, y, x), 0.0, 1.0) * 255.0)));
  write_file(path, w.bytes());
}

void write_pgm(const std::string& path, Index height, Index width, const std::vector<std::uint8_t>& pixels) {
  std::ostringstream hdr;
  hdr << "P5\n" << width << " " << height << "\n255\n";
  ByteWriter w;
  w.str(hdr.str());
  w.raw(pixels);
  write_file(path, w.bytes());
}

SourceImage quantize_8bit(const SourceImage& img) {
  SourceImage out = img;
  out.data() = (img.data().array().max(0.0).min(1.0) * 255.0).round() / 255.0;
  return out;
}

Dataset Dataset::subset(size_t begin, size_t end) const {
  end = std::min(end, size());
  Dataset d;
  d.class_names = class_names;
  d.images.assign(images.begin() + static_cast<std::ptrdiff_t>(begin), images.begin() + static_cast<std::ptrdiff_t>(end));
  d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
  return d;
}

namespace {

enum class Shape { Disk, Square, Triangle, Cross, Ring };

bool inside(Shape s, double dx, double dy, double r) {
  switch (s) {
    case Shape::Disk:
      return dx * dx + dy * dy <= r * r;
    case Shape::Square:
      return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
    case Shape::Triangle:
      return dy <= 0.8 * r && dy >= -r + 2.0 * std::abs(dx);
    case Shape::Cross:
      return (std::abs(dx) <= 0.35 * r && std::abs(dy) <= r) || (std::abs(dy) <= 0.35 * r && std::abs(dx) <= r);
    case Shape::Ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
  }
  return false;
}

}  // namespace

Dataset make_toy_dataset(size_t count, Index size, std::uint64_t seed) {
  Dataset d;
  const char* shapes[5] = {"disk", "square", "triangle", "cross", "ring"};
  for (int s = 0; s < 5; ++s)
    for (const char* o : {"h", "v"}) d.class_names.push_back(std::string(shapes[s]) + "_" + o);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  const double half = size / 2.0;
  for (size_t n = 0; n < count; ++n) {
    const int label = static_cast<int>(n % 10);
    const auto shape = static_cast<Shape>(label / 2);
    const bool vertical = label % 2;
    SourceImage img(3, size, size);

    double bg0[3], bg1[3], fg[3];
    for (int c = 0; c < 3; ++c) {
      bg0[c] = 0.15 + 0.35 * u01(rng);
      bg1[c] = 0.15 + 0.35 * u01(rng);
      fg[c] = 0.45 + 0.4 * u01(rng);
    }
    const double angle = 2.0 * M_PI * u01(rng);
    const double cx = half + (u01(rng) - 0.5) * size * 0.25;
    const double cy = half + (u01(rng) - 0.5) * size * 0.25;
    const double r = size * (0.25 + 0.12 * u01(rng));
    const double contrast = 0.25 + 0.15 * u01(rng);
    const int phase = static_cast<int>(rng() & 1u);

    for (Index y = 0; y < size; ++y)
      for (Index x = 0; x < size; ++x) {
        const double t = 0.5 + 0.5 * ((x - half) * std::cos(angle) + (y - half) * std::sin(angle)) / half;
        const bool in = inside(shape, x + 0.5 - cx, y + 0.5 - cy, r);
        const int stripe = static_cast<int>((vertical ? x : y) + phase) & 1;
        for (int c = 0; c < 3; ++c) {
          double v = (1.0 - t) * bg0[c] + t * bg1[c];
          if (in) v = fg[c] * (1.0 + (stripe ? contrast : -contrast));
          img(c, y, x) = std::clamp(v + noise(rng), 0.0, 1.0);
        }
      }
    d.images.push_back(quantize_8bit(img));
    d.labels.push_back(label);
  }
  return d;
}

Dataset load_image_directory(const std::string& root) {
  if (!fs::is_directory(root)) throw ConfigError("dataset directory not found: " + root);
  Dataset d;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) d.class_names.push_back(e.path().filename().string());
  std::sort(d.class_names.begin(), d.class_names.end());
  std::vector<std::pair<std::string, int>> files;
  for (size_t k = 0; k < d.class_names.size(); ++k) {
    for (const auto& e : fs::directory_iterator(fs::path(root) / d.class_names[k])) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.emplace_back(e.path().string(), static_cast<int>(k));
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& [path, label] : files) {
    d.images.push_back(read_ppm(path));
    d.labels.push_back(label);
  }
  return d;
}

void save_image_directory(const Dataset& d, const std::string& root) {
  for (const auto& c : d.class_names) fs::create_directories(fs::path(root) / c);
  for (size_t i = 0; i < d.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.ppm", i);
    write_ppm((fs::path(root) / d.class_names[d.labels[i]] / name).string(), d.images[i]);
  }
}

}  // namespace tgfc
