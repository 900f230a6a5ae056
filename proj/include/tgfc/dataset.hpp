#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tgfc/tensor.hpp"

namespace tgfc {

/// Binary PPM (P6) / PGM (P5), 8-bit. Pixels map to [0,1].
SourceImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const SourceImage& img);
void write_pgm(const std::string& path, Index height, Index width, const std::vector<std::uint8_t>& pixels);

/// Image with pixel values rounded to the 8-bit grid.
SourceImage quantize_8bit(const SourceImage& img);

struct Dataset {
  std::vector<SourceImage> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  size_t size() const { return images.size(); }
  Index num_classes() const { return static_cast<Index>(class_names.size()); }
  Dataset subset(size_t begin, size_t end) const;
};

/// Procedural 10-class set: five shapes, each filled with period-2 stripes that
/// run either horizontally or vertically. Stripe orientation disappears under
/// 2× box downsampling, so the low-resolution texture alone cannot separate
/// the class pairs.
Dataset make_toy_dataset(size_t count, Index size, std::uint64_t seed);

/// Reads `root/<class>/<image>.ppm`; classes are sorted subdirectory names.
Dataset load_image_directory(const std::string& root);
void save_image_directory(const Dataset& d, const std::string& root);

}  // namespace tgfc
