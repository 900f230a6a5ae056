#pragma once

#include <string>

#include "tgfc/nn/layers.hpp"

namespace tgfc::nn {

// Parameter files: "TGFW" magic, u32 version, u32 count, then per parameter
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64 (column-major),
// all little-endian.

void save_params(const std::string& path, const ParamList<double>& params);

/// Loads values by position; names and shapes must match exactly.
void load_params(const std::string& path, const ParamList<double>& params);

}  // namespace tgfc::nn
