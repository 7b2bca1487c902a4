#pragma once

#include <filesystem>
#include <string>

#include "fairmoo/tensor.hpp"

namespace fairmoo {

// Writes <base>.f64 (raw little-endian doubles, row-major) plus the
// <base>.json sidecar {"shape":[...],"dtype":"f64","order":"row-major"}.
void dump_tensor(const std::filesystem::path& base, const Tensor& t);

// Reads a pair written by dump_tensor; validates the sidecar.
Tensor load_tensor(const std::filesystem::path& base);

}  // namespace fairmoo
