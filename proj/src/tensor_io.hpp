#pragma once

#include <iosfwd>
#include <string>

#include "tensor.hpp"

namespace clusdiff {

/// Tensor file format, little-endian:
///   magic "CDTN" | u32 rank | u32 extent[rank] | u8 dtype | payload
/// dtype 0 = f64, 1 = f32. Values are stored as doubles in memory; an
/// f32 file rounds on write and widens on read.
enum class Dtype : uint8_t { F64 = 0, F32 = 1 };

void write_tensor(std::ostream& os, const Tensor& t, Dtype dtype = Dtype::F64);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t, Dtype dtype = Dtype::F64);
Tensor load_tensor(const std::string& path);

}  // namespace clusdiff
