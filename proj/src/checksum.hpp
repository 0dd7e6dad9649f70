#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace clusdiff {
namespace nn {
class ParamStore;
}

uint32_t crc32_bytes(const void* data, size_t n, uint32_t running = 0);
uint32_t crc32_str(const std::string& s, uint32_t running = 0);

/// Checksum over parameter names and values in store order; two models agree
/// iff their architectures and weights do, so it identifies an extractor.
uint32_t params_checksum(const nn::ParamStore& ps);

}  // namespace clusdiff
