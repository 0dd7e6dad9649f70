#include "checksum.hpp"

#include <zlib.h>

#include <cstring>
#include <vector>

#include "nn.hpp"

namespace clusdiff {

uint32_t crc32_bytes(const void* data, size_t n, uint32_t running) {
  return uint32_t(::crc32(running, static_cast<const Bytef*>(data), uInt(n)));
}

uint32_t crc32_str(const std::string& s, uint32_t running) {
  return crc32_bytes(s.data(), s.size(), running);
}

uint32_t params_checksum(const nn::ParamStore& ps) {
  uint32_t c = 0;
  for (int id = 0; id < ps.count(); ++id) {
    const nn::Param& p = ps.at(id);
    c = crc32_str(p.name, c);
    // Serialize values explicitly so the checksum does not depend on the
    // in-memory layout of Tensor.
    const int64_t n = p.value.numel();
    for (int64_t i = 0; i < n; ++i) {
      double v = p.value[i];
      unsigned char buf[8];
      std::memcpy(buf, &v, 8);
      c = crc32_bytes(buf, 8, c);
    }
  }
  return c;
}

}  // namespace clusdiff
