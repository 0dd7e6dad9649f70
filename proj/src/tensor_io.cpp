#include "tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace clusdiff {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'T', 'N'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail(ErrorKind::Io, "truncated tensor stream");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t, Dtype dtype) {
  os.write(kMagic, 4);
  put_u32(os, uint32_t(t.rank()));
  for (int e : t.shape()) put_u32(os, uint32_t(e));
  unsigned char flag = static_cast<unsigned char>(dtype);
  os.write(reinterpret_cast<const char*>(&flag), 1);
  if (dtype == Dtype::F64) {
    os.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 8));
  } else {
    std::vector<float> row(size_t(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) row[size_t(i)] = float(t[i]);
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * 4));
  }
  if (!os) fail(ErrorKind::Io, "tensor write failed");
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorKind::Io, "not a CDTN tensor stream");
  uint32_t rank = get_u32(is);
  if (rank > 8) fail(ErrorKind::Io, "unreasonable tensor rank " + std::to_string(rank));
  std::vector<int> shape(rank);
  for (auto& e : shape) e = int(get_u32(is));
  unsigned char flag = 0;
  is.read(reinterpret_cast<char*>(&flag), 1);
  if (!is || flag > 1) fail(ErrorKind::Io, "bad tensor dtype flag");
  int64_t n = shape_numel(shape);
  std::vector<double> data(static_cast<size_t>(n));
  if (flag == 0) {
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(n * 8));
  } else {
    std::vector<float> row(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(row.data()), std::streamsize(n * 4));
    for (int64_t i = 0; i < n; ++i) data[size_t(i)] = double(row[size_t(i)]);
  }
  if (!is) fail(ErrorKind::Io, "truncated tensor payload");
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t, Dtype dtype) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  write_tensor(os, t, dtype);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::MissingInput, "cannot open tensor file " + path);
  return read_tensor(is);
}

}  // namespace clusdiff
