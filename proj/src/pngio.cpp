#include "pngio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "error.hpp"

namespace clusdiff {

namespace {

void put_u32be(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back((v >> 24) & 0xFF);
  out.push_back((v >> 16) & 0xFF);
  out.push_back((v >> 8) & 0xFF);
  out.push_back(v & 0xFF);
}

uint32_t get_u32be(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& data) {
  put_u32be(out, uint32_t(data.size()));
  size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = uint32_t(::crc32(0, out.data() + type_at, uInt(4 + data.size())));
  put_u32be(out, crc);
}

const unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

}  // namespace

void write_png_gray(const std::string& path, const Tensor& img, int bit_depth) {
  if (img.rank() != 3 || img.shape()[0] != 1)
    fail(ErrorKind::Shape, "grayscale png wants a [1,h,w] tensor, got " + img.shape_str());
  if (bit_depth != 8 && bit_depth != 16)
    fail(ErrorKind::Config, "png bit depth must be 8 or 16");
  const int h = img.shape()[1], w = img.shape()[2];
  const int bpp = bit_depth / 8;
  const double top = bit_depth == 8 ? 255.0 : 65535.0;

  std::vector<unsigned char> raw(size_t(h) * (size_t(w) * bpp + 1));
  size_t at = 0;
  for (int r = 0; r < h; ++r) {
    raw[at++] = 0;  // filter: none
    for (int c = 0; c < w; ++c) {
      double v = std::clamp(img.at(0, r, c), 0.0, 1.0);
      uint32_t q = uint32_t(std::lround(v * top));
      if (bpp == 2) raw[at++] = (q >> 8) & 0xFF;
      raw[at++] = q & 0xFF;
    }
  }

  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<unsigned char> zed(bound);
  if (compress2(zed.data(), &bound, raw.data(), uLong(raw.size()), 9) != Z_OK)
    fail(ErrorKind::Io, "png deflate failed for " + path);
  zed.resize(bound);

  std::vector<unsigned char> out(kSignature, kSignature + 8);
  std::vector<unsigned char> ihdr;
  put_u32be(ihdr, uint32_t(w));
  put_u32be(ihdr, uint32_t(h));
  ihdr.push_back(uint8_t(bit_depth));
  ihdr.push_back(0);  // gray
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", zed);
  append_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f.flush()) fail(ErrorKind::Io, "short write to " + path);
}

Tensor read_png_gray(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::MissingInput, "no image at " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kSignature, 8) != 0)
    fail(ErrorKind::Io, path + " is not a png");

  int w = 0, h = 0, depth = 0;
  bool seen_ihdr = false, seen_iend = false;
  std::vector<unsigned char> idat;
  size_t at = 8;
  while (at + 12 <= buf.size()) {
    uint32_t len = get_u32be(&buf[at]);
    if (at + 12 + len > buf.size()) fail(ErrorKind::Io, path + ": truncated chunk");
    const char* type = reinterpret_cast<const char*>(&buf[at + 4]);
    const unsigned char* data = &buf[at + 8];
    uint32_t want = get_u32be(&buf[at + 8 + len]);
    uint32_t got = uint32_t(::crc32(0, &buf[at + 4], uInt(4 + len)));
    if (want != got) fail(ErrorKind::Io, path + ": chunk crc mismatch");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail(ErrorKind::Io, path + ": bad IHDR");
      w = int(get_u32be(data));
      h = int(get_u32be(data + 4));
      depth = data[8];
      int color = data[9], interlace = data[12];
      if (color != 0) fail(ErrorKind::Io, path + ": only grayscale is supported");
      if (depth != 8 && depth != 16)
        fail(ErrorKind::Io, path + ": only 8/16-bit grayscale is supported");
      if (interlace != 0) fail(ErrorKind::Io, path + ": interlaced pngs are not supported");
      seen_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_iend = true;
      break;
    }
    at += 12 + len;
  }
  if (!seen_ihdr || !seen_iend || idat.empty() || w <= 0 || h <= 0)
    fail(ErrorKind::Io, path + ": incomplete png");

  const int bpp = depth / 8;
  const size_t stride = size_t(w) * bpp;
  std::vector<unsigned char> raw(size_t(h) * (stride + 1));
  uLongf raw_len = uLongf(raw.size());
  int zrc = uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
  if (zrc != Z_OK || raw_len != raw.size())
    fail(ErrorKind::Io, path + ": png inflate failed");

  // undo per-row filters in place
  std::vector<unsigned char> prev(stride, 0);
  Tensor img({1, h, w});
  const double top = depth == 8 ? 255.0 : 65535.0;
  for (int r = 0; r < h; ++r) {
    unsigned char* row = &raw[size_t(r) * (stride + 1)];
    int filter = row[0];
    unsigned char* px = row + 1;
    for (size_t i = 0; i < stride; ++i) {
      int a = i >= size_t(bpp) ? px[i - size_t(bpp)] : 0;
      int b = prev[i];
      int c = i >= size_t(bpp) ? prev[i - size_t(bpp)] : 0;
      switch (filter) {
        case 0: break;
        case 1: px[i] = uint8_t(px[i] + a); break;
        case 2: px[i] = uint8_t(px[i] + b); break;
        case 3: px[i] = uint8_t(px[i] + (a + b) / 2); break;
        case 4: px[i] = uint8_t(px[i] + paeth(a, b, c)); break;
        default: fail(ErrorKind::Io, path + ": unknown png filter");
      }
    }
    std::memcpy(prev.data(), px, stride);
    for (int cx = 0; cx < w; ++cx) {
      uint32_t q = bpp == 2 ? (uint32_t(px[cx * 2]) << 8) | px[cx * 2 + 1] : px[cx];
      img.at(0, r, cx) = double(q) / top;
    }
  }
  return img;
}

namespace {

// 5x7 glyphs, column-major bottom bit = top row; covers the caption alphabet.
struct Glyph {
  char ch;
  uint8_t col[5];
};

constexpr Glyph kFont[] = {
    {'a', {0x20, 0x54, 0x54, 0x54, 0x78}}, {'b', {0x7F, 0x48, 0x44, 0x44, 0x38}},
    {'c', {0x38, 0x44, 0x44, 0x44, 0x20}}, {'d', {0x38, 0x44, 0x44, 0x48, 0x7F}},
    {'e', {0x38, 0x54, 0x54, 0x54, 0x18}}, {'f', {0x08, 0x7E, 0x09, 0x01, 0x02}},
    {'g', {0x0C, 0x52, 0x52, 0x52, 0x3E}}, {'h', {0x7F, 0x08, 0x04, 0x04, 0x78}},
    {'i', {0x00, 0x44, 0x7D, 0x40, 0x00}}, {'j', {0x20, 0x40, 0x44, 0x3D, 0x00}},
    {'k', {0x7F, 0x10, 0x28, 0x44, 0x00}}, {'l', {0x00, 0x41, 0x7F, 0x40, 0x00}},
    {'m', {0x7C, 0x04, 0x18, 0x04, 0x78}}, {'n', {0x7C, 0x08, 0x04, 0x04, 0x78}},
    {'o', {0x38, 0x44, 0x44, 0x44, 0x38}}, {'p', {0x7C, 0x14, 0x14, 0x14, 0x08}},
    {'q', {0x08, 0x14, 0x14, 0x18, 0x7C}}, {'r', {0x7C, 0x08, 0x04, 0x04, 0x08}},
    {'s', {0x48, 0x54, 0x54, 0x54, 0x20}}, {'t', {0x04, 0x3F, 0x44, 0x40, 0x20}},
    {'u', {0x3C, 0x40, 0x40, 0x20, 0x7C}}, {'v', {0x1C, 0x20, 0x40, 0x20, 0x1C}},
    {'w', {0x3C, 0x40, 0x30, 0x40, 0x3C}}, {'x', {0x44, 0x28, 0x10, 0x28, 0x44}},
    {'y', {0x0C, 0x50, 0x50, 0x50, 0x3C}}, {'z', {0x44, 0x64, 0x54, 0x4C, 0x44}},
    {'0', {0x3E, 0x51, 0x49, 0x45, 0x3E}}, {'1', {0x00, 0x42, 0x7F, 0x40, 0x00}},
    {'2', {0x42, 0x61, 0x51, 0x49, 0x46}}, {'3', {0x21, 0x41, 0x45, 0x4B, 0x31}},
    {'4', {0x18, 0x14, 0x12, 0x7F, 0x10}}, {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
    {'6', {0x3C, 0x4A, 0x49, 0x49, 0x30}}, {'7', {0x01, 0x71, 0x09, 0x05, 0x03}},
    {'8', {0x36, 0x49, 0x49, 0x49, 0x36}}, {'9', {0x06, 0x49, 0x49, 0x29, 0x1E}},
    {'_', {0x40, 0x40, 0x40, 0x40, 0x40}}, {'-', {0x08, 0x08, 0x08, 0x08, 0x08}},
    {'.', {0x00, 0x60, 0x60, 0x00, 0x00}}, {':', {0x00, 0x36, 0x36, 0x00, 0x00}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00}},
};

const uint8_t* glyph_for(char c) {
  if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  for (const Glyph& g : kFont)
    if (g.ch == c) return g.col;
  return nullptr;
}

}  // namespace

void draw_text(Tensor& img, const std::string& text, int row0, int col0, double intensity) {
  if (img.rank() != 3 || img.shape()[0] != 1)
    fail(ErrorKind::Shape, "draw_text wants a [1,h,w] tensor");
  const int h = img.shape()[1], w = img.shape()[2];
  int x = col0;
  for (char c : text) {
    const uint8_t* cols = glyph_for(c);
    if (cols) {
      for (int cx = 0; cx < 5; ++cx)
        for (int cy = 0; cy < 7; ++cy)
          if (cols[cx] & (1u << cy)) {
            int r = row0 + cy, cc = x + cx;
            if (r >= 0 && r < h && cc >= 0 && cc < w) img.at(0, r, cc) = intensity;
          }
    }
    x += 6;
  }
}

Tensor contact_sheet(const std::vector<Tensor>& tiles, const std::vector<std::string>& captions,
                     int cols, int scale) {
  if (tiles.empty()) fail(ErrorKind::Data, "contact sheet needs at least one tile");
  if (captions.size() != tiles.size())
    fail(ErrorKind::Data, "caption count does not match tile count");
  if (cols < 1 || scale < 1) fail(ErrorKind::Config, "cols and scale must be positive");
  const std::vector<int>& s0 = tiles[0].shape();
  for (const Tensor& t : tiles)
    if (t.shape() != s0 || t.rank() != 3 || s0[0] != 1)
      fail(ErrorKind::Shape, "tiles must share one [1,h,w] shape");
  const int th = s0[1] * scale, tw = s0[2] * scale;
  const int cap_h = 9, margin = 2;
  const int cell_h = th + cap_h + margin, cell_w = tw + margin;
  const int rows = int((tiles.size() + size_t(cols) - 1) / size_t(cols));
  Tensor sheet({1, margin + rows * cell_h, margin + cols * cell_w});

  for (size_t i = 0; i < tiles.size(); ++i) {
    const int gr = int(i) / cols, gc = int(i) % cols;
    const int r0 = margin + gr * cell_h, c0 = margin + gc * cell_w;
    for (int r = 0; r < th; ++r)
      for (int c = 0; c < tw; ++c)
        sheet.at(0, r0 + r, c0 + c) =
            std::clamp(tiles[i].at(0, r / scale, c / scale), 0.0, 1.0);
    draw_text(sheet, captions[i], r0 + th + 1, c0, 1.0);
  }
  return sheet;
}

}  // namespace clusdiff
