#pragma once

#include <string>
#include <vector>

#include "tensor.hpp"

namespace clusdiff {

/// Grayscale PNG I/O for [1,H,W] tensors. Writing clamps pixel values to
/// [0,1] and quantizes to 16 bits; reading maps sample values back into
/// [0,1]. Both 8- and 16-bit grayscale files load; palette, color, and
/// interlaced files are rejected.
void write_png_gray(const std::string& path, const Tensor& img, int bit_depth = 16);
Tensor read_png_gray(const std::string& path);

/// Tile a batch of same-shaped [1,h,w] images into one grid image with a
/// caption strip (5x7 bitmap font) under each tile. Tiles are upscaled by
/// `scale` (nearest) so short labels fit beneath 24-pixel images.
Tensor contact_sheet(const std::vector<Tensor>& tiles, const std::vector<std::string>& captions,
                     int cols, int scale = 3);

/// Render `text` into img at (row0, col0) with the given intensity; glyphs
/// are 5x7 with one blank column between characters. Unknown characters draw
/// as blanks. Clipped at the image border.
void draw_text(Tensor& img, const std::string& text, int row0, int col0, double intensity = 1.0);

}  // namespace clusdiff
