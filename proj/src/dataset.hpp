#pragma once

#include <string>
#include <vector>

#include "tensor.hpp"

namespace clusdiff {

/// The "shapes-mm" toy dataset: 24x24 single-channel images, one shape per
/// class, M planted appearance modes per class. Mode m picks row m of the
/// fixed offset table {(-5,-5),(0,0),(5,5)} and intensity table {0.4,0.7,1.0};
/// pixels get additive uniform noise of amplitude 0.02. Every image is a pure
/// function of (seed, id).
struct ShapesDataset {
  std::vector<Tensor> images;           // [1,24,24] each
  std::vector<int> class_ids;           // 0..C-1
  std::vector<int> mode_ids;            // 0..M-1, planted ground truth
  std::vector<std::string> class_names; // size C
};

inline constexpr int kShapesImg = 24;
inline constexpr int kShapesMaxClasses = 6;
inline constexpr int kShapesMaxModes = 3;

const std::vector<std::string>& shape_class_names();  // disk, square, cross, ...

/// Noise-free prototype of (class c, mode m); the dataset adds noise on top.
Tensor shape_prototype(int c, int m);

ShapesDataset make_shapes_dataset(int classes, int modes, int n_per_mode, uint64_t seed);

/// Index of the nearest prototype among classes x modes, by squared distance.
/// Returns (class, mode); used as the planted-mode recovery oracle.
std::pair<int, int> nearest_prototype(const Tensor& img, int classes, int modes);

}  // namespace clusdiff
