#include "dataset.hpp"

#include <cmath>
#include <limits>

#include "error.hpp"
#include "rng.hpp"

namespace clusdiff {

namespace {

constexpr double kOffsets[kShapesMaxModes][2] = {{-5.0, -5.0}, {0.0, 0.0}, {5.0, 5.0}};
constexpr double kIntensities[kShapesMaxModes] = {0.4, 0.7, 1.0};

bool inside_shape(int c, double dx, double dy) {
  switch (c) {
    case 0:  // disk
      return dx * dx + dy * dy <= 6.0 * 6.0;
    case 1:  // square
      return std::fabs(dx) <= 5.0 && std::fabs(dy) <= 5.0;
    case 2:  // cross
      return (std::fabs(dx) <= 2.0 && std::fabs(dy) <= 6.0) ||
             (std::fabs(dy) <= 2.0 && std::fabs(dx) <= 6.0);
    case 3:  // triangle (apex up)
      return dy >= -5.0 && dy <= 5.0 && std::fabs(dx) <= 0.6 * (dy + 5.0);
    case 4: {  // ring
      double r2 = dx * dx + dy * dy;
      return r2 >= 3.5 * 3.5 && r2 <= 6.0 * 6.0;
    }
    case 5:  // bar
      return std::fabs(dx) <= 2.0 && std::fabs(dy) <= 7.0;
    default:
      return false;
  }
}

void check_cm(int classes, int modes) {
  if (classes < 1 || classes > kShapesMaxClasses)
    fail(ErrorKind::Config, "class count must be in [1," + std::to_string(kShapesMaxClasses) + "]");
  if (modes < 1 || modes > kShapesMaxModes)
    fail(ErrorKind::Config, "mode count must be in [1," + std::to_string(kShapesMaxModes) + "]");
}

}  // namespace

const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names = {"disk", "square", "cross",
                                                 "triangle", "ring", "bar"};
  return names;
}

Tensor shape_prototype(int c, int m) {
  check_cm(c + 1, m + 1);
  Tensor img = Tensor::zeros({1, kShapesImg, kShapesImg});
  const double cx = (kShapesImg - 1) / 2.0 + kOffsets[m][0];
  const double cy = (kShapesImg - 1) / 2.0 + kOffsets[m][1];
  for (int y = 0; y < kShapesImg; ++y)
    for (int x = 0; x < kShapesImg; ++x)
      if (inside_shape(c, x - cx, y - cy)) img.at(0, y, x) = kIntensities[m];
  return img;
}

ShapesDataset make_shapes_dataset(int classes, int modes, int n_per_mode, uint64_t seed) {
  check_cm(classes, modes);
  if (n_per_mode < 1) fail(ErrorKind::Config, "n_per_mode must be >= 1");

  ShapesDataset ds;
  ds.class_names.assign(shape_class_names().begin(), shape_class_names().begin() + classes);
  int id = 0;
  for (int c = 0; c < classes; ++c)
    for (int m = 0; m < modes; ++m) {
      Tensor proto = shape_prototype(c, m);
      for (int k = 0; k < n_per_mode; ++k, ++id) {
        Rng rng(Rng::derive(seed, 0xDA7Au), uint64_t(id));
        Tensor img = proto;
        for (int64_t i = 0; i < img.numel(); ++i) img[i] += rng.uniform(-0.02, 0.02);
        ds.images.push_back(std::move(img));
        ds.class_ids.push_back(c);
        ds.mode_ids.push_back(m);
      }
    }
  return ds;
}

std::pair<int, int> nearest_prototype(const Tensor& img, int classes, int modes) {
  check_cm(classes, modes);
  double best = std::numeric_limits<double>::infinity();
  std::pair<int, int> arg{0, 0};
  for (int c = 0; c < classes; ++c)
    for (int m = 0; m < modes; ++m) {
      Tensor proto = shape_prototype(c, m);
      if (!proto.same_shape(img)) fail(ErrorKind::Shape, "image shape is not 1x24x24");
      double d = 0.0;
      for (int64_t i = 0; i < img.numel(); ++i) d += (img[i] - proto[i]) * (img[i] - proto[i]);
      if (d < best) {
        best = d;
        arg = {c, m};
      }
    }
  return arg;
}

}  // namespace clusdiff
