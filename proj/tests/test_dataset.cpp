#include <doctest.h>

#include <cmath>

#include "dataset.hpp"
#include "error.hpp"

using namespace clusdiff;

TEST_CASE("shapes dataset is deterministic and correctly sized") {
  ShapesDataset a = make_shapes_dataset(3, 3, 5, 42);
  ShapesDataset b = make_shapes_dataset(3, 3, 5, 42);
  REQUIRE(a.images.size() == 45);
  CHECK(a.class_ids.size() == 45);
  CHECK(a.mode_ids.size() == 45);
  CHECK(a.class_names == std::vector<std::string>{"disk", "square", "cross"});
  for (size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i] == b.images[i]);
    CHECK(a.class_ids[i] == b.class_ids[i]);
    CHECK(a.mode_ids[i] == b.mode_ids[i]);
  }
  ShapesDataset c = make_shapes_dataset(3, 3, 5, 43);
  bool any_diff = false;
  for (size_t i = 0; i < c.images.size() && !any_diff; ++i)
    any_diff = !(c.images[i] == a.images[i]);
  CHECK(any_diff);
}

TEST_CASE("prototypes follow the mode tables") {
  // mode picks (offset, intensity) rows: (-5,-5)@0.4, (0,0)@0.7, (5,5)@1.0
  Tensor p0 = shape_prototype(0, 0);
  Tensor p1 = shape_prototype(0, 1);
  Tensor p2 = shape_prototype(0, 2);
  CHECK(p0.at(0, 6, 6) == 0.4);    // disk center shifted to (6.5, 6.5)
  CHECK(p1.at(0, 11, 11) == 0.7);  // centered
  CHECK(p2.at(0, 17, 17) == 1.0);  // shifted to (16.5, 16.5)
  CHECK(p1.at(0, 0, 0) == 0.0);    // background stays empty
  // intensity shows up as the max pixel
  CHECK(p0.max_abs() == 0.4);
  CHECK(p1.max_abs() == 0.7);
  CHECK(p2.max_abs() == 1.0);
  // all six shapes render nonempty at every mode
  for (int c = 0; c < 6; ++c)
    for (int m = 0; m < 3; ++m) CHECK(shape_prototype(c, m).max_abs() > 0.0);
}

TEST_CASE("noise stays within amplitude and images stay near prototypes") {
  ShapesDataset ds = make_shapes_dataset(2, 2, 3, 7);
  for (size_t i = 0; i < ds.images.size(); ++i) {
    Tensor proto = shape_prototype(ds.class_ids[i], ds.mode_ids[i]);
    double worst = 0.0;
    for (int64_t j = 0; j < proto.numel(); ++j)
      worst = std::max(worst, std::fabs(ds.images[i][j] - proto[j]));
    CHECK(worst <= 0.02);
    CHECK(worst > 0.0);
  }
}

TEST_CASE("planted modes are recoverable by nearest prototype") {
  ShapesDataset ds = make_shapes_dataset(3, 3, 20, 11);
  int hit = 0;
  for (size_t i = 0; i < ds.images.size(); ++i) {
    auto [c, m] = nearest_prototype(ds.images[i], 3, 3);
    if (c == ds.class_ids[i] && m == ds.mode_ids[i]) ++hit;
  }
  CHECK(double(hit) / double(ds.images.size()) >= 0.99);
}

TEST_CASE("dataset config validation") {
  CHECK_THROWS_AS(make_shapes_dataset(0, 3, 5, 0), Error);
  CHECK_THROWS_AS(make_shapes_dataset(7, 3, 5, 0), Error);
  CHECK_THROWS_AS(make_shapes_dataset(3, 0, 5, 0), Error);
  CHECK_THROWS_AS(make_shapes_dataset(3, 4, 5, 0), Error);
  CHECK_THROWS_AS(make_shapes_dataset(3, 3, 0, 0), Error);
  try {
    make_shapes_dataset(7, 3, 5, 0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}
