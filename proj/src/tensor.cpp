#include "tensor.hpp"

#include <cmath>
#include <sstream>

namespace clusdiff {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) {
    if (e < 0) fail(ErrorKind::Shape, "tensor extents must be non-negative, got " + shape_to_string(shape));
    n *= e;
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(size_t(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != int64_t(data_.size()))
    fail(ErrorKind::Shape, "data length " + std::to_string(data_.size()) +
                               " does not match shape " + shape_to_string(shape_));
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(size_t(shape_numel(shape_)), fill) {}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = rng.normal();
  return t;
}

Tensor Tensor::uniform(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::vec(std::vector<double> v) {
  std::vector<int> shape{int(v.size())};
  return Tensor(std::move(shape), std::move(v));
}

int Tensor::extent(int axis) const {
  if (axis < 0 || axis >= rank()) fail(ErrorKind::Range, "axis " + std::to_string(axis) + " out of range for " + shape_str());
  return shape_[size_t(axis)];
}

double& Tensor::at(int i) {
  if (rank() != 1) fail(ErrorKind::Shape, "at(i) on tensor of rank " + std::to_string(rank()));
  return data_[size_t(i)];
}

double& Tensor::at(int i, int j) {
  if (rank() != 2) fail(ErrorKind::Shape, "at(i,j) on tensor of rank " + std::to_string(rank()));
  return data_[size_t(i) * size_t(shape_[1]) + size_t(j)];
}

double& Tensor::at(int i, int j, int k) {
  if (rank() != 3) fail(ErrorKind::Shape, "at(i,j,k) on tensor of rank " + std::to_string(rank()));
  return data_[(size_t(i) * size_t(shape_[1]) + size_t(j)) * size_t(shape_[2]) + size_t(k)];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != numel())
    fail(ErrorKind::Shape, "reshape " + shape_str() + " -> " + shape_to_string(shape) + " changes element count");
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite()) fail(ErrorKind::Numeric, "non-finite values in " + what);
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

}  // namespace clusdiff
