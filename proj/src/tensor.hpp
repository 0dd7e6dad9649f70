#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace clusdiff {

/// Dense row-major n-d array of doubles. product(shape) == data.size()
/// always holds; ops that could violate it throw instead.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);
  Tensor(std::vector<int> shape, double fill);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor randn(std::vector<int> shape, Rng& rng);
  static Tensor uniform(std::vector<int> shape, Rng& rng, double lo, double hi);
  /// Rank-1 convenience.
  static Tensor vec(std::vector<double> v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int extent(int axis) const;
  int64_t numel() const { return int64_t(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec_data() { return data_; }
  const std::vector<double>& vec_data() const { return data_; }

  double& operator[](int64_t i) { return data_[size_t(i)]; }
  double operator[](int64_t i) const { return data_[size_t(i)]; }

  // Rank-checked element access for the common ranks.
  double& at(int i);
  double& at(int i, int j);
  double& at(int i, int j, int k);
  double at(int i) const { return const_cast<Tensor*>(this)->at(i); }
  double at(int i, int j) const { return const_cast<Tensor*>(this)->at(i, j); }
  double at(int i, int j, int k) const { return const_cast<Tensor*>(this)->at(i, j, k); }

  Tensor reshaped(std::vector<int> shape) const;

  bool all_finite() const;
  void require_finite(const std::string& what) const;

  void fill(double v);
  double max_abs() const;
  double sum() const;

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

}  // namespace clusdiff
