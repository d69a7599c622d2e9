#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace uavgeo {

/// Dense NCHW tensor of doubles. Matrices are stored as (rows, cols, 1, 1).
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  static Tensor matrix(int rows, int cols, double fill = 0.0) { return Tensor(rows, cols, 1, 1, fill); }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  std::string shape_string() const;

  std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }

  double& operator()(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double operator()(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* sample(int n) { return data_.data() + n * sample_size(); }
  const double* sample(int n) const { return data_.data() + n * sample_size(); }
  double* channel(int n, int c) { return sample(n) + c * plane(); }
  const double* channel(int n, int c) const { return sample(n) + c * plane(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  Tensor& operator+=(const Tensor& o);
  /// this += a * x
  Tensor& axpy(double a, const Tensor& x);
  bool all_finite() const;

  /// Rows [begin, end) along the batch axis.
  Tensor slice_batch(int begin, int end) const;
  static Tensor concat_batch(const Tensor& a, const Tensor& b);

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + h) * w_ + w;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

}  // namespace uavgeo
