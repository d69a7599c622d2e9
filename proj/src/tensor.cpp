#include "uavgeo/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "uavgeo/error.hpp"

namespace uavgeo {

Tensor::Tensor(int n, int c, int h, int w, double fill) : n_(n), c_(c), h_(h), w_(w) {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw Error("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_string() const {
  return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) throw Error("tensor shape mismatch: " + shape_string() + " vs " + o.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::axpy(double a, const Tensor& x) {
  if (!same_shape(x)) throw Error("tensor shape mismatch: " + shape_string() + " vs " + x.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::slice_batch(int begin, int end) const {
  if (begin < 0 || end > n_ || begin > end) throw Error("batch slice out of range");
  Tensor out(end - begin, c_, h_, w_);
  std::copy(sample(begin), sample(begin) + (end - begin) * sample_size(), out.data());
  return out;
}

Tensor Tensor::concat_batch(const Tensor& a, const Tensor& b) {
  if (a.c_ != b.c_ || a.h_ != b.h_ || a.w_ != b.w_) throw Error("concat shape mismatch");
  Tensor out(a.n_ + b.n_, a.c_, a.h_, a.w_);
  std::copy(a.data_.begin(), a.data_.end(), out.data());
  std::copy(b.data_.begin(), b.data_.end(), out.data() + a.size());
  return out;
}

}  // namespace uavgeo
