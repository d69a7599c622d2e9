#include "uavgeo/hab.hpp"

#include <cmath>

#include "uavgeo/error.hpp"

namespace uavgeo::nn {

Hab::Hab(geometry::PartitionSpec spec, std::string name)
    : spec_(spec), conv_(2, 1, 5, 1, 2, true, name + ".conv"), bn_(1, name + ".bn") {
  spec_.validate();
}

void Hab::init(std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 0.01);
  for (auto& v : conv_.weight().value.values()) v = dist(rng);
  conv_.bias().value.fill(0.0);
  bn_.gamma().value.fill(0.1);
  bn_.beta().value.fill(0.0);
}

Tensor Hab::forward(const Tensor& fm, Mode mode) {
  box_ = geometry::center_box(fm.h(), fm.w(), spec_);
  input_ = fm;
  const int N = fm.n(), C = fm.c(), H = fm.h(), W = fm.w();
  const std::size_t plane = fm.plane();

  stacked_ = Tensor(N, 2, H, W);
  argmax_.assign(static_cast<std::size_t>(N) * box_.area(), 0);
  for (int n = 0; n < N; ++n) {
    double* mean = stacked_.channel(n, 0);
    for (int c = 0; c < C; ++c) {
      const double* src = fm.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) mean[i] += src[i];
    }
    for (std::size_t i = 0; i < plane; ++i) mean[i] /= C;

    double* cmax = stacked_.channel(n, 1);
    int k = 0;
    for (int y = box_.row_start; y < box_.row_end; ++y) {
      for (int x = box_.col_start; x < box_.col_end; ++x, ++k) {
        const int cell = y * W + x;
        int best_c = 0;
        double best = fm.channel(n, 0)[cell];
        for (int c = 1; c < C; ++c) {
          const double v = fm.channel(n, c)[cell];
          if (v > best) {
            best = v;
            best_c = c;
          }
        }
        cmax[cell] = best;
        argmax_[static_cast<std::size_t>(n) * box_.area() + k] = best_c;
      }
    }
  }

  Tensor z = bn_.forward(conv_.forward(stacked_), mode);
  attention_ = Tensor(N, 1, H, W);
  for (std::size_t i = 0; i < z.size(); ++i) attention_[i] = 1.0 / (1.0 + std::exp(-z[i]));

  Tensor out(N, C, H, W);
  for (int n = 0; n < N; ++n) {
    const double* a = attention_.channel(n, 0);
    for (int c = 0; c < C; ++c) {
      const double* src = fm.channel(n, c);
      double* dst = out.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * a[i];
    }
  }
  return out;
}

Tensor Hab::backward(const Tensor& dy) {
  const Tensor& fm = input_;
  const int N = fm.n(), C = fm.c(), W = fm.w();
  const std::size_t plane = fm.plane();

  Tensor dx(N, C, fm.h(), W);
  Tensor dz(N, 1, fm.h(), W);
  for (int n = 0; n < N; ++n) {
    const double* a = attention_.channel(n, 0);
    double* gz = dz.channel(n, 0);
    for (int c = 0; c < C; ++c) {
      const double* g = dy.channel(n, c);
      const double* src = fm.channel(n, c);
      double* d = dx.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        d[i] = g[i] * a[i];
        gz[i] += g[i] * src[i];
      }
    }
    for (std::size_t i = 0; i < plane; ++i) gz[i] *= a[i] * (1.0 - a[i]);
  }

  const Tensor dstack = conv_.backward(bn_.backward(dz));
  for (int n = 0; n < N; ++n) {
    const double* gmean = dstack.channel(n, 0);
    for (int c = 0; c < C; ++c) {
      double* d = dx.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) d[i] += gmean[i] / C;
    }
    const double* gmax = dstack.channel(n, 1);
    int k = 0;
    for (int y = box_.row_start; y < box_.row_end; ++y) {
      for (int x = box_.col_start; x < box_.col_end; ++x, ++k) {
        const int cell = y * W + x;
        const int c = argmax_[static_cast<std::size_t>(n) * box_.area() + k];
        dx.channel(n, c)[cell] += gmax[cell];
      }
    }
  }
  return dx;
}

void Hab::collect(StateRefs& refs) {
  conv_.collect(refs);
  bn_.collect(refs);
}

}  // namespace uavgeo::nn
