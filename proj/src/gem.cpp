#include "uavgeo/gem.hpp"

#include <algorithm>
#include <cmath>

#include "uavgeo/error.hpp"

namespace uavgeo::nn {

Region region_from_box(int height, int width, const geometry::RegionBox& box) {
  (void)height;
  Region r;
  for (int y = box.row_start; y < box.row_end; ++y) {
    for (int x = box.col_start; x < box.col_end; ++x) r.push_back(y * width + x);
  }
  return r;
}

Region region_from_mask(const std::vector<bool>& mask) {
  Region r;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) r.push_back(static_cast<int>(i));
  }
  return r;
}

Region full_region(int height, int width) {
  Region r(static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<int>(i);
  return r;
}

namespace {

void check(const Tensor& fm, const Region& region, double p) {
  if (region.empty()) throw Error("gem pooling over an empty region");
  if (!(p >= 1.0)) throw Error("gem exponent must be >= 1");
  const int cells = fm.h() * fm.w();
  for (int idx : region) {
    if (idx < 0 || idx >= cells) throw Error("gem region index out of range");
  }
}

double clamp_eps(double v) { return std::max(v, kGemEps); }

}  // namespace

// Values are scaled by the region maximum before the power so that large p cannot overflow.
Tensor gem_pool(const Tensor& fm, const Region& region, double p) {
  check(fm, region, p);
  Tensor out = Tensor::matrix(fm.n(), fm.c());
  const double inv_count = 1.0 / static_cast<double>(region.size());
  for (int n = 0; n < fm.n(); ++n) {
    for (int c = 0; c < fm.c(); ++c) {
      const double* x = fm.channel(n, c);
      if (p == 1.0) {
        double sum = 0;
        for (int idx : region) sum += clamp_eps(x[idx]);
        out(n, c, 0, 0) = sum * inv_count;
        continue;
      }
      double peak = kGemEps;
      for (int idx : region) peak = std::max(peak, x[idx]);
      double acc = 0;
      for (int idx : region) acc += std::pow(clamp_eps(x[idx]) / peak, p);
      out(n, c, 0, 0) = peak * std::pow(acc * inv_count, 1.0 / p);
    }
  }
  return out;
}

Tensor gem_pool_backward(const Tensor& fm, const Region& region, double p, const Tensor& pooled, const Tensor& dy) {
  Tensor dx(fm.n(), fm.c(), fm.h(), fm.w());
  const double inv_count = 1.0 / static_cast<double>(region.size());
  for (int n = 0; n < fm.n(); ++n) {
    for (int c = 0; c < fm.c(); ++c) {
      const double* x = fm.channel(n, c);
      double* d = dx.channel(n, c);
      const double g = dy(n, c, 0, 0);
      const double f = pooled(n, c, 0, 0);
      // df/dx_i = (x_i / f)^(p-1) / |R|
      for (int idx : region) {
        if (x[idx] < kGemEps) continue;
        d[idx] += g * std::pow(x[idx] / f, p - 1.0) * inv_count;
      }
    }
  }
  return dx;
}

double gem_pool_grad_p(const Tensor& fm, const Region& region, double p, const Tensor& pooled, const Tensor& dy) {
  // ln f = (1/p) ln m,  m = mean(x^p)
  // d ln f / dp = -ln m / p^2 + mean(x^p ln x) / (p m)
  const double inv_count = 1.0 / static_cast<double>(region.size());
  double total = 0;
  for (int n = 0; n < fm.n(); ++n) {
    for (int c = 0; c < fm.c(); ++c) {
      const double* x = fm.channel(n, c);
      const double f = pooled(n, c, 0, 0);
      double ratio_mean = 0, log_term = 0;
      for (int idx : region) {
        const double v = clamp_eps(x[idx]);
        const double r = std::pow(v / f, p);  // x^p / f^p, so mean(r) == 1
        ratio_mean += r * inv_count;
        log_term += r * std::log(v) * inv_count;
      }
      const double log_m = p * std::log(f) + std::log(ratio_mean);
      const double dlogf = -log_m / (p * p) + log_term / (p * ratio_mean);
      total += dy(n, c, 0, 0) * f * dlogf;
    }
  }
  return total;
}

GemPool::GemPool(double p, bool learnable, std::string name) : learnable_(learnable) {
  p_.name = std::move(name) + ".p";
  p_.value = Tensor(1, 1, 1, 1, p);
  p_.grad = Tensor(1, 1, 1, 1, 0.0);
  p_.decay = false;
}

Tensor GemPool::forward(const Tensor& fm, const Region& region) {
  input_ = fm;
  region_ = region;
  output_ = gem_pool(fm, region, p());
  return output_;
}

Tensor GemPool::backward(const Tensor& dy) {
  if (learnable_) p_.grad[0] += gem_pool_grad_p(input_, region_, p(), output_, dy);
  return gem_pool_backward(input_, region_, p(), output_, dy);
}

void GemPool::collect(StateRefs& refs) {
  // The exponent is checkpointed either way; it only receives updates when learnable.
  if (learnable_) {
    refs.params.push_back(&p_);
  } else {
    refs.buffers.emplace_back(p_.name, &p_.value);
  }
}

}  // namespace uavgeo::nn
