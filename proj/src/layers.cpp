#include "uavgeo/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "uavgeo/error.hpp"

namespace uavgeo::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;

Parameter make_param(std::string name, int n, int c, int h, int w, double fill, bool decay = true) {
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(n, c, h, w, fill);
  p.grad = Tensor(n, c, h, w, 0.0);
  p.decay = decay;
  return p;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias, std::string name)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding), has_bias_(bias) {
  weight_ = make_param(name + ".weight", out_, in_ * k_ * k_, 1, 1, 0.0);
  if (has_bias_) bias_ = make_param(name + ".bias", out_, 1, 1, 1, 0.0, false);
}

void Conv2d::init_kaiming(std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (out_ * k_ * k_)));
  for (auto& v : weight_.value.values()) v = dist(rng);
  if (has_bias_) bias_.value.fill(0.0);
}

void Conv2d::im2col(const Tensor& x, std::vector<double>& col) const {
  const int n_batch = x.n(), h = x.h(), w = x.w();
  const std::size_t P = static_cast<std::size_t>(out_h_) * out_w_;
  const std::size_t NP = P * n_batch;
  col.assign(static_cast<std::size_t>(in_) * k_ * k_ * NP, 0.0);
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        double* row = col.data() + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * NP;
        for (int n = 0; n < n_batch; ++n) {
          const double* src = x.channel(n, ci);
          double* dst = row + n * P;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) dst[oy * out_w_ + ox] = src[iy * w + ix];
            }
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c() != in_) throw Error(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " + std::to_string(x.c()));
  out_h_ = (x.h() + 2 * pad_ - k_) / stride_ + 1;
  out_w_ = (x.w() + 2 * pad_ - k_) / stride_ + 1;
  if (out_h_ <= 0 || out_w_ <= 0) throw Error(weight_.name + ": input " + x.shape_string() + " too small");
  input_ = x;

  const std::size_t P = static_cast<std::size_t>(out_h_) * out_w_;
  const std::size_t NP = P * x.n();
  const int K = in_ * k_ * k_;
  std::vector<double> col;
  im2col(x, col);
  RowMat y = ConstMapRow(weight_.value.data(), out_, K) * ConstMapRow(col.data(), K, NP);

  Tensor out(x.n(), out_, out_h_, out_w_);
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < out_; ++o) {
      const double b = has_bias_ ? bias_.value[o] : 0.0;
      const double* src = y.data() + o * NP + n * P;
      double* dst = out.channel(n, o);
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + b;
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = input_;
  const std::size_t P = static_cast<std::size_t>(out_h_) * out_w_;
  const std::size_t NP = P * x.n();
  const int K = in_ * k_ * k_;

  RowMat g(out_, NP);
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < out_; ++o) {
      const double* src = dy.channel(n, o);
      std::copy(src, src + P, g.data() + o * NP + n * P);
    }
  }
  if (has_bias_) {
    for (int o = 0; o < out_; ++o) bias_.grad[o] += g.row(o).sum();
  }

  std::vector<double> col;
  im2col(x, col);
  ConstMapRow colm(col.data(), K, NP);
  MapRow(weight_.grad.data(), out_, K).noalias() += g * colm.transpose();
  RowMat dcol = ConstMapRow(weight_.value.data(), out_, K).transpose() * g;

  Tensor dx(x.n(), x.c(), x.h(), x.w());
  const int h = x.h(), w = x.w();
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const double* row = dcol.data() + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * NP;
        for (int n = 0; n < x.n(); ++n) {
          double* dst = dx.channel(n, ci);
          const double* src = row + n * P;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) dst[iy * w + ix] += src[oy * out_w_ + ox];
            }
          }
        }
      }
    }
  }
  return dx;
}

void Conv2d::collect(StateRefs& refs) {
  refs.params.push_back(&weight_);
  if (has_bias_) refs.params.push_back(&bias_);
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, std::string name, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps), name_(std::move(name)) {
  gamma_ = make_param(name_ + ".weight", channels, 1, 1, 1, 1.0, false);
  beta_ = make_param(name_ + ".bias", channels, 1, 1, 1, 0.0, false);
  running_mean_ = Tensor(channels, 1, 1, 1, 0.0);
  running_var_ = Tensor(channels, 1, 1, 1, 1.0);
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  if (x.c() != channels_) throw Error(name_ + ": channel mismatch");
  last_mode_ = mode;
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(plane) * x.n();
  xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(channels_, 0.0);
  Tensor out(x.n(), x.c(), x.h(), x.w());

  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.channel(n, c);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / count;
      double sq = 0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.channel(n, c);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / count;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1 - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma_.value[c], b = beta_.value[c];
    for (int n = 0; n < x.n(); ++n) {
      const double* p = x.channel(n, c);
      double* xh = xhat_.channel(n, c);
      double* o = out.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mean) * inv;
        o[i] = g * xh[i] + b;
      }
    }
  }
  return out;
}

Tensor BatchNorm::backward(const Tensor& dy) {
  const std::size_t plane = dy.plane();
  const double count = static_cast<double>(plane) * dy.n();
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (int n = 0; n < dy.n(); ++n) {
      const double* g = dy.channel(n, c);
      const double* xh = xhat_.channel(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * xh[i];
      }
    }
    gamma_.grad[c] += sum_dy_xhat;
    beta_.grad[c] += sum_dy;
    const double gscale = gamma_.value[c] * inv_std_[c];
    for (int n = 0; n < dy.n(); ++n) {
      const double* g = dy.channel(n, c);
      const double* xh = xhat_.channel(n, c);
      double* d = dx.channel(n, c);
      if (last_mode_ == Mode::Train) {
        for (std::size_t i = 0; i < plane; ++i) {
          d[i] = gscale * (g[i] - sum_dy / count - xh[i] * sum_dy_xhat / count);
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) d[i] = gscale * g[i];
      }
    }
  }
  return dx;
}

void BatchNorm::collect(StateRefs& refs) {
  refs.params.push_back(&gamma_);
  refs.params.push_back(&beta_);
  refs.buffers.emplace_back(name_ + ".running_mean", &running_mean_);
  refs.buffers.emplace_back(name_ + ".running_var", &running_var_);
}

// ---------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& x) {
  output_ = x;
  for (auto& v : output_.values()) v = v > 0 ? v : 0.0;
  return output_;
}

Tensor Relu::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (output_[i] <= 0) dx[i] = 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------- MaxPool

Tensor MaxPool::forward(const Tensor& x) {
  in_n_ = x.n(); in_c_ = x.c(); in_h_ = x.h(); in_w_ = x.w();
  const int oh = (x.h() - 1) / 2 + 1;
  const int ow = (x.w() - 1) / 2 + 1;
  Tensor out(x.n(), x.c(), oh, ow);
  argmax_.assign(out.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.channel(n, c);
      const std::size_t base = src - x.data();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = 0;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * 2 - 1 + ky;
            if (iy < 0 || iy >= x.h()) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * 2 - 1 + kx;
              if (ix < 0 || ix >= x.w()) continue;
              const double v = src[iy * x.w() + ix];
              if (v > best) {
                best = v;
                arg = base + iy * x.w() + ix;
              }
            }
          }
          out[o] = best;
          argmax_[o] = arg;
        }
      }
    }
  }
  return out;
}

Tensor MaxPool::backward(const Tensor& dy) const {
  Tensor dx(in_n_, in_c_, in_h_, in_w_);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features, std::string name) : in_(in_features), out_(out_features) {
  weight_ = make_param(name + ".weight", out_, in_, 1, 1, 0.0);
  bias_ = make_param(name + ".bias", out_, 1, 1, 1, 0.0, false);
}

void Linear::init_normal(std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : weight_.value.values()) v = dist(rng);
  bias_.value.fill(0.0);
}

Tensor Linear::forward(const Tensor& x) {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw Error(weight_.name + ": dimension mismatch, expected " + std::to_string(in_) + " got " + std::to_string(x.sample_size()));
  }
  input_ = x;
  Tensor out = Tensor::matrix(x.n(), out_);
  MapRow y(out.data(), x.n(), out_);
  y.noalias() = ConstMapRow(x.data(), x.n(), in_) * ConstMapRow(weight_.value.data(), out_, in_).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
  return out;
}

Tensor Linear::backward(const Tensor& dy) {
  const int n = input_.n();
  ConstMapRow g(dy.data(), n, out_);
  MapRow(weight_.grad.data(), out_, in_).noalias() += g.transpose() * ConstMapRow(input_.data(), n, in_);
  Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), out_) += g.colwise().sum();
  Tensor dx(input_.n(), input_.c(), input_.h(), input_.w());
  MapRow(dx.data(), n, in_).noalias() = g * ConstMapRow(weight_.value.data(), out_, in_);
  return dx;
}

void Linear::collect(StateRefs& refs) {
  refs.params.push_back(&weight_);
  refs.params.push_back(&bias_);
}

// ---------------------------------------------------------------- Bottleneck

Bottleneck::Bottleneck(int in_channels, int width, int stride, const std::string& name)
    : width_(width),
      conv1_(in_channels, width, 1, 1, 0, false, name + ".conv1"),
      conv2_(width, width, 3, stride, 1, false, name + ".conv2"),
      conv3_(width, width * kExpansion, 1, 1, 0, false, name + ".conv3"),
      bn1_(width, name + ".bn1"),
      bn2_(width, name + ".bn2"),
      bn3_(width * kExpansion, name + ".bn3"),
      project_(stride != 1 || in_channels != width * kExpansion) {
  if (project_) {
    down_conv_ = Conv2d(in_channels, width * kExpansion, 1, stride, 0, false, name + ".downsample.0");
    down_bn_ = BatchNorm(width * kExpansion, name + ".downsample.1");
  }
}

void Bottleneck::init(std::mt19937_64& rng) {
  conv1_.init_kaiming(rng);
  conv2_.init_kaiming(rng);
  conv3_.init_kaiming(rng);
  if (project_) down_conv_.init_kaiming(rng);
}

Tensor Bottleneck::forward(const Tensor& x, Mode mode) {
  Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x), mode));
  h = relu2_.forward(bn2_.forward(conv2_.forward(h), mode));
  h = bn3_.forward(conv3_.forward(h), mode);
  if (project_) {
    h += down_bn_.forward(down_conv_.forward(x), mode);
  } else {
    h += x;
  }
  return relu_out_.forward(h);
}

Tensor Bottleneck::backward(const Tensor& dy) {
  const Tensor g = relu_out_.backward(dy);
  Tensor t = relu2_.backward(conv3_.backward(bn3_.backward(g)));
  t = relu1_.backward(conv2_.backward(bn2_.backward(t)));
  Tensor dx = conv1_.backward(bn1_.backward(t));
  if (project_) {
    dx += down_conv_.backward(down_bn_.backward(g));
  } else {
    dx += g;
  }
  return dx;
}

void Bottleneck::collect(StateRefs& refs) {
  conv1_.collect(refs);
  bn1_.collect(refs);
  conv2_.collect(refs);
  bn2_.collect(refs);
  conv3_.collect(refs);
  bn3_.collect(refs);
  if (project_) {
    down_conv_.collect(refs);
    down_bn_.collect(refs);
  }
}

}  // namespace uavgeo::nn
