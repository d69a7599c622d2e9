#pragma once

// Layers with explicit forward/backward passes. Each layer caches what its
// backward pass needs from the most recent forward call; backward() returns
// the input gradient and accumulates parameter gradients.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "uavgeo/tensor.hpp"

namespace uavgeo::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;  ///< subject to weight decay

  void zero_grad() { grad.fill(0.0); }
};

/// Parameters and persistent buffers (running statistics) of a layer tree.
struct StateRefs {
  std::vector<Parameter*> params;
  std::vector<std::pair<std::string, Tensor*>> buffers;
};

enum class Mode { Train, Eval };

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias, std::string name);

  void init_kaiming(std::mt19937_64& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(StateRefs& refs);

  int out_channels() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  void im2col(const Tensor& x, std::vector<double>& col) const;

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  Parameter weight_;  // out x (in*k*k)
  Parameter bias_;    // out
  Tensor input_;
  int out_h_ = 0, out_w_ = 0;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(int channels, std::string name, double momentum = 0.1, double eps = 1e-5);

  /// Works on N x C x H x W; statistics are per channel over N, H and W.
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  void collect(StateRefs& refs);

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  int channels_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
  std::string name_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  Mode last_mode_ = Mode::Eval;
};

class Relu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor output_;
};

/// 3x3, stride 2, padding 1 max pooling.
class MaxPool {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  std::vector<std::size_t> argmax_;
  int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
};

/// y = x W^T + b on N x in matrices.
class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, std::string name);

  void init_normal(std::mt19937_64& rng, double stddev);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(StateRefs& refs);

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_ = 0, out_ = 0;
  Parameter weight_;  // out x in
  Parameter bias_;    // out
  Tensor input_;
};

/// ResNet bottleneck: 1x1 -> 3x3(stride) -> 1x1(x4), identity or projected shortcut.
class Bottleneck {
 public:
  static constexpr int kExpansion = 4;

  Bottleneck(int in_channels, int width, int stride, const std::string& name);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  void collect(StateRefs& refs);

  int out_channels() const { return width_ * kExpansion; }

 private:
  int width_;
  Conv2d conv1_, conv2_, conv3_;
  BatchNorm bn1_, bn2_, bn3_;
  Relu relu1_, relu2_, relu_out_;
  bool project_;
  Conv2d down_conv_;
  BatchNorm down_bn_;
};

}  // namespace uavgeo::nn
