#include "uavgeo/optimizer.hpp"

#include <cmath>

namespace uavgeo::optim {

double step_lr(const SgdOptions& options, int epoch) {
  return options.lr * std::pow(options.step_gamma, epoch / options.step_epochs);
}

void Sgd::step(const std::vector<nn::Parameter*>& params, double lr) {
  for (nn::Parameter* p : params) {
    auto [it, inserted] = velocity_.try_emplace(p, Tensor(p->value.n(), p->value.c(), p->value.h(), p->value.w()));
    Tensor& v = it->second;
    const double wd = p->decay ? options_.weight_decay : 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = options_.momentum * v[i] + p->grad[i] + wd * p->value[i];
      p->value[i] -= lr * v[i];
    }
  }
}

}  // namespace uavgeo::optim
