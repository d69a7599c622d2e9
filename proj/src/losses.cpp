#include "uavgeo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "uavgeo/error.hpp"

namespace uavgeo::loss {

void LossWeights::validate() const {
  for (double w : {w_center, w_ce, w_dc, lambda_dc}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
}

namespace {

void check_labels(const std::vector<int>& labels, int n, int num_classes) {
  if (static_cast<int>(labels.size()) != n) throw Error("label count does not match batch size");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw Error("label " + std::to_string(y) + " out of range [0," + std::to_string(num_classes) + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------- centre loss

void ClassCenters::update(const Tensor& features, const std::vector<int>& labels, double alpha) {
  check_labels(labels, features.n(), num_classes());
  const int D = dim();
  Tensor delta = Tensor::matrix(num_classes(), D);
  std::vector<int> counts(num_classes(), 0);
  for (int n = 0; n < features.n(); ++n) {
    const int y = labels[n];
    ++counts[y];
    const double* x = features.sample(n);
    const double* c = centers.sample(y);
    double* d = delta.sample(y);
    for (int k = 0; k < D; ++k) d[k] += c[k] - x[k];
  }
  for (int j = 0; j < num_classes(); ++j) {
    if (counts[j] == 0) continue;
    const double scale = alpha / (1.0 + counts[j]);
    double* c = centers.sample(j);
    const double* d = delta.sample(j);
    for (int k = 0; k < D; ++k) c[k] -= scale * d[k];
  }
}

LossGrad center_loss(const Tensor& features, const std::vector<int>& labels, const ClassCenters& centers, double gamma) {
  check_labels(labels, features.n(), centers.num_classes());
  if (static_cast<int>(features.sample_size()) != centers.dim()) throw Error("centre dimension mismatch");
  LossGrad out{0.0, Tensor(features.n(), features.c(), features.h(), features.w())};
  const std::size_t D = features.sample_size();
  double sum = 0;
  for (int n = 0; n < features.n(); ++n) {
    const double* x = features.sample(n);
    const double* c = centers.centers.sample(labels[n]);
    double* g = out.grad.sample(n);
    for (std::size_t k = 0; k < D; ++k) {
      const double diff = x[k] - c[k];
      sum += diff * diff;
      g[k] = gamma * diff;
    }
  }
  out.value = 0.5 * gamma * sum;
  return out;
}

// ---------------------------------------------------------------- cross-entropy

Tensor softmax(const Tensor& logits) {
  const int N = logits.n();
  const int C = static_cast<int>(logits.sample_size());
  Tensor p = Tensor::matrix(N, C);
  for (int n = 0; n < N; ++n) {
    const double* z = logits.sample(n);
    double* q = p.sample(n);
    const double peak = *std::max_element(z, z + C);
    double sum = 0;
    for (int k = 0; k < C; ++k) sum += (q[k] = std::exp(z[k] - peak));
    for (int k = 0; k < C; ++k) q[k] /= sum;
  }
  return p;
}

LossGrad cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int N = logits.n();
  const int C = static_cast<int>(logits.sample_size());
  check_labels(labels, N, C);
  if (N == 0) throw Error("empty batch");
  LossGrad out{0.0, Tensor::matrix(N, C)};
  double sum = 0;
  for (int n = 0; n < N; ++n) {
    const double* z = logits.sample(n);
    const double peak = *std::max_element(z, z + C);
    double norm = 0;
    for (int k = 0; k < C; ++k) norm += std::exp(z[k] - peak);
    const double log_norm = peak + std::log(norm);
    sum += log_norm - z[labels[n]];
    double* g = out.grad.sample(n);
    for (int k = 0; k < C; ++k) g[k] = std::exp(z[k] - log_norm) / N;
    g[labels[n]] -= 1.0 / N;
  }
  out.value = sum / N;
  return out;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& d_probs) {
  const int N = probs.n();
  const int C = static_cast<int>(probs.sample_size());
  Tensor dz = Tensor::matrix(N, C);
  for (int n = 0; n < N; ++n) {
    const double* p = probs.sample(n);
    const double* g = d_probs.sample(n);
    double dot = 0;
    for (int k = 0; k < C; ++k) dot += p[k] * g[k];
    double* d = dz.sample(n);
    for (int k = 0; k < C; ++k) d[k] = p[k] * (g[k] - dot);
  }
  return dz;
}

// ---------------------------------------------------------------- correlation

CorrelationMatrix correlation_matrix(const Tensor& probs) {
  const int N = probs.n();
  const int C = static_cast<int>(probs.sample_size());
  if (N < 2) throw Error("batch too small for correlation");
  for (int n = 0; n < N; ++n) {
    const double* p = probs.sample(n);
    double sum = 0;
    for (int k = 0; k < C; ++k) {
      if (!(p[k] >= 0.0)) throw Error("probabilities must be non-negative (row " + std::to_string(n) + ")");
      sum += p[k];
    }
    if (std::abs(sum - 1.0) > 1e-5) throw Error("probability row " + std::to_string(n) + " does not sum to 1");
  }

  CorrelationMatrix out;
  out.normalized = Tensor::matrix(N, C);
  out.inv_std.assign(C, 0.0);
  for (int k = 0; k < C; ++k) {
    double mean = 0;
    for (int n = 0; n < N; ++n) mean += probs(n, k, 0, 0);
    mean /= N;
    double var = 0;
    for (int n = 0; n < N; ++n) var += (probs(n, k, 0, 0) - mean) * (probs(n, k, 0, 0) - mean);
    var /= N;
    if (var < kCorrelationEps) continue;
    const double inv = 1.0 / std::sqrt(var);
    out.inv_std[k] = inv;
    for (int n = 0; n < N; ++n) out.normalized(n, k, 0, 0) = (probs(n, k, 0, 0) - mean) * inv;
  }

  out.S = Tensor::matrix(C, C);
  for (int i = 0; i < C; ++i) {
    for (int j = i; j < C; ++j) {
      double acc = 0;
      for (int n = 0; n < N; ++n) acc += out.normalized(n, i, 0, 0) * out.normalized(n, j, 0, 0);
      out.S(i, j, 0, 0) = out.S(j, i, 0, 0) = acc / N;
    }
  }
  return out;
}

Tensor correlation_backward(const CorrelationMatrix& corr, const Tensor& dS) {
  const Tensor& Z = corr.normalized;
  const int N = Z.n();
  const int C = static_cast<int>(Z.sample_size());
  // dL/dZ = Z (dS + dS^T) / N
  Tensor dZ = Tensor::matrix(N, C);
  for (int n = 0; n < N; ++n) {
    for (int j = 0; j < C; ++j) {
      double acc = 0;
      for (int i = 0; i < C; ++i) acc += Z(n, i, 0, 0) * (dS(i, j, 0, 0) + dS(j, i, 0, 0));
      dZ(n, j, 0, 0) = acc / N;
    }
  }
  // Standardisation backward, per column: (g - mean(g) - z * mean(g z)) / sigma
  Tensor dP = Tensor::matrix(N, C);
  for (int j = 0; j < C; ++j) {
    if (corr.inv_std[j] == 0.0) continue;
    double mean_g = 0, mean_gz = 0;
    for (int n = 0; n < N; ++n) {
      mean_g += dZ(n, j, 0, 0);
      mean_gz += dZ(n, j, 0, 0) * Z(n, j, 0, 0);
    }
    mean_g /= N;
    mean_gz /= N;
    for (int n = 0; n < N; ++n) {
      dP(n, j, 0, 0) = corr.inv_std[j] * (dZ(n, j, 0, 0) - mean_g - Z(n, j, 0, 0) * mean_gz);
    }
  }
  return dP;
}

LossGrad deconstruction_loss(const Tensor& S, double lambda) {
  const int C = S.n();
  if (static_cast<int>(S.sample_size()) != C) throw Error("deconstruction loss needs a square matrix, got " + S.shape_string());
  LossGrad out{0.0, Tensor::matrix(C, C)};
  double diag = 0, off = 0;
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < C; ++j) {
      const double s = S(i, j, 0, 0);
      if (i == j) {
        diag += (1.0 - s) * (1.0 - s);
        out.grad(i, j, 0, 0) = -2.0 * (1.0 - s);
      } else {
        off += s * s;
        out.grad(i, j, 0, 0) = 2.0 * lambda * s;
      }
    }
  }
  out.value = diag + lambda * off;
  return out;
}

LossGrad deconstruction_from_logits(const Tensor& logits, double lambda) {
  const Tensor probs = softmax(logits);
  const CorrelationMatrix corr = correlation_matrix(probs);
  const LossGrad dc = deconstruction_loss(corr.S, lambda);
  return {dc.value, softmax_backward(probs, correlation_backward(corr, dc.grad))};
}

// ---------------------------------------------------------------- combination

double total_loss(const LossParts& parts, const LossWeights& weights) {
  for (double v : {parts.center, parts.ce, parts.dc, parts.aux}) {
    if (!std::isfinite(v)) throw Error("diverged");
  }
  return weights.w_center * parts.center + weights.w_ce * parts.ce + weights.w_dc * parts.dc + parts.aux;
}

LossGrad batch_hard_triplet(const Tensor& features, const std::vector<int>& labels, double margin) {
  const int N = features.n();
  const std::size_t D = features.sample_size();
  if (static_cast<int>(labels.size()) != N) throw Error("label count does not match batch size");
  std::vector<double> dist(static_cast<std::size_t>(N) * N, 0.0);
  for (int a = 0; a < N; ++a) {
    for (int b = a + 1; b < N; ++b) {
      double s = 0;
      for (std::size_t k = 0; k < D; ++k) {
        const double d = features.sample(a)[k] - features.sample(b)[k];
        s += d * d;
      }
      dist[a * N + b] = dist[b * N + a] = std::sqrt(s + 1e-12);
    }
  }
  LossGrad out{0.0, Tensor(features.n(), features.c(), features.h(), features.w())};
  auto add_grad = [&](int a, int b, double scale) {
    const double d = dist[a * N + b];
    for (std::size_t k = 0; k < D; ++k) {
      const double g = scale * (features.sample(a)[k] - features.sample(b)[k]) / d;
      out.grad.sample(a)[k] += g;
      out.grad.sample(b)[k] -= g;
    }
  };
  double sum = 0;
  for (int a = 0; a < N; ++a) {
    int pos = -1, neg = -1;
    for (int b = 0; b < N; ++b) {
      if (b == a) continue;
      if (labels[b] == labels[a]) {
        if (pos < 0 || dist[a * N + b] > dist[a * N + pos]) pos = b;
      } else if (neg < 0 || dist[a * N + b] < dist[a * N + neg]) {
        neg = b;
      }
    }
    if (pos < 0 || neg < 0) continue;
    const double l = dist[a * N + pos] - dist[a * N + neg] + margin;
    if (l <= 0) continue;
    sum += l;
    add_grad(a, pos, 1.0 / N);
    add_grad(a, neg, -1.0 / N);
  }
  out.value = sum / N;
  return out;
}

}  // namespace uavgeo::loss
