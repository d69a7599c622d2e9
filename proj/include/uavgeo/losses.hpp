#pragma once

// Centre loss, cross-entropy, the deconstruction loss on the class-correlation
// matrix of batch predictions, and their weighted sum. Every loss returns its
// value together with the gradient with respect to its input.

#include <vector>

#include "uavgeo/tensor.hpp"

namespace uavgeo::loss {

struct LossWeights {
  double w_center = 0.0005;
  double w_ce = 1.0;
  double w_dc = 1.0;
  double lambda_dc = 0.2;

  void validate() const;
};

/// One learned centre per class: num_classes x D.
struct ClassCenters {
  Tensor centers;

  ClassCenters() = default;
  ClassCenters(int num_classes, int dim) : centers(Tensor::matrix(num_classes, dim)) {}

  int num_classes() const { return centers.n(); }
  int dim() const { return static_cast<int>(centers.sample_size()); }

  /// c_j <- c_j - alpha * sum_{n: y_n = j} (c_j - x_n) / (1 + count_j)
  void update(const Tensor& features, const std::vector<int>& labels, double alpha);
};

struct LossGrad {
  double value = 0.0;
  Tensor grad;  ///< same shape as the differentiated input
};

/// (gamma/2) * sum_n ||x_n - c_{y_n}||^2 ; gradient w.r.t. features.
LossGrad center_loss(const Tensor& features, const std::vector<int>& labels, const ClassCenters& centers, double gamma);

/// Row-wise softmax of an N x C matrix.
Tensor softmax(const Tensor& logits);

/// Batch mean of -log softmax(logits)[label]; gradient w.r.t. logits.
LossGrad cross_entropy(const Tensor& logits, const std::vector<int>& labels);

inline constexpr double kCorrelationEps = 1e-8;

/// C x C Pearson correlation of the class columns of an N x C probability matrix.
/// Columns whose batch variance is below kCorrelationEps contribute zero rows/columns
/// (including a zero diagonal entry).
struct CorrelationMatrix {
  Tensor S;                      ///< C x C
  Tensor normalized;             ///< N x C standardised columns (zero for degenerate columns)
  std::vector<double> inv_std;   ///< per column, 0 for degenerate columns
};

CorrelationMatrix correlation_matrix(const Tensor& probs);

/// Gradient w.r.t. the probabilities given dL/dS.
Tensor correlation_backward(const CorrelationMatrix& corr, const Tensor& dS);

/// sum_i (1 - S_ii)^2 + lambda * sum_{i != j} S_ij^2 ; gradient w.r.t. S.
LossGrad deconstruction_loss(const Tensor& S, double lambda);

/// deconstruction_loss(correlation_matrix(softmax(logits))) with gradient w.r.t. logits.
LossGrad deconstruction_from_logits(const Tensor& logits, double lambda);

/// Backpropagates dL/dprobs through a row-wise softmax.
Tensor softmax_backward(const Tensor& probs, const Tensor& d_probs);

struct LossParts {
  double center = 0.0;
  double ce = 0.0;
  double dc = 0.0;
  double aux = 0.0;
};

/// w_center * center + w_ce * ce + w_dc * dc + aux. Throws "diverged" on a non-finite part.
double total_loss(const LossParts& parts, const LossWeights& weights);

/// Batch-hard triplet loss on L2 distances (auxiliary, for ablations); gradient w.r.t. features.
LossGrad batch_hard_triplet(const Tensor& features, const std::vector<int>& labels, double margin);

}  // namespace uavgeo::loss
