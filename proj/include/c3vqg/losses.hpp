#pragma once

#include <span>
#include <string>
#include <vector>

#include "c3vqg/tensor.hpp"

// The six training objectives, each with its analytic gradient, plus the
// category center bank. Per-sample functions take an optional gradient
// output; the *_batch variants work on column-per-sample matrices and
// average over the batch.

namespace c3vqg {

/// Probability floor inside logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

struct LossWeights {
  double question = 3.0;
  double image = 1.0;
  double category = 2.0;
  double consistency = 2.0;
  double center = 3.0;
  double bayes = 3.0;
  double reg = 2.0;  // scales the hyper-prior regularizer inside L_bayes

  void validate() const;
};

struct LossBreakdown {
  double question = 0.0;
  double image = 0.0;
  double category = 0.0;
  double consistency = 0.0;
  double center = 0.0;
  double bayes = 0.0;
  double total = 0.0;
};

/// Diagonal Gaussian stored as mean and log-variance.
struct LatentDistribution {
  Vector mean;
  Vector log_var;

  static LatentDistribution from_stddev(const Vector& mean, const Vector& stddev);
  Vector stddev() const { return (0.5 * log_var.array()).exp().matrix(); }
  Eigen::Index dim() const { return mean.size(); }
};

/// Learnable per-dimension inverse variances of the zero-mean latent prior,
/// stored as log(alpha).
struct HyperPrior {
  Vector log_alpha;

  static HyperPrior from_alpha(const Vector& alpha);
  Vector alpha() const { return log_alpha.array().exp().matrix(); }
  Eigen::Index dim() const { return log_alpha.size(); }
};

/// One running center per category (columns of a d x n_c matrix).
struct CenterBank {
  Matrix centers;
  double update_scale = 0.5;

  CenterBank() = default;
  CenterBank(Eigen::Index dim, Eigen::Index categories, double scale = 0.5);

  Eigen::Index dim() const { return centers.rows(); }
  Eigen::Index categories() const { return centers.cols(); }
};

// ---------------------------------------------------------------- question

/// Mean per-token negative log-likelihood. logits has one row per decoding
/// step; row t scores gt[t + 1]. Pad targets are masked.
double question_loss(const Matrix& logits, std::span<const TokenId> gt, Matrix* grad = nullptr);

/// step_logits[t] is V x B; targets[t][b] is the token scored at step t.
double question_loss_batch(const std::vector<Matrix>& step_logits,
                           const std::vector<std::vector<TokenId>>& targets,
                           std::vector<Matrix>* grad = nullptr);

// ---------------------------------------------------------------- reconstruction

/// ||pred - target||^2. Used for both the image and the category encoding.
double squared_error(const Vector& pred, const Vector& target, Vector* grad = nullptr);
double squared_error_batch(const Matrix& pred, const Matrix& target, Matrix* grad = nullptr);

inline double image_recon_loss(const Vector& pred, const Vector& target, Vector* grad = nullptr) {
  return squared_error(pred, target, grad);
}
inline double category_recon_loss(const Vector& pred, const Vector& target, Vector* grad = nullptr) {
  return squared_error(pred, target, grad);
}

// ---------------------------------------------------------------- consistency

/// -log pred[gt]; grad is with respect to the probability vector.
double consistency_loss(const Vector& pred, CategoryId gt, Vector* grad = nullptr);
double consistency_loss_batch(const Matrix& pred, std::span<const CategoryId> gt,
                              Matrix* grad = nullptr);

// ---------------------------------------------------------------- center

double center_loss(const Vector& z, CategoryId category, const CenterBank& bank,
                   Vector* grad = nullptr);
double center_loss_batch(const Matrix& z, std::span<const CategoryId> categories,
                         const CenterBank& bank, Matrix* grad = nullptr);

/// Mini-batch center step: for every category j present,
///   delta_j = sum_{i: y_i = j} (c_j - z_i) / (1 + n_j),  c_j -= scale * delta_j.
void update_centers(const Matrix& z, std::span<const CategoryId> categories, CenterBank& bank);

// ---------------------------------------------------------------- hyper-prior

struct KlGrad {
  Vector mean;
  Vector log_var;
  Vector log_alpha;
};

/// KL( N(mean, diag sigma^2) || N(0, diag 1/alpha) ) summed over dimensions.
double hyperprior_kl(const LatentDistribution& dist, const HyperPrior& prior, KlGrad* grad = nullptr);

struct KlBatchGrad {
  Matrix mean;
  Matrix log_var;
  Vector log_alpha;
};

double hyperprior_kl_batch(const Matrix& mean, const Matrix& log_var, const HyperPrior& prior,
                           KlBatchGrad* grad = nullptr);

/// weight * sum_j (1/alpha_j - 1)^2; grad is with respect to log(alpha).
double hyperprior_reg(const HyperPrior& prior, double weight, Vector* grad_log_alpha = nullptr);

// ---------------------------------------------------------------- total

/// Weighted sum of the six parts (the `total` field of `parts` is ignored).
/// Throws TrainingError naming the first non-finite component.
double total_loss(const LossBreakdown& parts, const LossWeights& weights);

/// Name of the first non-finite component, or empty.
std::string first_nonfinite(const LossBreakdown& parts);

}  // namespace c3vqg
