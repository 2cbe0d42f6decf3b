#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace c3vqg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

using TokenId = std::int32_t;
using CategoryId = std::int32_t;

// Reserved vocabulary indices.
inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kStartToken = 1;
inline constexpr TokenId kEndToken = 2;
inline constexpr TokenId kUnknownToken = 3;
inline constexpr TokenId kSpecialTokenCount = 4;

enum class ParamKind { kWeight, kBias, kLogAlpha };

/// A learnable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  ParamKind kind = ParamKind::kWeight;
  /// Fan-in used by Kaiming initialization (ignored for biases).
  Eigen::Index fan_in = 1;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, ParamKind k, Eigen::Index fan)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        kind(k),
        fan_in(fan) {}

  void zero_grad() { grad.setZero(); }
};

/// He/Kaiming fan-in normal initialization: weights ~ N(0, 2 / fan_in),
/// biases zero, log inverse variances zero.
void kaiming_init(Parameter& p, Rng& rng);

bool all_finite(const Matrix& m);

/// Column-wise softmax, numerically stabilized.
Matrix softmax_columns(const Matrix& logits);

/// Backpropagate through a column-wise softmax: given probabilities p and
/// dL/dp, returns dL/dlogits.
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs);

}  // namespace c3vqg
