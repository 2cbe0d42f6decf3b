#include "c3vqg/tensor.hpp"

#include <cmath>

namespace c3vqg {

void kaiming_init(Parameter& p, Rng& rng) {
  switch (p.kind) {
    case ParamKind::kBias:
    case ParamKind::kLogAlpha:
      p.value.setZero();
      break;
    case ParamKind::kWeight: {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(p.fan_in)));
      for (Eigen::Index j = 0; j < p.value.cols(); ++j)
        for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = normal(rng);
      break;
    }
  }
  p.zero_grad();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - mx).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  Matrix out(probs.rows(), probs.cols());
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    const double dot = probs.col(j).dot(grad_probs.col(j));
    out.col(j) = probs.col(j).array() * (grad_probs.col(j).array() - dot);
  }
  return out;
}

}  // namespace c3vqg
