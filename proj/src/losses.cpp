#include "c3vqg/losses.hpp"

#include <cmath>

#include "c3vqg/errors.hpp"

namespace c3vqg {

void LossWeights::validate() const {
  for (double w : {question, image, category, consistency, center, bayes, reg})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
}

LatentDistribution LatentDistribution::from_stddev(const Vector& mean, const Vector& stddev) {
  if (mean.size() != stddev.size()) throw DomainError("mean/stddev dimension mismatch");
  if ((stddev.array() <= 0.0).any()) throw DomainError("stddev must be strictly positive");
  return {mean, (2.0 * stddev.array().log()).matrix()};
}

HyperPrior HyperPrior::from_alpha(const Vector& alpha) {
  if ((alpha.array() <= 0.0).any()) throw DomainError("inverse variances must be strictly positive");
  return {alpha.array().log().matrix()};
}

CenterBank::CenterBank(Eigen::Index dim, Eigen::Index categories, double scale)
    : centers(Matrix::Zero(dim, categories)), update_scale(scale) {
  if (!(scale > 0.0 && scale < 1.0)) throw ConfigError("center update scale must lie in (0, 1)");
}

// ---------------------------------------------------------------- question

double question_loss_batch(const std::vector<Matrix>& step_logits,
                           const std::vector<std::vector<TokenId>>& targets,
                           std::vector<Matrix>* grad) {
  if (step_logits.size() != targets.size())
    throw DomainError("question_loss: logits and targets differ in length");
  if (step_logits.empty()) throw DomainError("question_loss: empty sequence");
  const Eigen::Index vocab = step_logits.front().rows();
  const Eigen::Index batch = step_logits.front().cols();

  std::vector<int> counts(static_cast<std::size_t>(batch), 0);
  for (const auto& row : targets) {
    if (static_cast<Eigen::Index>(row.size()) != batch)
      throw DomainError("question_loss: target batch size mismatch");
    for (Eigen::Index b = 0; b < batch; ++b) {
      const TokenId id = row[static_cast<std::size_t>(b)];
      if (id < 0 || id >= vocab) throw DomainError("question_loss: target id outside vocabulary");
      if (id != kPadToken) ++counts[static_cast<std::size_t>(b)];
    }
  }
  int active = 0;
  for (int c : counts) active += c > 0;

  if (grad) grad->assign(step_logits.size(), Matrix::Zero(vocab, batch));
  if (active == 0) return 0.0;

  double total = 0.0;
  for (std::size_t t = 0; t < step_logits.size(); ++t) {
    const Matrix& logits = step_logits[t];
    for (Eigen::Index b = 0; b < batch; ++b) {
      const TokenId id = targets[t][static_cast<std::size_t>(b)];
      if (id == kPadToken) continue;
      const double mx = logits.col(b).maxCoeff();
      const Vector shifted = logits.col(b).array() - mx;
      const double log_z = std::log(shifted.array().exp().sum());
      const double scale = 1.0 / (counts[static_cast<std::size_t>(b)] * double(active));
      total += (log_z - shifted(id)) * scale;
      if (grad) {
        auto g = (*grad)[t].col(b);
        g = (shifted.array() - log_z).exp().matrix() * scale;
        g(id) -= scale;
      }
    }
  }
  return total;
}

double question_loss(const Matrix& logits, std::span<const TokenId> gt, Matrix* grad) {
  if (gt.size() < 2) throw DomainError("question_loss: ground truth needs a start marker and a token");
  if (static_cast<std::size_t>(logits.rows()) != gt.size() - 1)
    throw DomainError("question_loss: expected " + std::to_string(gt.size() - 1) +
                      " logit rows, got " + std::to_string(logits.rows()));
  std::vector<Matrix> steps;
  std::vector<std::vector<TokenId>> targets;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    steps.emplace_back(logits.row(t).transpose());
    targets.push_back({gt[static_cast<std::size_t>(t) + 1]});
  }
  std::vector<Matrix> g;
  const double value = question_loss_batch(steps, targets, grad ? &g : nullptr);
  if (grad) {
    grad->resize(logits.rows(), logits.cols());
    for (Eigen::Index t = 0; t < logits.rows(); ++t) grad->row(t) = g[static_cast<std::size_t>(t)].transpose();
  }
  return value;
}

// ---------------------------------------------------------------- reconstruction

double squared_error(const Vector& pred, const Vector& target, Vector* grad) {
  if (pred.size() != target.size()) throw DomainError("squared_error: dimension mismatch");
  const Vector diff = pred - target;
  if (grad) *grad = 2.0 * diff;
  return diff.squaredNorm();
}

double squared_error_batch(const Matrix& pred, const Matrix& target, Matrix* grad) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DomainError("squared_error: dimension mismatch");
  const double batch = static_cast<double>(pred.cols());
  const Matrix diff = pred - target;
  if (grad) *grad = (2.0 / batch) * diff;
  return diff.squaredNorm() / batch;
}

// ---------------------------------------------------------------- consistency

double consistency_loss(const Vector& pred, CategoryId gt, Vector* grad) {
  Matrix g;
  const CategoryId ids[] = {gt};
  const double value = consistency_loss_batch(pred, ids, grad ? &g : nullptr);
  if (grad) *grad = g.col(0);
  return value;
}

double consistency_loss_batch(const Matrix& pred, std::span<const CategoryId> gt, Matrix* grad) {
  if (static_cast<std::size_t>(pred.cols()) != gt.size())
    throw DomainError("consistency_loss: batch size mismatch");
  const double batch = static_cast<double>(pred.cols());
  if (grad) grad->setZero(pred.rows(), pred.cols());
  double total = 0.0;
  for (Eigen::Index b = 0; b < pred.cols(); ++b) {
    const CategoryId c = gt[static_cast<std::size_t>(b)];
    if (c < 0 || c >= pred.rows()) throw DomainError("consistency_loss: category id out of range");
    const double p = pred(c, b);
    total -= std::log(std::max(p, kProbabilityFloor));
    if (grad && p > kProbabilityFloor) (*grad)(c, b) = -1.0 / (p * batch);
  }
  return total / batch;
}

// ---------------------------------------------------------------- center

double center_loss(const Vector& z, CategoryId category, const CenterBank& bank, Vector* grad) {
  Matrix g;
  const CategoryId ids[] = {category};
  const double value = center_loss_batch(z, ids, bank, grad ? &g : nullptr);
  if (grad) *grad = g.col(0);
  return value;
}

double center_loss_batch(const Matrix& z, std::span<const CategoryId> categories,
                         const CenterBank& bank, Matrix* grad) {
  if (static_cast<std::size_t>(z.cols()) != categories.size())
    throw DomainError("center_loss: batch size mismatch");
  if (z.rows() != bank.dim()) throw DomainError("center_loss: latent dimension mismatch");
  const double batch = static_cast<double>(z.cols());
  if (grad) grad->resize(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    const CategoryId c = categories[static_cast<std::size_t>(b)];
    if (c < 0 || c >= bank.categories()) throw DomainError("center_loss: category id out of range");
    const Vector diff = z.col(b) - bank.centers.col(c);
    total += diff.squaredNorm();
    if (grad) grad->col(b) = (2.0 / batch) * diff;
  }
  return total / batch;
}

void update_centers(const Matrix& z, std::span<const CategoryId> categories, CenterBank& bank) {
  if (static_cast<std::size_t>(z.cols()) != categories.size())
    throw DomainError("update_centers: batch size mismatch");
  if (z.cols() == 0) throw DomainError("update_centers: empty batch");
  Matrix delta = Matrix::Zero(bank.dim(), bank.categories());
  std::vector<int> counts(static_cast<std::size_t>(bank.categories()), 0);
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    const CategoryId c = categories[static_cast<std::size_t>(b)];
    if (c < 0 || c >= bank.categories()) throw DomainError("update_centers: category id out of range");
    delta.col(c) += bank.centers.col(c) - z.col(b);
    ++counts[static_cast<std::size_t>(c)];
  }
  for (Eigen::Index c = 0; c < bank.categories(); ++c) {
    const int n = counts[static_cast<std::size_t>(c)];
    if (n == 0) continue;
    bank.centers.col(c) -= bank.update_scale * delta.col(c) / (1.0 + n);
  }
}

// ---------------------------------------------------------------- hyper-prior

double hyperprior_kl_batch(const Matrix& mean, const Matrix& log_var, const HyperPrior& prior,
                           KlBatchGrad* grad) {
  if (mean.rows() != prior.dim() || log_var.rows() != prior.dim() || mean.cols() != log_var.cols())
    throw DomainError("hyperprior_kl: dimension mismatch");
  if (!log_var.allFinite() || !prior.log_alpha.allFinite())
    throw DomainError("hyperprior_kl: variances must be positive and finite");
  const double batch = static_cast<double>(mean.cols());
  const Eigen::ArrayXd la = prior.log_alpha.array();
  const Eigen::ArrayXd alpha = la.exp();
  if (grad) {
    grad->mean.resize(mean.rows(), mean.cols());
    grad->log_var.resize(mean.rows(), mean.cols());
    grad->log_alpha = Vector::Zero(prior.dim());
  }
  double total = 0.0;
  for (Eigen::Index b = 0; b < mean.cols(); ++b) {
    const Eigen::ArrayXd mu = mean.col(b).array();
    const Eigen::ArrayXd lv = log_var.col(b).array();
    const Eigen::ArrayXd var = lv.exp();
    total += (-0.5 * (la + lv) + 0.5 * alpha * (var + mu.square()) - 0.5).sum();
    if (grad) {
      grad->mean.col(b) = (alpha * mu / batch).matrix();
      grad->log_var.col(b) = ((-0.5 + 0.5 * alpha * var) / batch).matrix();
      grad->log_alpha += ((-0.5 + 0.5 * alpha * (var + mu.square())) / batch).matrix();
    }
  }
  return total / batch;
}

double hyperprior_kl(const LatentDistribution& dist, const HyperPrior& prior, KlGrad* grad) {
  KlBatchGrad g;
  const double value = hyperprior_kl_batch(dist.mean, dist.log_var, prior, grad ? &g : nullptr);
  if (grad) {
    grad->mean = g.mean.col(0);
    grad->log_var = g.log_var.col(0);
    grad->log_alpha = std::move(g.log_alpha);
  }
  return value;
}

double hyperprior_reg(const HyperPrior& prior, double weight, Vector* grad_log_alpha) {
  const Eigen::ArrayXd inv = (-prior.log_alpha.array()).exp();
  if (grad_log_alpha) *grad_log_alpha = (-2.0 * weight * (inv - 1.0) * inv).matrix();
  return weight * (inv - 1.0).square().sum();
}

// ---------------------------------------------------------------- total

std::string first_nonfinite(const LossBreakdown& p) {
  const std::pair<const char*, double> parts[] = {
      {"question", p.question}, {"image", p.image},   {"category", p.category},
      {"consistency", p.consistency}, {"center", p.center}, {"bayes", p.bayes}};
  for (const auto& [name, value] : parts)
    if (!std::isfinite(value)) return name;
  return {};
}

double total_loss(const LossBreakdown& p, const LossWeights& w) {
  if (const std::string bad = first_nonfinite(p); !bad.empty())
    throw TrainingError("non-finite loss component: " + bad);
  return w.question * p.question + w.image * p.image + w.category * p.category +
         w.consistency * p.consistency + w.center * p.center + w.bayes * p.bayes;
}

}  // namespace c3vqg
