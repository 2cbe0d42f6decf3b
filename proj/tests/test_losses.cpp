#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "c3vqg/errors.hpp"
#include "c3vqg/losses.hpp"
#include "test_util.hpp"

using namespace c3vqg;
using c3vqg::testing::norm_rel_error;
using c3vqg::testing::numeric_gradient;
using c3vqg::testing::random_matrix;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

// ---------------------------------------------------------------- question

TEST(QuestionLoss, UniformLogitsGiveLogVocabulary) {
  const std::vector<TokenId> gt = {kStartToken, 10, 42, 77, kEndToken};
  const Matrix logits = Matrix::Zero(4, 100);
  EXPECT_NEAR(question_loss(logits, gt), std::log(100.0), 1e-12);
  EXPECT_NEAR(question_loss(logits, gt), 4.6052, 1e-4);
}

TEST(QuestionLoss, LargeMarginOneHotApproachesZero) {
  const std::vector<TokenId> gt = {kStartToken, 5, 6, kEndToken};
  Matrix logits = Matrix::Zero(3, 10);
  logits(0, 5) = logits(1, 6) = logits(2, kEndToken) = 80.0;
  EXPECT_LT(question_loss(logits, gt), 1e-30);
  EXPECT_GE(question_loss(logits, gt), 0.0);
}

TEST(QuestionLoss, AppendedPadsAreMasked) {
  Rng rng(3);
  const std::vector<TokenId> gt = {kStartToken, 5, 6, kEndToken};
  std::vector<TokenId> padded = gt;
  padded.insert(padded.end(), {kPadToken, kPadToken});
  const Matrix logits = random_matrix(5, 10, rng);
  const double short_loss = question_loss(logits.topRows(3), gt);
  EXPECT_NEAR(question_loss(logits, padded), short_loss, 1e-12);
}

TEST(QuestionLoss, LengthMismatchIsDomainError) {
  const std::vector<TokenId> gt = {kStartToken, 5, kEndToken};
  EXPECT_THROW(question_loss(Matrix::Zero(5, 10), gt), DomainError);
}

TEST(QuestionLoss, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  const std::vector<TokenId> gt = {kStartToken, 7, 3, 9, kEndToken, kPadToken};
  Matrix logits = random_matrix(5, 12, rng);
  Matrix grad;
  question_loss(logits, gt, &grad);
  const Matrix num = numeric_gradient([&] { return question_loss(logits, gt); }, logits);
  EXPECT_LT(norm_rel_error(grad, num), 1e-6);
}

TEST(QuestionLoss, BatchAveragesPerSampleMeans) {
  Rng rng(5);
  // Sample 0 has three targets, sample 1 has one (then pads).
  const std::vector<std::vector<TokenId>> targets = {{4, 6}, {5, kPadToken}, {kEndToken, kPadToken}};
  std::vector<Matrix> logits = {random_matrix(8, 2, rng), random_matrix(8, 2, rng), random_matrix(8, 2, rng)};
  auto nll = [&](std::size_t t, Eigen::Index b, TokenId id) {
    const Vector col = logits[t].col(b);
    return std::log(col.array().exp().sum()) - col(id);
  };
  const double s0 = (nll(0, 0, 4) + nll(1, 0, 5) + nll(2, 0, kEndToken)) / 3.0;
  const double s1 = nll(0, 1, 6);
  EXPECT_NEAR(question_loss_batch(logits, targets), 0.5 * (s0 + s1), 1e-12);
}

// ---------------------------------------------------------------- reconstruction

TEST(ReconLoss, SumOfSquares) {
  EXPECT_DOUBLE_EQ(image_recon_loss(vec({1, 2, 3}), vec({1, 2, 3})), 0.0);
  EXPECT_DOUBLE_EQ(image_recon_loss(vec({2, 3, 4, 5}), vec({1, 2, 3, 4})), 4.0);
  EXPECT_DOUBLE_EQ(category_recon_loss(vec({0, 0, 0, 0}), vec({1, 1, 1, 1})), 4.0);
}

TEST(ReconLoss, ScalingDifferenceByTwoQuadruples) {
  Rng rng(2);
  const Vector a = random_matrix(6, 1, rng).col(0), b = random_matrix(6, 1, rng).col(0);
  const Vector far = b + 2.0 * (a - b);
  EXPECT_NEAR(image_recon_loss(far, b), 4.0 * image_recon_loss(a, b), 1e-12);
}

TEST(ReconLoss, DimensionMismatchThrows) {
  EXPECT_THROW(squared_error(vec({1, 2}), vec({1, 2, 3})), DomainError);
}

// ---------------------------------------------------------------- consistency

TEST(ConsistencyLoss, Examples) {
  EXPECT_DOUBLE_EQ(consistency_loss(vec({0, 1, 0}), 1), 0.0);
  const Vector uniform = Vector::Constant(15, 1.0 / 15.0);
  EXPECT_NEAR(consistency_loss(uniform, 4), std::log(15.0), 1e-12);
  EXPECT_NEAR(consistency_loss(uniform, 4), 2.7081, 1e-4);
  EXPECT_NEAR(consistency_loss(vec({0.5, 0.25, 0.25}), 0), 0.6931, 1e-4);
}

TEST(ConsistencyLoss, ZeroProbabilityIsClamped) {
  const double loss = consistency_loss(vec({1.0, 0.0}), 1);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, -std::log(kProbabilityFloor), 1e-9);
}

TEST(ConsistencyLoss, BadCategoryThrows) {
  EXPECT_THROW(consistency_loss(vec({0.5, 0.5}), 2), DomainError);
}

// ---------------------------------------------------------------- center

TEST(CenterLoss, Examples) {
  CenterBank bank(2, 3);
  bank.centers.col(1) = vec({1, 1});
  EXPECT_DOUBLE_EQ(center_loss(vec({1, 1}), 1, bank), 0.0);
  EXPECT_DOUBLE_EQ(center_loss(vec({2, 0}), 1, bank), 2.0);
  bank.centers.col(0) = vec({100, -7});
  bank.centers.col(2) = vec({-3, 9});
  EXPECT_DOUBLE_EQ(center_loss(vec({2, 0}), 1, bank), 2.0);
}

TEST(CenterUpdate, HandDerivedExample) {
  CenterBank bank(2, 2, 0.5);
  Matrix z(2, 2);
  z << 2, 0, 0, 2;
  const std::vector<CategoryId> cats = {0, 0};
  update_centers(z, cats, bank);
  // delta = ((0-2) + (0-0), (0-0) + (0-2)) / 3 = (-2/3, -2/3); c = -0.5 * delta.
  EXPECT_NEAR(bank.centers(0, 0), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(bank.centers(1, 0), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(bank.centers.col(1), Vector::Zero(2));
}

TEST(CenterUpdate, FixedPointAtBatchMean) {
  Rng rng(8);
  CenterBank bank(4, 3, 0.5);
  const Matrix z = random_matrix(4, 6, rng);
  const std::vector<CategoryId> cats = {0, 1, 0, 1, 0, 1};
  bank.centers.col(0) = (z.col(0) + z.col(2) + z.col(4)) / 3.0;
  bank.centers.col(1) = (z.col(1) + z.col(3) + z.col(5)) / 3.0;
  bank.centers.col(2) = random_matrix(4, 1, rng);
  const Matrix before = bank.centers;
  update_centers(z, cats, bank);
  EXPECT_LT((bank.centers - before).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CenterUpdate, MovesCentersAwayFromMeanOtherwise) {
  Rng rng(9);
  CenterBank bank(3, 2, 0.5);
  const Matrix z = random_matrix(3, 4, rng);
  const std::vector<CategoryId> cats = {0, 0, 0, 0};
  bank.centers.col(0) = z.rowwise().mean() + Vector::Constant(3, 0.25);
  const Matrix before = bank.centers;
  update_centers(z, cats, bank);
  EXPECT_GT((bank.centers - before).norm(), 1e-3);
  EXPECT_EQ(bank.centers.col(1), before.col(1));
}

TEST(CenterUpdate, EmptyBatchThrows) {
  CenterBank bank(2, 2);
  EXPECT_THROW(update_centers(Matrix(2, 0), std::vector<CategoryId>{}, bank), DomainError);
}

TEST(CenterBank, ScaleMustLieInOpenUnitInterval) {
  EXPECT_THROW(CenterBank(2, 2, 1.0), ConfigError);
  EXPECT_THROW(CenterBank(2, 2, 0.0), ConfigError);
}

// ---------------------------------------------------------------- hyper-prior

TEST(HyperPriorKl, Examples) {
  EXPECT_NEAR(hyperprior_kl(LatentDistribution::from_stddev(Vector::Zero(5), Vector::Ones(5)),
                            HyperPrior::from_alpha(Vector::Ones(5))),
              0.0, 1e-12);
  EXPECT_NEAR(hyperprior_kl(LatentDistribution::from_stddev(vec({1}), vec({1})), HyperPrior::from_alpha(vec({1}))),
              0.5, 1e-12);
  EXPECT_NEAR(hyperprior_kl(LatentDistribution::from_stddev(vec({0}), vec({0.5})), HyperPrior::from_alpha(vec({4}))),
              0.0, 1e-12);
}

TEST(HyperPriorKl, NonPositiveParametersAreDomainErrors) {
  EXPECT_THROW(LatentDistribution::from_stddev(vec({0}), vec({0})), DomainError);
  EXPECT_THROW(LatentDistribution::from_stddev(vec({0}), vec({-1})), DomainError);
  EXPECT_THROW(HyperPrior::from_alpha(vec({0})), DomainError);
  EXPECT_THROW(HyperPrior::from_alpha(vec({-2})), DomainError);
}

TEST(HyperPriorKl, NonNegativeOnRandomInputs) {
  Rng rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vector mean(4), log_var(4), log_alpha(4);
    for (int j = 0; j < 4; ++j) {
      mean[j] = u(rng);
      log_var[j] = u(rng);
      log_alpha[j] = u(rng);
    }
    EXPECT_GE(hyperprior_kl({mean, log_var}, {log_alpha}), 0.0);
  }
}

TEST(HyperPriorReg, Examples) {
  EXPECT_DOUBLE_EQ(hyperprior_reg(HyperPrior::from_alpha(Vector::Ones(3)), 2.0), 0.0);
  EXPECT_NEAR(hyperprior_reg(HyperPrior::from_alpha(vec({0.5, 0.5})), 2.0), 4.0, 1e-12);
}

TEST(HyperPriorReg, MonotoneInDistanceFromOne) {
  double previous = -1.0;
  for (double inv : {1.0, 1.2, 1.5, 2.0, 3.0}) {
    const double r = hyperprior_reg(HyperPrior::from_alpha(vec({1.0 / inv})), 1.0);
    EXPECT_GT(r, previous);
    previous = r;
  }
}

// ---------------------------------------------------------------- total

TEST(TotalLoss, Examples) {
  const LossWeights w;
  EXPECT_DOUBLE_EQ(total_loss(LossBreakdown{}, w), 0.0);
  LossBreakdown ones{1, 1, 1, 1, 1, 1, 0};
  EXPECT_DOUBLE_EQ(total_loss(ones, w), 14.0);
}

TEST(TotalLoss, DefaultsMatchHyperparameterTable) {
  const LossWeights w;
  EXPECT_EQ(w.question, 3.0);
  EXPECT_EQ(w.image, 1.0);
  EXPECT_EQ(w.category, 2.0);
  EXPECT_EQ(w.consistency, 2.0);
  EXPECT_EQ(w.center, 3.0);
  EXPECT_EQ(w.bayes, 3.0);
  EXPECT_EQ(w.reg, 2.0);
}

TEST(TotalLoss, LinearInWeightsAndParts) {
  const LossBreakdown parts{0.7, 1.3, 2.1, 0.4, 5.5, 0.9, 0};
  LossWeights w;
  const double base = total_loss(parts, w);
  w.center *= 2.0;
  EXPECT_NEAR(total_loss(parts, w) - base, 3.0 * parts.center, 1e-12);
  LossBreakdown doubled{1.4, 2.6, 4.2, 0.8, 11.0, 1.8, 0};
  EXPECT_NEAR(total_loss(doubled, LossWeights{}), 2.0 * base, 1e-12);
}

TEST(TotalLoss, NonFinitePartNamesComponent) {
  LossBreakdown parts{0, 0, 0, std::nan(""), 0, 0, 0};
  try {
    total_loss(parts, LossWeights{});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("consistency"), std::string::npos);
  }
  EXPECT_EQ(first_nonfinite(parts), "consistency");
}

// ---------------------------------------------------------------- gradients

TEST(LossGradients, BatchFunctionsMatchFiniteDifferences) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix pred = random_matrix(5, 3, rng);
    const Matrix target = random_matrix(5, 3, rng);
    Matrix g;
    squared_error_batch(pred, target, &g);
    EXPECT_LT(norm_rel_error(g, numeric_gradient([&] { return squared_error_batch(pred, target); }, pred)), 1e-6);

    CenterBank bank(5, 2);
    bank.centers = random_matrix(5, 2, rng);
    const std::vector<CategoryId> cats = {1, 0, 1};
    Matrix z = random_matrix(5, 3, rng);
    center_loss_batch(z, cats, bank, &g);
    EXPECT_LT(norm_rel_error(g, numeric_gradient([&] { return center_loss_batch(z, cats, bank); }, z)), 1e-6);

    Matrix probs = softmax_columns(random_matrix(4, 3, rng));
    const std::vector<CategoryId> gt = {3, 0, 2};
    consistency_loss_batch(probs, gt, &g);
    EXPECT_LT(norm_rel_error(g, numeric_gradient([&] { return consistency_loss_batch(probs, gt); }, probs)),
              1e-6);

    Matrix mean = random_matrix(3, 4, rng), log_var = random_matrix(3, 4, rng, 0.5);
    Matrix log_alpha = random_matrix(3, 1, rng, 0.5);
    auto kl = [&] { return hyperprior_kl_batch(mean, log_var, HyperPrior{log_alpha.col(0)}); };
    KlBatchGrad kg;
    hyperprior_kl_batch(mean, log_var, HyperPrior{log_alpha.col(0)}, &kg);
    EXPECT_LT(norm_rel_error(kg.mean, numeric_gradient(kl, mean)), 1e-6);
    EXPECT_LT(norm_rel_error(kg.log_var, numeric_gradient(kl, log_var)), 1e-6);
    EXPECT_LT(norm_rel_error(kg.log_alpha, numeric_gradient(kl, log_alpha)), 1e-6);

    Vector greg;
    hyperprior_reg(HyperPrior{log_alpha.col(0)}, 2.0, &greg);
    EXPECT_LT(norm_rel_error(greg, numeric_gradient([&] { return hyperprior_reg(HyperPrior{log_alpha.col(0)}, 2.0); },
                                                    log_alpha)),
              1e-6);
  }
}
