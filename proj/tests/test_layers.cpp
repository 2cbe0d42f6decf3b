#include <gtest/gtest.h>

#include "c3vqg/errors.hpp"
#include "c3vqg/layers.hpp"
#include "test_util.hpp"

using namespace c3vqg;
using c3vqg::testing::norm_rel_error;
using c3vqg::testing::numeric_gradient;
using c3vqg::testing::random_matrix;

namespace {

template <typename Layer>
void init_all(Layer& layer, Rng& rng) {
  std::vector<Parameter*> ps;
  layer.collect(ps);
  for (Parameter* p : ps) {
    p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.5);
    p->zero_grad();
  }
}

// Scalar probe <R, f(x)> so that dL/dy = R.
double probe(const Matrix& y, const Matrix& r) { return (y.array() * r.array()).sum(); }

}  // namespace

TEST(Softmax, ColumnsSumToOneAndBackwardMatches) {
  Rng rng(1);
  Matrix logits = random_matrix(6, 3, rng, 3.0);
  const Matrix p = softmax_columns(logits);
  for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-12);
  const Matrix r = random_matrix(6, 3, rng);
  const Matrix analytic = softmax_backward(p, r);
  const Matrix num = numeric_gradient([&] { return probe(softmax_columns(logits), r); }, logits);
  EXPECT_LT(norm_rel_error(analytic, num), 1e-7);
}

TEST(Linear, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  Linear layer("fc", 5, 4);
  init_all(layer, rng);
  Matrix x = random_matrix(5, 3, rng);
  const Matrix r = random_matrix(4, 3, rng);
  const Matrix dx = layer.backward(x, r);
  EXPECT_LT(norm_rel_error(dx, numeric_gradient([&] { return probe(layer.forward(x), r); }, x)), 1e-7);
  EXPECT_LT(norm_rel_error(layer.weight.grad,
                           numeric_gradient([&] { return probe(layer.forward(x), r); }, layer.weight.value)),
            1e-7);
  EXPECT_LT(norm_rel_error(layer.bias.grad,
                           numeric_gradient([&] { return probe(layer.forward(x), r); }, layer.bias.value)),
            1e-7);
}

TEST(Linear, WrongInputSizeIsConfigError) {
  Linear layer("fc", 5, 4);
  EXPECT_THROW(layer.forward(Matrix::Zero(3, 1)), ConfigError);
}

TEST(Embedding, LookupAndBounds) {
  Rng rng(3);
  Embedding emb("e", 4, 3);
  init_all(emb, rng);
  const std::vector<std::int32_t> ids = {2, 2, 0};
  const Matrix out = emb.lookup(ids);
  EXPECT_EQ(out.col(0), emb.table.value.col(2));
  EXPECT_EQ(out.col(0), out.col(1));
  const std::vector<std::int32_t> bad = {4};
  EXPECT_THROW(emb.lookup(bad), DomainError);
}

TEST(Embedding, SoftLookupOfOneHotEqualsHardLookup) {
  Rng rng(4);
  Embedding emb("e", 5, 3);
  init_all(emb, rng);
  Matrix onehot = Matrix::Zero(5, 2);
  onehot(1, 0) = 1.0;
  onehot(4, 1) = 1.0;
  const std::vector<std::int32_t> ids = {1, 4};
  EXPECT_LT((emb.soft_lookup(onehot) - emb.lookup(ids)).norm(), 1e-15);
}

TEST(Embedding, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  Embedding emb("e", 6, 3);
  init_all(emb, rng);
  Matrix w = softmax_columns(random_matrix(6, 2, rng));
  const Matrix r = random_matrix(3, 2, rng);
  const Matrix dw = emb.backward_soft(w, r);
  EXPECT_LT(norm_rel_error(dw, numeric_gradient([&] { return probe(emb.soft_lookup(w), r); }, w)), 1e-7);
  EXPECT_LT(norm_rel_error(emb.table.grad,
                           numeric_gradient([&] { return probe(emb.soft_lookup(w), r); }, emb.table.value)),
            1e-7);

  emb.table.zero_grad();
  const std::vector<std::int32_t> ids = {5, 0, 5};
  const Matrix r3 = random_matrix(3, 3, rng);
  emb.backward_lookup(ids, r3);
  EXPECT_LT(norm_rel_error(emb.table.grad,
                           numeric_gradient([&] { return probe(emb.lookup(ids), r3); }, emb.table.value)),
            1e-7);
}

TEST(Conv2d, OutputShapeHalvesWithStrideTwo) {
  ConvShape s{3, 8, 4, 2, 1, 16, 16};
  EXPECT_EQ(s.out_height(), 8);
  EXPECT_EQ(s.out_width(), 8);
  Conv2d conv("c", s);
  EXPECT_EQ(conv.forward(Matrix::Zero(s.in_size(), 2), nullptr).rows(), s.out_size());
}

TEST(Conv2d, MatchesDirectConvolution) {
  Rng rng(6);
  ConvShape s{2, 3, 3, 2, 1, 7, 6};
  Conv2d conv("c", s);
  init_all(conv, rng);
  const Matrix x = random_matrix(s.in_size(), 1, rng);
  const Matrix y = conv.forward(x, nullptr);
  // Direct loop over CHW layout with zero padding.
  for (int oc = 0; oc < s.out_channels; ++oc)
    for (int oy = 0; oy < s.out_height(); ++oy)
      for (int ox = 0; ox < s.out_width(); ++ox) {
        double acc = conv.bias.value(oc, 0);
        for (int ic = 0; ic < s.in_channels; ++ic)
          for (int ky = 0; ky < s.kernel; ++ky)
            for (int kx = 0; kx < s.kernel; ++kx) {
              const int iy = oy * s.stride - s.pad + ky, ix = ox * s.stride - s.pad + kx;
              if (iy < 0 || ix < 0 || iy >= s.in_height || ix >= s.in_width) continue;
              acc += conv.weight.value(oc, (ic * s.kernel + ky) * s.kernel + kx) *
                     x((ic * s.in_height + iy) * s.in_width + ix, 0);
            }
        EXPECT_NEAR(y((oc * s.out_height() + oy) * s.out_width() + ox, 0), acc, 1e-12);
      }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  ConvShape s{2, 3, 4, 2, 1, 8, 8};
  Conv2d conv("c", s);
  init_all(conv, rng);
  Matrix x = random_matrix(s.in_size(), 2, rng);
  const Matrix r = random_matrix(s.out_size(), 2, rng);
  ConvCache cache;
  conv.forward(x, &cache);
  const Matrix dx = conv.backward(cache, r);
  auto f = [&] { return probe(conv.forward(x, nullptr), r); };
  EXPECT_LT(norm_rel_error(dx, numeric_gradient(f, x)), 1e-7);
  EXPECT_LT(norm_rel_error(conv.weight.grad, numeric_gradient(f, conv.weight.value)), 1e-7);
  EXPECT_LT(norm_rel_error(conv.bias.grad, numeric_gradient(f, conv.bias.value)), 1e-7);
}

TEST(Lstm, StepMatchesForward) {
  Rng rng(8);
  Lstm lstm("l", 3, 4);
  init_all(lstm, rng);
  std::vector<Matrix> xs = {random_matrix(3, 2, rng), random_matrix(3, 2, rng), random_matrix(3, 2, rng)};
  const auto hs = lstm.forward(xs, nullptr);
  Matrix h = Matrix::Zero(4, 2), c = Matrix::Zero(4, 2);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    lstm.step(xs[t], h, c);
    EXPECT_LT((h - hs[t]).norm(), 1e-14);
  }
}

TEST(Lstm, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  Lstm lstm("l", 3, 4);
  init_all(lstm, rng);
  std::vector<Matrix> xs = {random_matrix(3, 2, rng), random_matrix(3, 2, rng), random_matrix(3, 2, rng)};
  // Outside gradient only at steps 0 and 2; step 1 left empty.
  std::vector<Matrix> dh = {random_matrix(4, 2, rng), Matrix(), random_matrix(4, 2, rng)};
  auto f = [&] {
    const auto hs = lstm.forward(xs, nullptr);
    return probe(hs[0], dh[0]) + probe(hs[2], dh[2]);
  };
  LstmCache cache;
  lstm.forward(xs, &cache);
  const auto dxs = lstm.backward(cache, dh);
  for (std::size_t t = 0; t < xs.size(); ++t)
    EXPECT_LT(norm_rel_error(dxs[t], numeric_gradient(f, xs[t])), 1e-6) << "step " << t;
  EXPECT_LT(norm_rel_error(lstm.w_input.grad, numeric_gradient(f, lstm.w_input.value)), 1e-6);
  EXPECT_LT(norm_rel_error(lstm.w_hidden.grad, numeric_gradient(f, lstm.w_hidden.value)), 1e-6);
  EXPECT_LT(norm_rel_error(lstm.bias.grad, numeric_gradient(f, lstm.bias.value)), 1e-6);
}

TEST(Relu, BackwardMasksNegativeInputs) {
  Matrix x(3, 1);
  x << -1.0, 0.5, 2.0;
  const Matrix y = relu(x);
  EXPECT_EQ(y(0, 0), 0.0);
  const Matrix dx = relu_backward(y, Matrix::Ones(3, 1));
  EXPECT_EQ(dx(0, 0), 0.0);
  EXPECT_EQ(dx(1, 0), 1.0);
}

TEST(KaimingInit, VarianceMatchesFanIn) {
  Rng rng(10);
  Parameter w("w", 64, 64, ParamKind::kWeight, 64);
  kaiming_init(w, rng);
  const double mean = w.value.mean();
  const double var = (w.value.array() - mean).square().sum() / double(w.value.size() - 1);
  EXPECT_NEAR(var, 2.0 / 64.0, 0.1 * 2.0 / 64.0);
  Parameter b("b", 64, 1, ParamKind::kBias, 64);
  b.value.setConstant(3.0);
  kaiming_init(b, rng);
  EXPECT_EQ(b.value, Matrix::Zero(64, 1));
}
