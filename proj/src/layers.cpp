#include "c3vqg/layers.hpp"

#include "c3vqg/errors.hpp"

namespace c3vqg {

namespace {

Matrix sigmoid(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

}  // namespace

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& y, const Matrix& dy) {
  return (y.array() > 0.0).select(dy, 0.0);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out)
    : weight(name + ".weight", out, in, ParamKind::kWeight, in),
      bias(name + ".bias", out, 1, ParamKind::kBias, in) {}

Matrix Linear::forward(const Matrix& x) const {
  if (x.rows() != in_dim())
    throw ConfigError(weight.name + ": expected input of size " + std::to_string(in_dim()) +
                      ", got " + std::to_string(x.rows()));
  Matrix y = weight.value * x;
  y.colwise() += bias.value.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  weight.grad.noalias() += dy * x.transpose();
  bias.grad.col(0) += dy.rowwise().sum();
  return weight.value.transpose() * dy;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------- Embedding

Embedding::Embedding(const std::string& name, Eigen::Index count, Eigen::Index dim)
    : table(name + ".table", dim, count, ParamKind::kWeight, count) {}

Matrix Embedding::lookup(std::span<const std::int32_t> ids) const {
  Matrix out(dim(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (ids[b] < 0 || ids[b] >= count())
      throw DomainError(table.name + ": id " + std::to_string(ids[b]) + " out of range [0, " +
                        std::to_string(count()) + ")");
    out.col(static_cast<Eigen::Index>(b)) = table.value.col(ids[b]);
  }
  return out;
}

void Embedding::backward_lookup(std::span<const std::int32_t> ids, const Matrix& dy) {
  for (std::size_t b = 0; b < ids.size(); ++b)
    table.grad.col(ids[b]) += dy.col(static_cast<Eigen::Index>(b));
}

Matrix Embedding::soft_lookup(const Matrix& weights) const {
  if (weights.rows() != count())
    throw ConfigError(table.name + ": soft lookup expects " + std::to_string(count()) + " rows");
  return table.value * weights;
}

Matrix Embedding::backward_soft(const Matrix& weights, const Matrix& dy) {
  table.grad.noalias() += dy * weights.transpose();
  return table.value.transpose() * dy;
}

void Embedding::collect(std::vector<Parameter*>& out) { out.push_back(&table); }

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, const ConvShape& shape)
    : weight(name + ".weight", shape.out_channels,
             Eigen::Index(shape.in_channels) * shape.kernel * shape.kernel, ParamKind::kWeight,
             Eigen::Index(shape.in_channels) * shape.kernel * shape.kernel),
      bias(name + ".bias", shape.out_channels, 1, ParamKind::kBias, 1),
      shape_(shape) {
  if (shape.out_height() <= 0 || shape.out_width() <= 0)
    throw ConfigError(name + ": kernel larger than padded input");
}

Matrix Conv2d::im2col(const double* image) const {
  const int k = shape_.kernel, oh = shape_.out_height(), ow = shape_.out_width();
  const int h = shape_.in_height, w = shape_.in_width;
  Matrix cols = Matrix::Zero(Eigen::Index(shape_.in_channels) * k * k, Eigen::Index(oh) * ow);
  for (int c = 0; c < shape_.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (Eigen::Index(c) * k + ky) * k + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * shape_.stride - shape_.pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * shape_.stride - shape_.pad + kx;
            if (ix < 0 || ix >= w) continue;
            cols(row, Eigen::Index(oy) * ow + ox) = image[(Eigen::Index(c) * h + iy) * w + ix];
          }
        }
      }
  return cols;
}

void Conv2d::col2im(const Matrix& cols, double* image) const {
  const int k = shape_.kernel, oh = shape_.out_height(), ow = shape_.out_width();
  const int h = shape_.in_height, w = shape_.in_width;
  for (int c = 0; c < shape_.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (Eigen::Index(c) * k + ky) * k + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * shape_.stride - shape_.pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * shape_.stride - shape_.pad + kx;
            if (ix < 0 || ix >= w) continue;
            image[(Eigen::Index(c) * h + iy) * w + ix] += cols(row, Eigen::Index(oy) * ow + ox);
          }
        }
      }
}

Matrix Conv2d::forward(const Matrix& x, ConvCache* cache) const {
  if (x.rows() != shape_.in_size())
    throw ConfigError(weight.name + ": expected input of size " + std::to_string(shape_.in_size()) +
                      ", got " + std::to_string(x.rows()));
  const Eigen::Index positions = Eigen::Index(shape_.out_height()) * shape_.out_width();
  Matrix out(shape_.out_size(), x.cols());
  if (cache) cache->columns.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    Matrix cols = im2col(x.col(b).data());
    // positions x out_channels, column-major == channel-major CHW output
    Matrix yt = cols.transpose() * weight.value.transpose();
    yt.rowwise() += bias.value.col(0).transpose();
    out.col(b) = Eigen::Map<const Vector>(yt.data(), positions * shape_.out_channels);
    if (cache) cache->columns[static_cast<std::size_t>(b)] = std::move(cols);
  }
  return out;
}

Matrix Conv2d::backward(const ConvCache& cache, const Matrix& dy) {
  const Eigen::Index positions = Eigen::Index(shape_.out_height()) * shape_.out_width();
  Matrix dx = Matrix::Zero(shape_.in_size(), dy.cols());
  for (Eigen::Index b = 0; b < dy.cols(); ++b) {
    Eigen::Map<const Matrix> dyt(dy.col(b).data(), positions, shape_.out_channels);
    const Matrix& cols = cache.columns[static_cast<std::size_t>(b)];
    weight.grad.noalias() += dyt.transpose() * cols.transpose();
    bias.grad.col(0) += dyt.colwise().sum().transpose();
    Matrix dcols = weight.value.transpose() * dyt.transpose();
    col2im(dcols, dx.col(b).data());
  }
  return dx;
}

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------- Lstm

Lstm::Lstm(const std::string& name, Eigen::Index input, Eigen::Index hidden)
    : w_input(name + ".w_input", 4 * hidden, input, ParamKind::kWeight, input),
      w_hidden(name + ".w_hidden", 4 * hidden, hidden, ParamKind::kWeight, hidden),
      bias(name + ".bias", 4 * hidden, 1, ParamKind::kBias, 1) {}

void Lstm::step(const Matrix& x, Matrix& h, Matrix& c, LstmStep* record) const {
  if (x.rows() != input())
    throw ConfigError(w_input.name + ": expected input of size " + std::to_string(input()));
  const Eigen::Index n = hidden();
  Matrix gates = w_input.value * x + w_hidden.value * h;
  gates.colwise() += bias.value.col(0);
  Matrix i = sigmoid(gates.topRows(n));
  Matrix f = sigmoid(gates.middleRows(n, n));
  Matrix g = gates.middleRows(2 * n, n).array().tanh().matrix();
  Matrix o = sigmoid(gates.bottomRows(n));
  Matrix c_new = (f.array() * c.array() + i.array() * g.array()).matrix();
  Matrix tanh_c = c_new.array().tanh().matrix();
  Matrix h_new = (o.array() * tanh_c.array()).matrix();
  if (record) {
    record->x = x;
    record->h_prev = h;
    record->c_prev = c;
    record->i = std::move(i);
    record->f = std::move(f);
    record->g = std::move(g);
    record->o = std::move(o);
    record->c = c_new;
    record->tanh_c = tanh_c;
  }
  h = std::move(h_new);
  c = std::move(c_new);
}

std::vector<Matrix> Lstm::forward(const std::vector<Matrix>& inputs, LstmCache* cache) const {
  std::vector<Matrix> hs;
  hs.reserve(inputs.size());
  if (inputs.empty()) return hs;
  const Eigen::Index batch = inputs.front().cols();
  Matrix h = Matrix::Zero(hidden(), batch);
  Matrix c = Matrix::Zero(hidden(), batch);
  if (cache) cache->steps.assign(inputs.size(), LstmStep{});
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    step(inputs[t], h, c, cache ? &cache->steps[t] : nullptr);
    hs.push_back(h);
  }
  return hs;
}

std::vector<Matrix> Lstm::backward(const LstmCache& cache, const std::vector<Matrix>& dh) {
  const std::size_t steps = cache.steps.size();
  std::vector<Matrix> dx(steps);
  if (steps == 0) return dx;
  const Eigen::Index n = hidden();
  const Eigen::Index batch = cache.steps.front().x.cols();
  Matrix dh_next = Matrix::Zero(n, batch);
  Matrix dc_next = Matrix::Zero(n, batch);
  Matrix dgates(4 * n, batch);
  for (std::size_t t = steps; t-- > 0;) {
    const LstmStep& s = cache.steps[t];
    Matrix dh_t = dh_next;
    if (dh[t].size() != 0) dh_t += dh[t];
    const Eigen::ArrayXXd dtanh = 1.0 - s.tanh_c.array().square();
    Eigen::ArrayXXd dc = dc_next.array() + dh_t.array() * s.o.array() * dtanh;
    dgates.topRows(n) = (dc * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();
    dgates.middleRows(n, n) = (dc * s.c_prev.array() * s.f.array() * (1.0 - s.f.array())).matrix();
    dgates.middleRows(2 * n, n) = (dc * s.i.array() * (1.0 - s.g.array().square())).matrix();
    dgates.bottomRows(n) = (dh_t.array() * s.tanh_c.array() * s.o.array() * (1.0 - s.o.array())).matrix();
    w_input.grad.noalias() += dgates * s.x.transpose();
    w_hidden.grad.noalias() += dgates * s.h_prev.transpose();
    bias.grad.col(0) += dgates.rowwise().sum();
    dx[t] = w_input.value.transpose() * dgates;
    dh_next = w_hidden.value.transpose() * dgates;
    dc_next = (dc * s.f.array()).matrix();
  }
  return dx;
}

void Lstm::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_input);
  out.push_back(&w_hidden);
  out.push_back(&bias);
}

}  // namespace c3vqg
