#pragma once

#include <span>
#include <string>
#include <vector>

#include "c3vqg/tensor.hpp"

// Batched layers with explicit backward passes. Activations are stored
// column-per-sample. forward() is const and keeps no state, so a model can be
// evaluated concurrently; backward() accumulates into Parameter::grad.

namespace c3vqg {

Matrix relu(const Matrix& x);
/// dL/dx of y = relu(x), given the forward output y.
Matrix relu_backward(const Matrix& y, const Matrix& dy);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out);

  Matrix forward(const Matrix& x) const;
  Matrix backward(const Matrix& x, const Matrix& dy);
  void collect(std::vector<Parameter*>& out);

  Eigen::Index in_dim() const { return weight.value.cols(); }
  Eigen::Index out_dim() const { return weight.value.rows(); }

  Parameter weight;
  Parameter bias;
};

/// Lookup table with one column per id. Supports hard (index) lookup and soft
/// lookup where each sample is a probability vector over ids.
class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, Eigen::Index count, Eigen::Index dim);

  Matrix lookup(std::span<const std::int32_t> ids) const;
  void backward_lookup(std::span<const std::int32_t> ids, const Matrix& dy);

  Matrix soft_lookup(const Matrix& weights) const;
  /// Accumulates the table gradient and returns dL/dweights.
  Matrix backward_soft(const Matrix& weights, const Matrix& dy);

  void collect(std::vector<Parameter*>& out);

  Eigen::Index count() const { return table.value.cols(); }
  Eigen::Index dim() const { return table.value.rows(); }

  Parameter table;
};

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int in_height = 0;
  int in_width = 0;

  int out_height() const { return (in_height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (in_width + 2 * pad - kernel) / stride + 1; }
  Eigen::Index in_size() const { return Eigen::Index(in_channels) * in_height * in_width; }
  Eigen::Index out_size() const { return Eigen::Index(out_channels) * out_height() * out_width(); }
};

struct ConvCache {
  std::vector<Matrix> columns;  // im2col buffer per sample
};

/// 2-D convolution over CHW-flattened images via im2col.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, const ConvShape& shape);

  Matrix forward(const Matrix& x, ConvCache* cache) const;
  Matrix backward(const ConvCache& cache, const Matrix& dy);
  void collect(std::vector<Parameter*>& out);

  const ConvShape& shape() const { return shape_; }

  Parameter weight;  // out_channels x (in_channels * k * k)
  Parameter bias;

 private:
  Matrix im2col(const double* image) const;
  void col2im(const Matrix& cols, double* image) const;

  ConvShape shape_;
};

struct LstmStep {
  Matrix x, h_prev, c_prev, i, f, g, o, c, tanh_c;
};

struct LstmCache {
  std::vector<LstmStep> steps;
};

/// Single-layer LSTM, gate order (input, forget, cell, output).
class Lstm {
 public:
  Lstm() = default;
  Lstm(const std::string& name, Eigen::Index input, Eigen::Index hidden);

  /// Runs from a zero state and returns the hidden state after every step.
  std::vector<Matrix> forward(const std::vector<Matrix>& inputs, LstmCache* cache) const;
  /// One step in place; used by autoregressive decoding.
  void step(const Matrix& x, Matrix& h, Matrix& c, LstmStep* record = nullptr) const;
  /// dh[t] is dL/dh_t from outside the recurrence. Returns dL/dx_t.
  std::vector<Matrix> backward(const LstmCache& cache, const std::vector<Matrix>& dh);
  void collect(std::vector<Parameter*>& out);

  Eigen::Index hidden() const { return w_hidden.value.cols(); }
  Eigen::Index input() const { return w_input.value.cols(); }

  Parameter w_input;
  Parameter w_hidden;
  Parameter bias;
};

}  // namespace c3vqg
