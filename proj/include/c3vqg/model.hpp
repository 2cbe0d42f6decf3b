#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "c3vqg/layers.hpp"
#include "c3vqg/losses.hpp"
#include "c3vqg/tensor.hpp"

namespace c3vqg {

enum class ImageEncoderKind { kConv, kFeatures };

std::string to_string(ImageEncoderKind kind);
ImageEncoderKind parse_image_encoder_kind(const std::string& text);

struct ModelConfig {
  ImageEncoderKind image_encoder = ImageEncoderKind::kConv;
  int image_channels = 3;
  int image_size = 64;  // square input for the conv encoder, multiple of 16
  int feature_dim = 2048;  // input width for the precomputed-feature encoder
  int image_embed = 64;
  int category_embed = 32;
  int fusion_hidden = 128;
  int latent_dim = 64;
  int word_embed = 64;
  int decoder_hidden = 128;
  int recon_hidden = 64;
  int classifier_embed = 64;
  int classifier_hidden = 64;
  int max_len = 20;
  double classifier_temperature = 1.0;
  int vocab_size = 0;
  int num_categories = 0;

  void validate() const;
  /// Flattened length of one encoder input column.
  Eigen::Index image_input_size() const;
};

// ---------------------------------------------------------------- image encoders

struct EncoderCache {
  std::vector<ConvCache> conv;
  std::vector<Matrix> activations;
};

/// Three strided convolutions (spatial /16) followed by a linear projection.
class ConvImageEncoder {
 public:
  ConvImageEncoder() = default;
  explicit ConvImageEncoder(const ModelConfig& config);

  Matrix forward(const Matrix& images, EncoderCache* cache) const;
  void backward(const EncoderCache& cache, const Matrix& dy);
  void collect(std::vector<Parameter*>& out);

 private:
  Conv2d conv1_, conv2_, conv3_;
  Linear project_;
};

/// Linear projection of precomputed image features.
class FeatureImageEncoder {
 public:
  FeatureImageEncoder() = default;
  explicit FeatureImageEncoder(const ModelConfig& config);

  Matrix forward(const Matrix& features, EncoderCache* cache) const;
  void backward(const EncoderCache& cache, const Matrix& dy);
  void collect(std::vector<Parameter*>& out);

 private:
  Linear project_;
};

using ImageEncoder = std::variant<ConvImageEncoder, FeatureImageEncoder>;

/// Two-layer perceptron with a ReLU hidden layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out);

  Matrix forward(const Matrix& x, Matrix* hidden_out = nullptr) const;
  Matrix backward(const Matrix& x, const Matrix& hidden, const Matrix& dy);
  void collect(std::vector<Parameter*>& out);

  Linear first;
  Linear second;
};

// ---------------------------------------------------------------- batches

/// A mini-batch in model space: image columns, categories, full token
/// sequences (start marker .. end marker).
struct ModelBatch {
  Matrix images;
  std::vector<CategoryId> categories;
  std::vector<std::vector<TokenId>> questions;

  std::size_t size() const { return categories.size(); }
};

/// Everything the training step needs back from one forward/backward pass.
struct StepOutputs {
  LossBreakdown losses;
  Matrix z;  // sampled latent codes, d x B
};

struct DecoderState {
  Matrix h;
  Matrix c;
  Vector z;
};

class Model {
 public:
  Model() = default;
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find(const std::string& name);
  void init(Rng& rng);
  void zero_grad();
  bool finite() const;

  // Single-sample operations.
  Vector encode_image(const Vector& image) const;
  Vector encode_category(CategoryId category) const;
  LatentDistribution fuse(const Vector& image_code, const Vector& category_code) const;
  static Vector sample_latent(const LatentDistribution& dist, const Vector& noise);

  /// With a teacher sequence, row t holds the scores after consuming
  /// teacher[0..t]; one row per teacher token. Without one, decodes greedily
  /// from the start marker and returns one row per emitted token.
  Matrix decode_question(const Vector& z, std::optional<std::span<const TokenId>> teacher,
                         int max_len) const;

  DecoderState start_decoding(const Vector& z) const;
  Vector decode_step(DecoderState& state, TokenId token) const;

  Vector reconstruct_image_encoding(const Vector& z) const;
  Vector reconstruct_category_encoding(const Vector& z) const;

  /// Soft classification: each row of `logits` is turned into a distribution
  /// (softmax at the configured temperature) and its expected embedding is
  /// fed to the classifier.
  Vector classify_question(const Matrix& logits) const;
  /// Same classifier on explicit per-step token distributions (rows sum to 1).
  Vector classify_distributions(const Matrix& probs) const;
  /// Hard path. A leading start marker is skipped; reading stops after the
  /// end marker.
  Vector classify_tokens(std::span<const TokenId> question) const;

  HyperPrior prior() const { return {log_alpha_.value.col(0)}; }

  /// Full objective on a batch with explicit reparameterization noise
  /// (d x B). When accumulate is set, gradients of the weighted total are
  /// added to every Parameter::grad. Reconstruction targets are treated as
  /// constants.
  StepOutputs forward_backward(const ModelBatch& batch, const Matrix& noise,
                               const CenterBank& centers, const LossWeights& weights,
                               bool accumulate);

  /// Fraction of non-pad target tokens whose teacher-forced argmax is right.
  double teacher_forced_accuracy(const ModelBatch& batch) const;

 private:
  Matrix encode_images(const Matrix& images, EncoderCache* cache) const;
  void backward_images(const EncoderCache& cache, const Matrix& dy);
  Matrix classifier_logits(const std::vector<Matrix>& step_inputs, std::span<const int> lengths,
                           LstmCache* cache, std::vector<Matrix>* hidden) const;

  ModelConfig config_;
  ImageEncoder image_encoder_;
  Embedding category_encoder_;
  Mlp fusion_;
  Embedding word_embed_;
  Lstm decoder_;
  Linear decoder_out_;
  Mlp image_head_;
  Mlp category_head_;
  Embedding classifier_embed_;
  Lstm classifier_;
  Linear classifier_out_;
  Parameter log_alpha_;
};

}  // namespace c3vqg
