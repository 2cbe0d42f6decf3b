#include "c3vqg/model.hpp"

#include <algorithm>

#include "c3vqg/errors.hpp"

namespace c3vqg {

std::string to_string(ImageEncoderKind kind) {
  return kind == ImageEncoderKind::kConv ? "conv" : "features";
}

ImageEncoderKind parse_image_encoder_kind(const std::string& text) {
  if (text == "conv") return ImageEncoderKind::kConv;
  if (text == "features") return ImageEncoderKind::kFeatures;
  throw ConfigError("unknown image encoder '" + text + "' (expected conv or features)");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  if (image_encoder == ImageEncoderKind::kConv) {
    positive(image_channels, "image_channels");
    if (image_size < 16 || image_size % 16 != 0)
      throw ConfigError("image_size must be a positive multiple of 16");
  } else {
    positive(feature_dim, "feature_dim");
  }
  positive(image_embed, "image_embed");
  positive(category_embed, "category_embed");
  positive(fusion_hidden, "fusion_hidden");
  positive(latent_dim, "latent_dim");
  positive(word_embed, "word_embed");
  positive(decoder_hidden, "decoder_hidden");
  positive(recon_hidden, "recon_hidden");
  positive(classifier_embed, "classifier_embed");
  positive(classifier_hidden, "classifier_hidden");
  if (max_len < 3) throw ConfigError("max_len must be at least 3");
  if (!(classifier_temperature > 0.0)) throw ConfigError("classifier_temperature must be positive");
  if (vocab_size <= kSpecialTokenCount) throw ConfigError("vocab_size must exceed the special tokens");
  if (num_categories < 1) throw ConfigError("num_categories must be positive");
}

Eigen::Index ModelConfig::image_input_size() const {
  if (image_encoder == ImageEncoderKind::kFeatures) return feature_dim;
  return Eigen::Index(image_channels) * image_size * image_size;
}

// ---------------------------------------------------------------- encoders

namespace {

ConvShape conv_shape(int in_c, int out_c, int kernel, int stride, int pad, int size) {
  return {in_c, out_c, kernel, stride, pad, size, size};
}

}  // namespace

ConvImageEncoder::ConvImageEncoder(const ModelConfig& config) {
  const int s = config.image_size;
  conv1_ = Conv2d("image_encoder.conv1", conv_shape(config.image_channels, 8, 4, 2, 1, s));
  conv2_ = Conv2d("image_encoder.conv2", conv_shape(8, 16, 4, 2, 1, s / 2));
  conv3_ = Conv2d("image_encoder.conv3", conv_shape(16, 16, 4, 4, 0, s / 4));
  project_ = Linear("image_encoder.project", conv3_.shape().out_size(), config.image_embed);
}

Matrix ConvImageEncoder::forward(const Matrix& images, EncoderCache* cache) const {
  ConvCache c1, c2, c3;
  Matrix a1 = relu(conv1_.forward(images, cache ? &c1 : nullptr));
  Matrix a2 = relu(conv2_.forward(a1, cache ? &c2 : nullptr));
  Matrix a3 = relu(conv3_.forward(a2, cache ? &c3 : nullptr));
  Matrix out = project_.forward(a3);
  if (cache) {
    cache->conv = {std::move(c1), std::move(c2), std::move(c3)};
    cache->activations = {std::move(a1), std::move(a2), std::move(a3)};
  }
  return out;
}

void ConvImageEncoder::backward(const EncoderCache& cache, const Matrix& dy) {
  const auto& a = cache.activations;
  Matrix d = relu_backward(a[2], project_.backward(a[2], dy));
  d = relu_backward(a[1], conv3_.backward(cache.conv[2], d));
  d = relu_backward(a[0], conv2_.backward(cache.conv[1], d));
  conv1_.backward(cache.conv[0], d);
}

void ConvImageEncoder::collect(std::vector<Parameter*>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  conv3_.collect(out);
  project_.collect(out);
}

FeatureImageEncoder::FeatureImageEncoder(const ModelConfig& config)
    : project_("image_encoder.project", config.feature_dim, config.image_embed) {}

Matrix FeatureImageEncoder::forward(const Matrix& features, EncoderCache* cache) const {
  if (cache) cache->activations = {features};
  return project_.forward(features);
}

void FeatureImageEncoder::backward(const EncoderCache& cache, const Matrix& dy) {
  project_.backward(cache.activations[0], dy);
}

void FeatureImageEncoder::collect(std::vector<Parameter*>& out) { project_.collect(out); }

Mlp::Mlp(const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out)
    : first(name + ".fc1", in, hidden), second(name + ".fc2", hidden, out) {}

Matrix Mlp::forward(const Matrix& x, Matrix* hidden_out) const {
  Matrix hidden = relu(first.forward(x));
  Matrix out = second.forward(hidden);
  if (hidden_out) *hidden_out = std::move(hidden);
  return out;
}

Matrix Mlp::backward(const Matrix& x, const Matrix& hidden, const Matrix& dy) {
  return first.backward(x, relu_backward(hidden, second.backward(hidden, dy)));
}

void Mlp::collect(std::vector<Parameter*>& out) {
  first.collect(out);
  second.collect(out);
}

// ---------------------------------------------------------------- model

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const Eigen::Index d = config.latent_dim;
  if (config.image_encoder == ImageEncoderKind::kConv)
    image_encoder_ = ConvImageEncoder(config);
  else
    image_encoder_ = FeatureImageEncoder(config);
  category_encoder_ = Embedding("category_encoder", config.num_categories, config.category_embed);
  fusion_ = Mlp("fusion", config.image_embed + config.category_embed, config.fusion_hidden, 2 * d);
  word_embed_ = Embedding("decoder.embed", config.vocab_size, config.word_embed);
  decoder_ = Lstm("decoder.lstm", config.word_embed + d, config.decoder_hidden);
  decoder_out_ = Linear("decoder.out", config.decoder_hidden, config.vocab_size);
  image_head_ = Mlp("image_head", d, config.recon_hidden, config.image_embed);
  category_head_ = Mlp("category_head", d, config.recon_hidden, config.category_embed);
  classifier_embed_ = Embedding("classifier.embed", config.vocab_size, config.classifier_embed);
  classifier_ = Lstm("classifier.lstm", config.classifier_embed, config.classifier_hidden);
  classifier_out_ = Linear("classifier.out", config.classifier_hidden, config.num_categories);
  log_alpha_ = Parameter("hyper_prior.log_alpha", d, 1, ParamKind::kLogAlpha, 1);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  std::visit([&](auto& enc) { enc.collect(out); }, image_encoder_);
  category_encoder_.collect(out);
  fusion_.collect(out);
  word_embed_.collect(out);
  decoder_.collect(out);
  decoder_out_.collect(out);
  image_head_.collect(out);
  category_head_.collect(out);
  classifier_embed_.collect(out);
  classifier_.collect(out);
  classifier_out_.collect(out);
  out.push_back(&log_alpha_);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto mutable_params = const_cast<Model*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

Parameter* Model::find(const std::string& name) {
  for (Parameter* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

void Model::init(Rng& rng) {
  for (Parameter* p : parameters()) kaiming_init(*p, rng);
}

void Model::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

bool Model::finite() const {
  for (const Parameter* p : parameters())
    if (!p->value.allFinite()) return false;
  return true;
}

Matrix Model::encode_images(const Matrix& images, EncoderCache* cache) const {
  if (images.rows() != config_.image_input_size())
    throw ConfigError("image input has " + std::to_string(images.rows()) + " values, model expects " +
                      std::to_string(config_.image_input_size()));
  return std::visit([&](const auto& enc) { return enc.forward(images, cache); }, image_encoder_);
}

void Model::backward_images(const EncoderCache& cache, const Matrix& dy) {
  std::visit([&](auto& enc) { enc.backward(cache, dy); }, image_encoder_);
}

Vector Model::encode_image(const Vector& image) const { return encode_images(image, nullptr).col(0); }

Vector Model::encode_category(CategoryId category) const {
  const CategoryId ids[] = {category};
  return category_encoder_.lookup(ids).col(0);
}

LatentDistribution Model::fuse(const Vector& image_code, const Vector& category_code) const {
  if (image_code.size() != config_.image_embed || category_code.size() != config_.category_embed)
    throw ConfigError("fuse: encoding dimensions do not match the model");
  Vector x(image_code.size() + category_code.size());
  x << image_code, category_code;
  const Vector stats = fusion_.forward(x).col(0);
  const Eigen::Index d = config_.latent_dim;
  return {stats.head(d), stats.tail(d)};
}

Vector Model::sample_latent(const LatentDistribution& dist, const Vector& noise) {
  if (noise.size() != dist.dim()) throw DomainError("sample_latent: noise dimension mismatch");
  return dist.mean + (dist.stddev().array() * noise.array()).matrix();
}

DecoderState Model::start_decoding(const Vector& z) const {
  if (z.size() != config_.latent_dim) throw ConfigError("latent code has the wrong dimension");
  return {Matrix::Zero(config_.decoder_hidden, 1), Matrix::Zero(config_.decoder_hidden, 1), z};
}

Vector Model::decode_step(DecoderState& state, TokenId token) const {
  const TokenId ids[] = {token};
  Matrix x(config_.word_embed + config_.latent_dim, 1);
  x << word_embed_.lookup(ids), state.z;
  decoder_.step(x, state.h, state.c);
  return decoder_out_.forward(state.h).col(0);
}

Matrix Model::decode_question(const Vector& z, std::optional<std::span<const TokenId>> teacher,
                              int max_len) const {
  DecoderState state = start_decoding(z);
  std::vector<Vector> rows;
  if (teacher) {
    if (teacher->empty()) throw DomainError("decode_question: empty teacher sequence");
    for (TokenId t : *teacher) rows.push_back(decode_step(state, t));
  } else {
    if (max_len < 2) throw DomainError("decode_question: max_len must be at least 2");
    TokenId token = kStartToken;
    for (int emitted = 1; emitted < max_len; ++emitted) {
      rows.push_back(decode_step(state, token));
      Eigen::Index best = 0;
      rows.back().maxCoeff(&best);
      token = static_cast<TokenId>(best);
      if (token == kEndToken) break;
    }
  }
  Matrix logits(static_cast<Eigen::Index>(rows.size()), config_.vocab_size);
  for (std::size_t t = 0; t < rows.size(); ++t) logits.row(static_cast<Eigen::Index>(t)) = rows[t].transpose();
  return logits;
}

Vector Model::reconstruct_image_encoding(const Vector& z) const { return image_head_.forward(z).col(0); }

Vector Model::reconstruct_category_encoding(const Vector& z) const {
  return category_head_.forward(z).col(0);
}

Matrix Model::classifier_logits(const std::vector<Matrix>& step_inputs, std::span<const int> lengths,
                                LstmCache* cache, std::vector<Matrix>* hidden) const {
  std::vector<Matrix> hs = classifier_.forward(step_inputs, cache);
  const Eigen::Index batch = static_cast<Eigen::Index>(lengths.size());
  Matrix last(config_.classifier_hidden, batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    last.col(b) = hs[static_cast<std::size_t>(lengths[static_cast<std::size_t>(b)] - 1)].col(b);
  Matrix logits = classifier_out_.forward(last);
  if (hidden) *hidden = {std::move(last)};
  return logits;
}

Vector Model::classify_distributions(const Matrix& probs) const {
  if (probs.rows() == 0) throw DomainError("classify: empty question");
  if (probs.cols() != config_.vocab_size) throw ConfigError("classify: distribution width != vocabulary");
  std::vector<Matrix> inputs;
  for (Eigen::Index t = 0; t < probs.rows(); ++t)
    inputs.push_back(classifier_embed_.soft_lookup(probs.row(t).transpose()));
  const int lengths[] = {static_cast<int>(probs.rows())};
  return softmax_columns(classifier_logits(inputs, lengths, nullptr, nullptr)).col(0);
}

Vector Model::classify_question(const Matrix& logits) const {
  if (logits.rows() == 0) throw DomainError("classify: empty question");
  const Matrix probs = softmax_columns(logits.transpose() / config_.classifier_temperature);
  return classify_distributions(probs.transpose());
}

Vector Model::classify_tokens(std::span<const TokenId> question) const {
  std::vector<TokenId> tokens;
  std::size_t i = (!question.empty() && question.front() == kStartToken) ? 1 : 0;
  for (; i < question.size(); ++i) {
    if (question[i] == kPadToken) break;
    tokens.push_back(question[i]);
    if (question[i] == kEndToken) break;
  }
  if (tokens.empty()) throw DomainError("classify: empty question");
  Matrix onehot = Matrix::Zero(static_cast<Eigen::Index>(tokens.size()), config_.vocab_size);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || tokens[t] >= config_.vocab_size) throw DomainError("classify: token outside vocabulary");
    onehot(static_cast<Eigen::Index>(t), tokens[t]) = 1.0;
  }
  return classify_distributions(onehot);
}

// ---------------------------------------------------------------- objective

namespace {

struct TeacherLayout {
  std::vector<int> steps;  // valid decoding steps per sample
  std::vector<std::vector<TokenId>> inputs;
  std::vector<std::vector<TokenId>> targets;
};

TeacherLayout layout_questions(const std::vector<std::vector<TokenId>>& questions) {
  TeacherLayout layout;
  int longest = 0;
  for (const auto& q : questions) {
    if (q.size() < 2) throw DomainError("question needs at least a start marker and one token");
    layout.steps.push_back(static_cast<int>(q.size()) - 1);
    longest = std::max(longest, layout.steps.back());
  }
  const std::size_t batch = questions.size();
  layout.inputs.assign(static_cast<std::size_t>(longest), std::vector<TokenId>(batch, kPadToken));
  layout.targets.assign(static_cast<std::size_t>(longest), std::vector<TokenId>(batch, kPadToken));
  for (std::size_t b = 0; b < batch; ++b)
    for (int t = 0; t < layout.steps[b]; ++t) {
      layout.inputs[static_cast<std::size_t>(t)][b] = questions[b][static_cast<std::size_t>(t)];
      layout.targets[static_cast<std::size_t>(t)][b] = questions[b][static_cast<std::size_t>(t) + 1];
    }
  return layout;
}

}  // namespace

StepOutputs Model::forward_backward(const ModelBatch& batch, const Matrix& noise,
                                    const CenterBank& centers, const LossWeights& w,
                                    bool accumulate) {
  const Eigen::Index bsz = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index d = config_.latent_dim;
  if (bsz == 0) throw DomainError("empty batch");
  if (batch.images.cols() != bsz || static_cast<Eigen::Index>(batch.questions.size()) != bsz)
    throw DomainError("batch fields disagree in size");
  if (noise.rows() != d || noise.cols() != bsz) throw DomainError("noise must be latent_dim x batch");
  const double tau = config_.classifier_temperature;

  // Step I: encoders, fusion, reparameterized latent, reconstructions, decoder.
  EncoderCache enc_cache;
  const Matrix image_code = encode_images(batch.images, &enc_cache);
  const Matrix category_code = category_encoder_.lookup(batch.categories);
  Matrix joint(config_.image_embed + config_.category_embed, bsz);
  joint << image_code, category_code;
  Matrix fusion_hidden;
  const Matrix stats = fusion_.forward(joint, &fusion_hidden);
  const Matrix mean = stats.topRows(d);
  const Matrix log_var = stats.bottomRows(d);
  const Matrix sigma = (0.5 * log_var.array()).exp().matrix();
  StepOutputs out;
  out.z = mean + (sigma.array() * noise.array()).matrix();
  const Matrix& z = out.z;

  Matrix image_hidden, category_hidden, g_image, g_category;
  const Matrix image_pred = image_head_.forward(z, &image_hidden);
  const Matrix category_pred = category_head_.forward(z, &category_hidden);
  out.losses.image = squared_error_batch(image_pred, image_code, &g_image);
  out.losses.category = squared_error_batch(category_pred, category_code, &g_category);

  const TeacherLayout layout = layout_questions(batch.questions);
  const std::size_t steps = layout.inputs.size();
  std::vector<Matrix> dec_inputs(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    dec_inputs[t].resize(config_.word_embed + d, bsz);
    dec_inputs[t] << word_embed_.lookup(layout.inputs[t]), z;
  }
  LstmCache dec_cache;
  const std::vector<Matrix> dec_hidden = decoder_.forward(dec_inputs, &dec_cache);
  std::vector<Matrix> logits(steps);
  for (std::size_t t = 0; t < steps; ++t) logits[t] = decoder_out_.forward(dec_hidden[t]);
  std::vector<Matrix> g_logits;
  out.losses.question = question_loss_batch(logits, layout.targets, &g_logits);

  // Step II: classify the generated (soft) question.
  std::vector<Matrix> probs(steps), cls_inputs(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    probs[t] = softmax_columns(logits[t] / tau);
    cls_inputs[t] = classifier_embed_.soft_lookup(probs[t]);
  }
  LstmCache cls_cache;
  std::vector<Matrix> cls_last;
  const Matrix cls_logits = classifier_logits(cls_inputs, layout.steps, &cls_cache, &cls_last);
  const Matrix cls_probs = softmax_columns(cls_logits);
  Matrix g_cls;
  out.losses.consistency = consistency_loss_batch(cls_probs, batch.categories, &g_cls);

  Matrix g_center;
  out.losses.center = center_loss_batch(z, batch.categories, centers, &g_center);

  KlBatchGrad g_kl;
  Vector g_reg;
  const HyperPrior hp = prior();
  out.losses.bayes = hyperprior_kl_batch(mean, log_var, hp, &g_kl) + hyperprior_reg(hp, w.reg, &g_reg);
  out.losses.total = total_loss(out.losses, w);

  if (!accumulate) return out;

  // Backward, in reverse order of the forward pass.
  std::vector<Matrix> d_logits(steps);
  {
    const Matrix d_cls_logits = softmax_backward(cls_probs, w.consistency * g_cls);
    const Matrix d_last = classifier_out_.backward(cls_last[0], d_cls_logits);
    std::vector<Matrix> d_cls_hidden(steps, Matrix::Zero(config_.classifier_hidden, bsz));
    for (Eigen::Index b = 0; b < bsz; ++b)
      d_cls_hidden[static_cast<std::size_t>(layout.steps[static_cast<std::size_t>(b)] - 1)].col(b) = d_last.col(b);
    const std::vector<Matrix> d_cls_inputs = classifier_.backward(cls_cache, d_cls_hidden);
    for (std::size_t t = 0; t < steps; ++t) {
      const Matrix d_probs = classifier_embed_.backward_soft(probs[t], d_cls_inputs[t]);
      d_logits[t] = softmax_backward(probs[t], d_probs) / tau + w.question * g_logits[t];
    }
  }

  Matrix dz = Matrix::Zero(d, bsz);
  {
    std::vector<Matrix> d_dec_hidden(steps);
    for (std::size_t t = 0; t < steps; ++t) d_dec_hidden[t] = decoder_out_.backward(dec_hidden[t], d_logits[t]);
    const std::vector<Matrix> d_dec_inputs = decoder_.backward(dec_cache, d_dec_hidden);
    for (std::size_t t = 0; t < steps; ++t) {
      word_embed_.backward_lookup(layout.inputs[t], d_dec_inputs[t].topRows(config_.word_embed));
      dz += d_dec_inputs[t].bottomRows(d);
    }
  }
  dz += image_head_.backward(z, image_hidden, w.image * g_image);
  dz += category_head_.backward(z, category_hidden, w.category * g_category);
  dz += w.center * g_center;

  Matrix d_stats(2 * d, bsz);
  d_stats.topRows(d) = dz + w.bayes * g_kl.mean;
  d_stats.bottomRows(d) =
      (dz.array() * noise.array() * 0.5 * sigma.array()).matrix() + w.bayes * g_kl.log_var;
  const Matrix d_joint = fusion_.backward(joint, fusion_hidden, d_stats);
  backward_images(enc_cache, d_joint.topRows(config_.image_embed));
  category_encoder_.backward_lookup(batch.categories, d_joint.bottomRows(config_.category_embed));
  log_alpha_.grad.col(0) += w.bayes * (g_kl.log_alpha + g_reg);
  return out;
}

double Model::teacher_forced_accuracy(const ModelBatch& batch) const {
  const Eigen::Index bsz = static_cast<Eigen::Index>(batch.size());
  if (bsz == 0) return 0.0;
  const Eigen::Index d = config_.latent_dim;
  const Matrix image_code = encode_images(batch.images, nullptr);
  Matrix joint(config_.image_embed + config_.category_embed, bsz);
  joint << image_code, category_encoder_.lookup(batch.categories);
  const Matrix z = fusion_.forward(joint).topRows(d);
  const TeacherLayout layout = layout_questions(batch.questions);
  std::vector<Matrix> inputs(layout.inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    inputs[t].resize(config_.word_embed + d, bsz);
    inputs[t] << word_embed_.lookup(layout.inputs[t]), z;
  }
  const std::vector<Matrix> hidden = decoder_.forward(inputs, nullptr);
  long correct = 0, total = 0;
  for (std::size_t t = 0; t < hidden.size(); ++t) {
    const Matrix logits = decoder_out_.forward(hidden[t]);
    for (Eigen::Index b = 0; b < bsz; ++b) {
      const TokenId target = layout.targets[t][static_cast<std::size_t>(b)];
      if (target == kPadToken) continue;
      Eigen::Index best = 0;
      logits.col(b).maxCoeff(&best);
      correct += best == target;
      ++total;
    }
  }
  return total == 0 ? 0.0 : double(correct) / double(total);
}

}  // namespace c3vqg
