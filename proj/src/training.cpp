#include "c3vqg/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "c3vqg/binary_io.hpp"
#include "c3vqg/config.hpp"
#include "c3vqg/errors.hpp"

namespace c3vqg {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train.learning_rate must be a finite non-negative number");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(center_update_scale > 0.0 && center_update_scale < 1.0))
    throw ConfigError("train.center_update_scale must lie in (0, 1)");
  if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be positive");
  weights.validate();
}

// ---------------------------------------------------------------- Adam

void Adam::step(const std::vector<Parameter*>& params, double learning_rate) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const Parameter* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, double(steps_));
  const double c2 = 1.0 - std::pow(beta2_, double(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * p.grad;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= learning_rate * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + epsilon_);
  }
}

// ---------------------------------------------------------------- setup

Model init_params(const ModelConfig& model_config, std::uint64_t seed) {
  Model model(model_config);
  Rng rng(seed);
  model.init(rng);
  return model;
}

TrainState init_state(const ModelConfig& model_config, const TrainConfig& config) {
  config.validate();
  TrainState state{.config = config,
                   .model = Model(model_config),
                   .optimizer = Adam(config.adam_beta1, config.adam_beta2, config.adam_epsilon),
                   .centers = CenterBank(model_config.latent_dim, model_config.num_categories,
                                         config.center_update_scale),
                   .epoch = 0,
                   .history = {},
                   .rng = Rng(config.seed),
                   .vocabulary = {},
                   .categories = {}};
  state.model.init(state.rng);
  return state;
}

ModelBatch make_batch(std::span<const Sample> samples, const ImageStore& images) {
  ModelBatch batch;
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const Sample& s : samples) {
    if (s.tokens.empty()) throw DomainError("sample " + std::to_string(s.question_id) + " is not encoded");
    ids.push_back(s.image_id);
    batch.categories.push_back(s.category);
    batch.questions.push_back(s.tokens);
  }
  batch.images = images.gather(ids);
  return batch;
}

// ---------------------------------------------------------------- training

namespace {

void clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Parameter* p : params) p->grad *= scale;
  }
}

void accumulate(LossBreakdown& sum, const LossBreakdown& x, double w) {
  sum.question += w * x.question;
  sum.image += w * x.image;
  sum.category += w * x.category;
  sum.consistency += w * x.consistency;
  sum.center += w * x.center;
  sum.bayes += w * x.bayes;
  sum.total += w * x.total;
}

}  // namespace

LossBreakdown train_step(TrainState& state, std::span<const Sample> batch, const ImageStore& images) {
  if (batch.empty()) throw DomainError("train_step needs a nonempty batch");
  const ModelBatch mb = make_batch(batch, images);
  const Eigen::Index d = state.model.config().latent_dim;
  Matrix noise(d, static_cast<Eigen::Index>(mb.size()));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < noise.cols(); ++j)
    for (Eigen::Index i = 0; i < d; ++i) noise(i, j) = normal(state.rng);

  state.model.zero_grad();
  const StepOutputs out = state.model.forward_backward(mb, noise, state.centers, state.config.weights, true);
  auto params = state.model.parameters();
  for (const Parameter* p : params)
    if (!p->grad.allFinite()) throw TrainingError("non-finite gradient in " + p->name);
  if (state.config.grad_clip > 0.0) clip_gradients(params, state.config.grad_clip);
  state.optimizer.step(params, state.config.learning_rate);
  for (const Parameter* p : params)
    if (!p->value.allFinite()) throw TrainingError("parameter " + p->name + " became non-finite");
  update_centers(out.z, mb.categories, state.centers);
  state.history.push_back(out.losses);
  return out.losses;
}

void train(TrainState& state, std::span<const Sample> samples, const ImageStore& images,
           const EpochCallback& on_epoch) {
  if (samples.empty()) throw DomainError("train needs a nonempty dataset");
  const std::size_t bsz = static_cast<std::size_t>(state.config.batch_size);
  std::vector<std::size_t> order(samples.size());
  std::vector<Sample> batch;
  while (state.epoch < state.config.epochs) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(state.rng)]);
    }
    LossBreakdown mean;
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const std::size_t stop = std::min(order.size(), start + bsz);
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(samples[order[k]]);
      accumulate(mean, train_step(state, batch, images), double(stop - start) / double(order.size()));
    }
    ++state.epoch;
    if (on_epoch) on_epoch(state, mean);
  }
}

TrainState train(std::span<const Sample> samples, const ImageStore& images, const ModelConfig& model_config,
                 const TrainConfig& config, const EpochCallback& on_epoch) {
  TrainState state = init_state(model_config, config);
  train(state, samples, images, on_epoch);
  return state;
}

double teacher_forced_accuracy(const Model& model, std::span<const Sample> samples, const ImageStore& images,
                               std::size_t chunk) {
  if (chunk == 0) chunk = 1;
  double correct = 0.0;
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const auto part = samples.subspan(start, std::min(chunk, samples.size() - start));
    const ModelBatch mb = make_batch(part, images);
    double tokens = 0.0;
    for (const auto& q : mb.questions) tokens += double(q.size() - 1);
    correct += model.teacher_forced_accuracy(mb) * tokens;
    total += tokens;
  }
  return total == 0.0 ? 0.0 : correct / total;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr std::string_view kCheckpointMagic = "C3VQGCKP";

void put_strings(io::Writer& w, const std::vector<std::string>& items) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(items.size()));
  for (const auto& s : items) w.put_string(s);
}

std::vector<std::string> get_strings(io::Reader& r) {
  std::vector<std::string> items(r.get<std::uint32_t>());
  for (auto& s : items) s = r.get_string();
  return items;
}

std::string config_text(const TrainState& state) {
  ExperimentConfig cfg;
  cfg.model = state.model.config();
  cfg.train = state.config;
  return serialize_config(cfg);
}

void expect_shape(const Matrix& m, const Matrix& like, const std::string& what) {
  if (m.rows() != like.rows() || m.cols() != like.cols())
    throw FormatError("checkpoint tensor " + what + " has the wrong shape");
}

}  // namespace

std::string serialize_checkpoint(const TrainState& state) {
  io::Writer w;
  const std::string cfg = config_text(state);
  w.put_raw(kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(io::fnv1a(cfg));
  w.put_string(cfg);
  put_strings(w, state.vocabulary);
  put_strings(w, state.categories);

  const auto params = state.model.parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.put_string(p->name);
    w.put_matrix(p->value);
  }

  w.put<std::int64_t>(state.optimizer.steps());
  const auto& m = state.optimizer.first_moments();
  const auto& v = state.optimizer.second_moments();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.size()));
  for (std::size_t k = 0; k < m.size(); ++k) {
    w.put_matrix(m[k]);
    w.put_matrix(v[k]);
  }

  w.put_matrix(state.centers.centers);
  w.put<double>(state.centers.update_scale);
  w.put<std::int32_t>(state.epoch);

  w.put<std::uint64_t>(state.history.size());
  for (const LossBreakdown& h : state.history)
    for (double x : {h.question, h.image, h.category, h.consistency, h.center, h.bayes, h.total}) w.put<double>(x);

  std::ostringstream rng_text;
  rng_text << state.rng;
  w.put_string(rng_text.str());
  return w.take();
}

TrainState deserialize_checkpoint(std::string_view bytes) {
  io::Reader r(bytes);
  if (bytes.size() < kCheckpointMagic.size() || r.get_raw(kCheckpointMagic.size()) != kCheckpointMagic)
    throw FormatError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto hash = r.get<std::uint64_t>();
  const std::string cfg_text = r.get_string();
  if (io::fnv1a(cfg_text) != hash) throw FormatError("checkpoint config hash mismatch (corrupt file)");
  ExperimentConfig cfg;
  try {
    cfg = parse_config(cfg_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  }

  TrainState state{.config = cfg.train,
                   .model = Model(cfg.model),
                   .optimizer = Adam(cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_epsilon),
                   .centers = CenterBank(cfg.model.latent_dim, cfg.model.num_categories,
                                         cfg.train.center_update_scale),
                   .epoch = 0,
                   .history = {},
                   .rng = Rng(cfg.train.seed),
                   .vocabulary = get_strings(r),
                   .categories = get_strings(r)};

  auto params = state.model.parameters();
  const auto count = r.get<std::uint32_t>();
  if (count != params.size()) throw FormatError("checkpoint parameter count does not match the model");
  for (Parameter* p : params) {
    const std::string name = r.get_string();
    if (name != p->name) throw FormatError("checkpoint tensor '" + name + "' where '" + p->name + "' was expected");
    Matrix value = r.get_matrix();
    expect_shape(value, p->value, name);
    p->value = std::move(value);
  }

  state.optimizer.set_steps(r.get<std::int64_t>());
  const auto moments = r.get<std::uint32_t>();
  if (moments != 0 && moments != params.size()) throw FormatError("checkpoint optimizer state is inconsistent");
  for (std::uint32_t k = 0; k < moments; ++k) {
    Matrix m = r.get_matrix();
    Matrix v = r.get_matrix();
    expect_shape(m, params[k]->value, "adam.m." + params[k]->name);
    expect_shape(v, params[k]->value, "adam.v." + params[k]->name);
    state.optimizer.first_moments().push_back(std::move(m));
    state.optimizer.second_moments().push_back(std::move(v));
  }

  Matrix centers = r.get_matrix();
  expect_shape(centers, state.centers.centers, "centers");
  state.centers.centers = std::move(centers);
  state.centers.update_scale = r.get<double>();
  state.epoch = r.get<std::int32_t>();

  const auto steps = r.get<std::uint64_t>();
  if (steps > r.remaining() / (7 * sizeof(double))) throw FormatError("checkpoint history is truncated");
  state.history.resize(steps);
  for (LossBreakdown& h : state.history)
    for (double* x : {&h.question, &h.image, &h.category, &h.consistency, &h.center, &h.bayes, &h.total})
      *x = r.get<double>();

  std::istringstream rng_text(r.get_string());
  rng_text >> state.rng;
  if (rng_text.fail()) throw FormatError("checkpoint RNG state is corrupt");
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return state;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  io::write_file(path, serialize_checkpoint(state));
}

TrainState load_checkpoint(const std::string& path) { return deserialize_checkpoint(io::read_file(path)); }

}  // namespace c3vqg
