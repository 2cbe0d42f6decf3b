#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "c3vqg/data.hpp"
#include "c3vqg/losses.hpp"
#include "c3vqg/model.hpp"

namespace c3vqg {

struct TrainConfig {
  int epochs = 15;
  double learning_rate = 1e-3;
  int batch_size = 64;
  std::uint64_t seed = 1;
  LossWeights weights;
  double center_update_scale = 0.5;
  /// Global-norm gradient clipping; 0 disables it.
  double grad_clip = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

/// Adam with bias correction; moments are kept per parameter in model order.
class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(const std::vector<Parameter*>& params, double learning_rate);

  std::int64_t steps() const { return steps_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  std::int64_t steps_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct TrainState {
  TrainConfig config;
  Model model;
  Adam optimizer;
  CenterBank centers;
  int epoch = 0;
  std::vector<LossBreakdown> history;
  Rng rng;
  // Labels needed to turn ids back into text after a reload.
  std::vector<std::string> vocabulary;
  std::vector<std::string> categories;
};

/// Kaiming-initialized parameters for a config; same seed, same values.
Model init_params(const ModelConfig& model_config, std::uint64_t seed);

/// Fresh state: parameters from init_params(seed), zero centers, zero moments.
TrainState init_state(const ModelConfig& model_config, const TrainConfig& config);

ModelBatch make_batch(std::span<const Sample> samples, const ImageStore& images);

/// One cyclic forward pass (generation, then category consistency), one
/// Adam update of every parameter, then the center update. Returns the
/// losses measured before the update.
LossBreakdown train_step(TrainState& state, std::span<const Sample> batch, const ImageStore& images);

using EpochCallback = std::function<void(const TrainState&, const LossBreakdown& epoch_mean)>;

/// Runs state.config.epochs epochs of seeded-shuffle mini-batches.
void train(TrainState& state, std::span<const Sample> samples, const ImageStore& images,
           const EpochCallback& on_epoch = {});

/// Convenience wrapper: init_state + train.
TrainState train(std::span<const Sample> samples, const ImageStore& images, const ModelConfig& model_config,
                 const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Teacher-forced token accuracy over a sample set (latent mean, no noise).
double teacher_forced_accuracy(const Model& model, std::span<const Sample> samples, const ImageStore& images,
                               std::size_t chunk = 64);

// Checkpoint layout: magic "C3VQGCKP", u32 format version, u64 FNV-1a hash
// of the embedded config text, then the config text, labels, named tensors,
// optimizer moments, center bank, counters, loss history and RNG state.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace c3vqg
