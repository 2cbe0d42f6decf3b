#include "c3vqg/inference.hpp"

#include <limits>
#include <random>
#include <utility>

#include "c3vqg/binary_io.hpp"
#include "c3vqg/errors.hpp"

namespace c3vqg {

DecodeMode parse_decode_mode(const std::string& text) {
  if (text == "greedy") return DecodeMode::kGreedy;
  if (text == "sample") return DecodeMode::kSample;
  throw ConfigError("unknown decode mode '" + text + "' (expected greedy or sample)");
}

std::uint64_t category_seed(std::uint64_t seed, CategoryId category) {
  // splitmix64 finalizer over the pair.
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(category) + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<TokenId> generate(const Model& model, const Vector& image, CategoryId category,
                              const GenerateOptions& options) {
  if (!model.finite()) throw TrainingError("cannot generate: model parameters are not finite");
  if (options.mode == DecodeMode::kSample && !(options.temperature > 0.0))
    throw ConfigError("sampling temperature must be positive");
  const ModelConfig& cfg = model.config();
  if (category < 0 || category >= cfg.num_categories) throw DomainError("category id out of range");

  Rng rng(options.seed);
  const LatentDistribution dist = model.fuse(model.encode_image(image), model.encode_category(category));
  Vector noise = Vector::Zero(cfg.latent_dim);
  if (options.mode == DecodeMode::kSample) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = normal(rng);
  }
  DecoderState state = model.start_decoding(Model::sample_latent(dist, noise));

  std::vector<TokenId> out{kStartToken};
  while (static_cast<int>(out.size()) < cfg.max_len) {
    Vector scores = model.decode_step(state, out.back());
    scores[kPadToken] = -std::numeric_limits<double>::infinity();
    scores[kStartToken] = -std::numeric_limits<double>::infinity();
    TokenId next = 0;
    if (options.mode == DecodeMode::kGreedy) {
      Eigen::Index best = 0;
      scores.maxCoeff(&best);
      next = static_cast<TokenId>(best);
    } else {
      const Vector probs = softmax_columns(scores / options.temperature);
      std::discrete_distribution<TokenId> pick(probs.data(), probs.data() + probs.size());
      next = pick(rng);
    }
    out.push_back(next);
    if (next == kEndToken) break;
  }
  return out;
}

std::map<CategoryId, std::vector<TokenId>> generate_all(const Model& model, const Vector& image,
                                                        const GenerateOptions& options) {
  std::map<CategoryId, std::vector<TokenId>> out;
  for (CategoryId c = 0; c < model.config().num_categories; ++c) {
    GenerateOptions per = options;
    per.seed = category_seed(options.seed, c);
    out.emplace(c, generate(model, image, c, per));
  }
  return out;
}

std::vector<GenerationRecord> generate_records(const Model& model, const Vocabulary& vocab,
                                               const CategoryMap& categories, std::span<const Sample> samples,
                                               const ImageStore& images, const GenerateOptions& options) {
  std::vector<GenerationRecord> records;
  std::map<std::pair<std::string, CategoryId>, std::size_t> index;
  for (const Sample& s : samples) {
    const auto key = std::make_pair(s.image_id, s.category);
    auto it = index.find(key);
    if (it == index.end()) {
      GenerateOptions per = options;
      per.seed = category_seed(options.seed, s.category) ^ io::fnv1a(s.image_id);
      const auto tokens = generate(model, images.get(s.image_id).data, s.category, per);
      records.push_back({s.image_id, categories.name(s.category), vocab.decode(tokens), {}});
      it = index.emplace(key, records.size() - 1).first;
    }
    records[it->second].references.push_back(s.question);
  }
  return records;
}

}  // namespace c3vqg
