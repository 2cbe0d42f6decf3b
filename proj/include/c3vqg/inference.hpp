#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "c3vqg/data.hpp"
#include "c3vqg/metrics.hpp"
#include "c3vqg/model.hpp"

namespace c3vqg {

enum class DecodeMode { kGreedy, kSample };

DecodeMode parse_decode_mode(const std::string& text);

struct GenerateOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  /// Softmax temperature for sampled decoding.
  double temperature = 1.0;
  std::uint64_t seed = 1;
};

/// Question for an image and a target category. Greedy mode uses z = mean
/// and argmax tokens; sample mode draws z and each token from `seed`.
/// Returns start marker .. end marker, or max_len tokens if no end is emitted.
/// Pad and start markers are never emitted.
std::vector<TokenId> generate(const Model& model, const Vector& image, CategoryId category,
                              const GenerateOptions& options = {});

/// One generation per category. Each category draws from its own stream
/// derived from (seed, category), so entries do not depend on visiting order.
std::map<CategoryId, std::vector<TokenId>> generate_all(const Model& model, const Vector& image,
                                                        const GenerateOptions& options = {});

/// Seed for one category's stream.
std::uint64_t category_seed(std::uint64_t seed, CategoryId category);

/// One record per distinct (image, category) pair in `samples`, in first-seen
/// order; the references are every question of that pair.
std::vector<GenerationRecord> generate_records(const Model& model, const Vocabulary& vocab,
                                               const CategoryMap& categories, std::span<const Sample> samples,
                                               const ImageStore& images, const GenerateOptions& options = {});

}  // namespace c3vqg
