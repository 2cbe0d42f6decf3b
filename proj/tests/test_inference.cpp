#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "c3vqg/errors.hpp"
#include "c3vqg/inference.hpp"
#include "c3vqg/training.hpp"

using namespace c3vqg;

namespace {

ModelConfig feature_model(int categories = 13) {
  ModelConfig c;
  c.image_encoder = ImageEncoderKind::kFeatures;
  c.feature_dim = 12;
  c.image_embed = 8;
  c.category_embed = 4;
  c.fusion_hidden = 16;
  c.latent_dim = 6;
  c.word_embed = 8;
  c.decoder_hidden = 16;
  c.recon_hidden = 8;
  c.classifier_embed = 8;
  c.classifier_hidden = 8;
  c.max_len = 9;
  c.vocab_size = 15;
  c.num_categories = categories;
  return c;
}

Vector image(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector v(12);
  for (auto& x : v) x = u(rng);
  return v;
}

void expect_well_formed(const std::vector<TokenId>& q, const ModelConfig& c) {
  ASSERT_FALSE(q.empty());
  EXPECT_EQ(q.front(), kStartToken);
  EXPECT_LE(static_cast<int>(q.size()), c.max_len);
  for (std::size_t i = 1; i < q.size(); ++i) {
    EXPECT_NE(q[i], kPadToken);
    EXPECT_NE(q[i], kStartToken);
    EXPECT_LT(q[i], c.vocab_size);
    if (q[i] == kEndToken) EXPECT_EQ(i + 1, q.size()) << "tokens after the end marker";
  }
  if (static_cast<int>(q.size()) < c.max_len) EXPECT_EQ(q.back(), kEndToken);
}

}  // namespace

TEST(DecodeMode, Parse) {
  EXPECT_EQ(parse_decode_mode("greedy"), DecodeMode::kGreedy);
  EXPECT_EQ(parse_decode_mode("sample"), DecodeMode::kSample);
  EXPECT_THROW(parse_decode_mode("beam"), ConfigError);
}

TEST(Generate, GreedyIsDeterministicAndWellFormed) {
  const Model model = init_params(feature_model(), 1);
  for (CategoryId c = 0; c < 13; ++c) {
    const auto a = generate(model, image(c), c);
    EXPECT_EQ(a, generate(model, image(c), c));
    expect_well_formed(a, model.config());
  }
}

TEST(Generate, SamplingDependsOnlyOnSeed) {
  const Model model = init_params(feature_model(), 2);
  GenerateOptions opt{DecodeMode::kSample, 1.5, 7};
  bool any_difference = false;
  for (CategoryId c = 0; c < 13; ++c) {
    const auto a = generate(model, image(3), c, opt);
    EXPECT_EQ(a, generate(model, image(3), c, opt));
    expect_well_formed(a, model.config());
    GenerateOptions other = opt;
    other.seed = 8;
    any_difference = any_difference || generate(model, image(3), c, other) != a;
  }
  EXPECT_TRUE(any_difference);
}

TEST(Generate, RejectsBadArguments) {
  const Model model = init_params(feature_model(), 3);
  EXPECT_THROW(generate(model, image(1), 13), DomainError);
  EXPECT_THROW(generate(model, image(1), -1), DomainError);
  EXPECT_THROW(generate(model, Vector::Zero(5), 0), ConfigError);
  EXPECT_THROW(generate(model, image(1), 0, {DecodeMode::kSample, 0.0, 1}), ConfigError);
}

TEST(Generate, NonFiniteModelIsTrainingError) {
  Model model = init_params(feature_model(), 4);
  model.find("decoder.out.weight")->value(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(generate(model, image(1), 0), TrainingError);
}

TEST(GenerateAll, OneEntryPerCategoryIndependentOfOrder) {
  const Model model = init_params(feature_model(), 5);
  const GenerateOptions opt{DecodeMode::kSample, 1.0, 21};
  const auto all = generate_all(model, image(9), opt);
  ASSERT_EQ(all.size(), 13u);
  // Visiting categories in reverse with their own derived streams gives the
  // same questions.
  for (CategoryId c = 12; c >= 0; --c) {
    GenerateOptions single = opt;
    single.seed = category_seed(opt.seed, c);
    EXPECT_EQ(generate(model, image(9), c, single), all.at(c));
    expect_well_formed(all.at(c), model.config());
  }
  std::vector<std::uint64_t> seeds;
  for (CategoryId c = 0; c < 13; ++c) seeds.push_back(category_seed(21, c));
  std::sort(seeds.begin(), seeds.end());
  EXPECT_EQ(std::adjacent_find(seeds.begin(), seeds.end()), seeds.end());
}

TEST(GenerateRecords, GroupsReferencesByImageAndCategory) {
  const ToyDataset toy = make_toy_dataset(3, 2, 4, 16, 9);
  ModelConfig c = feature_model(2);
  c.image_encoder = ImageEncoderKind::kConv;
  c.image_size = 16;
  c.vocab_size = static_cast<int>(toy.vocab.size());
  const Model model = init_params(c, 6);
  std::vector<Sample> samples = toy.samples;
  samples.push_back(samples[0]);
  samples.back().question = "what color is it";
  const auto records = generate_records(model, toy.vocab, toy.categories, samples, toy.images);
  ASSERT_EQ(records.size(), 6u);
  EXPECT_EQ(records[0].image_id, samples[0].image_id);
  EXPECT_EQ(records[0].category, toy.categories.name(samples[0].category));
  EXPECT_EQ(records[0].references, (std::vector<std::string>{samples[0].question, "what color is it"}));
  EXPECT_EQ(records[1].references.size(), 1u);
  const auto again = generate_records(model, toy.vocab, toy.categories, samples, toy.images);
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(again[i].question, records[i].question);
}
