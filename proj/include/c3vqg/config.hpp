#pragma once

#include <string>

#include "c3vqg/model.hpp"
#include "c3vqg/training.hpp"

// Experiment configuration in a small TOML subset: [section] headers,
// `key = value` lines with numbers, booleans and double-quoted strings, and
// `#` comments. Every key is declared; unknown sections or keys are errors.

namespace c3vqg {

struct DataConfig {
  int min_word_freq = 1;
  double split_ratio = 0.8;
  int toy_images = 50;
  int toy_categories = 3;
  std::string annotations_file = "annotations.json";
  std::string questions_file = "questions.json";
  std::string features_file = "features.bin";
};

struct GenerateConfig {
  std::string mode = "greedy";  // greedy | sample
  double temperature = 1.0;
  std::string split = "val";  // which prepared split to generate for
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  GenerateConfig generate;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);

/// Shortest round-trip decimal form, always with a '.' or exponent.
std::string format_double(double value);

}  // namespace c3vqg
