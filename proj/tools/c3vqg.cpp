// Command-line driver: prepare | train | generate | evaluate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "c3vqg/config.hpp"
#include "c3vqg/data.hpp"
#include "c3vqg/errors.hpp"
#include "c3vqg/inference.hpp"
#include "c3vqg/metrics.hpp"
#include "c3vqg/training.hpp"

namespace fs = std::filesystem;
using namespace c3vqg;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool toy = false;
  std::string checkpoint;
  std::string out;
  std::string data_dir;
  std::string categories;
  std::string generations;
  bool unique_denominator = false;
};

ExperimentConfig load_experiment(const Options& opt) {
  ExperimentConfig cfg = opt.config_path.empty() ? ExperimentConfig{} : load_config(opt.config_path);
  if (opt.seed) cfg.train.seed = *opt.seed;
  return cfg;
}

PreparedDataset toy_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  ToyDataset toy = make_toy_dataset(cfg.data.toy_images, cfg.data.toy_categories, seed, cfg.model.image_size,
                                    cfg.model.max_len);
  PreparedDataset data;
  data.vocab = toy.vocab;
  data.categories = toy.categories;
  data.split = split(toy.samples, cfg.data.split_ratio, seed);
  data.images = std::move(toy.images);
  data.max_len = cfg.model.max_len;
  data.source = "toy";
  return data;
}

PreparedDataset vqa_data(const ExperimentConfig& cfg, const Options& opt) {
  const fs::path root(opt.data_dir);
  const CategoryMap cmap = opt.categories.empty() ? CategoryMap() : CategoryMap::from_tsv(opt.categories);
  LoadReport report;
  std::vector<Sample> samples = load_vqa((root / cfg.data.annotations_file).string(),
                                         (root / cfg.data.questions_file).string(), cmap, &report);
  std::cerr << "loaded " << report.kept << " of " << report.annotations << " annotated questions ("
            << report.unmapped << " unmapped, " << report.malformed << " malformed, " << report.unmatched
            << " unmatched)\n";
  if (samples.empty()) throw FormatError("no samples survived category mapping");
  PreparedDataset data;
  data.categories = cmap;
  data.split = split(samples, cfg.data.split_ratio, cfg.train.seed);
  data.vocab = build_vocab(data.split.train, cfg.data.min_word_freq);
  encode_samples(data.split.train, data.vocab, cfg.model.max_len);
  encode_samples(data.split.val, data.vocab, cfg.model.max_len);
  data.images = ImageStore::load((root / cfg.data.features_file).string());
  data.max_len = cfg.model.max_len;
  data.source = "vqa";
  return data;
}

/// Toy data regenerated from the seed, or a directory written by `prepare`.
PreparedDataset dataset_for(const ExperimentConfig& cfg, const Options& opt, std::uint64_t data_seed) {
  if (opt.toy) return toy_data(cfg, data_seed);
  if (opt.data_dir.empty()) throw ConfigError("either --toy or --data-dir is required");
  return load_prepared(opt.data_dir);
}

ModelConfig bind_model(ModelConfig model, const PreparedDataset& data) {
  const int vocab = static_cast<int>(data.vocab.size());
  const int cats = static_cast<int>(data.categories.size());
  if (model.vocab_size == 0) model.vocab_size = vocab;
  if (model.num_categories == 0) model.num_categories = cats;
  if (model.vocab_size != vocab || model.num_categories != cats)
    throw ConfigError("model.vocab_size / model.num_categories disagree with the dataset (" + std::to_string(vocab) +
                      " words, " + std::to_string(cats) + " categories)");
  if (model.max_len != data.max_len) throw ConfigError("model.max_len disagrees with the prepared dataset");
  return model;
}

std::string loss_line(const LossBreakdown& l) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "total=%.9g question=%.6g image=%.6g category=%.6g cons=%.6g center=%.6g bayes=%.6g",
                l.total, l.question, l.image, l.category, l.consistency, l.center, l.bayes);
  return buf;
}

std::vector<std::string> question_texts(const std::vector<Sample>& samples) {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.question);
  return out;
}

int cmd_prepare(const Options& opt) {
  const ExperimentConfig cfg = load_experiment(opt);
  if (opt.out.empty()) throw ConfigError("prepare needs --out <directory>");
  PreparedDataset data;
  if (opt.toy) {
    data = toy_data(cfg, cfg.train.seed);
  } else {
    if (opt.data_dir.empty()) throw ConfigError("prepare needs --toy or --data-dir");
    data = vqa_data(cfg, opt);
  }
  save_prepared(opt.out, data);
  std::cout << "prepared " << data.split.train.size() << " train / " << data.split.val.size() << " val samples, "
            << data.vocab.size() << " words, " << data.categories.size() << " categories -> " << opt.out << "\n";
  return 0;
}

int cmd_train(const Options& opt) {
  const ExperimentConfig cfg = load_experiment(opt);
  const PreparedDataset data = dataset_for(cfg, opt, cfg.train.seed);
  const ModelConfig model = bind_model(cfg.model, data);
  const std::string path = opt.checkpoint.empty() ? "c3vqg.ckpt" : opt.checkpoint;

  TrainState state = init_state(model, cfg.train);
  state.vocabulary = data.vocab.tokens();
  state.categories = data.categories.names();
  train(state, data.split.train, data.images, [](const TrainState& s, const LossBreakdown& mean) {
    std::cout << "epoch " << s.epoch << "/" << s.config.epochs << " " << loss_line(mean) << "\n" << std::flush;
  });
  if (!state.history.empty()) std::cout << "final loss " << loss_line(state.history.back()) << "\n";
  std::cout << "teacher-forced accuracy (train) "
            << teacher_forced_accuracy(state.model, data.split.train, data.images) << "\n";
  save_checkpoint(state, path);
  std::cout << "checkpoint -> " << path << "\n";
  return 0;
}

int cmd_generate(const Options& opt) {
  if (opt.checkpoint.empty()) throw ConfigError("generate needs --checkpoint");
  const ExperimentConfig cfg = load_experiment(opt);
  const TrainState state = load_checkpoint(opt.checkpoint);
  const PreparedDataset data = dataset_for(cfg, opt, state.config.seed);
  if (data.vocab.tokens() != state.vocabulary || data.categories.names() != state.categories)
    throw ConfigError("dataset vocabulary or categories differ from the checkpoint");
  const auto& samples = cfg.generate.split == "train" ? data.split.train : data.split.val;
  if (cfg.generate.split != "train" && cfg.generate.split != "val")
    throw ConfigError("generate.split must be \"train\" or \"val\"");

  GenerateOptions gen{parse_decode_mode(cfg.generate.mode), cfg.generate.temperature, cfg.train.seed};
  const auto records = generate_records(state.model, data.vocab, data.categories, samples, data.images, gen);
  const std::string path = opt.out.empty() ? "generations.jsonl" : opt.out;
  write_generations(path, records);
  std::cout << "wrote " << records.size() << " generations -> " << path << "\n";
  return 0;
}

int cmd_evaluate(const Options& opt) {
  const ExperimentConfig cfg = load_experiment(opt);
  const auto records = read_generations(opt.generations);
  std::vector<std::string> training;
  if (opt.toy || !opt.data_dir.empty()) {
    training = question_texts(dataset_for(cfg, opt, cfg.train.seed).split.train);
  } else {
    std::cerr << "warning: no training questions given (--toy or --data-dir); inventiveness treats every "
                 "generation as unseen\n";
  }
  EvaluateOptions eval;
  if (opt.unique_denominator) eval.denominator = InventivenessDenominator::kUnique;
  const MetricReport report = evaluate(records, training, eval);
  const std::string table = report.to_table();
  std::cout << table;
  if (!opt.out.empty()) {
    std::ofstream(opt.out + ".json") << report.to_json().dump(2) << "\n";
    std::ofstream(opt.out + ".txt") << table;
    std::cout << "report -> " << opt.out << ".json, " << opt.out << ".txt\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-consistent cyclic visual question generation"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Experiment config (TOML subset)")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Seed for every random choice; overrides train.seed");
  };
  auto data_flags = [&](CLI::App* sub) {
    sub->add_flag("--toy", opt.toy, "Use the procedural shapes-and-colors dataset");
    sub->add_option("--data-dir", opt.data_dir, "Prepared dataset directory (raw VQA files for prepare)");
  };

  auto* prepare = app.add_subcommand("prepare", "Build the cached dataset");
  common(prepare);
  data_flags(prepare);
  prepare->add_option("--categories", opt.categories, "answer<TAB>category map")->check(CLI::ExistingFile);
  prepare->add_option("--out", opt.out, "Output directory");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  common(train_cmd);
  data_flags(train_cmd);
  train_cmd->add_option("--checkpoint", opt.checkpoint, "Checkpoint to write");

  auto* generate_cmd = app.add_subcommand("generate", "Generate questions for a dataset split");
  common(generate_cmd);
  data_flags(generate_cmd);
  generate_cmd->add_option("--checkpoint", opt.checkpoint, "Trained checkpoint")->check(CLI::ExistingFile);
  generate_cmd->add_option("--out", opt.out, "Generations file (JSON lines)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a generations file");
  common(evaluate_cmd);
  data_flags(evaluate_cmd);
  evaluate_cmd->add_option("generations", opt.generations, "Generations file (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--out", opt.out, "Report path prefix (.json and .txt are written)");
  evaluate_cmd->add_flag("--unique-denominator", opt.unique_denominator,
                         "Divide inventiveness by the number of distinct generations");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*prepare) return cmd_prepare(opt);
    if (*train_cmd) return cmd_train(opt);
    if (*generate_cmd) return cmd_generate(opt);
    if (*evaluate_cmd) return cmd_evaluate(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
