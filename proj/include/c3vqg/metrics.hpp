#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// Text-generation metrics. All functions tokenize with c3vqg::tokenize, so
// comparisons are case-insensitive and punctuation-agnostic.

namespace c3vqg {

using Tokens = std::vector<std::string>;

/// Sentence BLEU-n: clipped n-gram precisions (max count over references),
/// uniform weights 1/n, brevity penalty against the closest reference length.
double bleu_n(const std::string& candidate, const std::vector<std::string>& references, int n);
double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references, int n);

/// Corpus BLEU-n: n-gram matches and lengths summed over the corpus first.
double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                   int n);

/// LCS-based F-measure with recall weighted by beta = 1.2; precision and
/// recall each take their maximum over references.
double rouge_l(const std::string& candidate, const std::vector<std::string>& references);
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references);

/// Corpus CIDEr: TF-IDF n-gram vectors (n = 1..4), document frequencies from
/// the reference sets, mean cosine over references and n, times 10.
/// Returns one score per candidate.
std::vector<double> cider_scores(const std::vector<Tokens>& candidates,
                                 const std::vector<std::vector<Tokens>>& references);
double cider(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references);

/// Exact-match unigram METEOR: Fmean = 10PR / (R + 9P), fragmentation
/// penalty 0.5 (chunks / matches)^3; best over references.
double meteor_simplified(const std::string& candidate, const std::vector<std::string>& references);
double meteor_simplified(const Tokens& candidate, const std::vector<Tokens>& references);

/// Percentage of distinct questions among the generations.
double strength(const std::vector<std::string>& generations);

enum class InventivenessDenominator { kGenerations, kUnique };

/// Percentage of distinct generations that never occur in the training set.
double inventiveness(const std::vector<std::string>& generations, const std::vector<std::string>& training,
                     InventivenessDenominator denominator = InventivenessDenominator::kGenerations);

// ---------------------------------------------------------------- reports

struct GenerationRecord {
  std::string image_id;
  std::string category;
  std::string question;
  std::vector<std::string> references;
};

nlohmann::json to_json(const GenerationRecord& record);
GenerationRecord record_from_json(const nlohmann::json& j);
std::vector<GenerationRecord> read_generations(const std::string& path);
void write_generations(const std::string& path, const std::vector<GenerationRecord>& records);

struct DiversityRow {
  std::size_t count = 0;
  double strength = 0.0;
  double inventiveness = 0.0;
};

/// Similarity scores are in [0, 1] (CIDEr in [0, 10]); diversity in [0, 100].
struct MetricReport {
  std::size_t records = 0;
  double bleu[4] = {0, 0, 0, 0};
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  DiversityRow overall;
  std::map<std::string, DiversityRow> per_category;

  /// JSON with similarity metrics scaled by 100.
  nlohmann::json to_json() const;
  /// Aligned plain-text table: similarity block then one diversity row per category.
  std::string to_table() const;
};

struct EvaluateOptions {
  InventivenessDenominator denominator = InventivenessDenominator::kGenerations;
};

/// Corpus BLEU and CIDEr, mean per-record METEOR and ROUGE-L over records
/// that carry references; diversity over all records.
MetricReport evaluate(const std::vector<GenerationRecord>& records, const std::vector<std::string>& training,
                      const EvaluateOptions& options = {});

}  // namespace c3vqg
