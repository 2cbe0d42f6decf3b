#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "c3vqg/tensor.hpp"

namespace c3vqg {

// ---------------------------------------------------------------- text

/// Lowercases, drops apostrophes, turns any other punctuation into a
/// separator and splits on whitespace. Shared by the vocabulary and metrics.
std::vector<std::string> tokenize(std::string_view text);

/// Tokens joined by single spaces.
std::string normalize_text(std::string_view text);

class Vocabulary {
 public:
  /// Vocabulary holding only the four specials.
  Vocabulary();

  /// Words with frequency >= min_freq, ordered by descending frequency then
  /// lexicographically. Specials always occupy ids 0..3.
  static Vocabulary build(const std::vector<std::string>& texts, int min_freq);
  /// Rebuilds from a stored token list (specials included, in id order).
  static Vocabulary from_tokens(std::vector<std::string> tokens, int min_freq = 1);

  TokenId id(std::string_view word) const;
  const std::string& word(TokenId id) const;
  bool contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }
  std::size_t size() const { return tokens_.size(); }
  int min_freq() const { return min_freq_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// start + words + end, truncated so the result has at most max_len ids
  /// (the end marker is always kept).
  std::vector<TokenId> encode(std::string_view text, int max_len) const;
  /// Words between the start marker and the first end marker.
  std::string decode(std::span<const TokenId> ids) const;

 private:
  void add(const std::string& word);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  int min_freq_ = 1;
};

// ---------------------------------------------------------------- categories

class CategoryMap {
 public:
  /// The thirteen answer categories named in the evaluation tables.
  static const std::vector<std::string>& default_names();

  CategoryMap();
  explicit CategoryMap(std::vector<std::string> names);

  /// Two-column UTF-8 TSV: answer <TAB> category. Lines starting with '#'
  /// and blank lines are ignored. Category names not in `names` are appended.
  static CategoryMap from_tsv(const std::string& path, std::vector<std::string> names = default_names());

  CategoryId add_category(const std::string& name);
  void map_answer(std::string_view answer, const std::string& category);

  std::optional<CategoryId> lookup_answer(std::string_view answer) const;
  std::optional<CategoryId> id(std::string_view name) const;
  const std::string& name(CategoryId id) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t answer_count() const { return answers_.size(); }
  bool valid(CategoryId id) const { return id >= 0 && static_cast<std::size_t>(id) < names_.size(); }

 private:
  std::vector<std::string> names_;
  std::map<std::string, CategoryId> answers_;
};

/// Lowercased and whitespace-trimmed answer string used for map lookups.
std::string normalize_answer(std::string_view answer);

// ---------------------------------------------------------------- samples

/// One <image, question, category> training tuple.
struct Sample {
  std::int64_t question_id = 0;
  std::string image_id;
  std::string question;
  std::vector<TokenId> tokens;  // filled by encode_samples
  CategoryId category = 0;

  bool operator==(const Sample&) const = default;
};

struct LoadReport {
  std::size_t questions = 0;
  std::size_t annotations = 0;
  std::size_t kept = 0;
  std::size_t unmapped = 0;
  std::size_t malformed = 0;
  std::size_t unmatched = 0;  // question without annotation or vice versa

  double retention() const { return annotations == 0 ? 0.0 : double(kept) / double(annotations); }
};

/// Reads VQA-format question and annotation JSON files. Each question's
/// category comes from its majority answer (ties broken lexicographically);
/// questions whose answer is not in the map are dropped and counted.
std::vector<Sample> load_vqa(const std::string& annotations_path, const std::string& questions_path,
                             const CategoryMap& categories, LoadReport* report = nullptr);

Vocabulary build_vocab(const std::vector<Sample>& samples, int min_freq);
void encode_samples(std::vector<Sample>& samples, const Vocabulary& vocab, int max_len);

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
  double ratio = 0.8;
};

/// Seeded shuffle followed by a cut at round(ratio * n).
DatasetSplit split(const std::vector<Sample>& samples, double ratio, std::uint64_t seed);

// ---------------------------------------------------------------- images

/// Image tensors (CHW flattened) or precomputed feature vectors by id.
class ImageStore {
 public:
  struct Entry {
    int channels = 0;
    int height = 1;
    int width = 1;
    Vector data;
  };

  void add(const std::string& id, Entry entry);
  const Entry& get(const std::string& id) const;
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  /// Columns for the given ids, in order.
  Matrix gather(std::span<const std::string> ids) const;

  void save(const std::string& path) const;
  static ImageStore load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------- toy data

struct ToyScene {
  std::string image_id;
  std::string shape;
  std::string color;
  std::string side;
  std::string size;
};

/// Procedural shapes-and-colors corpus with one template question per
/// (image, category).
struct ToyDataset {
  std::vector<Sample> samples;
  Vocabulary vocab;
  CategoryMap categories;
  ImageStore images;
  std::vector<ToyScene> scenes;
};

/// Categories available to the toy generator, in the order they are used.
const std::vector<std::string>& toy_category_names();

ToyDataset make_toy_dataset(int n_images, int n_categories, std::uint64_t seed, int image_size = 64,
                            int max_len = 20);

/// Question text for a scene under a toy category.
std::string toy_question(const std::string& category, const ToyScene& scene);

/// True when `question` has the word pattern of the category's template
/// (any valid filler in the slots).
bool toy_template_matches(const std::string& category, std::string_view question);

/// Which toy category template (if any) the question follows.
std::optional<std::string> toy_template_of(std::string_view question);

// ---------------------------------------------------------------- cache

/// Prepared dataset as written by `prepare`: manifest.json, train.bin,
/// val.bin and images.bin in one directory.
struct PreparedDataset {
  Vocabulary vocab;
  CategoryMap categories;
  DatasetSplit split;
  ImageStore images;
  int max_len = 20;
  std::string source;
};

void write_sample_records(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_sample_records(const std::string& path);

void save_prepared(const std::string& dir, const PreparedDataset& data);
PreparedDataset load_prepared(const std::string& dir);

}  // namespace c3vqg
