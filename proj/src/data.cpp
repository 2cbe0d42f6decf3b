#include "c3vqg/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "c3vqg/binary_io.hpp"
#include "c3vqg/errors.hpp"

namespace c3vqg {

using nlohmann::json;

// ---------------------------------------------------------------- text

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char ch : text) {
    if (ch == '\'') continue;
    if (std::isspace(ch) || std::ispunct(ch)) {
      flush();
    } else {
      current.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

// ---------------------------------------------------------------- vocabulary

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials = {"<pad>", "<start>", "<end>", "<unk>"};
  return specials;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& s : special_tokens()) add(s);
}

void Vocabulary::add(const std::string& word) {
  index_.emplace(word, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(word);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, int min_freq) {
  std::map<std::string, int> freq;
  for (const auto& text : texts)
    for (auto& tok : tokenize(text)) ++freq[tok];
  std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  vocab.min_freq_ = min_freq;
  for (const auto& [word, count] : ranked)
    if (count >= min_freq && !vocab.contains(word)) vocab.add(word);
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, int min_freq) {
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size() || !std::equal(specials.begin(), specials.end(), tokens.begin()))
    throw FormatError("vocabulary must start with the special tokens");
  Vocabulary vocab;
  vocab.min_freq_ = min_freq;
  for (std::size_t i = specials.size(); i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) throw FormatError("duplicate vocabulary entry '" + tokens[i] + "'");
    vocab.add(tokens[i]);
  }
  return vocab;
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknownToken : it->second;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw DomainError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text, int max_len) const {
  if (max_len < 3) throw DomainError("max_len must leave room for start, a word and end");
  std::vector<TokenId> ids = {kStartToken};
  for (const auto& tok : tokenize(text)) {
    if (static_cast<int>(ids.size()) >= max_len - 1) break;
    ids.push_back(id(tok));
  }
  ids.push_back(kEndToken);
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId t = ids[i];
    if (t == kStartToken && i == 0) continue;
    if (t == kEndToken) break;
    if (t == kPadToken) continue;
    if (!out.empty()) out.push_back(' ');
    out += word(t);
  }
  return out;
}

// ---------------------------------------------------------------- categories

const std::vector<std::string>& CategoryMap::default_names() {
  static const std::vector<std::string> names = {
      "count", "binary",   "object",   "color", "attribute", "materials", "spatial",
      "food",  "shape",    "location", "predicate", "time",  "activity"};
  return names;
}

CategoryMap::CategoryMap() : names_(default_names()) {}

CategoryMap::CategoryMap(std::vector<std::string> names) {
  for (auto& n : names) add_category(n);
}

CategoryId CategoryMap::add_category(const std::string& name) {
  if (auto existing = id(name)) return *existing;
  names_.push_back(name);
  return static_cast<CategoryId>(names_.size() - 1);
}

std::string normalize_answer(std::string_view answer) {
  std::size_t b = 0, e = answer.size();
  while (b < e && std::isspace(static_cast<unsigned char>(answer[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(answer[e - 1]))) --e;
  std::string out(answer.substr(b, e - b));
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

void CategoryMap::map_answer(std::string_view answer, const std::string& category) {
  answers_[normalize_answer(answer)] = add_category(category);
}

CategoryMap CategoryMap::from_tsv(const std::string& path, std::vector<std::string> names) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open category map " + path);
  CategoryMap map(std::move(names));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 'answer<TAB>category'");
    const std::string category = normalize_answer(line.substr(tab + 1));
    if (category.empty()) throw FormatError(path + ":" + std::to_string(line_no) + ": empty category");
    map.map_answer(line.substr(0, tab), category);
  }
  return map;
}

std::optional<CategoryId> CategoryMap::lookup_answer(std::string_view answer) const {
  auto it = answers_.find(normalize_answer(answer));
  if (it == answers_.end()) return std::nullopt;
  return it->second;
}

std::optional<CategoryId> CategoryMap::id(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<CategoryId>(it - names_.begin());
}

const std::string& CategoryMap::name(CategoryId id) const {
  if (!valid(id)) throw DomainError("category id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

// ---------------------------------------------------------------- VQA loader

namespace {

json read_json(const std::string& path) {
  if (!std::filesystem::exists(path)) throw FormatError("missing file " + path);
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::optional<std::string> id_string(const json& v) {
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_string()) return v.get<std::string>();
  return std::nullopt;
}

std::optional<std::string> majority_answer(const json& ann) {
  std::map<std::string, int> votes;
  if (auto it = ann.find("answers"); it != ann.end() && it->is_array()) {
    for (const auto& a : *it) {
      if (!a.is_object() || !a.contains("answer") || !a["answer"].is_string()) return std::nullopt;
      ++votes[normalize_answer(a["answer"].get<std::string>())];
    }
  }
  if (votes.empty()) {
    if (auto it = ann.find("multiple_choice_answer"); it != ann.end() && it->is_string())
      return normalize_answer(it->get<std::string>());
    return std::nullopt;
  }
  // std::map iterates lexicographically, so the first maximum wins ties.
  auto best = votes.begin();
  for (auto it = votes.begin(); it != votes.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

}  // namespace

std::vector<Sample> load_vqa(const std::string& annotations_path, const std::string& questions_path,
                             const CategoryMap& categories, LoadReport* report) {
  const json annotations = read_json(annotations_path);
  const json questions = read_json(questions_path);
  LoadReport r;

  const json* ann_list = annotations.is_object() && annotations.contains("annotations")
                             ? &annotations["annotations"]
                             : nullptr;
  const json* q_list =
      questions.is_object() && questions.contains("questions") ? &questions["questions"] : nullptr;
  if (!ann_list || !ann_list->is_array()) throw FormatError(annotations_path + ": no 'annotations' array");
  if (!q_list || !q_list->is_array()) throw FormatError(questions_path + ": no 'questions' array");

  std::map<std::int64_t, std::string> answer_by_question;
  for (const auto& ann : *ann_list) {
    if (!ann.is_object() || !ann.contains("question_id") || !ann["question_id"].is_number_integer()) {
      ++r.malformed;
      continue;
    }
    auto answer = majority_answer(ann);
    if (!answer) {
      ++r.malformed;
      continue;
    }
    ++r.annotations;
    answer_by_question[ann["question_id"].get<std::int64_t>()] = *answer;
  }

  std::vector<Sample> samples;
  std::size_t matched = 0;
  for (const auto& q : *q_list) {
    if (!q.is_object() || !q.contains("question_id") || !q["question_id"].is_number_integer() ||
        !q.contains("question") || !q["question"].is_string() || !q.contains("image_id")) {
      ++r.malformed;
      continue;
    }
    auto image = id_string(q["image_id"]);
    if (!image) {
      ++r.malformed;
      continue;
    }
    ++r.questions;
    const auto qid = q["question_id"].get<std::int64_t>();
    auto it = answer_by_question.find(qid);
    if (it == answer_by_question.end()) {
      ++r.unmatched;
      continue;
    }
    ++matched;
    auto category = categories.lookup_answer(it->second);
    if (!category) {
      ++r.unmapped;
      continue;
    }
    Sample s;
    s.question_id = qid;
    s.image_id = *image;
    s.question = q["question"].get<std::string>();
    s.category = *category;
    samples.push_back(std::move(s));
  }
  r.unmatched += r.annotations - matched;
  r.kept = samples.size();
  if (report) *report = r;
  return samples;
}

Vocabulary build_vocab(const std::vector<Sample>& samples, int min_freq) {
  std::vector<std::string> texts;
  texts.reserve(samples.size());
  for (const auto& s : samples) texts.push_back(s.question);
  return Vocabulary::build(texts, min_freq);
}

void encode_samples(std::vector<Sample>& samples, const Vocabulary& vocab, int max_len) {
  for (auto& s : samples) s.tokens = vocab.encode(s.question, max_len);
}

DatasetSplit split(const std::vector<Sample>& samples, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DomainError("split ratio must lie in (0, 1)");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto cut = static_cast<std::size_t>(std::llround(ratio * double(samples.size())));
  DatasetSplit out;
  out.ratio = ratio;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < cut ? out.train : out.val).push_back(samples[order[i]]);
  return out;
}

// ---------------------------------------------------------------- images

void ImageStore::add(const std::string& id, Entry entry) {
  if (entry.data.size() != Eigen::Index(entry.channels) * entry.height * entry.width)
    throw DomainError("image '" + id + "' has inconsistent shape");
  entries_[id] = std::move(entry);
}

const ImageStore::Entry& ImageStore::get(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw DomainError("unknown image id '" + id + "'");
  return it->second;
}

Matrix ImageStore::gather(std::span<const std::string> ids) const {
  if (ids.empty()) return {};
  const Eigen::Index rows = get(ids.front()).data.size();
  Matrix out(rows, static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& e = get(ids[i]);
    if (e.data.size() != rows) throw ConfigError("images in a batch differ in size");
    out.col(static_cast<Eigen::Index>(i)) = e.data;
  }
  return out;
}

namespace {
constexpr std::string_view kImageMagic = "C3VQGIMG";
constexpr std::string_view kSampleMagic = "C3VQGSMP";
constexpr std::uint32_t kRecordVersion = 1;
}  // namespace

void ImageStore::save(const std::string& path) const {
  io::Writer w;
  w.put_raw(kImageMagic);
  w.put<std::uint32_t>(kRecordVersion);
  w.put<std::uint64_t>(entries_.size());
  for (const auto& [id, e] : entries_) {
    io::Writer rec;
    rec.put_string(id);
    rec.put<std::int32_t>(e.channels);
    rec.put<std::int32_t>(e.height);
    rec.put<std::int32_t>(e.width);
    rec.put_matrix(e.data);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.bytes().size()));
    w.put_raw(rec.bytes());
  }
  io::write_file(path, w.bytes());
}

ImageStore ImageStore::load(const std::string& path) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes);
  if (r.get_raw(kImageMagic.size()) != kImageMagic) throw FormatError(path + ": not an image store");
  if (r.get<std::uint32_t>() != kRecordVersion) throw FormatError(path + ": unsupported version");
  const auto count = r.get<std::uint64_t>();
  ImageStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    io::Reader rec(r.get_raw(len));
    std::string id = rec.get_string();
    Entry e;
    e.channels = rec.get<std::int32_t>();
    e.height = rec.get<std::int32_t>();
    e.width = rec.get<std::int32_t>();
    e.data = rec.get_matrix();
    store.add(id, std::move(e));
  }
  if (!r.done()) throw FormatError(path + ": trailing bytes");
  return store;
}

// ---------------------------------------------------------------- toy data

namespace {

const std::vector<std::string> kShapes = {"circle", "square", "triangle"};
const std::vector<std::string> kColors = {"red", "green", "blue"};
const std::vector<std::string> kSides = {"left", "right"};
const std::vector<std::string> kSizes = {"small", "large"};

struct ToyTemplate {
  std::string category;
  std::vector<std::string> words;  // "{shape}" / "{color}" are slots
};

const std::vector<ToyTemplate>& toy_templates() {
  static const std::vector<ToyTemplate> templates = {
      {"color", {"what", "color", "is", "the", "{shape}"}},
      {"shape", {"what", "shape", "is", "the", "{color}", "object"}},
      {"spatial", {"where", "is", "the", "{color}", "{shape}"}},
      {"binary", {"is", "there", "a", "{color}", "{shape}"}},
      {"count", {"how", "many", "{color}", "objects", "are", "there"}},
      {"attribute", {"how", "big", "is", "the", "{color}", "{shape}"}},
  };
  return templates;
}

const ToyTemplate* find_template(const std::string& category) {
  for (const auto& t : toy_templates())
    if (t.category == category) return &t;
  return nullptr;
}

bool slot_matches(const std::string& slot, const std::string& word) {
  if (slot == "{shape}") return std::find(kShapes.begin(), kShapes.end(), word) != kShapes.end();
  if (slot == "{color}") return std::find(kColors.begin(), kColors.end(), word) != kColors.end();
  return slot == word;
}

void paint(ImageStore::Entry& img, const ToyScene& scene, Rng& rng) {
  const int s = img.height;
  std::uniform_real_distribution<double> noise(0.0, 0.1);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data(i) = noise(rng);
  const double radius = (scene.size == "small" ? 0.12 : 0.2) * s;
  std::uniform_real_distribution<double> jitter(-0.06 * s, 0.06 * s);
  const double cx = (scene.side == "left" ? 0.27 : 0.73) * s + jitter(rng);
  const double cy = 0.5 * s + jitter(rng);
  const int channel = static_cast<int>(std::find(kColors.begin(), kColors.end(), scene.color) - kColors.begin());
  std::uniform_real_distribution<double> intensity(0.8, 1.0);
  const double value = intensity(rng);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      bool inside = false;
      if (scene.shape == "circle") {
        inside = dx * dx + dy * dy <= radius * radius;
      } else if (scene.shape == "square") {
        inside = std::abs(dx) <= 0.85 * radius && std::abs(dy) <= 0.85 * radius;
      } else {
        const double t = (dy + radius) / (2.0 * radius);  // 0 at apex, 1 at base
        inside = t >= 0.0 && t <= 1.0 && std::abs(dx) <= t * radius;
      }
      if (!inside) continue;
      for (int c = 0; c < img.channels; ++c)
        img.data((Eigen::Index(c) * s + y) * s + x) = (c == channel % img.channels) ? value : 0.05;
    }
}

}  // namespace

const std::vector<std::string>& toy_category_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& t : toy_templates()) out.push_back(t.category);
    return out;
  }();
  return names;
}

std::string toy_question(const std::string& category, const ToyScene& scene) {
  const ToyTemplate* t = find_template(category);
  if (!t) throw DomainError("no toy template for category '" + category + "'");
  std::string out;
  for (const auto& w : t->words) {
    if (!out.empty()) out.push_back(' ');
    out += w == "{shape}" ? scene.shape : w == "{color}" ? scene.color : w;
  }
  return out;
}

bool toy_template_matches(const std::string& category, std::string_view question) {
  const ToyTemplate* t = find_template(category);
  if (!t) return false;
  const auto words = tokenize(question);
  if (words.size() != t->words.size()) return false;
  for (std::size_t i = 0; i < words.size(); ++i)
    if (!slot_matches(t->words[i], words[i])) return false;
  return true;
}

std::optional<std::string> toy_template_of(std::string_view question) {
  for (const auto& t : toy_templates())
    if (toy_template_matches(t.category, question)) return t.category;
  return std::nullopt;
}

ToyDataset make_toy_dataset(int n_images, int n_categories, std::uint64_t seed, int image_size,
                            int max_len) {
  if (n_categories < 2) throw DomainError("toy dataset needs at least two categories");
  if (static_cast<std::size_t>(n_categories) > toy_templates().size())
    throw DomainError("toy dataset supports at most " + std::to_string(toy_templates().size()) +
                      " categories");
  if (n_images < 1) throw DomainError("toy dataset needs at least one image");
  if (image_size < 16) throw DomainError("toy images must be at least 16 pixels wide");

  ToyDataset data;
  data.categories = CategoryMap(std::vector<std::string>(toy_category_names().begin(),
                                                         toy_category_names().begin() + n_categories));
  Rng rng(seed);
  auto pick = [&rng](const std::vector<std::string>& options) {
    std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
    return options[d(rng)];
  };
  for (int i = 0; i < n_images; ++i) {
    ToyScene scene;
    scene.image_id = "toy" + std::to_string(i);
    scene.shape = pick(kShapes);
    scene.color = pick(kColors);
    scene.side = pick(kSides);
    scene.size = pick(kSizes);
    ImageStore::Entry img{3, image_size, image_size, Vector(3 * image_size * image_size)};
    paint(img, scene, rng);
    data.images.add(scene.image_id, std::move(img));
    data.scenes.push_back(scene);
  }
  std::int64_t qid = 0;
  for (const auto& scene : data.scenes)
    for (CategoryId c = 0; c < n_categories; ++c) {
      Sample s;
      s.question_id = qid++;
      s.image_id = scene.image_id;
      s.question = toy_question(data.categories.name(c), scene);
      s.category = c;
      data.samples.push_back(std::move(s));
    }
  data.vocab = build_vocab(data.samples, 1);
  encode_samples(data.samples, data.vocab, max_len);
  return data;
}

// ---------------------------------------------------------------- cache

void write_sample_records(const std::string& path, const std::vector<Sample>& samples) {
  io::Writer w;
  w.put_raw(kSampleMagic);
  w.put<std::uint32_t>(kRecordVersion);
  w.put<std::uint64_t>(samples.size());
  for (const auto& s : samples) {
    io::Writer rec;
    rec.put<std::int64_t>(s.question_id);
    rec.put_string(s.image_id);
    rec.put_string(s.question);
    rec.put<std::int32_t>(s.category);
    rec.put<std::uint32_t>(static_cast<std::uint32_t>(s.tokens.size()));
    for (TokenId t : s.tokens) rec.put<std::int32_t>(t);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.bytes().size()));
    w.put_raw(rec.bytes());
  }
  io::write_file(path, w.bytes());
}

std::vector<Sample> read_sample_records(const std::string& path) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes);
  if (r.get_raw(kSampleMagic.size()) != kSampleMagic) throw FormatError(path + ": not a sample file");
  if (r.get<std::uint32_t>() != kRecordVersion) throw FormatError(path + ": unsupported version");
  const auto count = r.get<std::uint64_t>();
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    io::Reader rec(r.get_raw(len));
    Sample s;
    s.question_id = rec.get<std::int64_t>();
    s.image_id = rec.get_string();
    s.question = rec.get_string();
    s.category = rec.get<std::int32_t>();
    const auto n = rec.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < n; ++k) s.tokens.push_back(rec.get<std::int32_t>());
    if (!rec.done()) throw FormatError(path + ": record length mismatch");
    out.push_back(std::move(s));
  }
  if (!r.done()) throw FormatError(path + ": trailing bytes");
  return out;
}

void save_prepared(const std::string& dir, const PreparedDataset& data) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  write_sample_records((root / "train.bin").string(), data.split.train);
  write_sample_records((root / "val.bin").string(), data.split.val);
  data.images.save((root / "images.bin").string());
  json manifest = {
      {"format_version", kRecordVersion},
      {"source", data.source},
      {"max_len", data.max_len},
      {"min_word_freq", data.vocab.min_freq()},
      {"split_ratio", data.split.ratio},
      {"vocabulary", data.vocab.tokens()},
      {"categories", data.categories.names()},
      {"files", {{"train", "train.bin"}, {"val", "val.bin"}, {"images", "images.bin"}}},
      {"counts", {{"train", data.split.train.size()}, {"val", data.split.val.size()},
                  {"images", data.images.size()}}},
  };
  std::ofstream out(root / "manifest.json");
  out << manifest.dump(2) << "\n";
}

PreparedDataset load_prepared(const std::string& dir) {
  const std::filesystem::path root(dir);
  const json manifest = read_json((root / "manifest.json").string());
  try {
    if (manifest.at("format_version").get<std::uint32_t>() != kRecordVersion)
      throw FormatError(dir + ": unsupported dataset version");
    PreparedDataset data;
    data.source = manifest.at("source").get<std::string>();
    data.max_len = manifest.at("max_len").get<int>();
    data.vocab = Vocabulary::from_tokens(manifest.at("vocabulary").get<std::vector<std::string>>(),
                                         manifest.at("min_word_freq").get<int>());
    data.categories = CategoryMap(manifest.at("categories").get<std::vector<std::string>>());
    data.split.ratio = manifest.at("split_ratio").get<double>();
    const auto& files = manifest.at("files");
    data.split.train = read_sample_records((root / files.at("train").get<std::string>()).string());
    data.split.val = read_sample_records((root / files.at("val").get<std::string>()).string());
    data.images = ImageStore::load((root / files.at("images").get<std::string>()).string());
    if (data.split.train.size() != manifest.at("counts").at("train").get<std::size_t>() ||
        data.split.val.size() != manifest.at("counts").at("val").get<std::size_t>())
      throw FormatError(dir + ": record counts disagree with manifest");
    return data;
  } catch (const json::exception& e) {
    throw FormatError(dir + "/manifest.json: " + e.what());
  }
}

}  // namespace c3vqg
