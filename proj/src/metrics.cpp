#include "c3vqg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "c3vqg/data.hpp"
#include "c3vqg/errors.hpp"

namespace c3vqg {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return counts;
}

std::vector<Tokens> tokenize_all(const std::vector<std::string>& texts) {
  std::vector<Tokens> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(tokenize(t));
  return out;
}

/// Clipped matches and candidate n-gram total for one order.
std::pair<double, double> clipped_matches(const Tokens& candidate, const std::vector<Tokens>& references, int n) {
  const NgramCounts cand = ngrams(candidate, n);
  NgramCounts max_ref;
  for (const auto& ref : references)
    for (const auto& [gram, count] : ngrams(ref, n)) max_ref[gram] = std::max(max_ref[gram], count);
  double matched = 0.0, total = 0.0;
  for (const auto& [gram, count] : cand) {
    total += count;
    const auto it = max_ref.find(gram);
    if (it != max_ref.end()) matched += std::min(count, it->second);
  }
  return {matched, total};
}

/// Reference length closest to c; ties go to the shorter one.
double closest_ref_length(std::size_t c, const std::vector<Tokens>& references) {
  std::size_t best = references.front().size();
  for (const auto& ref : references) {
    const auto diff = [c](std::size_t r) { return r > c ? r - c : c - r; };
    if (diff(ref.size()) < diff(best) || (diff(ref.size()) == diff(best) && ref.size() < best)) best = ref.size();
  }
  return double(best);
}

double bleu_from_counts(const std::vector<double>& matched, const std::vector<double>& total, double cand_len,
                        double ref_len) {
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  const int n = static_cast<int>(matched.size());
  for (int k = 0; k < n; ++k) {
    if (matched[static_cast<std::size_t>(k)] == 0.0) return 0.0;
    log_sum += std::log(matched[static_cast<std::size_t>(k)] / total[static_cast<std::size_t>(k)]) / n;
  }
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum);
}

void check_order(int n) {
  if (n < 1 || n > 4) throw DomainError("BLEU order must be in [1, 4]");
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double meteor_single(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<bool> used(ref.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> alignment;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    std::optional<std::size_t> pick;
    if (!alignment.empty() && alignment.back().first + 1 == i) {
      const std::size_t next = alignment.back().second + 1;
      if (next < ref.size() && !used[next] && ref[next] == cand[i]) pick = next;
    }
    for (std::size_t j = 0; !pick && j < ref.size(); ++j)
      if (!used[j] && ref[j] == cand[i]) pick = j;
    if (pick) {
      used[*pick] = true;
      alignment.emplace_back(i, *pick);
    }
  }
  const double m = double(alignment.size());
  if (m == 0.0) return 0.0;
  double chunks = 1.0;
  for (std::size_t k = 1; k < alignment.size(); ++k)
    if (alignment[k].first != alignment[k - 1].first + 1 || alignment[k].second != alignment[k - 1].second + 1)
      chunks += 1.0;
  const double p = m / double(cand.size());
  const double r = m / double(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(chunks / m, 3.0);
  return fmean * (1.0 - penalty);
}

std::vector<std::string> normalized(const std::vector<std::string>& texts) {
  std::vector<std::string> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(normalize_text(t));
  return out;
}

std::string fixed(double x, int precision = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << x;
  return s.str();
}

}  // namespace

// ---------------------------------------------------------------- BLEU

double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references, int n) {
  check_order(n);
  if (references.empty()) throw DomainError("BLEU needs at least one reference");
  std::vector<double> matched, total;
  for (int k = 1; k <= n; ++k) {
    const auto [m, t] = clipped_matches(candidate, references, k);
    matched.push_back(m);
    total.push_back(t);
  }
  return bleu_from_counts(matched, total, double(candidate.size()),
                          closest_ref_length(candidate.size(), references));
}

double bleu_n(const std::string& candidate, const std::vector<std::string>& references, int n) {
  return bleu_n(tokenize(candidate), tokenize_all(references), n);
}

double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                   int n) {
  check_order(n);
  if (candidates.size() != references.size()) throw DomainError("corpus BLEU: candidate/reference count mismatch");
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0), total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw DomainError("corpus BLEU: record without references");
    for (int k = 1; k <= n; ++k) {
      const auto [m, t] = clipped_matches(candidates[i], references[i], k);
      matched[static_cast<std::size_t>(k - 1)] += m;
      total[static_cast<std::size_t>(k - 1)] += t;
    }
    cand_len += double(candidates[i].size());
    ref_len += closest_ref_length(candidates[i].size(), references[i]);
  }
  return bleu_from_counts(matched, total, cand_len, ref_len);
}

// ---------------------------------------------------------------- ROUGE-L

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (references.empty()) throw DomainError("ROUGE-L needs at least one reference");
  if (candidate.empty()) return 0.0;
  constexpr double kBeta = 1.2;
  double best_p = 0.0, best_r = 0.0;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    const double lcs = double(lcs_length(candidate, ref));
    best_p = std::max(best_p, lcs / double(candidate.size()));
    best_r = std::max(best_r, lcs / double(ref.size()));
  }
  if (best_p == 0.0 || best_r == 0.0) return 0.0;
  return (1.0 + kBeta * kBeta) * best_p * best_r / (best_r + kBeta * kBeta * best_p);
}

double rouge_l(const std::string& candidate, const std::vector<std::string>& references) {
  return rouge_l(tokenize(candidate), tokenize_all(references));
}

// ---------------------------------------------------------------- CIDEr

std::vector<double> cider_scores(const std::vector<Tokens>& candidates,
                                 const std::vector<std::vector<Tokens>>& references) {
  if (candidates.size() != references.size()) throw DomainError("CIDEr: candidate/reference count mismatch");
  if (candidates.empty()) throw DomainError("CIDEr needs a nonempty corpus");
  constexpr int kMaxN = 4;
  const double log_n = std::log(double(candidates.size()));

  std::map<std::vector<std::string>, double> df;
  for (const auto& refs : references) {
    std::set<std::vector<std::string>> seen;
    for (const auto& ref : refs)
      for (int n = 1; n <= kMaxN; ++n)
        for (const auto& [gram, count] : ngrams(ref, n)) seen.insert(gram);
    for (const auto& gram : seen) df[gram] += 1.0;
  }
  auto tfidf = [&](const Tokens& tokens, int n) {
    std::map<std::vector<std::string>, double> vec;
    for (const auto& [gram, count] : ngrams(tokens, n)) {
      const auto it = df.find(gram);
      const double d = it == df.end() ? 0.0 : it->second;
      vec[gram] = double(count) * (log_n - std::log(std::max(1.0, d)));
    }
    return vec;
  };
  auto cosine = [](const std::map<std::vector<std::string>, double>& a,
                   const std::map<std::vector<std::string>, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [gram, x] : a) {
      na += x * x;
      const auto it = b.find(gram);
      if (it != b.end()) dot += x * it->second;
    }
    for (const auto& [gram, y] : b) nb += y * y;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };

  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw DomainError("CIDEr: record without references");
    double score = 0.0;
    for (int n = 1; n <= kMaxN; ++n) {
      const auto cand = tfidf(candidates[i], n);
      double sum = 0.0;
      for (const auto& ref : references[i]) sum += cosine(cand, tfidf(ref, n));
      score += sum / double(references[i].size());
    }
    scores.push_back(10.0 * score / kMaxN);
  }
  return scores;
}

double cider(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  std::vector<std::vector<Tokens>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(tokenize_all(r));
  const auto scores = cider_scores(tokenize_all(candidates), refs);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / double(scores.size());
}

// ---------------------------------------------------------------- METEOR

double meteor_simplified(const Tokens& candidate, const std::vector<Tokens>& references) {
  double best = 0.0;
  for (const auto& ref : references) best = std::max(best, meteor_single(candidate, ref));
  return best;
}

double meteor_simplified(const std::string& candidate, const std::vector<std::string>& references) {
  return meteor_simplified(tokenize(candidate), tokenize_all(references));
}

// ---------------------------------------------------------------- diversity

double strength(const std::vector<std::string>& generations) {
  if (generations.empty()) throw DomainError("strength needs at least one generation");
  const auto norm = normalized(generations);
  const std::set<std::string> unique(norm.begin(), norm.end());
  return 100.0 * double(unique.size()) / double(generations.size());
}

double inventiveness(const std::vector<std::string>& generations, const std::vector<std::string>& training,
                     InventivenessDenominator denominator) {
  if (generations.empty()) throw DomainError("inventiveness needs at least one generation");
  const auto norm = normalized(generations);
  const std::set<std::string> unique(norm.begin(), norm.end());
  const auto train_norm = normalized(training);
  const std::unordered_set<std::string> seen(train_norm.begin(), train_norm.end());
  const auto unseen = std::count_if(unique.begin(), unique.end(), [&](const auto& g) { return !seen.count(g); });
  const double denom =
      denominator == InventivenessDenominator::kUnique ? double(unique.size()) : double(generations.size());
  return 100.0 * double(unseen) / denom;
}

// ---------------------------------------------------------------- records

nlohmann::json to_json(const GenerationRecord& record) {
  return {{"image_id", record.image_id},
          {"category", record.category},
          {"question", record.question},
          {"references", record.references}};
}

GenerationRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("image_id") || !j.contains("category") || !j.contains("question"))
    throw FormatError("generation record needs image_id, category and question");
  GenerationRecord r;
  r.image_id = j.at("image_id").is_string() ? j.at("image_id").get<std::string>() : j.at("image_id").dump();
  r.category = j.at("category").is_string() ? j.at("category").get<std::string>() : j.at("category").dump();
  r.question = j.at("question").get<std::string>();
  if (j.contains("references")) r.references = j.at("references").get<std::vector<std::string>>();
  return r;
}

std::vector<GenerationRecord> read_generations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open generations file " + path);
  std::vector<GenerationRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_generations(const std::string& path, const std::vector<GenerationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  for (const auto& r : records) out << to_json(r).dump() << "\n";
}

// ---------------------------------------------------------------- evaluate

MetricReport evaluate(const std::vector<GenerationRecord>& records, const std::vector<std::string>& training,
                      const EvaluateOptions& options) {
  if (records.empty()) throw DomainError("evaluate needs at least one record");
  MetricReport report;
  report.records = records.size();

  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  for (const auto& r : records) {
    if (r.references.empty()) continue;
    cands.push_back(tokenize(r.question));
    refs.push_back(tokenize_all(r.references));
  }
  if (!cands.empty()) {
    for (int n = 1; n <= 4; ++n) report.bleu[n - 1] = corpus_bleu(cands, refs, n);
    double meteor = 0.0, rouge = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      meteor += meteor_simplified(cands[i], refs[i]);
      rouge += rouge_l(cands[i], refs[i]);
    }
    report.meteor = meteor / double(cands.size());
    report.rouge_l = rouge / double(cands.size());
    const auto scores = cider_scores(cands, refs);
    double sum = 0.0;
    for (double s : scores) sum += s;
    report.cider = sum / double(scores.size());
  }

  auto diversity = [&](const std::vector<std::string>& gens) {
    return DiversityRow{gens.size(), strength(gens), inventiveness(gens, training, options.denominator)};
  };
  std::vector<std::string> all;
  std::map<std::string, std::vector<std::string>> by_category;
  for (const auto& r : records) {
    all.push_back(r.question);
    by_category[r.category].push_back(r.question);
  }
  report.overall = diversity(all);
  for (const auto& [cat, gens] : by_category) report.per_category[cat] = diversity(gens);
  return report;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["records"] = records;
  for (int n = 0; n < 4; ++n) j["bleu_" + std::to_string(n + 1)] = 100.0 * bleu[n];
  j["meteor"] = 100.0 * meteor;
  j["rouge_l"] = 100.0 * rouge_l;
  j["cider"] = 100.0 * cider;
  auto row = [](const DiversityRow& r) {
    return nlohmann::json{{"count", r.count}, {"strength", r.strength}, {"inventiveness", r.inventiveness}};
  };
  j["overall"] = row(overall);
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [name, r] : per_category) cats[name] = row(r);
  j["per_category"] = cats;
  return j;
}

std::string MetricReport::to_table() const {
  std::ostringstream out;
  const char* names[] = {"BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "ROUGE-L", "CIDEr"};
  const double values[] = {bleu[0], bleu[1], bleu[2], bleu[3], meteor, rouge_l, cider};
  for (const char* n : names) out << std::setw(9) << n;
  out << "\n";
  for (double v : values) out << std::setw(9) << fixed(100.0 * v);
  out << "\n\n";

  std::size_t width = std::string("Overall").size();
  for (const auto& [name, r] : per_category) width = std::max(width, name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "Category" << std::right << std::setw(8) << "Count"
      << std::setw(10) << "Strength" << std::setw(15) << "Inventiveness" << "\n";
  auto line = [&](const std::string& name, const DiversityRow& r) {
    out << std::left << std::setw(static_cast<int>(width)) << name << std::right << std::setw(8) << r.count
        << std::setw(10) << fixed(r.strength) << std::setw(15) << fixed(r.inventiveness) << "\n";
  };
  for (const auto& [name, r] : per_category) line(name, r);
  line("Overall", overall);
  return out.str();
}

}  // namespace c3vqg
