#include "c3vqg/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <variant>

#include "c3vqg/errors.hpp"

namespace c3vqg {

namespace {

using Target = std::variant<int*, double*, std::uint64_t*, std::string*, ImageEncoderKind*>;

struct Field {
  const char* section;
  const char* key;
  Target target;
};

std::vector<Field> fields(ExperimentConfig& c) {
  auto& w = c.train.weights;
  // Loss weights follow the order of the hyperparameter table.
  return {
      {"loss", "lambda_image", &w.image},
      {"loss", "lambda_category", &w.category},
      {"loss", "lambda_question", &w.question},
      {"loss", "lambda_cons", &w.consistency},
      {"loss", "lambda_center", &w.center},
      {"loss", "lambda_bayes", &w.bayes},
      {"loss", "lambda_reg", &w.reg},
      {"model", "latent_dim", &c.model.latent_dim},
      {"model", "image_encoder", &c.model.image_encoder},
      {"model", "image_channels", &c.model.image_channels},
      {"model", "image_size", &c.model.image_size},
      {"model", "feature_dim", &c.model.feature_dim},
      {"model", "image_embed", &c.model.image_embed},
      {"model", "category_embed", &c.model.category_embed},
      {"model", "fusion_hidden", &c.model.fusion_hidden},
      {"model", "word_embed", &c.model.word_embed},
      {"model", "decoder_hidden", &c.model.decoder_hidden},
      {"model", "recon_hidden", &c.model.recon_hidden},
      {"model", "classifier_embed", &c.model.classifier_embed},
      {"model", "classifier_hidden", &c.model.classifier_hidden},
      {"model", "classifier_temperature", &c.model.classifier_temperature},
      {"model", "max_len", &c.model.max_len},
      {"model", "vocab_size", &c.model.vocab_size},
      {"model", "num_categories", &c.model.num_categories},
      {"train", "learning_rate", &c.train.learning_rate},
      {"train", "epochs", &c.train.epochs},
      {"train", "batch_size", &c.train.batch_size},
      {"train", "seed", &c.train.seed},
      {"train", "center_update_scale", &c.train.center_update_scale},
      {"train", "grad_clip", &c.train.grad_clip},
      {"train", "adam_beta1", &c.train.adam_beta1},
      {"train", "adam_beta2", &c.train.adam_beta2},
      {"train", "adam_epsilon", &c.train.adam_epsilon},
      {"data", "min_word_freq", &c.data.min_word_freq},
      {"data", "split_ratio", &c.data.split_ratio},
      {"data", "toy_images", &c.data.toy_images},
      {"data", "toy_categories", &c.data.toy_categories},
      {"data", "annotations_file", &c.data.annotations_file},
      {"data", "questions_file", &c.data.questions_file},
      {"data", "features_file", &c.data.features_file},
      {"generate", "mode", &c.generate.mode},
      {"generate", "temperature", &c.generate.temperature},
      {"generate", "split", &c.generate.split},
  };
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out + "\"";
}

/// Strips a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
      continue;
    }
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& raw, const std::string& where) {
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"')
    throw ConfigError(where + ": expected a double-quoted string");
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    if (raw[i] == '\\' && i + 2 < raw.size()) ++i;
    out.push_back(raw[i]);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& raw, const std::string& where) {
  T value{};
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc{} || ptr != raw.data() + raw.size())
    throw ConfigError(where + ": '" + raw + "' is not a valid number of the expected type");
  return value;
}

void assign(const Target& target, const std::string& raw, const std::string& where) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = unquote(raw, where);
        } else if constexpr (std::is_same_v<T, ImageEncoderKind>) {
          *p = parse_image_encoder_kind(unquote(raw, where));
        } else {
          *p = parse_number<T>(raw, where);
        }
      },
      target);
}

std::string render(const Target& target) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) return quote(*p);
        else if constexpr (std::is_same_v<T, ImageEncoderKind>) return quote(to_string(*p));
        else if constexpr (std::is_same_v<T, double>) return format_double(*p);
        else return std::to_string(*p);
      },
      target);
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  std::string out(buf, ptr);
  if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  const auto table = fields(config);
  std::set<std::string> sections;
  for (const auto& f : table) sections.insert(f.section);

  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no);
    const std::string content = trim(strip_comment(line));
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(std::string_view(content).substr(1, content.size() - 2));
      if (!sections.count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string raw = trim(std::string_view(content).substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside a section");
    const Field* field = nullptr;
    for (const auto& f : table)
      if (f.section == section && f.key == key) field = &f;
    if (!field) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    assign(field->target, raw, where + " (" + section + "." + key + ")");
  }
  config.train.validate();
  config.train.weights.validate();
  if (config.generate.mode != "greedy" && config.generate.mode != "sample")
    throw ConfigError("generate.mode must be \"greedy\" or \"sample\"");
  if (!(config.data.split_ratio > 0.0 && config.data.split_ratio < 1.0))
    throw ConfigError("data.split_ratio must lie in (0, 1)");
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields(copy)) {
    if (f.section != section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << render(f.target) << "\n";
  }
  return out.str();
}

}  // namespace c3vqg
