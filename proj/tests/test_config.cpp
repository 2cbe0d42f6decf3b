#include <gtest/gtest.h>

#include "c3vqg/config.hpp"
#include "c3vqg/errors.hpp"

using namespace c3vqg;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsMatchTheHyperparameterTable) {
  const std::string text = serialize_config(ExperimentConfig{});
  for (const char* line : {"lambda_image = 1.0", "lambda_category = 2.0", "lambda_question = 3.0",
                           "lambda_cons = 2.0", "lambda_center = 3.0", "lambda_bayes = 3.0", "lambda_reg = 2.0",
                           "latent_dim = 64", "learning_rate = 0.001", "epochs = 15"})
    EXPECT_NE(text.find(line), std::string::npos) << line;
  // Weights keep the table's order.
  EXPECT_LT(text.find("lambda_image"), text.find("lambda_category"));
  EXPECT_LT(text.find("lambda_category"), text.find("lambda_question"));
  EXPECT_LT(text.find("lambda_bayes"), text.find("lambda_reg"));
}

TEST(Config, RoundTrip) {
  ExperimentConfig c;
  c.model.latent_dim = 17;
  c.model.image_encoder = ImageEncoderKind::kFeatures;
  c.model.classifier_temperature = 0.3;
  c.train.learning_rate = 2.5e-4;
  c.train.seed = 18446744073709551615ULL;
  c.train.weights.consistency = 0.0;
  c.data.annotations_file = "dir with space/a \"quoted\".json";
  c.generate.mode = "sample";
  const std::string text = serialize_config(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.model.latent_dim, 17);
  EXPECT_EQ(back.model.image_encoder, ImageEncoderKind::kFeatures);
  EXPECT_EQ(back.train.learning_rate, 2.5e-4);
  EXPECT_EQ(back.train.seed, 18446744073709551615ULL);
  EXPECT_EQ(back.data.annotations_file, c.data.annotations_file);
  EXPECT_EQ(back.generate.mode, "sample");
}

TEST(Config, PartialFilesKeepDefaultsAndAcceptComments) {
  const ExperimentConfig c = parse_config("# toy run\n[train]\nepochs = 3 # short\n\n[model]\nlatent_dim = 8\n");
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.model.latent_dim, 8);
  EXPECT_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.train.weights.question, 3.0);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(error_of("[train]\nepochz = 3\n").find("config line 2"), std::string::npos);
  EXPECT_NE(error_of("[trian]\n").find("unknown section"), std::string::npos);
  EXPECT_NE(error_of("[train]\nepochs = 3\nepochs = 4\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("[train]\nepochs = three\n").find("config line 2"), std::string::npos);
  EXPECT_NE(error_of("[train]\nepochs = 2.5\n"), "");
  EXPECT_NE(error_of("epochs = 2\n").find("outside a section"), std::string::npos);
  EXPECT_NE(error_of("[train]\nepochs\n").find("key = value"), std::string::npos);
  EXPECT_NE(error_of("[loss]\nlambda_image = -1.0\n"), "");
  EXPECT_NE(error_of("[generate]\nmode = \"beam\"\n"), "");
  EXPECT_NE(error_of("[data]\nsplit_ratio = 1.5\n"), "");
  EXPECT_NE(error_of("[model]\nimage_encoder = \"resnet\"\n"), "");
  EXPECT_THROW(load_config("/nonexistent/c3vqg.toml"), ConfigError);
}

TEST(Config, FormatDoubleIsShortestRoundTrip) {
  EXPECT_EQ(format_double(1.0), "1.0");
  EXPECT_EQ(format_double(0.001), "0.001");
  EXPECT_EQ(format_double(1e-8), "1e-08");
  for (double v : {0.1, 1.0 / 3.0, 2.5e-300, 123456789.125}) EXPECT_EQ(std::stod(format_double(v)), v);
}
