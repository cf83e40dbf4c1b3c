#include <string>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hmn/config.hpp"

using namespace hmn;

TEST_CASE("empty object yields the documented defaults") {
  RunConfig c = parse_run_config("{}");
  CHECK(c.model.d_model == 512);
  CHECK(c.model.d_s == 768);
  CHECK(c.model.d_w == 300);
  CHECK(c.model.n_queries == 8);
  CHECK(c.model.heads == 8);
  CHECK(c.model.enc_layers == 2);
  CHECK(c.model.decoder_hidden == 512);
  CHECK(c.model.max_len == 20);
  CHECK(c.model.ablation == AblationConfig{});
  CHECK(c.train.lambda_e == 0.6);
  CHECK(c.train.lambda_p == 0.3);
  CHECK(c.train.lambda_s == 1.0);
  CHECK(c.train.lambda_soft == 0.5);
  CHECK(c.train.learning_rate == 1e-4);
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.epochs == 20);
}

TEST_CASE("fields round-trip through serialization exactly") {
  RunConfig c;
  c.model.d_model = 64;
  c.model.d_s = 16;
  c.model.n_queries = 4;
  c.model.heads = 4;
  c.model.vocab_size = 23;
  c.model.ablation.cut_e2p = true;
  c.model.ablation.no_content_query = true;
  c.train.lambda_soft = 0.25;
  c.train.learning_rate = 1e-3;
  c.train.epochs = 500;
  c.train.seed = 7;
  RunConfig back = parse_run_config(run_config_to_json(c));
  CHECK(back == c);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(parse_run_config(R"({"modle": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"d_modle": 8}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"lamda_e": 0.5}})"), ConfigError);
  CHECK_THROWS_AS(
      parse_run_config(R"({"model": {"ablation": {"cut_e2x": true}}})"),
      ConfigError);
}

TEST_CASE("wrong value types are rejected with the key named") {
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"model": {"d_model": "big"}})"),
                       "config key 'model.d_model' must be an integer", ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"d_model": 8.5}})"), ConfigError);
  CHECK_THROWS_AS(
      parse_run_config(R"({"model": {"ablation": {"cut_e2p": 1}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"seed": -3}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"batch_size": true}})"),
                  ConfigError);
}

TEST_CASE("malformed JSON and invalid values are rejected") {
  CHECK_THROWS_AS(parse_run_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1,2]"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"d_model": 9}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"d_model": 16, "heads": 5}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"lambda_p": -0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"batch_size": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"learning_rate": 0.0}})"),
                  ConfigError);
}

TEST_CASE("missing config files raise an io error") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), IoError);
}
