#include "hmn/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

namespace hmn {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> known) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("unknown config key '" + item.key() + "' in " + section);
    }
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void read_int(const json& obj, const std::string& section, const char* key, int& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_number_integer()) {
      throw ConfigError("config key '" + section + "." + key + "' must be an integer");
    }
    out = v->get<int>();
  }
}

void read_u64(const json& obj, const std::string& section, const char* key,
              std::uint64_t& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_number_integer() ||
        (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
      throw ConfigError("config key '" + section + "." + key +
                        "' must be a nonnegative integer");
    }
    out = v->get<std::uint64_t>();
  }
}

void read_double(const json& obj, const std::string& section, const char* key,
                 double& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_number()) {
      throw ConfigError("config key '" + section + "." + key + "' must be a number");
    }
    out = v->get<double>();
  }
}

void read_bool(const json& obj, const std::string& section, const char* key, bool& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_boolean()) {
      throw ConfigError("config key '" + section + "." + key + "' must be a boolean");
    }
    out = v->get<bool>();
  }
}

AblationConfig parse_ablation(const json& obj) {
  check_keys(obj, "model.ablation",
             {"remove_entity", "remove_predicate", "remove_sentence", "all_objects",
              "cut_e2p", "cut_e2s", "cut_p2s", "no_content_query"});
  AblationConfig a;
  read_bool(obj, "model.ablation", "remove_entity", a.remove_entity);
  read_bool(obj, "model.ablation", "remove_predicate", a.remove_predicate);
  read_bool(obj, "model.ablation", "remove_sentence", a.remove_sentence);
  read_bool(obj, "model.ablation", "all_objects", a.all_objects);
  read_bool(obj, "model.ablation", "cut_e2p", a.cut_e2p);
  read_bool(obj, "model.ablation", "cut_e2s", a.cut_e2s);
  read_bool(obj, "model.ablation", "cut_p2s", a.cut_p2s);
  read_bool(obj, "model.ablation", "no_content_query", a.no_content_query);
  return a;
}

ModelConfig parse_model(const json& obj) {
  check_keys(obj, "model",
             {"d_model", "d_s", "d_w", "n_queries", "heads", "enc_layers", "dec_layers",
              "decoder_hidden", "max_len", "vocab_size", "raw_context_dim",
              "raw_motion_dim", "raw_object_dim", "ablation"});
  ModelConfig m;
  read_int(obj, "model", "d_model", m.d_model);
  read_int(obj, "model", "d_s", m.d_s);
  read_int(obj, "model", "d_w", m.d_w);
  read_int(obj, "model", "n_queries", m.n_queries);
  read_int(obj, "model", "heads", m.heads);
  read_int(obj, "model", "enc_layers", m.enc_layers);
  read_int(obj, "model", "dec_layers", m.dec_layers);
  read_int(obj, "model", "decoder_hidden", m.decoder_hidden);
  read_int(obj, "model", "max_len", m.max_len);
  read_int(obj, "model", "vocab_size", m.vocab_size);
  read_int(obj, "model", "raw_context_dim", m.raw_context_dim);
  read_int(obj, "model", "raw_motion_dim", m.raw_motion_dim);
  read_int(obj, "model", "raw_object_dim", m.raw_object_dim);
  if (const json* ab = find(obj, "ablation")) {
    if (!ab->is_object()) throw ConfigError("config key 'model.ablation' must be an object");
    m.ablation = parse_ablation(*ab);
  }
  return m;
}

TrainConfig parse_train(const json& obj) {
  check_keys(obj, "train",
             {"lambda_e", "lambda_p", "lambda_s", "lambda_soft", "learning_rate",
              "clip_norm", "batch_size", "epochs", "seed"});
  TrainConfig t;
  read_double(obj, "train", "lambda_e", t.lambda_e);
  read_double(obj, "train", "lambda_p", t.lambda_p);
  read_double(obj, "train", "lambda_s", t.lambda_s);
  read_double(obj, "train", "lambda_soft", t.lambda_soft);
  read_double(obj, "train", "learning_rate", t.learning_rate);
  read_double(obj, "train", "clip_norm", t.clip_norm);
  read_int(obj, "train", "batch_size", t.batch_size);
  read_int(obj, "train", "epochs", t.epochs);
  read_u64(obj, "train", "seed", t.seed);
  return t;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void ModelConfig::validate() const {
  require(d_model >= 2 && d_model % 2 == 0,
          "d_model must be even and >= 2 (bidirectional encoders split it in half)");
  require(d_s >= 1, "d_s must be >= 1");
  require(d_w >= 1, "d_w must be >= 1");
  require(n_queries >= 1, "n_queries must be >= 1");
  require(heads >= 1, "heads must be >= 1");
  require(d_model % heads == 0, "heads must divide d_model");
  require(enc_layers >= 1, "enc_layers must be >= 1");
  require(dec_layers >= 1, "dec_layers must be >= 1");
  require(decoder_hidden >= 1, "decoder_hidden must be >= 1");
  require(max_len >= 1, "max_len must be >= 1");
  require(vocab_size >= 0, "vocab_size must be >= 0");
  require(raw_context_dim >= 1, "raw_context_dim must be >= 1");
  require(raw_motion_dim >= 1, "raw_motion_dim must be >= 1");
  require(raw_object_dim >= 1, "raw_object_dim must be >= 1");
}

void TrainConfig::validate() const {
  require(lambda_e >= 0 && lambda_p >= 0 && lambda_s >= 0 && lambda_soft >= 0,
          "loss weights must be >= 0");
  require(learning_rate > 0, "learning_rate must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 0, "epochs must be >= 0");
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  check_keys(root, "config", {"model", "train"});

  RunConfig config;
  if (const json* m = find(root, "model")) {
    if (!m->is_object()) throw ConfigError("config key 'model' must be an object");
    config.model = parse_model(*m);
  }
  if (const json* t = find(root, "train")) {
    if (!t->is_object()) throw ConfigError("config key 'train' must be an object");
    config.train = parse_train(*t);
  }
  config.model.validate();
  config.train.validate();
  return config;
}

std::string run_config_to_json(const RunConfig& config) {
  const ModelConfig& m = config.model;
  const TrainConfig& t = config.train;
  json root;
  root["model"] = {
      {"d_model", m.d_model},
      {"d_s", m.d_s},
      {"d_w", m.d_w},
      {"n_queries", m.n_queries},
      {"heads", m.heads},
      {"enc_layers", m.enc_layers},
      {"dec_layers", m.dec_layers},
      {"decoder_hidden", m.decoder_hidden},
      {"max_len", m.max_len},
      {"vocab_size", m.vocab_size},
      {"raw_context_dim", m.raw_context_dim},
      {"raw_motion_dim", m.raw_motion_dim},
      {"raw_object_dim", m.raw_object_dim},
      {"ablation",
       {{"remove_entity", m.ablation.remove_entity},
        {"remove_predicate", m.ablation.remove_predicate},
        {"remove_sentence", m.ablation.remove_sentence},
        {"all_objects", m.ablation.all_objects},
        {"cut_e2p", m.ablation.cut_e2p},
        {"cut_e2s", m.ablation.cut_e2s},
        {"cut_p2s", m.ablation.cut_p2s},
        {"no_content_query", m.ablation.no_content_query}}},
  };
  root["train"] = {
      {"lambda_e", t.lambda_e},
      {"lambda_p", t.lambda_p},
      {"lambda_s", t.lambda_s},
      {"lambda_soft", t.lambda_soft},
      {"learning_rate", t.learning_rate},
      {"clip_norm", t.clip_norm},
      {"batch_size", t.batch_size},
      {"epochs", t.epochs},
      {"seed", t.seed},
  };
  return root.dump(2);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_run_config(buffer.str());
}

}  // namespace hmn
