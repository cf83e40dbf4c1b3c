// Command-line entry point: synth / train / eval / generate / gradcheck.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hmn/data.hpp"
#include "hmn/error.hpp"
#include "hmn/metrics.hpp"
#include "hmn/model.hpp"
#include "hmn/training.hpp"

namespace fs = std::filesystem;

namespace {

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// Decoded ids end with the end marker when it was reached; drop it for text.
std::vector<std::string> caption_words(const hmn::Vocabulary& vocab,
                                       std::vector<int> ids) {
  if (!ids.empty() && ids.back() == hmn::kEndTokenId) ids.pop_back();
  return vocab.decode(ids);
}

struct InferenceRun {
  hmn::Checkpoint checkpoint;
  hmn::Dataset dataset;
};

InferenceRun load_for_inference(const std::string& checkpoint_path,
                                const std::string& data_dir) {
  InferenceRun run;
  run.checkpoint = hmn::load_checkpoint(checkpoint_path);
  const hmn::ModelConfig& model = run.checkpoint.config.model;
  run.dataset = hmn::load_dataset(data_dir, model.d_s, model.n_queries);
  hmn::check_dataset_compatibility(model, run.dataset);
  return run;
}

int run_synth(const std::string& out, int videos, std::uint64_t seed) {
  hmn::SynthConfig config;
  config.n_videos = videos;
  config.seed = seed;
  hmn::synth_generate(out, config);
  std::cout << "wrote " << videos << " videos to " << out << "\n";
  return 0;
}

int run_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out, const int* epochs,
              const std::uint64_t* seed) {
  hmn::RunConfig config;
  if (!config_path.empty()) config = hmn::load_run_config(config_path);
  if (epochs) config.train.epochs = *epochs;
  if (seed) config.train.seed = *seed;

  hmn::Dataset dataset =
      hmn::load_dataset(data_dir, config.model.d_s, config.model.n_queries);

  // --out is either a checkpoint file (.ckpt/.bin) or a run directory.
  fs::path out_path(out);
  fs::path checkpoint_path, log_path;
  const std::string ext = out_path.extension().string();
  if (ext == ".ckpt" || ext == ".bin") {
    checkpoint_path = out_path;
    log_path = out_path.parent_path() / "train_log.jsonl";
    if (!out_path.parent_path().empty()) {
      fs::create_directories(out_path.parent_path());
    }
  } else {
    fs::create_directories(out_path);
    checkpoint_path = out_path / "checkpoint.bin";
    log_path = out_path / "train_log.jsonl";
  }

  std::ofstream log(log_path);
  if (!log) throw hmn::IoError("cannot open log file " + log_path.string());

  hmn::TrainResult result = hmn::train(dataset, config, &log);
  hmn::save_checkpoint(result.model, result.config, result.epochs,
                       result.rng_state, checkpoint_path.string());

  std::cout << "trained " << result.epochs << " epochs on "
            << dataset.videos.size() << " videos\n"
            << "checkpoint: " << checkpoint_path.string() << "\n"
            << "loss log:   " << log_path.string() << "\n";
  auto total = result.last_losses.find("total");
  if (total != result.last_losses.end()) {
    std::printf("final mean total loss: %.6f\n", total->second);
  }
  return 0;
}

int run_eval(const std::string& data_dir, const std::string& checkpoint_path,
             int beam) {
  InferenceRun run = load_for_inference(checkpoint_path, data_dir);
  hmn::EvalCorpus corpus;
  for (const hmn::VideoRecord& video : run.dataset.videos) {
    hmn::EncodedVideo encoded = run.checkpoint.model.encode_raw(
        video.context, video.motion, video.objects);
    hmn::EvalEntry entry;
    entry.candidate = caption_words(
        run.dataset.vocab, run.checkpoint.model.caption_beam(encoded, beam));
    for (const hmn::CaptionRecord& caption : video.captions) {
      entry.references.push_back(caption.words);
    }
    corpus.push_back(std::move(entry));
  }
  std::cout << hmn::metric_report_json(hmn::evaluate(corpus)) << "\n";
  return 0;
}

int run_generate(const std::string& data_dir,
                 const std::string& checkpoint_path, int beam) {
  InferenceRun run = load_for_inference(checkpoint_path, data_dir);
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const hmn::VideoRecord& video : run.dataset.videos) {
    hmn::EncodedVideo encoded = run.checkpoint.model.encode_raw(
        video.context, video.motion, video.objects);
    std::vector<std::string> words = caption_words(
        run.dataset.vocab, run.checkpoint.model.caption_beam(encoded, beam));
    out.push_back({{"id", video.id}, {"caption", join_words(words)}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// The tiny preset matches the gradient-suite shape: a model small enough to
// finite-difference every parameter in seconds, on a 3-video corpus with
// 3 steps, 5 objects, and raw width 20.
hmn::RunConfig tiny_run_config() {
  hmn::RunConfig config;
  config.model.d_model = 16;
  config.model.d_s = 12;
  config.model.d_w = 8;
  config.model.n_queries = 3;
  config.model.heads = 4;
  config.model.enc_layers = 1;
  config.model.dec_layers = 1;
  config.model.decoder_hidden = 16;
  config.model.max_len = 8;
  return config;
}

hmn::SynthConfig tiny_synth_config() {
  hmn::SynthConfig synth;
  synth.n_videos = 3;
  synth.seed = 44;
  synth.raw_dim = 20;
  synth.steps = 3;
  synth.objects = 5;
  return synth;
}

int run_gradcheck(const std::string& config_path, double eps) {
  hmn::RunConfig config = tiny_run_config();
  if (!config_path.empty()) config = hmn::load_run_config(config_path);
  hmn::GradCheckReport report =
      hmn::gradcheck_total_loss(config, tiny_synth_config(), eps);
  std::printf("max relative error: %.3e over %zu parameter entries\n",
              report.max_rel_err, report.checked);
  return report.max_rel_err < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical video captioning toolkit"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  int synth_videos = 32;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--videos", synth_videos, "number of videos (default 32)");
  synth->add_option("--seed", synth_seed, "generator seed (default 0)");

  auto* train = app.add_subcommand("train", "train a model on a dataset");
  std::string train_data, train_config, train_out;
  int train_epochs = 0;
  std::uint64_t train_seed = 0;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--config", train_config, "run config JSON file");
  auto* train_out_opt =
      train->add_option("--out", train_out,
                        "checkpoint file (.ckpt/.bin) or run directory");
  train_out_opt->required();
  auto* epochs_opt =
      train->add_option("--epochs", train_epochs, "override config epochs");
  auto* seed_opt =
      train->add_option("--seed", train_seed, "override config seed");

  auto* eval = app.add_subcommand("eval", "score captions against references");
  std::string eval_data, eval_ckpt;
  int eval_beam = 5;
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--checkpoint,--ckpt", eval_ckpt, "checkpoint file")
      ->required();
  eval->add_option("--beam", eval_beam, "beam width (default 5)");

  auto* generate = app.add_subcommand("generate", "caption every video");
  std::string gen_data, gen_ckpt;
  int gen_beam = 5;
  generate->add_option("--data", gen_data, "dataset directory")->required();
  generate->add_option("--checkpoint,--ckpt", gen_ckpt, "checkpoint file")
      ->required();
  generate->add_option("--beam", gen_beam, "beam width (default 5)");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of every parameter gradient");
  std::string gc_config, gc_preset = "tiny";
  double gc_eps = 5e-4;
  gradcheck->add_option("--preset", gc_preset, "fixture preset (default tiny)")
      ->check(CLI::IsMember({"tiny"}));
  gradcheck->add_option("--config", gc_config,
                        "run config JSON overriding the preset model");
  gradcheck->add_option("--eps", gc_eps,
                        "central-difference step (default 5e-4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(synth)) {
      return run_synth(synth_out, synth_videos, synth_seed);
    }
    if (app.got_subcommand(train)) {
      return run_train(train_data, train_config, train_out,
                       epochs_opt->count() ? &train_epochs : nullptr,
                       seed_opt->count() ? &train_seed : nullptr);
    }
    if (app.got_subcommand(eval)) {
      return run_eval(eval_data, eval_ckpt, eval_beam);
    }
    if (app.got_subcommand(generate)) {
      return run_generate(gen_data, gen_ckpt, gen_beam);
    }
    if (app.got_subcommand(gradcheck)) {
      return run_gradcheck(gc_config, gc_eps);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
