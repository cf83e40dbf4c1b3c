#include "hmn/training.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hmn/decoder.hpp"
#include "hmn/log.hpp"
#include "hmn/matching.hpp"
#include "hmn/rng.hpp"

namespace hmn {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kCheckpointMagic[4] = {'H', 'M', 'N', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

// The epoch loop draws from its own stream so data order is independent of
// how many values initialization consumed.
constexpr std::uint64_t kLoopStreamOffset = 0x9E3779B97F4A7C15ULL;

void require_finite_scalar(const Tensor& t, const char* name) {
  if (!t.defined() || t.rank() != 0) {
    throw ValueError(std::string(name) + " loss must be a defined scalar");
  }
  if (!std::isfinite(t.item())) {
    throw ValueError(std::string(name) + " loss is not finite");
  }
}

// Builds the weighted sum in a fixed term order so the ablated and full
// assemblies agree bitwise on their shared terms, and all-zero λ reduces to
// exactly the cross-entropy term.
Tensor assemble_total(const LossBreakdown& parts, const TrainConfig& config) {
  Tensor acc;
  auto push = [&acc](Tensor term) {
    acc = acc.defined() ? add(acc, term) : term;
  };
  if (parts.entity.defined()) push(scale(parts.entity, config.lambda_e));
  if (parts.predicate.defined()) push(scale(parts.predicate, config.lambda_p));
  if (parts.sentence.defined()) push(scale(parts.sentence, config.lambda_s));
  push(parts.xent);
  push(scale(parts.soft, config.lambda_soft));
  return acc;
}

template <class T>
void write_raw(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
bool read_raw(std::istream& is, T& value) {
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<bool>(is);
}

}  // namespace

Tensor total_loss(const Tensor& entity, const Tensor& predicate,
                  const Tensor& sentence, const Tensor& xent, const Tensor& soft,
                  const TrainConfig& config) {
  config.validate();
  require_finite_scalar(entity, "entity");
  require_finite_scalar(predicate, "predicate");
  require_finite_scalar(sentence, "sentence");
  require_finite_scalar(xent, "cross-entropy");
  require_finite_scalar(soft, "soft-target");
  LossBreakdown parts;
  parts.entity = entity;
  parts.predicate = predicate;
  parts.sentence = sentence;
  parts.xent = xent;
  parts.soft = soft;
  return assemble_total(parts, config);
}

LossBreakdown caption_losses(const HmnModel& model, const EncodedVideo& encoded,
                             const CaptionRecord& caption, const BigramElm& elm,
                             const TrainConfig& config) {
  if (caption.token_ids.empty()) throw ValueError("caption has no tokens");
  if (!elm.fitted()) {
    throw ValueError("bigram language model must be fitted before computing losses");
  }
  const AblationConfig& ablation = model.config.ablation;
  LossBreakdown out;

  std::vector<int> targets = caption.token_ids;
  targets.push_back(kEndTokenId);
  out.target_tokens = static_cast<int>(targets.size());

  std::vector<WordDistribution> steps;
  steps.reserve(targets.size());
  Tensor soft_sum;
  std::vector<int> prefix;  // gold tokens fed so far (teacher forcing)
  DecoderState state = model.decoder.initial_state();
  int prev = kBeginTokenId;
  for (int target : targets) {
    FusedContext fused = model.decoder.fuse_step(state.h, encoded);
    auto [next_state, dist] = model.decoder.decode_step(prev, state, fused);
    Tensor term = soft_target_loss(dist, elm.distribution(prefix));
    soft_sum = soft_sum.defined() ? add(soft_sum, term) : term;
    steps.push_back(std::move(dist));
    state = next_state;
    prev = target;
    prefix.push_back(target);
  }
  out.xent = xent_loss(steps, targets);
  out.soft = soft_sum;

  // With selection ablated the prediction rows no longer line up with the
  // fixed slot count, so the matching loss is dropped along with it.
  if (!ablation.remove_entity && !ablation.all_objects) {
    out.entity = entity_loss(caption.supervision.entities, encoded.entity_embeds);
  }
  if (!ablation.remove_predicate) {
    out.predicate = predicate_loss(encoded.predicate_embed, caption.supervision.predicate);
  }
  if (!ablation.remove_sentence) {
    out.sentence = sentence_loss(encoded.sentence_embed, caption.supervision.sentence);
  }
  out.total = assemble_total(out, config);
  return out;
}

AdamState make_adam_state(std::span<const Tensor> params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Tensor& p : params) {
    state.m.emplace_back(p.values().size(), 0.0);
    state.v.emplace_back(p.values().size(), 0.0);
  }
  return state;
}

double clip_gradients(std::span<Tensor> params, double max_norm) {
  double norm2 = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) norm2 += g * g;
  }
  const double norm = std::sqrt(norm2);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.raw_grad()) g *= factor;
    }
  }
  return norm;
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters but the model has " + std::to_string(params.size()));
  }
  state.step += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    if (m.size() != p.values().size()) {
      throw ShapeError("optimizer state entry " + std::to_string(i) +
                       " holds " + std::to_string(m.size()) + " values but the parameter has " +
                       std::to_string(p.values().size()));
    }
    const bool has_grad = p.has_grad();
    std::vector<double>& values = p.raw_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has_grad ? p.grad()[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void check_dataset_compatibility(const ModelConfig& config, const Dataset& dataset) {
  auto fail = [](const std::string& what, int model_value, int data_value) {
    throw ConfigError("model/dataset mismatch: " + what + " is " +
                      std::to_string(model_value) + " in the config but " +
                      std::to_string(data_value) + " in the dataset");
  };
  if (config.vocab_size != dataset.vocab.size()) {
    fail("vocabulary size", config.vocab_size, dataset.vocab.size());
  }
  if (config.raw_context_dim != dataset.raw_context_dim) {
    fail("raw context width", config.raw_context_dim, dataset.raw_context_dim);
  }
  if (config.raw_motion_dim != dataset.raw_motion_dim) {
    fail("raw motion width", config.raw_motion_dim, dataset.raw_motion_dim);
  }
  if (config.raw_object_dim != dataset.raw_object_dim) {
    fail("raw object width", config.raw_object_dim, dataset.raw_object_dim);
  }
  if (config.d_s != dataset.d_s) {
    fail("supervision embedding width", config.d_s, dataset.d_s);
  }
  if (config.n_queries != dataset.slots) {
    fail("entity slot count", config.n_queries, dataset.slots);
  }
}

TrainResult train(const Dataset& dataset, const RunConfig& run, std::ostream* log) {
  if (dataset.videos.empty()) throw ValueError("cannot train on an empty dataset");
  run.train.validate();
  const ModelConfig resolved = resolve_model_config(
      run.model, dataset.vocab.size(), dataset.raw_context_dim,
      dataset.raw_motion_dim, dataset.raw_object_dim);
  check_dataset_compatibility(resolved, dataset);

  TrainResult result;
  result.config = RunConfig{resolved, run.train};
  result.model = HmnModel(resolved, run.train.seed);
  HmnModel& model = result.model;

  BigramElm elm(resolved.vocab_size, kBeginTokenId, kEndTokenId);
  std::vector<std::vector<int>> corpus;
  for (const VideoRecord& video : dataset.videos) {
    for (const CaptionRecord& caption : video.captions) {
      corpus.push_back(caption.token_ids);
    }
  }
  elm.fit(corpus);

  std::vector<Tensor> params = model.reg.tensors();
  AdamState opt = make_adam_state(params);
  Rng loop_rng(run.train.seed + kLoopStreamOffset);

  const int n = static_cast<int>(dataset.videos.size());
  const int batch_size = std::min(run.train.batch_size, n);
  log_info("training " + std::to_string(model.reg.total_size()) + " parameters on " +
           std::to_string(n) + " videos for " + std::to_string(run.train.epochs) +
           " epochs");

  for (int epoch = 1; epoch <= run.train.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    loop_rng.shuffle(order);

    double sum_e = 0.0, sum_p = 0.0, sum_s = 0.0;
    double sum_x = 0.0, sum_soft = 0.0, sum_total = 0.0;
    bool has_e = false, has_p = false, has_s = false;

    for (int start = 0; start < n; start += batch_size) {
      const int end = std::min(n, start + batch_size);
      model.reg.zero_all_grads();
      Tensor batch_total;
      const double inv = 1.0 / static_cast<double>(end - start);
      for (int k = start; k < end; ++k) {
        const VideoRecord& video = dataset.videos[static_cast<std::size_t>(order[k])];
        const int pick = loop_rng.below(static_cast<int>(video.captions.size()));
        EncodedVideo encoded =
            model.encode_raw(video.context, video.motion, video.objects);
        LossBreakdown losses = caption_losses(
            model, encoded, video.captions[static_cast<std::size_t>(pick)], elm,
            run.train);
        if (losses.entity.defined()) {
          sum_e += losses.entity.item();
          has_e = true;
        }
        if (losses.predicate.defined()) {
          sum_p += losses.predicate.item();
          has_p = true;
        }
        if (losses.sentence.defined()) {
          sum_s += losses.sentence.item();
          has_s = true;
        }
        sum_x += losses.xent.item();
        sum_soft += losses.soft.item();
        sum_total += losses.total.item();
        Tensor contribution = scale(losses.total, inv);
        batch_total =
            batch_total.defined() ? add(batch_total, contribution) : contribution;
      }
      if (!std::isfinite(batch_total.item())) {
        throw ValueError("training diverged: non-finite loss at epoch " +
                         std::to_string(epoch) + ", batch starting at video " +
                         std::to_string(start));
      }
      batch_total.backward();
      clip_gradients(params, run.train.clip_norm);
      adam_step(params, opt, run.train.learning_rate);
    }

    ordered_json line;
    line["epoch"] = epoch;
    result.last_losses.clear();
    auto emit = [&](const char* key, double total) {
      const double mean = total / static_cast<double>(n);
      line[key] = mean;
      result.last_losses[key] = mean;
    };
    if (has_e) emit("L_e", sum_e);
    if (has_p) emit("L_p", sum_p);
    if (has_s) emit("L_s", sum_s);
    emit("L_XE", sum_x);
    emit("L_soft", sum_soft);
    emit("total", sum_total);
    if (log != nullptr) {
      *log << line.dump() << "\n";
      log->flush();
    }
    log_debug("epoch " + std::to_string(epoch) + " mean loss " +
              std::to_string(sum_total / n));
  }
  result.epochs = run.train.epochs;
  result.rng_state = loop_rng.save_state();
  return result;
}

void save_checkpoint(const HmnModel& model, const RunConfig& config, int epoch,
                     const std::string& rng_state, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_raw(os, kCheckpointVersion);
  const auto& entries = model.reg.entries();
  write_raw(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    write_raw(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(os, static_cast<std::uint8_t>(tensor.shape().size()));
    for (int extent : tensor.shape()) {
      write_raw(os, static_cast<std::uint32_t>(extent));
    }
    os.write(reinterpret_cast<const char*>(tensor.values().data()),
             static_cast<std::streamsize>(tensor.values().size() * sizeof(double)));
  }
  ordered_json blob;
  blob["config"] = ordered_json::parse(run_config_to_json(config));
  blob["epoch"] = epoch;
  blob["rng_state"] = rng_state;
  const std::string text = blob.dump();
  write_raw(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  std::uint32_t version = 0;
  if (!read_raw(is, version)) throw FormatError("truncated checkpoint header");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint32_t count = 0;
  if (!read_raw(is, count)) throw FormatError("truncated checkpoint header");

  std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> stored;
  stored.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t name_len = 0;
    if (!read_raw(is, name_len)) {
      throw FormatError("truncated checkpoint at parameter " + std::to_string(i));
    }
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint8_t rank = 0;
    if (!is || !read_raw(is, rank)) {
      throw FormatError("truncated checkpoint at parameter " + std::to_string(i));
    }
    Shape shape(rank);
    std::size_t total = 1;
    for (int axis = 0; axis < rank; ++axis) {
      std::uint32_t extent = 0;
      if (!read_raw(is, extent) || extent == 0) {
        throw FormatError("bad extents for parameter '" + name + "'");
      }
      shape[axis] = static_cast<int>(extent);
      total *= extent;
    }
    std::vector<double> data(total);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!is) {
      throw FormatError("truncated data for parameter '" + name + "'");
    }
    stored.emplace_back(std::move(name), std::make_pair(std::move(shape), std::move(data)));
  }

  std::uint32_t blob_len = 0;
  if (!read_raw(is, blob_len)) throw FormatError("checkpoint is missing its config blob");
  std::string text(blob_len, '\0');
  is.read(text.data(), blob_len);
  if (!is) throw FormatError("truncated checkpoint config blob");
  ordered_json blob;
  try {
    blob = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError("checkpoint config blob is not valid JSON: " + std::string(e.what()));
  }
  if (!blob.is_object() || !blob.contains("config") || !blob.contains("epoch") ||
      !blob.contains("rng_state")) {
    throw FormatError("checkpoint config blob is missing fields");
  }

  Checkpoint checkpoint;
  checkpoint.config = parse_run_config(blob["config"].dump());
  checkpoint.epoch = blob["epoch"].get<int>();
  checkpoint.rng_state = blob["rng_state"].get<std::string>();
  checkpoint.model = HmnModel(checkpoint.config.model, checkpoint.config.train.seed);

  const auto& entries = checkpoint.model.reg.entries();
  if (entries.size() != stored.size()) {
    throw FormatError("checkpoint holds " + std::to_string(stored.size()) +
                      " parameters but the stored config builds " +
                      std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, payload] = stored[i];
    if (entries[i].first != name) {
      throw FormatError("checkpoint parameter '" + name +
                        "' does not match the model's '" + entries[i].first + "'");
    }
    if (payload.first != entries[i].second.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " +
                        shape_str(payload.first) + " but the model expects " +
                        shape_str(entries[i].second.shape()));
    }
    Tensor tensor = entries[i].second;
    tensor.raw_values() = payload.second;
  }
  return checkpoint;
}

GradCheckReport gradcheck_total_loss(const RunConfig& run,
                                     const SynthConfig& synth, double eps) {
  run.train.validate();
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / ("hmn_gradcheck_" + std::to_string(synth.seed));
  fs::remove_all(dir);
  synth_generate(dir.string(), synth);
  Dataset dataset =
      load_dataset(dir.string(), run.model.d_s, run.model.n_queries);
  fs::remove_all(dir);

  const ModelConfig resolved = resolve_model_config(
      run.model, dataset.vocab.size(), dataset.raw_context_dim,
      dataset.raw_motion_dim, dataset.raw_object_dim);
  check_dataset_compatibility(resolved, dataset);
  HmnModel model(resolved, run.train.seed);

  BigramElm elm(resolved.vocab_size, kBeginTokenId, kEndTokenId);
  std::vector<std::vector<int>> corpus;
  for (const VideoRecord& video : dataset.videos) {
    for (const CaptionRecord& caption : video.captions) {
      corpus.push_back(caption.token_ids);
    }
  }
  elm.fit(corpus);

  const VideoRecord& video = dataset.videos.front();
  const CaptionRecord& caption = video.captions.front();
  auto loss = [&] {
    EncodedVideo encoded =
        model.encode_raw(video.context, video.motion, video.objects);
    return caption_losses(model, encoded, caption, elm, run.train).total;
  };

  GradCheckReport report;
  report.checked = model.reg.total_size();
  report.max_rel_err = grad_check(loss, model.reg.tensors(), eps);
  return report;
}

}  // namespace hmn
