#pragma once

// Loss assembly, Adam optimization with global-norm gradient clipping, the
// seeded epoch loop, and checkpoint persistence.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hmn/config.hpp"
#include "hmn/data.hpp"
#include "hmn/language.hpp"
#include "hmn/model.hpp"
#include "hmn/tensor.hpp"

namespace hmn {

// λ_e·L_e + λ_p·L_p + λ_s·L_s + L_XE + λ_soft·L_soft; the cross-entropy
// term is unweighted. Every component must be a finite scalar (ValueError).
Tensor total_loss(const Tensor& entity, const Tensor& predicate,
                  const Tensor& sentence, const Tensor& xent, const Tensor& soft,
                  const TrainConfig& config);

// Per-caption losses under teacher forcing. Components removed by the
// model's ablation switches stay undefined and are absent from the total
// rather than contributing zero.
struct LossBreakdown {
  Tensor entity;     // assignment-matched cosine distance over entity slots
  Tensor predicate;  // 1 - cos to the predicate phrase embedding
  Tensor sentence;   // 1 - cos to the whole-caption embedding
  Tensor xent;       // -sum_t log P_t[w_t] over the caption plus end marker
  Tensor soft;       // sum_t KL(Q_t || P_t) against the bigram model
  Tensor total;
  int target_tokens = 0;  // caption length + 1, for per-token reporting
};

LossBreakdown caption_losses(const HmnModel& model, const EncodedVideo& encoded,
                             const CaptionRecord& caption, const BigramElm& elm,
                             const TrainConfig& config);

// First/second-moment buffers parallel to a fixed parameter list.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(std::span<const Tensor> params);

// Global L2 norm of all accumulated gradients; when it exceeds max_norm the
// gradients are scaled down in place (max_norm <= 0 disables). Returns the
// pre-clip norm.
double clip_gradients(std::span<Tensor> params, double max_norm);

// One bias-corrected Adam update reading each parameter's accumulated
// gradient (parameters without one count as zero). ShapeError when the
// state does not line up with the parameter list.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

// ConfigError when a model built from `config` cannot consume `dataset`:
// vocabulary size, raw feature widths, supervision width, or slot count.
void check_dataset_compatibility(const ModelConfig& config, const Dataset& dataset);

struct TrainResult {
  HmnModel model;
  RunConfig config;       // resolved against the dataset
  int epochs = 0;
  std::string rng_state;  // epoch-loop stream after the final epoch
  std::map<std::string, double> last_losses;  // final epoch's logged means
};

// Fits the bigram model on all training captions, then runs epochs of
// shuffled mini-batches (one sampled caption per video per epoch) of
// forward / total_loss / backward / clip / adam_step. Writes one JSON line
// per epoch to `log` when given; ablated components are omitted from it.
// Deterministic given config.train.seed; a non-finite loss aborts with a
// diagnostic.
TrainResult train(const Dataset& dataset, const RunConfig& config,
                  std::ostream* log = nullptr);

struct Checkpoint {
  HmnModel model;
  RunConfig config;
  int epoch = 0;
  std::string rng_state;
};

// Binary format: magic "HMNC", format version u32 LE, parameter count
// u32 LE; per parameter: name length u16 LE, UTF-8 name, rank u8, extents
// u32 LE each, float64 LE data row-major; then a length-prefixed (u32 LE)
// UTF-8 JSON blob {config, epoch, rng_state}.
void save_checkpoint(const HmnModel& model, const RunConfig& config, int epoch,
                     const std::string& rng_state, const std::string& path);

// Rebuilds the model from the stored config and restores every parameter
// bitwise. FormatError on magic/version/layout mismatches, naming the
// offending parameter.
Checkpoint load_checkpoint(const std::string& path);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;  // scalar parameter entries compared
};

// Builds a synthetic video, assembles the composite training loss for one
// caption, and compares every parameter's reverse-mode gradient against
// central finite differences. `synth` fixes the data shape (steps, objects,
// raw width); the model is initialized from config.train.seed. The step size
// trades roundoff in near-zero gradients against crossing max-pool and
// assignment kinks; 5e-4 sits in the smooth regime for the tiny preset.
GradCheckReport gradcheck_total_loss(const RunConfig& config,
                                     const SynthConfig& synth,
                                     double eps = 5e-4);

}  // namespace hmn
