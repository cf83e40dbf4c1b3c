#pragma once

// Dataset plumbing: a framed binary tensor store, a token vocabulary, the
// synthetic caption grammar with its feature generator, and the dataset
// loader that materializes features and supervision embeddings.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hmn/language.hpp"
#include "hmn/tensor.hpp"

namespace hmn {

// Seed for the supervision embedder shared by every process that touches a
// dataset; training targets and evaluation probes must agree bitwise, so
// this is a library constant rather than a run option.
inline constexpr std::uint64_t kSupervisionEmbedSeed = 1337;

// Single-file collection of named float32 tensors. Values are promoted to
// float64 in memory; features are inputs, not parameters, so the one-way
// precision loss at `put` time is part of the format.
class TensorStore {
 public:
  void put(const std::string& key, const Tensor& tensor);
  bool contains(const std::string& key) const;
  Tensor get(const std::string& key) const;
  const std::vector<std::string>& keys() const { return keys_; }

  void save(const std::string& path) const;
  static TensorStore load(const std::string& path);

 private:
  std::vector<std::string> keys_;  // insertion order, drives file layout
  std::map<std::string, std::pair<Shape, std::vector<float>>> entries_;
};

// Token <-> id mapping with the begin/end markers pre-installed at fixed ids.
class Vocabulary {
 public:
  static constexpr int kBosId = 0;
  static constexpr int kEosId = 1;

  Vocabulary();

  int add(const std::string& word);  // existing words keep their id
  bool contains(const std::string& word) const;
  int id(const std::string& word) const;
  const std::string& word(int id) const;
  int size() const { return static_cast<int>(words_.size()); }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

// Corpus shape: every caption is "a <entity> <verb> a <entity>" with two
// distinct entities, so the full vocabulary is entities + verbs + "a" plus
// the two markers.
struct SyntheticGrammar {
  std::vector<std::string> entities;
  std::vector<std::string> verbs;

  static SyntheticGrammar defaults();  // 12 entities, 8 verbs
};

struct SynthConfig {
  int n_videos = 32;
  std::uint64_t seed = 0;
  int raw_dim = 32;       // width of every raw feature family
  int steps = 15;         // context/motion rows per video
  int objects = 10;       // object rows per video
  int signal_objects = 2; // noisy copies of the caption entities' latents
  SyntheticGrammar grammar = SyntheticGrammar::defaults();
};

// Writes dataset.json, vocab.json, and tensors.bin under `dir`. Features are
// deterministic per (seed, video index): context rows are the caption's
// latent mean plus sigma=0.1 noise, motion rows the verb latent plus noise,
// and object rows hide the two entity latents among random distractors.
void synth_generate(const std::string& dir, const SynthConfig& config);

struct CaptionRecord {
  std::vector<std::string> words;  // no begin/end markers
  std::vector<int> token_ids;
  GrammarTags tags;
  Supervision supervision;  // embeddings at the loader's d_s / slot count
};

struct VideoRecord {
  std::string id;
  Tensor context;  // [steps, raw_context_dim]
  Tensor motion;   // [steps, raw_motion_dim]
  Tensor objects;  // [object_count, raw_object_dim]
  std::vector<CaptionRecord> captions;
};

struct Dataset {
  Vocabulary vocab;
  std::vector<VideoRecord> videos;
  int raw_context_dim = 0;
  int raw_motion_dim = 0;
  int raw_object_dim = 0;
  int d_s = 0;    // supervision embedding width used at load
  int slots = 0;  // entity slots supervision was padded to
};

// Reads the three files synth_generate writes and materializes everything,
// including per-caption supervision embeddings at width d_s padded to
// `slots` entities. Structural problems name the offending key or record.
Dataset load_dataset(const std::string& dir, int d_s, int slots);

}  // namespace hmn
