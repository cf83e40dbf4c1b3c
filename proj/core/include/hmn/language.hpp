#pragma once

// Desk-scale linguistic machinery: a deterministic seeded text embedder,
// entity/predicate supervision extraction over tagged captions, and a
// Laplace-smoothed bigram language model producing soft targets.

#include <cstdint>
#include <string>
#include <vector>

#include "hmn/matching.hpp"
#include "hmn/tensor.hpp"

namespace hmn {

// Deterministic word/phrase embedder. Each word maps to a unit vector drawn
// from a generator seeded by (seed, word hash); a phrase embeds as the
// re-normalized mean of its word vectors.
struct ToyEmbedder {
  int d_s = 0;
  std::uint64_t seed = 0;

  ToyEmbedder(int d_s, std::uint64_t seed);
  Tensor embed_word(const std::string& word) const;
  Tensor embed_phrase(const std::vector<std::string>& tokens) const;
};

// Token-level supervision tags: which caption positions name entities, and
// the half-open token span of the predicate phrase.
struct GrammarTags {
  std::vector<int> entity_indices;
  int predicate_begin = 0;
  int predicate_end = 0;  // exclusive
};

struct Supervision {
  PaddedEntitySet entities;  // N slots of entity embeddings
  Tensor predicate;          // [d_s]
  Tensor sentence;           // [d_s]
};

// Embeds the tagged entity words (padded/truncated to `slots`), the
// predicate span, and the whole caption.
Supervision extract_supervision(const std::vector<std::string>& caption,
                                const GrammarTags& tags, const ToyEmbedder& embedder,
                                int slots);

// Laplace-smoothed bigram model over token ids [0, vocab_size). The begin
// marker conditions the first word; the end marker is counted as every
// caption's final successor.
class BigramElm {
 public:
  BigramElm(int vocab_size, int bos_id, int eos_id);

  // Captions come without begin/end markers; both transitions are counted.
  void fit(const std::vector<std::vector<int>>& captions);
  bool fitted() const { return fitted_; }

  // Conditional distribution over the vocabulary given the prefix of
  // generated-so-far tokens (empty prefix conditions on the begin marker).
  std::vector<double> distribution(const std::vector<int>& prefix) const;
  std::vector<double> distribution_after(int prev_token) const;

 private:
  int vocab_size_;
  int bos_id_;
  int eos_id_;
  bool fitted_ = false;
  std::vector<std::int64_t> counts_;      // [vocab, vocab] row-major
  std::vector<std::int64_t> row_totals_;  // [vocab]
};

}  // namespace hmn
