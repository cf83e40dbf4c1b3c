#include "hmn/language.hpp"

#include <cmath>

#include "hmn/error.hpp"
#include "hmn/rng.hpp"

namespace hmn {

namespace {

std::uint64_t fnv1a(std::uint64_t seed, const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  // fold the seed's bytes in first so different seeds give unrelated streams
  for (int i = 0; i < 8; ++i) {
    h ^= (seed >> (8 * i)) & 0xffULL;
    h *= 1099511628211ULL;
  }
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Tensor normalized_or_throw(std::vector<double> v, const char* what) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  if (s < 1e-12) throw ValueError(std::string(what) + " collapsed to a zero vector");
  for (double& x : v) x /= s;
  int n = static_cast<int>(v.size());
  return Tensor::from({n}, std::move(v));
}

}  // namespace

ToyEmbedder::ToyEmbedder(int d_s_, std::uint64_t seed_) : d_s(d_s_), seed(seed_) {
  if (d_s < 1) throw ValueError("embedding width must be at least 1");
}

Tensor ToyEmbedder::embed_word(const std::string& word) const {
  Rng rng(fnv1a(seed, word));
  std::vector<double> v(static_cast<std::size_t>(d_s));
  for (double& x : v) x = rng.normal();
  return normalized_or_throw(std::move(v), "word embedding");
}

Tensor ToyEmbedder::embed_phrase(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) throw ValueError("cannot embed an empty phrase");
  std::vector<double> mean(static_cast<std::size_t>(d_s), 0.0);
  for (const auto& tok : tokens) {
    Tensor w = embed_word(tok);
    for (int j = 0; j < d_s; ++j) mean[static_cast<std::size_t>(j)] += w.at(j);
  }
  for (double& x : mean) x /= static_cast<double>(tokens.size());
  return normalized_or_throw(std::move(mean), "phrase embedding");
}

Supervision extract_supervision(const std::vector<std::string>& caption,
                                const GrammarTags& tags, const ToyEmbedder& embedder,
                                int slots) {
  int len = static_cast<int>(caption.size());
  if (len == 0) throw ValueError("cannot extract supervision from an empty caption");
  for (int idx : tags.entity_indices) {
    if (idx < 0 || idx >= len) {
      throw ValueError("entity tag index " + std::to_string(idx) +
                       " outside caption of length " + std::to_string(len));
    }
  }
  if (tags.predicate_begin < 0 || tags.predicate_end > len ||
      tags.predicate_begin >= tags.predicate_end) {
    throw ValueError("predicate span [" + std::to_string(tags.predicate_begin) + ", " +
                     std::to_string(tags.predicate_end) + ") invalid for caption of length " +
                     std::to_string(len));
  }

  Supervision out;
  std::vector<Tensor> entity_vecs;
  entity_vecs.reserve(tags.entity_indices.size());
  for (int idx : tags.entity_indices) {
    entity_vecs.push_back(embedder.embed_word(caption[static_cast<std::size_t>(idx)]));
  }
  out.entities = pad_entities(entity_vecs, slots, embedder.d_s);

  std::vector<std::string> pred(caption.begin() + tags.predicate_begin,
                                caption.begin() + tags.predicate_end);
  out.predicate = embedder.embed_phrase(pred);
  out.sentence = embedder.embed_phrase(caption);
  return out;
}

BigramElm::BigramElm(int vocab_size, int bos_id, int eos_id)
    : vocab_size_(vocab_size), bos_id_(bos_id), eos_id_(eos_id) {
  if (vocab_size < 1) throw ValueError("vocabulary size must be at least 1");
  if (bos_id < 0 || bos_id >= vocab_size || eos_id < 0 || eos_id >= vocab_size) {
    throw ValueError("begin/end marker ids must lie inside the vocabulary");
  }
  counts_.assign(static_cast<std::size_t>(vocab_size) * vocab_size, 0);
  row_totals_.assign(static_cast<std::size_t>(vocab_size), 0);
}

void BigramElm::fit(const std::vector<std::vector<int>>& captions) {
  std::fill(counts_.begin(), counts_.end(), 0);
  std::fill(row_totals_.begin(), row_totals_.end(), 0);
  auto bump = [this](int prev, int next) {
    if (prev < 0 || prev >= vocab_size_ || next < 0 || next >= vocab_size_) {
      throw ValueError("token id outside vocabulary while fitting bigram model");
    }
    ++counts_[static_cast<std::size_t>(prev) * vocab_size_ + next];
    ++row_totals_[static_cast<std::size_t>(prev)];
  };
  for (const auto& cap : captions) {
    int prev = bos_id_;
    for (int tok : cap) {
      bump(prev, tok);
      prev = tok;
    }
    bump(prev, eos_id_);
  }
  fitted_ = true;
}

std::vector<double> BigramElm::distribution_after(int prev_token) const {
  if (!fitted_) throw ValueError("bigram model queried before fitting");
  if (prev_token < 0 || prev_token >= vocab_size_) {
    throw ValueError("token id " + std::to_string(prev_token) + " outside vocabulary");
  }
  std::vector<double> dist(static_cast<std::size_t>(vocab_size_));
  double denom = static_cast<double>(row_totals_[static_cast<std::size_t>(prev_token)]) +
                 static_cast<double>(vocab_size_);
  const std::int64_t* row = counts_.data() + static_cast<std::size_t>(prev_token) * vocab_size_;
  for (int w = 0; w < vocab_size_; ++w) {
    dist[static_cast<std::size_t>(w)] = (static_cast<double>(row[w]) + 1.0) / denom;
  }
  return dist;
}

std::vector<double> BigramElm::distribution(const std::vector<int>& prefix) const {
  return distribution_after(prefix.empty() ? bos_id_ : prefix.back());
}

}  // namespace hmn
