#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hmn/data.hpp"
#include "hmn/model.hpp"
#include "hmn/rng.hpp"

using namespace hmn;

namespace {

ModelConfig tiny_config() {
  ModelConfig config;
  config.d_model = 8;
  config.d_s = 6;
  config.d_w = 5;
  config.n_queries = 3;
  config.heads = 2;
  config.enc_layers = 1;
  config.dec_layers = 1;
  config.decoder_hidden = 7;
  config.max_len = 6;
  config.vocab_size = 9;
  config.raw_context_dim = 11;  // three distinct raw widths to catch swaps
  config.raw_motion_dim = 13;
  config.raw_object_dim = 10;
  return config;
}

Tensor random_matrix(Rng& rng, int rows, int cols) {
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (double& x : data) x = rng.normal();
  return Tensor::from({rows, cols}, std::move(data));
}

Tensor reverse_rows(const Tensor& m) {
  const int rows = m.extent(0);
  const int cols = m.extent(1);
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      data[static_cast<std::size_t>(i) * cols + j] = m.at(rows - 1 - i, j);
    }
  }
  return Tensor::from({rows, cols}, std::move(data));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("marker ids match the vocabulary's pinned positions") {
  CHECK(kBeginTokenId == Vocabulary::kBosId);
  CHECK(kEndTokenId == Vocabulary::kEosId);
  Vocabulary vocab;
  CHECK(vocab.word(kBeginTokenId) == "<bos>");
  CHECK(vocab.word(kEndTokenId) == "<eos>");
}

TEST_CASE("construction registers every family once, deterministically") {
  HmnModel model(tiny_config(), 5);
  const auto& entries = model.reg.entries();
  REQUIRE_FALSE(entries.empty());

  // Projections first, then the encoder, then the decoder.
  CHECK(entries[0].first.rfind("input.", 0) == 0);
  CHECK(model.reg.contains("input.context_proj.W"));
  CHECK(model.reg.contains("input.motion_proj.W"));
  CHECK(model.reg.contains("input.object_proj.W"));
  bool saw_encoder = false;
  bool saw_decoder = false;
  bool decoder_after_encoder = false;
  for (const auto& [name, tensor] : entries) {
    (void)tensor;
    if (name.rfind("encoder.", 0) == 0) {
      saw_encoder = true;
      CHECK_FALSE(saw_decoder);  // all encoder params precede decoder params
    }
    if (name.rfind("decoder.", 0) == 0) {
      saw_decoder = true;
      if (saw_encoder) decoder_after_encoder = true;
    }
  }
  CHECK(saw_encoder);
  CHECK(decoder_after_encoder);

  HmnModel twin(tiny_config(), 5);
  REQUIRE(twin.reg.entries().size() == entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(twin.reg.entries()[i].first == entries[i].first);
    CHECK(twin.reg.entries()[i].second.values() == entries[i].second.values());
  }

  HmnModel other(tiny_config(), 6);
  bool any_differs = false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (other.reg.entries()[i].second.values() != entries[i].second.values()) {
      any_differs = true;
      break;
    }
  }
  CHECK(any_differs);
}

TEST_CASE("projection lifts each raw family to the shared width") {
  HmnModel model(tiny_config(), 5);
  Rng rng(9);
  Tensor context = random_matrix(rng, 4, 11);
  Tensor motion = random_matrix(rng, 4, 13);
  Tensor objects = random_matrix(rng, 3, 10);
  VideoFeatures features = model.project(context, motion, objects);
  CHECK(features.context.shape() == Shape({4, 8}));
  CHECK(features.motion.shape() == Shape({4, 8}));
  CHECK(features.objects.shape() == Shape({3, 8}));

  CHECK_THROWS_AS(model.project(motion, context, objects), ShapeError);
}

TEST_CASE("resolve_model_config adopts dataset facts") {
  ModelConfig base = tiny_config();
  base.vocab_size = 0;

  ModelConfig resolved = resolve_model_config(base, 23, 32, 32, 32);
  CHECK(resolved.vocab_size == 23);
  CHECK(resolved.raw_context_dim == 32);
  CHECK(resolved.raw_motion_dim == 32);
  CHECK(resolved.raw_object_dim == 32);

  base.vocab_size = 23;
  CHECK(resolve_model_config(base, 23, 32, 32, 32).vocab_size == 23);
  base.vocab_size = 24;
  CHECK_THROWS_AS(resolve_model_config(base, 23, 32, 32, 32), ConfigError);
  base.vocab_size = 0;
  CHECK_THROWS_AS(resolve_model_config(base, 1, 32, 32, 32), ConfigError);
  CHECK_THROWS_AS(resolve_model_config(base, 23, 0, 32, 32), ConfigError);

  // Construction demands a resolved vocabulary.
  ModelConfig unresolved = tiny_config();
  unresolved.vocab_size = 0;
  CHECK_THROWS_AS(HmnModel(unresolved, 5), ConfigError);
}

TEST_CASE("full pipeline emits a terminated caption and beam=1 matches greedy") {
  ModelConfig config = tiny_config();
  HmnModel model(config, 5);
  Rng rng(31);
  Tensor context = random_matrix(rng, 4, 11);
  Tensor motion = random_matrix(rng, 4, 13);
  Tensor objects = random_matrix(rng, 6, 10);
  EncodedVideo encoded = model.encode_raw(context, motion, objects);

  std::vector<int> greedy = model.caption_greedy(encoded);
  REQUIRE_FALSE(greedy.empty());
  CHECK(greedy.size() <= static_cast<std::size_t>(config.max_len) + 1);
  if (greedy.size() <= static_cast<std::size_t>(config.max_len)) {
    CHECK(greedy.back() == kEndTokenId);
  }
  CHECK(model.caption_beam(encoded, 1) == greedy);
}

TEST_CASE("object-row order never reaches the caption distribution") {
  HmnModel model(tiny_config(), 5);
  Rng rng(17);
  Tensor context = random_matrix(rng, 3, 11);
  Tensor motion = random_matrix(rng, 3, 13);
  Tensor objects = random_matrix(rng, 5, 10);

  EncodedVideo a = model.encode_raw(context, motion, objects);
  EncodedVideo b = model.encode_raw(context, motion, reverse_rows(objects));

  CHECK(max_abs_diff(a.content, b.content) < 1e-9);
  CHECK(max_abs_diff(a.entities, b.entities) < 1e-9);
  CHECK(max_abs_diff(a.entity_embeds, b.entity_embeds) < 1e-9);
  CHECK(max_abs_diff(a.actions, b.actions) < 1e-9);
  CHECK(max_abs_diff(a.predicate_embed, b.predicate_embed) < 1e-9);
  CHECK(max_abs_diff(a.global_features, b.global_features) < 1e-9);
  CHECK(max_abs_diff(a.sentence_embed, b.sentence_embed) < 1e-9);

  DecoderState s0 = model.decoder.initial_state();
  FusedContext fa = model.decoder.fuse_step(s0.h, a);
  FusedContext fb = model.decoder.fuse_step(s0.h, b);
  auto [sa, da] = model.decoder.decode_step(kBeginTokenId, s0, fa);
  auto [sb, db] = model.decoder.decode_step(kBeginTokenId, s0, fb);
  CHECK(max_abs_diff(da.probs, db.probs) < 1e-9);
}

TEST_CASE("ablation switches propagate through the composed model") {
  ModelConfig config = tiny_config();
  config.ablation.remove_entity = true;
  HmnModel model(config, 5);
  Rng rng(23);
  EncodedVideo encoded =
      model.encode_raw(random_matrix(rng, 3, 11), random_matrix(rng, 3, 13),
                       random_matrix(rng, 5, 10));
  for (double v : encoded.entities.values()) CHECK(v == 0.0);
  for (double v : encoded.entity_embeds.values()) CHECK(v == 0.0);
  // The rest of the chain still runs and captions still terminate.
  std::vector<int> tokens = model.caption_greedy(encoded);
  CHECK_FALSE(tokens.empty());
}
