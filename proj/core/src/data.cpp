#include "hmn/data.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hmn/rng.hpp"

namespace hmn {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kStoreMagic[4] = {'H', 'M', 'N', 'T'};
constexpr std::uint32_t kStoreVersion = 1;
constexpr int kManifestVersion = 1;
constexpr int kVocabVersion = 1;
const char* kBosWord = "<bos>";
const char* kEosWord = "<eos>";

template <class T>
void write_raw(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
bool read_raw(std::istream& is, T& value) {
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<bool>(is);
}

std::vector<double> unit_vector(int d, Rng& rng) {
  std::vector<double> v(d);
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  if (norm2 == 0.0) {
    v[0] = 1.0;
    norm2 = 1.0;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

std::string video_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "video%04d", index);
  return buf;
}

const ordered_json* find_field(const ordered_json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string require_string(const ordered_json& obj, const char* key,
                           const std::string& where) {
  const ordered_json* v = find_field(obj, key);
  if (v == nullptr || !v->is_string() || v->get<std::string>().empty()) {
    throw FormatError("dataset manifest " + where + " needs a nonempty string '" +
                      key + "'");
  }
  return v->get<std::string>();
}

}  // namespace

// --- tensor store ---------------------------------------------------------

void TensorStore::put(const std::string& key, const Tensor& tensor) {
  if (key.empty()) throw ValueError("tensor store keys must be nonempty");
  if (entries_.count(key) != 0) {
    throw ValueError("tensor store already has key '" + key + "'");
  }
  if (!tensor.defined()) {
    throw ValueError("tensor store cannot hold an undefined tensor ('" + key + "')");
  }
  std::vector<float> data(tensor.values().begin(), tensor.values().end());
  keys_.push_back(key);
  entries_.emplace(key, std::make_pair(tensor.shape(), std::move(data)));
}

bool TensorStore::contains(const std::string& key) const {
  return entries_.count(key) != 0;
}

Tensor TensorStore::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ValueError("tensor store has no key '" + key + "'");
  }
  const auto& [shape, data] = it->second;
  return Tensor::from(shape, std::vector<double>(data.begin(), data.end()));
}

void TensorStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open tensor store for writing: " + path);
  os.write(kStoreMagic, sizeof(kStoreMagic));
  write_raw(os, kStoreVersion);
  write_raw(os, static_cast<std::uint32_t>(keys_.size()));
  for (const std::string& key : keys_) {
    const auto& [shape, data] = entries_.at(key);
    write_raw(os, static_cast<std::uint16_t>(key.size()));
    os.write(key.data(), static_cast<std::streamsize>(key.size()));
    write_raw(os, static_cast<std::uint8_t>(shape.size()));
    for (int extent : shape) write_raw(os, static_cast<std::uint32_t>(extent));
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!os) throw IoError("failed while writing tensor store: " + path);
}

TensorStore TensorStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor store: " + path);
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::string(magic, 4) != std::string(kStoreMagic, 4)) {
    throw FormatError("not a tensor store file (bad magic): " + path);
  }
  std::uint32_t version = 0;
  if (!read_raw(is, version)) throw FormatError("truncated tensor store header");
  if (version != kStoreVersion) {
    throw FormatError("unsupported tensor store version " +
                      std::to_string(version));
  }
  std::uint32_t count = 0;
  if (!read_raw(is, count)) throw FormatError("truncated tensor store header");
  TensorStore store;
  for (std::uint32_t n = 0; n < count; ++n) {
    std::uint16_t key_len = 0;
    if (!read_raw(is, key_len)) {
      throw FormatError("truncated tensor store at entry " + std::to_string(n));
    }
    std::string key(key_len, '\0');
    is.read(key.data(), key_len);
    std::uint8_t rank = 0;
    if (!is || !read_raw(is, rank)) {
      throw FormatError("truncated tensor store at entry " + std::to_string(n));
    }
    Shape shape(rank);
    std::size_t total = 1;
    for (int axis = 0; axis < rank; ++axis) {
      std::uint32_t extent = 0;
      if (!read_raw(is, extent) || extent == 0) {
        throw FormatError("bad extents for tensor key '" + key + "'");
      }
      shape[axis] = static_cast<int>(extent);
      total *= extent;
    }
    std::vector<float> data(total);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
    if (!is) {
      throw FormatError("frame shorter than its declared shape for tensor key '" +
                        key + "'");
    }
    std::vector<double> promoted(data.begin(), data.end());
    store.put(key, Tensor::from(std::move(shape), std::move(promoted)));
  }
  return store;
}

// --- vocabulary -----------------------------------------------------------

Vocabulary::Vocabulary() {
  add(kBosWord);
  add(kEosWord);
}

int Vocabulary::add(const std::string& word) {
  if (word.empty()) throw ValueError("vocabulary words must be nonempty");
  auto it = ids_.find(word);
  if (it != ids_.end()) return it->second;
  const int new_id = static_cast<int>(words_.size());
  words_.push_back(word);
  ids_.emplace(word, new_id);
  return new_id;
}

bool Vocabulary::contains(const std::string& word) const {
  return ids_.count(word) != 0;
}

int Vocabulary::id(const std::string& word) const {
  auto it = ids_.find(word);
  if (it == ids_.end()) {
    throw ValueError("word '" + word + "' is not in the vocabulary");
  }
  return it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) {
    throw ValueError("token id " + std::to_string(id) +
                     " is outside the vocabulary of size " + std::to_string(size()));
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const std::string& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (int t : ids) words.push_back(word(t));
  return words;
}

void Vocabulary::save(const std::string& path) const {
  ordered_json doc;
  doc["version"] = kVocabVersion;
  doc["words"] = words_;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open vocabulary file for writing: " + path);
  os << doc.dump(2) << "\n";
  if (!os) throw IoError("failed while writing vocabulary file: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary file: " + path);
  ordered_json doc;
  try {
    doc = ordered_json::parse(is);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError("vocabulary file is not valid JSON: " + std::string(e.what()));
  }
  const ordered_json* version = find_field(doc, "version");
  if (version == nullptr || !version->is_number_integer() ||
      version->get<int>() != kVocabVersion) {
    throw FormatError("unsupported vocabulary version in " + path);
  }
  const ordered_json* words = find_field(doc, "words");
  if (words == nullptr || !words->is_array() || words->size() < 2) {
    throw FormatError("vocabulary file needs a 'words' array with the markers");
  }
  Vocabulary vocab;
  for (std::size_t i = 0; i < words->size(); ++i) {
    const auto& w = (*words)[i];
    if (!w.is_string()) {
      throw FormatError("vocabulary entry " + std::to_string(i) +
                        " is not a string");
    }
    const std::string word = w.get<std::string>();
    if (i == 0 || i == 1) {
      const char* expect = i == 0 ? kBosWord : kEosWord;
      if (word != expect) {
        throw FormatError("vocabulary must start with the begin/end markers, got '" +
                          word + "'");
      }
      continue;
    }
    if (vocab.contains(word)) {
      throw FormatError("vocabulary repeats the word '" + word + "'");
    }
    vocab.add(word);
  }
  return vocab;
}

// --- synthetic corpus -----------------------------------------------------

SyntheticGrammar SyntheticGrammar::defaults() {
  SyntheticGrammar g;
  g.entities = {"dog",   "cat",  "bird",   "horse", "sheep", "rabbit",
                "tiger", "bear", "monkey", "panda", "fox",   "wolf"};
  g.verbs = {"chases", "watches", "follows", "greets",
             "avoids", "circles", "nudges",  "passes"};
  return g;
}

void synth_generate(const std::string& dir, const SynthConfig& config) {
  if (config.n_videos < 1) throw ValueError("need at least one video");
  if (config.raw_dim < 1 || config.steps < 1) {
    throw ValueError("raw feature width and step count must be positive");
  }
  if (config.signal_objects < 1 || config.objects < config.signal_objects) {
    throw ValueError("object count must cover the signal objects");
  }
  if (config.grammar.entities.size() < 2 || config.grammar.verbs.empty()) {
    throw ValueError("grammar needs at least two entities and one verb");
  }

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory: " + dir);

  Vocabulary vocab;
  vocab.add("a");
  for (const std::string& w : config.grammar.entities) vocab.add(w);
  for (const std::string& w : config.grammar.verbs) vocab.add(w);

  // Shared word latents drawn once from the corpus seed; per-video draws use
  // a seed mixed with the video index so each video's features are a
  // deterministic function of (seed, index) alone.
  Rng latent_rng(config.seed);
  std::map<std::string, std::vector<double>> latents;
  for (const std::string& w : config.grammar.entities) {
    latents.emplace(w, unit_vector(config.raw_dim, latent_rng));
  }
  for (const std::string& w : config.grammar.verbs) {
    latents.emplace(w, unit_vector(config.raw_dim, latent_rng));
  }

  TensorStore store;
  ordered_json videos = ordered_json::array();
  const int raw = config.raw_dim;
  for (int v = 0; v < config.n_videos; ++v) {
    Rng rng(config.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(v + 1));
    const auto& ents = config.grammar.entities;
    const int first = rng.below(static_cast<int>(ents.size()));
    int second = rng.below(static_cast<int>(ents.size()) - 1);
    if (second >= first) ++second;
    const std::string& verb =
        config.grammar.verbs[static_cast<std::size_t>(
            rng.below(static_cast<int>(config.grammar.verbs.size())))];
    const std::vector<std::string> caption_entities{ents[first], ents[second]};
    const std::vector<std::string> words{"a", ents[first], verb, "a", ents[second]};

    const std::vector<double>& lat_e1 = latents.at(ents[first]);
    const std::vector<double>& lat_e2 = latents.at(ents[second]);
    const std::vector<double>& lat_v = latents.at(verb);
    std::vector<double> caption_mean(raw);
    for (int j = 0; j < raw; ++j) {
      caption_mean[j] = (lat_e1[j] + lat_v[j] + lat_e2[j]) / 3.0;
    }

    std::vector<double> context(static_cast<std::size_t>(config.steps) * raw);
    std::vector<double> motion(context.size());
    for (int t = 0; t < config.steps; ++t) {
      for (int j = 0; j < raw; ++j) {
        context[static_cast<std::size_t>(t) * raw + j] =
            caption_mean[j] + 0.1 * rng.normal();
        motion[static_cast<std::size_t>(t) * raw + j] =
            lat_v[j] + 0.1 * rng.normal();
      }
    }

    std::vector<int> positions(config.objects);
    for (int k = 0; k < config.objects; ++k) positions[k] = k;
    rng.shuffle(positions);
    std::vector<int> role(config.objects, -1);  // index into caption_entities
    for (int s = 0; s < config.signal_objects; ++s) {
      role[positions[s]] = s % static_cast<int>(caption_entities.size());
    }
    std::vector<double> objects(static_cast<std::size_t>(config.objects) * raw);
    for (int k = 0; k < config.objects; ++k) {
      if (role[k] >= 0) {
        const std::vector<double>& lat = latents.at(caption_entities[role[k]]);
        for (int j = 0; j < raw; ++j) {
          objects[static_cast<std::size_t>(k) * raw + j] = lat[j] + 0.1 * rng.normal();
        }
      } else {
        std::vector<double> distractor = unit_vector(raw, rng);
        for (int j = 0; j < raw; ++j) {
          objects[static_cast<std::size_t>(k) * raw + j] = distractor[j];
        }
      }
    }

    const std::string id = video_name(v);
    store.put(id + "/context",
              Tensor::from({config.steps, raw}, std::move(context)));
    store.put(id + "/motion", Tensor::from({config.steps, raw}, std::move(motion)));
    store.put(id + "/objects",
              Tensor::from({config.objects, raw}, std::move(objects)));

    ordered_json caption;
    caption["tokens"] = words;
    caption["entities"] = std::vector<int>{1, 4};
    caption["predicate"] = std::vector<int>{2, 5};
    ordered_json video;
    video["id"] = id;
    video["captions"] = ordered_json::array({caption});
    video["context"] = id + "/context";
    video["motion"] = id + "/motion";
    video["objects"] = id + "/objects";
    videos.push_back(std::move(video));
  }

  ordered_json manifest;
  manifest["version"] = kManifestVersion;
  manifest["vocabulary"] = "vocab.json";
  manifest["videos"] = std::move(videos);

  const std::filesystem::path base(dir);
  vocab.save((base / "vocab.json").string());
  store.save((base / "tensors.bin").string());
  const std::string manifest_path = (base / "dataset.json").string();
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw IoError("cannot open dataset manifest for writing: " + manifest_path);
  os << manifest.dump(2) << "\n";
  if (!os) throw IoError("failed while writing dataset manifest: " + manifest_path);
}

// --- loading --------------------------------------------------------------

namespace {

Tensor fetch_feature(const TensorStore& store, const std::string& key,
                     const std::string& video_id, int* width) {
  if (!store.contains(key)) {
    throw FormatError("tensor key '" + key + "' for video '" + video_id +
                      "' is missing from the store");
  }
  Tensor t = store.get(key);
  if (t.rank() != 2 || t.extent(0) < 1 || t.extent(1) < 1) {
    throw FormatError("tensor '" + key + "' must be a nonempty matrix, got shape " +
                      shape_str(t.shape()));
  }
  if (*width == 0) *width = t.extent(1);
  if (t.extent(1) != *width) {
    throw FormatError("tensor '" + key + "' has width " +
                      std::to_string(t.extent(1)) + " but the dataset uses " +
                      std::to_string(*width));
  }
  return t;
}

}  // namespace

Dataset load_dataset(const std::string& dir, int d_s, int slots) {
  if (d_s < 1 || slots < 1) {
    throw ValueError("supervision width and entity slots must be positive");
  }
  const std::filesystem::path base(dir);
  const std::string manifest_path = (base / "dataset.json").string();
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open dataset manifest: " + manifest_path);
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(is);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError("dataset manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!manifest.is_object()) {
    throw FormatError("dataset manifest must be a JSON object");
  }
  const ordered_json* version = find_field(manifest, "version");
  if (version == nullptr || !version->is_number_integer() ||
      version->get<int>() != kManifestVersion) {
    throw FormatError("unsupported dataset manifest version in " + manifest_path);
  }

  Dataset dataset;
  dataset.d_s = d_s;
  dataset.slots = slots;
  dataset.vocab =
      Vocabulary::load((base / require_string(manifest, "vocabulary", "root")).string());
  TensorStore store = TensorStore::load((base / "tensors.bin").string());
  const ToyEmbedder embedder(d_s, kSupervisionEmbedSeed);

  const ordered_json* videos = find_field(manifest, "videos");
  if (videos == nullptr || !videos->is_array() || videos->empty()) {
    throw FormatError("dataset manifest needs a nonempty 'videos' array");
  }
  int context_width = 0;  // each family keeps one width across the dataset
  int motion_width = 0;
  int object_width = 0;
  for (const ordered_json& entry : *videos) {
    if (!entry.is_object()) {
      throw FormatError("dataset manifest video entries must be objects");
    }
    VideoRecord video;
    video.id = require_string(entry, "id", "video entry");
    const std::string where = "video '" + video.id + "'";
    video.context =
        fetch_feature(store, require_string(entry, "context", where), video.id,
                      &context_width);
    video.motion = fetch_feature(store, require_string(entry, "motion", where),
                                 video.id, &motion_width);
    video.objects = fetch_feature(store, require_string(entry, "objects", where),
                                  video.id, &object_width);
    if (video.context.extent(0) != video.motion.extent(0)) {
      throw FormatError(where + " has " + std::to_string(video.context.extent(0)) +
                        " context rows but " +
                        std::to_string(video.motion.extent(0)) + " motion rows");
    }

    const ordered_json* captions = find_field(entry, "captions");
    if (captions == nullptr || !captions->is_array() || captions->empty()) {
      throw FormatError(where + " needs a nonempty 'captions' array");
    }
    for (const ordered_json& cap : *captions) {
      if (!cap.is_object()) {
        throw FormatError(where + " has a caption that is not an object");
      }
      CaptionRecord record;
      const ordered_json* tokens = find_field(cap, "tokens");
      if (tokens == nullptr || !tokens->is_array() || tokens->empty()) {
        throw FormatError(where + " has a caption without tokens");
      }
      for (const ordered_json& tok : *tokens) {
        if (!tok.is_string()) {
          throw FormatError(where + " has a non-string caption token");
        }
        const std::string word = tok.get<std::string>();
        if (!dataset.vocab.contains(word)) {
          throw FormatError("caption word '" + word + "' of " + where +
                            " is not in the vocabulary");
        }
        record.words.push_back(word);
      }
      record.token_ids = dataset.vocab.encode(record.words);
      const int len = static_cast<int>(record.words.size());

      const ordered_json* entities = find_field(cap, "entities");
      if (entities == nullptr || !entities->is_array()) {
        throw FormatError(where + " has a caption without an 'entities' array");
      }
      for (const ordered_json& e : *entities) {
        if (!e.is_number_integer() || e.get<int>() < 0 || e.get<int>() >= len) {
          throw FormatError(where + " has an entity index outside its caption");
        }
        record.tags.entity_indices.push_back(e.get<int>());
      }
      const ordered_json* span = find_field(cap, "predicate");
      if (span == nullptr || !span->is_array() || span->size() != 2 ||
          !(*span)[0].is_number_integer() || !(*span)[1].is_number_integer()) {
        throw FormatError(where + " has a caption without a [begin,end) predicate span");
      }
      record.tags.predicate_begin = (*span)[0].get<int>();
      record.tags.predicate_end = (*span)[1].get<int>();
      if (record.tags.predicate_begin < 0 ||
          record.tags.predicate_begin >= record.tags.predicate_end ||
          record.tags.predicate_end > len) {
        throw FormatError(where + " has a predicate span outside its caption");
      }
      record.supervision =
          extract_supervision(record.words, record.tags, embedder, slots);
      video.captions.push_back(std::move(record));
    }
    dataset.videos.push_back(std::move(video));
  }
  dataset.raw_context_dim = context_width;
  dataset.raw_motion_dim = motion_width;
  dataset.raw_object_dim = object_width;
  return dataset;
}

}  // namespace hmn
