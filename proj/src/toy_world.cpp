#include "defembed/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "defembed/error.hpp"

namespace defembed::toy {
namespace {

const std::vector<std::string> kAttributes = {
    "animal", "bird",    "fish",     "insect",  "tree",     "flower",  "fruit",   "tool",     "weapon",
    "vehicle", "building", "water",   "river",   "sea",      "mountain", "forest", "desert",  "cold",
    "hot",     "large",   "small",   "tall",    "long",     "short",   "round",   "sharp",    "soft",
    "hard",    "heavy",   "light",   "fast",    "slow",     "loud",    "quiet",   "bright",   "dark",
    "red",     "green",   "blue",    "yellow",  "white",    "black",   "metal",   "wood",     "stone",
    "glass",   "cloth",   "paper",   "sweet",   "bitter",   "salty",   "wild",    "domestic", "ancient",
    "modern",  "musical", "edible",  "poisonous", "flying", "swimming"};

const std::map<std::string, std::string> kSynonyms = {
    {"animal", "creature"}, {"large", "big"},     {"small", "tiny"},     {"cold", "chilly"},
    {"hot", "warm"},        {"fast", "quick"},    {"slow", "sluggish"},  {"loud", "noisy"},
    {"quiet", "silent"},    {"bright", "shiny"},  {"dark", "dim"},       {"sea", "ocean"},
    {"stone", "rock"},      {"tall", "lofty"},    {"heavy", "weighty"},  {"wild", "untamed"},
    {"ancient", "old"},     {"modern", "new"},    {"sweet", "sugary"},   {"river", "stream"},
    {"forest", "woodland"}, {"tool", "implement"}, {"building", "edifice"}, {"edible", "tasty"}};

const std::vector<std::string> kFunctionWords = {"a",    "an",  "the", "of",   "that", "which", "with", "is",
                                                 "it",   "for", "in",  "and",  "or",   "used",  "by",   "from",
                                                 "its",  "has", "very", "kind", "type", "something"};

const std::vector<std::string> kOnsets = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
const std::vector<std::string> kVowels = {"a", "e", "i", "o", "u"};
const std::vector<std::string> kFrenchOnsets = {"ch", "qu", "gu", "j", "l", "m", "n", "p", "r", "s", "t", "v"};
const std::vector<std::string> kFrenchEndings = {"", "e", "eau", "ette", "ier", "on"};

template <typename Rng>
const std::string& pick(const std::vector<std::string>& items, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

template <typename Rng>
std::string pseudo_word(Rng& rng, bool french) {
  std::uniform_int_distribution<int> syllables(2, 3);
  std::string word;
  const int n = syllables(rng);
  for (int i = 0; i < n; ++i) word += pick(french ? kFrenchOnsets : kOnsets, rng) + pick(kVowels, rng);
  if (french) {
    word += pick(kFrenchEndings, rng);
  } else if (std::bernoulli_distribution(0.4)(rng)) {
    word += pick(kOnsets, rng);
  }
  return word;
}

template <typename Rng>
std::vector<float> gaussian(Rng& rng, std::size_t dim, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(scale * normal(rng));
  return v;
}

void add_into(std::vector<float>& acc, std::span<const float> v, float scale = 1.0f) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * v[i];
}

// Interleaves content words with function words, e.g. "a large animal that is fast with fur".
template <typename Rng>
std::vector<std::string> phrase(const std::vector<std::string>& content, Rng& rng, bool with_article) {
  static const std::vector<std::string> kLinks = {"that", "with", "and", "of", "which", "is", "for", "in"};
  std::vector<std::string> tokens;
  if (with_article) tokens.push_back(std::bernoulli_distribution(0.5)(rng) ? "a" : "the");
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (i > 0 && std::bernoulli_distribution(0.5)(rng)) tokens.push_back(pick(kLinks, rng));
    tokens.push_back(content[i]);
  }
  return tokens;
}

}  // namespace

World make_world(const WorldOptions& options) {
  if (options.concepts == 0 || options.dim == 0) throw Error("toy world: need concepts and a positive dimension");
  if (options.attributes_per_concept < 1 || options.attributes_per_concept > kAttributes.size()) {
    throw Error("toy world: attributes_per_concept out of range");
  }
  std::mt19937_64 rng(options.seed);
  World world;
  world.english = EmbeddingStore(options.dim, "en");
  if (options.french) world.french.emplace(options.dim, "fr");

  std::set<std::string> used(kAttributes.begin(), kAttributes.end());
  used.insert(kFunctionWords.begin(), kFunctionWords.end());
  for (const auto& [word, synonym] : kSynonyms) used.insert(synonym);

  // Attribute, synonym and function-word vectors.
  std::map<std::string, std::vector<float>> vectors;
  for (const auto& word : kAttributes) vectors[word] = gaussian(rng, options.dim, 1.0);
  for (const auto& [word, synonym] : kSynonyms) {
    auto v = vectors[word];
    add_into(v, gaussian(rng, options.dim, 0.15));
    vectors[synonym] = std::move(v);
  }
  for (const auto& word : kFunctionWords) vectors[word] = gaussian(rng, options.dim, 0.3);

  // Concepts: unique name, unique attribute set.
  std::set<std::vector<std::string>> attribute_sets;
  std::vector<std::string> attribute_pool = kAttributes;
  while (world.concepts.size() < options.concepts) {
    std::string name = pseudo_word(rng, false);
    if (used.count(name)) continue;
    std::shuffle(attribute_pool.begin(), attribute_pool.end(), rng);
    std::vector<std::string> attrs(attribute_pool.begin(),
                                   attribute_pool.begin() + static_cast<std::ptrdiff_t>(options.attributes_per_concept));
    auto key = attrs;
    std::sort(key.begin(), key.end());
    if (!attribute_sets.insert(key).second) continue;
    used.insert(name);

    std::vector<float> v(options.dim, 0.0f);
    for (const auto& a : attrs) add_into(v, vectors[a]);
    add_into(v, gaussian(rng, options.dim, options.concept_noise * std::sqrt(static_cast<double>(attrs.size()))));
    vectors[name] = std::move(v);
    world.concepts.push_back(name);
    world.attributes_of[name] = std::move(attrs);
  }
  for (std::size_t i = 0; i < options.distractors;) {
    std::string name = pseudo_word(rng, false) + pick(kOnsets, rng) + pick(kVowels, rng);
    if (!used.insert(name).second) continue;
    vectors[name] = gaussian(rng, options.dim, 2.0);
    ++i;
  }
  for (const auto& [word, v] : vectors) world.english.add(word, v);

  if (world.french) {
    std::set<std::string> french_used;
    std::map<std::string, std::vector<float>> french_vectors;
    for (const auto& [word, v] : vectors) {
      std::string translation;
      do {
        translation = pseudo_word(rng, true);
      } while (used.count(translation) || !french_used.insert(translation).second);
      auto fv = v;
      std::vector<float> noise = gaussian(rng, options.dim, 0.05);
      double norm = 0.0;
      for (float x : v) norm += static_cast<double>(x) * x;
      add_into(fv, noise, static_cast<float>(std::sqrt(norm / static_cast<double>(options.dim))));
      french_vectors[translation] = std::move(fv);
      if (world.attributes_of.count(word)) world.french_of[word] = translation;
    }
    for (const auto& [word, v] : french_vectors) world.french->add(word, v);
  }

  // Dictionary: one definition per concept, then second definitions (a
  // shuffled subset of the attributes) until the requested count.
  for (std::size_t i = 0; i < options.definitions; ++i) {
    const std::size_t c = i % world.concepts.size();
    const auto& name = world.concepts[c];
    auto attrs = world.attributes_of[name];
    std::shuffle(attrs.begin(), attrs.end(), rng);
    if (i >= world.concepts.size() && attrs.size() > 2) attrs.pop_back();
    world.dictionary.push_back({name, phrase(attrs, rng, true), Source::dictionary});
  }

  for (const auto& name : world.concepts) {
    auto attrs = world.attributes_of[name];
    std::shuffle(attrs.begin(), attrs.end(), rng);

    auto sentence = std::vector<std::string>{"the", name, "is"};
    const auto rest = phrase(attrs, rng, true);
    sentence.insert(sentence.end(), rest.begin(), rest.end());
    world.encyclopedia.push_back({name, std::move(sentence), Source::encyclopedia});

    std::vector<std::string> paraphrased;
    for (const auto& a : attrs) {
      const auto it = kSynonyms.find(a);
      paraphrased.push_back(it != kSynonyms.end() ? it->second : a);
    }
    auto description = std::vector<std::string>{"something"};
    const auto body = phrase(paraphrased, rng, false);
    description.insert(description.end(), body.begin(), body.end());
    world.concept_descriptions.push_back({name, std::move(description), Source::eval});

    world.crossword_long.push_back({name, phrase(attrs, rng, true), Source::eval});
    world.crossword_short.push_back(
        {name, std::vector<std::string>(attrs.begin(), attrs.begin() + std::min<std::ptrdiff_t>(2, attrs.size())),
         Source::eval});
    world.crossword_single.push_back({name, {attrs.front()}, Source::eval});
  }
  return world;
}

GradCheckFixture make_gradcheck_fixture(Architecture architecture, std::uint64_t seed, InputMode input_mode) {
  WorldOptions options;
  options.concepts = 8;
  options.definitions = 8;
  options.dim = 16;
  options.attributes_per_concept = 3;
  options.seed = seed;
  auto world = make_world(options);

  std::vector<DefinitionRecord> records(world.dictionary.begin(), world.dictionary.begin() + 5);
  for (auto& r : records) {
    if (r.tokens.size() > 6) r.tokens.resize(6);
  }
  const auto vocab = build_vocabulary(records);
  if (vocab.size() > 50) throw Error("gradcheck fixture: vocabulary too large");

  EncoderConfig config;
  config.architecture = architecture;
  config.input_mode = input_mode;
  config.input_dim = 16;
  config.hidden_dim = 8;
  config.target_dim = options.dim;
  config.seed = seed;
  std::shared_ptr<const EmbeddingStore> input;
  if (input_mode == InputMode::pretrained_fixed) input = std::make_shared<const EmbeddingStore>(world.english);
  auto encoder = init_parameters(config, vocab, input);
  return {std::move(encoder), std::move(world.english), records[seed % records.size()]};
}

std::string hardest_negative(const GradCheckFixture& fixture) {
  const auto pred = fixture.encoder.encode(fixture.pair.tokens);
  const std::span<const float> p(pred.data(), static_cast<std::size_t>(pred.size()));
  std::string best;
  double best_score = -2.0;
  for (std::size_t i = 0; i < fixture.target.size(); ++i) {
    if (fixture.target.token(i) == fixture.pair.headword) continue;
    const double score = cosine(p, fixture.target.vector(i));
    if (score > best_score) {
      best_score = score;
      best = fixture.target.token(i);
    }
  }
  return best;
}

}  // namespace defembed::toy
