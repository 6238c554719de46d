#pragma once

// Seeded synthetic "toy world" used for fixtures, demos and tests.
//
// Concepts are pseudo-words whose target vectors are the sum of a few
// attribute-word vectors plus noise. Definitions name those attributes with
// function words around them, so composing the attribute vectors recovers the
// concept. An optional second-language store holds translations whose vectors
// sit next to their English counterparts.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defembed/corpus.hpp"
#include "defembed/embedding_store.hpp"
#include "defembed/encoders.hpp"
#include "defembed/training.hpp"

namespace defembed::toy {

struct WorldOptions {
  std::size_t concepts = 120;
  std::size_t definitions = 200;  // dictionary pairs; every concept gets one before any gets a second
  std::size_t dim = 64;
  std::size_t attributes_per_concept = 4;
  std::size_t distractors = 0;  // unrelated random words added to the stores
  double concept_noise = 0.25;
  std::uint64_t seed = 7;
  bool french = false;
};

struct World {
  EmbeddingStore english{1, "en"};
  std::optional<EmbeddingStore> french;
  std::vector<std::string> concepts;
  std::map<std::string, std::vector<std::string>> attributes_of;
  std::map<std::string, std::string> french_of;  // concept -> translation
  std::vector<DefinitionRecord> dictionary;
  std::vector<DefinitionRecord> encyclopedia;          // "<concept> is ..." sentences
  std::vector<DefinitionRecord> concept_descriptions;  // paraphrases using synonyms
  std::vector<DefinitionRecord> crossword_long;
  std::vector<DefinitionRecord> crossword_short;
  std::vector<DefinitionRecord> crossword_single;
};

World make_world(const WorldOptions& options);

/// Small seeded model + pair for gradient checks: vocab <= 50, input_dim 16,
/// hidden_dim 8, target_dim 16, definition <= 6 tokens.
struct GradCheckFixture {
  Encoder encoder;
  EmbeddingStore target;
  DefinitionRecord pair;
};

GradCheckFixture make_gradcheck_fixture(Architecture architecture, std::uint64_t seed,
                                        InputMode input_mode = InputMode::learned);

/// The non-answer word closest to the fixture's prediction, which keeps the
/// rank-loss hinge active.
std::string hardest_negative(const GradCheckFixture& fixture);

}  // namespace defembed::toy
