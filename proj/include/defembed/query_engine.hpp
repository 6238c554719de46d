#pragma once

// Query modes built on the encoders and the embedding store: reverse
// dictionary, crossword answering, the unsupervised word2vec composition
// baselines, and cross-lingual lookup.

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "defembed/embedding_store.hpp"
#include "defembed/encoders.hpp"

namespace defembed {

enum class QueryMode { revdict, crossword, bilingual };

std::string_view to_string(QueryMode mode);
QueryMode parse_query_mode(std::string_view text);

struct Query {
  std::string text;
  QueryMode mode = QueryMode::revdict;
  std::size_t k = 10;
  std::optional<std::size_t> answer_length;   // crossword only
  std::optional<std::string> target_language;  // bilingual only
};

/// Throws if k == 0, or answer_length / target_language do not match the mode.
void validate(const Query& query);

RankedCandidates reverse_dictionary(const Encoder& encoder, const EmbeddingStore& store, std::string_view text,
                                    std::size_t k);

/// Accepts purely alphabetic tokens with exactly `length` letters.
TokenFilter crossword_filter(std::size_t length);

RankedCandidates crossword_answer(const Encoder& encoder, const EmbeddingStore& store, std::string_view clue,
                                  std::size_t answer_length, std::size_t k);

enum class Composition { add, mult };

/// Folds the known tokens' vectors with elementwise + or *. Unknown tokens go
/// to `skipped`. Throws NoKnownTokens, or Error if the result is all zero.
Vector<float> compose_tokens(const EmbeddingStore& input, std::span<const std::string> tokens, Composition composition,
                             std::vector<std::string>* skipped = nullptr);

/// Sum of the known tokens' input vectors, looked up in `target`.
RankedCandidates w2v_add_baseline(const EmbeddingStore& input, const EmbeddingStore& target, std::string_view text,
                                  std::size_t k);

/// Elementwise product of the known tokens' input vectors.
RankedCandidates w2v_mult_baseline(const EmbeddingStore& input, const EmbeddingStore& target, std::string_view text,
                                   std::size_t k);

/// Encodes with a model trained on the `source_language` space and searches
/// only the target-language store.
RankedCandidates bilingual_query(const Encoder& encoder, std::string_view source_language,
                                 const EmbeddingStore& target_language_store, std::string_view text, std::size_t k);

/// Everything a query needs; shared read-only by the CLI and the service.
struct QueryContext {
  std::shared_ptr<const Encoder> encoder;
  std::shared_ptr<const EmbeddingStore> target;
  std::map<std::string, std::shared_ptr<const EmbeddingStore>, std::less<>> bilingual;  // keyed by language
};

RankedCandidates run_query(const QueryContext& context, const Query& query);

}  // namespace defembed
