#include "defembed/query_engine.hpp"

#include "defembed/corpus.hpp"
#include "defembed/error.hpp"

namespace defembed {

std::string_view to_string(QueryMode mode) {
  switch (mode) {
    case QueryMode::revdict:
      return "revdict";
    case QueryMode::crossword:
      return "crossword";
    case QueryMode::bilingual:
      return "bilingual";
  }
  return "unknown";
}

QueryMode parse_query_mode(std::string_view text) {
  if (text == "revdict") return QueryMode::revdict;
  if (text == "crossword") return QueryMode::crossword;
  if (text == "bilingual") return QueryMode::bilingual;
  throw Error("unknown query mode '" + std::string(text) + "' (expected revdict|crossword|bilingual)");
}

void validate(const Query& query) {
  if (query.k == 0) throw Error("k must be at least 1");
  if (query.mode == QueryMode::crossword) {
    if (!query.answer_length) throw Error("crossword queries need an answer length");
    if (*query.answer_length == 0) throw Error("answer length must be at least 1");
  } else if (query.answer_length) {
    throw Error("answer length is only valid in crossword mode");
  }
  if (query.mode == QueryMode::bilingual) {
    if (!query.target_language || query.target_language->empty()) throw Error("bilingual queries need a target language");
  } else if (query.target_language) {
    throw Error("target language is only valid in bilingual mode");
  }
}

namespace {

RankedCandidates encode_and_search(const Encoder& encoder, const EmbeddingStore& store, std::string_view text,
                                   std::size_t k, const TokenFilter& filter) {
  if (encoder.config().target_dim != store.dim()) {
    throw Error("encoder target dimension " + std::to_string(encoder.config().target_dim) +
                " does not match store dimension " + std::to_string(store.dim()));
  }
  const auto tokens = tokenize(text);
  auto found = encoder.lookup(tokens);
  if (found.ids.empty()) throw NoKnownTokens();
  const Vector<float> query = forward<float>(encoder.view(), found.ids);
  auto result = nearest_neighbors(store, std::span<const float>(query.data(), static_cast<std::size_t>(query.size())),
                                  k, filter);
  result.skipped_tokens = std::move(found.skipped);
  return result;
}

RankedCandidates compose_baseline(const EmbeddingStore& input, const EmbeddingStore& target, std::string_view text,
                                  std::size_t k, Composition composition) {
  if (input.dim() != target.dim()) throw Error("baseline: input and target stores differ in dimension");
  std::vector<std::string> skipped;
  const auto query = compose_tokens(input, tokenize(text), composition, &skipped);
  auto result = nearest_neighbors(target, std::span<const float>(query.data(), static_cast<std::size_t>(query.size())), k);
  result.skipped_tokens = std::move(skipped);
  return result;
}

}  // namespace

RankedCandidates reverse_dictionary(const Encoder& encoder, const EmbeddingStore& store, std::string_view text,
                                    std::size_t k) {
  return encode_and_search(encoder, store, text, k, {});
}

TokenFilter crossword_filter(std::size_t length) {
  return [length](std::string_view token) {
    const auto letters = alphabetic_length(token);
    return letters && *letters == length;
  };
}

RankedCandidates crossword_answer(const Encoder& encoder, const EmbeddingStore& store, std::string_view clue,
                                  std::size_t answer_length, std::size_t k) {
  if (answer_length == 0) throw Error("answer length must be at least 1");
  return encode_and_search(encoder, store, clue, k, crossword_filter(answer_length));
}

Vector<float> compose_tokens(const EmbeddingStore& input, std::span<const std::string> tokens, Composition composition,
                             std::vector<std::string>* skipped) {
  Vector<float> acc;
  for (const auto& token : tokens) {
    const auto index = input.find(token);
    if (!index) {
      if (skipped) skipped->push_back(token);
      continue;
    }
    const auto v = input.vector(*index);
    const Eigen::Map<const Vector<float>> x(v.data(), static_cast<Eigen::Index>(v.size()));
    if (acc.size() == 0) {
      acc = x;
    } else if (composition == Composition::add) {
      acc += x;
    } else {
      acc = acc.cwiseProduct(x);
    }
  }
  if (acc.size() == 0) throw NoKnownTokens();
  if (acc.isZero(0.0f)) throw Error("composed query vector is zero");
  return acc;
}

RankedCandidates w2v_add_baseline(const EmbeddingStore& input, const EmbeddingStore& target, std::string_view text,
                                  std::size_t k) {
  return compose_baseline(input, target, text, k, Composition::add);
}

RankedCandidates w2v_mult_baseline(const EmbeddingStore& input, const EmbeddingStore& target, std::string_view text,
                                   std::size_t k) {
  return compose_baseline(input, target, text, k, Composition::mult);
}

RankedCandidates bilingual_query(const Encoder& encoder, std::string_view source_language,
                                 const EmbeddingStore& target_language_store, std::string_view text, std::size_t k) {
  if (target_language_store.language() == source_language) {
    throw Error("bilingual query: target store language '" + target_language_store.language() +
                "' is the source language");
  }
  return encode_and_search(encoder, target_language_store, text, k, {});
}

RankedCandidates run_query(const QueryContext& context, const Query& query) {
  validate(query);
  switch (query.mode) {
    case QueryMode::revdict:
      return reverse_dictionary(*context.encoder, *context.target, query.text, query.k);
    case QueryMode::crossword:
      return crossword_answer(*context.encoder, *context.target, query.text, *query.answer_length, query.k);
    case QueryMode::bilingual: {
      const auto it = context.bilingual.find(*query.target_language);
      if (it == context.bilingual.end()) throw Error("no embedding store for language '" + *query.target_language + "'");
      return bilingual_query(*context.encoder, context.target->language(), *it->second, query.text, query.k);
    }
  }
  throw Error("unknown query mode");
}

}  // namespace defembed
