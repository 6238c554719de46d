#pragma once

// Rank-based retrieval metrics: median rank, accuracy@10/100 and rank
// variance of the correct answer over an evaluation set.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defembed/corpus.hpp"
#include "defembed/embedding_store.hpp"
#include "defembed/encoders.hpp"
#include "defembed/query_engine.hpp"
#include "defembed/tensor.hpp"

namespace defembed {

struct EvalReport {
  std::size_t n_items = 0;    // scored items
  std::size_t n_skipped = 0;  // headword absent from the store, or no known query token
  double median_rank = 0.0;
  double accuracy_at_10 = 0.0;
  double accuracy_at_100 = 0.0;
  double rank_variance = 0.0;
  std::vector<std::size_t> ranks;  // per scored item, in input order

  bool operator==(const EvalReport&) const = default;
};

/// Middle value; mean of the two central values for even counts.
double median_rank(std::span<const std::size_t> ranks);
/// Fraction of ranks <= k.
double accuracy_at_k(std::span<const std::size_t> ranks, std::size_t k);
/// Population variance (divides by n).
double rank_variance(std::span<const std::size_t> ranks);

/// Maps an item to its query vector; nullopt means the query had no usable tokens.
using QueryFunction = std::function<std::optional<Vector<float>>(const DefinitionRecord&)>;

/// Encodes each definition; definitions without a known token yield nullopt.
QueryFunction encoder_queries(const Encoder& encoder);
/// word2vec composition of each definition's tokens; unusable ones yield nullopt.
QueryFunction baseline_queries(const EmbeddingStore& input, Composition composition);

enum class CandidateSet {
  all,             // rank among every store word
  length_matched,  // crossword: rank among alphabetic words of the headword's length
};

EvalReport evaluate(const QueryFunction& query, std::span<const DefinitionRecord> items, const EmbeddingStore& store,
                    CandidateSet candidates = CandidateSet::all);

EvalReport report_from_ranks(std::vector<std::size_t> ranks, std::size_t n_skipped);

/// Aligned text table, one row per named report.
void print_report_table(std::ostream& out, std::span<const std::pair<std::string, EvalReport>> rows);
/// One JSON object (no per-item ranks), no trailing newline.
std::string to_json_line(const std::string& name, const EvalReport& report);

}  // namespace defembed
