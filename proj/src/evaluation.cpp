#include "defembed/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "defembed/error.hpp"

namespace defembed {
namespace {

void require_nonempty(std::span<const std::size_t> ranks, const char* what) {
  if (ranks.empty()) throw Error(std::string(what) + ": no ranks");
}

}  // namespace

double median_rank(std::span<const std::size_t> ranks) {
  require_nonempty(ranks, "median_rank");
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return static_cast<double>(sorted[n / 2]);
  return (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;
}

double accuracy_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  require_nonempty(ranks, "accuracy_at_k");
  if (k < 1) throw Error("accuracy_at_k: k must be at least 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double rank_variance(std::span<const std::size_t> ranks) {
  require_nonempty(ranks, "rank_variance");
  // n * sum(r^2) - (sum r)^2 over n^2 is exact in integers; when both fit a
  // double mantissa the single division is correctly rounded.
  using u128 = unsigned __int128;
  u128 sum = 0, sum_sq = 0;
  for (std::size_t r : ranks) {
    sum += r;
    sum_sq += static_cast<u128>(r) * r;
  }
  const u128 n = ranks.size();
  const u128 numerator = n * sum_sq - sum * sum;
  const u128 denominator = n * n;
  constexpr u128 kExact = u128(1) << 53;
  if (numerator < kExact && denominator < kExact) {
    return static_cast<double>(numerator) / static_cast<double>(denominator);
  }
  const double mean = static_cast<double>(sum) / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t r : ranks) acc += (static_cast<double>(r) - mean) * (static_cast<double>(r) - mean);
  return acc / static_cast<double>(n);
}

EvalReport report_from_ranks(std::vector<std::size_t> ranks, std::size_t n_skipped) {
  if (ranks.empty()) throw Error("evaluate: every item was skipped");
  EvalReport report;
  report.n_items = ranks.size();
  report.n_skipped = n_skipped;
  report.median_rank = median_rank(ranks);
  report.accuracy_at_10 = accuracy_at_k(ranks, 10);
  report.accuracy_at_100 = accuracy_at_k(ranks, 100);
  report.rank_variance = rank_variance(ranks);
  report.ranks = std::move(ranks);
  return report;
}

EvalReport evaluate(const QueryFunction& query, std::span<const DefinitionRecord> items, const EmbeddingStore& store,
                    CandidateSet candidates) {
  if (items.empty()) throw Error("evaluate: no items");
  std::vector<std::size_t> ranks;
  std::size_t skipped = 0;
  for (const auto& item : items) {
    if (!store.contains(item.headword)) {
      ++skipped;
      continue;
    }
    TokenFilter filter;
    if (candidates == CandidateSet::length_matched) {
      const auto letters = alphabetic_length(item.headword);
      if (!letters) {
        ++skipped;
        continue;
      }
      filter = crossword_filter(*letters);
    }
    const auto vec = query(item);
    if (!vec) {
      ++skipped;
      continue;
    }
    ranks.push_back(rank_of(store, std::span<const float>(vec->data(), static_cast<std::size_t>(vec->size())),
                            item.headword, filter));
  }
  return report_from_ranks(std::move(ranks), skipped);
}

void print_report_table(std::ostream& out, std::span<const std::pair<std::string, EvalReport>> rows) {
  std::size_t name_width = 4;
  for (const auto& [name, report] : rows) name_width = std::max(name_width, name.size());
  const auto flags = out.flags();
  out << std::left << std::setw(static_cast<int>(name_width)) << "set" << std::right << std::setw(8) << "items"
      << std::setw(8) << "skipped" << std::setw(10) << "median" << std::setw(8) << "acc@10" << std::setw(9)
      << "acc@100" << std::setw(14) << "variance" << '\n';
  for (const auto& [name, r] : rows) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name << std::right << std::setw(8) << r.n_items
        << std::setw(8) << r.n_skipped << std::fixed << std::setprecision(1) << std::setw(10) << r.median_rank
        << std::setprecision(3) << std::setw(8) << r.accuracy_at_10 << std::setw(9) << r.accuracy_at_100
        << std::setprecision(1) << std::setw(14) << r.rank_variance << '\n';
    out.flags(flags);
  }
  out.flags(flags);
}

std::string to_json_line(const std::string& name, const EvalReport& r) {
  nlohmann::ordered_json j;
  j["set"] = name;
  j["n_items"] = r.n_items;
  j["n_skipped"] = r.n_skipped;
  j["median_rank"] = r.median_rank;
  j["accuracy_at_10"] = r.accuracy_at_10;
  j["accuracy_at_100"] = r.accuracy_at_100;
  j["rank_variance"] = r.rank_variance;
  return j.dump();
}

QueryFunction encoder_queries(const Encoder& encoder) {
  return [&encoder](const DefinitionRecord& item) -> std::optional<Vector<float>> {
    const auto found = encoder.lookup(item.tokens);
    if (found.ids.empty()) return std::nullopt;
    return forward<float>(encoder.view(), found.ids);
  };
}

QueryFunction baseline_queries(const EmbeddingStore& input, Composition composition) {
  return [&input, composition](const DefinitionRecord& item) -> std::optional<Vector<float>> {
    try {
      return compose_tokens(input, item.tokens, composition);
    } catch (const Error&) {
      return std::nullopt;  // no known token, or an all-zero product
    }
  };
}

}  // namespace defembed
