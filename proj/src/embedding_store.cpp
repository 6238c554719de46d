#include "defembed/embedding_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "defembed/error.hpp"
#include "defembed/hash.hpp"

namespace defembed {

EmbeddingStore::EmbeddingStore(std::size_t dim, std::string language) : dim_(dim), language_(std::move(language)) {
  if (dim_ == 0) throw Error("embedding dimension must be positive");
}

void EmbeddingStore::add(std::string token, std::span<const float> values) {
  if (values.size() != dim_) {
    throw Error("token '" + token + "' has " + std::to_string(values.size()) + " values, expected " +
                std::to_string(dim_));
  }
  if (token.empty()) throw Error("empty token");
  if (index_.count(token)) throw Error("duplicate token '" + token + "'");
  double sq = 0.0;
  for (float x : values) {
    if (!std::isfinite(x)) throw Error("non-finite value for token '" + token + "'");
    sq += static_cast<double>(x) * x;
  }
  if (sq == 0.0) throw Error("zero-norm vector for token '" + token + "'");
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  data_.insert(data_.end(), values.begin(), values.end());
  norms_.push_back(std::sqrt(sq));
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> EmbeddingStore::vector(std::string_view token) const {
  const auto index = find(token);
  if (!index) throw Error("token '" + std::string(token) + "' not in embedding store");
  return vector(*index);
}

std::uint64_t EmbeddingStore::fingerprint() const {
  Fnv1a hash;
  hash.update(std::to_string(dim_) + " " + language_ + "\n");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    hash.update(tokens_[i]);
    hash.update("\n");
    hash.update(data_.data() + i * dim_, dim_ * sizeof(float));
  }
  return hash.digest();
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

template <typename Number>
bool parse_number(std::string_view text, Number& out) {
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

EmbeddingStore load_embeddings(std::istream& in, std::string_view name) {
  const std::string source(name);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  std::size_t count = 0;
  std::size_t dim = 0;
  if ((header.size() != 2 && header.size() != 3) || !parse_number(header[0], count) ||
      !parse_number(header[1], dim) || dim == 0) {
    throw ParseError(source, line_no, "header must be \"count dim [language]\"");
  }
  EmbeddingStore store(dim, header.size() == 3 ? std::string(header[2]) : std::string());

  std::vector<float> values(dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (store.size() == count) throw ParseError(source, line_no, "more rows than the header count " + std::to_string(count));
    if (fields.size() != dim + 1) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(dim) + " values, found " + std::to_string(fields.size() - 1));
    }
    for (std::size_t i = 0; i < dim; ++i) {
      if (!parse_number(fields[i + 1], values[i])) {
        throw ParseError(source, line_no, "cannot parse value '" + std::string(fields[i + 1]) + "'");
      }
    }
    try {
      store.add(std::string(fields[0]), values);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (store.size() != count) {
    throw ParseError(source, line_no,
                     "header declares " + std::to_string(count) + " rows, found " + std::to_string(store.size()));
  }
  return store;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return load_embeddings(in, path.string());
}

void save_embeddings(std::ostream& out, const EmbeddingStore& store) {
  out << store.size() << ' ' << store.dim();
  if (!store.language().empty()) out << ' ' << store.language();
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < store.size(); ++i) {
    out << store.token(i);
    for (float x : store.vector(i)) {
      // Shortest representation that parses back to the same float.
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  save_embeddings(out, store);
  if (!out) throw Error("error writing " + path.string());
}

namespace {

double dot(std::span<const float> u, std::span<const float> v) {
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) sum += static_cast<double>(u[i]) * v[i];
  return sum;
}

double norm_of(std::span<const float> u) { return std::sqrt(dot(u, u)); }

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

// Cosine scores of every accepted token, with a validated query.
struct Scan {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
};

Scan scan(const EmbeddingStore& store, std::span<const float> query, const TokenFilter& filter) {
  if (query.size() != store.dim()) {
    throw Error("query dimension " + std::to_string(query.size()) + " does not match store dimension " +
                std::to_string(store.dim()));
  }
  const double query_norm = norm_of(query);
  if (!(query_norm > 0.0) || !std::isfinite(query_norm)) throw Error("query vector has zero or non-finite norm");
  Scan result;
  result.indices.reserve(store.size());
  result.scores.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (filter && !filter(store.token(i))) continue;
    result.indices.push_back(i);
    result.scores.push_back(clamp_unit(dot(query, store.vector(i)) / (query_norm * store.norm(i))));
  }
  return result;
}

}  // namespace

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw Error("cosine: dimension mismatch");
  const double nu = norm_of(u);
  const double nv = norm_of(v);
  if (nu == 0.0 || nv == 0.0) throw Error("cosine: zero-norm vector");
  return clamp_unit(dot(u, v) / (nu * nv));
}

RankedCandidates nearest_neighbors(const EmbeddingStore& store, std::span<const float> query, std::size_t k,
                                   const TokenFilter& filter) {
  if (k == 0) throw Error("nearest_neighbors: k must be at least 1");
  const Scan s = scan(store, query, filter);
  std::vector<std::size_t> order(s.indices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto better = [&](std::size_t a, std::size_t b) {
    if (s.scores[a] != s.scores[b]) return s.scores[a] > s.scores[b];
    return store.token(s.indices[a]) < store.token(s.indices[b]);
  };
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);

  RankedCandidates result;
  result.candidates.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    result.candidates.push_back({store.token(s.indices[order[i]]), s.scores[order[i]]});
  }
  return result;
}

std::size_t rank_of(const EmbeddingStore& store, std::span<const float> query, std::string_view target,
                    const TokenFilter& filter) {
  const auto target_index = store.find(target);
  if (!target_index) throw Error("rank_of: target '" + std::string(target) + "' not in store");
  if (filter && !filter(target)) throw Error("rank_of: target '" + std::string(target) + "' rejected by filter");
  const Scan s = scan(store, query, filter);
  const auto pos = std::find(s.indices.begin(), s.indices.end(), *target_index) - s.indices.begin();
  const double target_score = s.scores[static_cast<std::size_t>(pos)];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < s.indices.size(); ++i) {
    if (s.scores[i] > target_score || (s.scores[i] == target_score && store.token(s.indices[i]) < target)) ++rank;
  }
  return rank;
}

}  // namespace defembed
