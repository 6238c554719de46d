#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace defembed {

/// Immutable-after-load table of word vectors. Vectors are kept as given
/// (unnormalized); their norms are cached for cosine scans.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim, std::string language = {});

  /// Appends a vector. Rejects wrong arity, non-finite values, zero norm and duplicates.
  void add(std::string token, std::span<const float> values);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& language() const noexcept { return language_; }

  std::optional<std::size_t> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  const std::string& token(std::size_t index) const { return tokens_[index]; }
  std::span<const float> vector(std::size_t index) const { return {data_.data() + index * dim_, dim_}; }
  /// Throws if the token is absent.
  std::span<const float> vector(std::string_view token) const;
  double norm(std::size_t index) const { return norms_[index]; }

  /// Hash over tokens, dimension and raw vector bytes.
  std::uint64_t fingerprint() const;

 private:
  std::size_t dim_;
  std::string language_;
  std::vector<std::string> tokens_;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text format: header "count dim [language]" then "token x1 ... x_dim" rows.
EmbeddingStore load_embeddings(std::istream& in, std::string_view name = "<stream>");
EmbeddingStore load_embeddings(const std::filesystem::path& path);
void save_embeddings(std::ostream& out, const EmbeddingStore& store);
void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store);

/// dot(u,v)/(|u||v|), accumulated in double and clamped to [-1, 1].
double cosine(std::span<const float> u, std::span<const float> v);

struct Candidate {
  std::string token;
  double score = 0.0;

  bool operator==(const Candidate&) const = default;
};

struct RankedCandidates {
  std::vector<Candidate> candidates;  // best first; ties by token
  std::vector<std::string> skipped_tokens;  // query tokens the encoder did not know
};

using TokenFilter = std::function<bool(std::string_view)>;

/// Exact top-k by cosine; an empty filter accepts every token. k larger than
/// the number of accepted tokens returns all of them.
RankedCandidates nearest_neighbors(const EmbeddingStore& store, std::span<const float> query, std::size_t k,
                                   const TokenFilter& filter = {});

/// 1-based position of `target` in the full ranking nearest_neighbors would produce.
std::size_t rank_of(const EmbeddingStore& store, std::span<const float> query, std::string_view target,
                    const TokenFilter& filter = {});

}  // namespace defembed
