#pragma once

// Ingestion of dictionary / encyclopedia / evaluation TSV files into
// (headword, definition) records, plus vocabulary building and the
// seen/unseen split used for evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace defembed {

enum class Source { dictionary, encyclopedia, eval };

std::string_view to_string(Source source);

struct DefinitionRecord {
  std::string headword;
  std::vector<std::string> tokens;
  Source source = Source::dictionary;

  bool operator==(const DefinitionRecord&) const = default;
};

/// Definitions longer than this are truncated at ingestion.
inline constexpr std::size_t kMaxDefinitionTokens = 64;

/// Lowercases and splits on every code point that is not a letter or digit.
/// Invalid UTF-8 bytes act as separators. No stemming.
std::vector<std::string> tokenize(std::string_view text);

/// Number of letters in `token` if it consists of letters only, otherwise nullopt.
std::optional<std::size_t> alphabetic_length(std::string_view token);

struct IngestResult {
  std::vector<DefinitionRecord> records;
  std::vector<std::string> warnings;
  std::size_t lines = 0;      // data lines (comments and blank lines excluded)
  std::size_t skipped = 0;    // data lines that produced no record
  std::size_t truncated = 0;  // records cut to kMaxDefinitionTokens
};

/// Reads "headword<TAB>text" lines. Throws ParseError on a line without a tab.
IngestResult ingest_stream(std::istream& in, Source source, std::string_view name);
IngestResult ingest_dictionary(const std::filesystem::path& path);
IngestResult ingest_encyclopedia(const std::filesystem::path& path);
IngestResult ingest_eval(const std::filesystem::path& path);

/// Writes records back as "headword<TAB>space-joined tokens".
void write_records(std::ostream& out, std::span<const DefinitionRecord> records);

class Vocabulary {
 public:
  Vocabulary() = default;
  /// `tokens` must be sorted and unique; ids follow that order.
  Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> counts);

  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  std::optional<std::size_t> id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t count(std::size_t id) const { return counts_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_ && counts_ == other.counts_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Every headword and definition token seen at least `min_count` times.
Vocabulary build_vocabulary(std::span<const DefinitionRecord> records, std::size_t min_count = 1);

struct SplitSpec {
  std::set<std::string> heldout_words;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<DefinitionRecord> train;
  std::vector<DefinitionRecord> unseen;
  std::vector<std::string> warnings;
};

Split split_seen_unseen(std::span<const DefinitionRecord> records, const SplitSpec& spec);

/// Draws `count` distinct headwords uniformly (seeded) to hold out.
SplitSpec random_holdout(std::span<const DefinitionRecord> records, std::size_t count, std::uint64_t seed);

}  // namespace defembed
