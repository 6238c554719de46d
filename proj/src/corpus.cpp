#include "defembed/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <ostream>
#include <random>

#include "defembed/error.hpp"
#include "defembed/hash.hpp"

namespace defembed {

std::string_view to_string(Source source) {
  switch (source) {
    case Source::dictionary:
      return "dictionary";
    case Source::encyclopedia:
      return "encyclopedia";
    case Source::eval:
      return "eval";
  }
  return "unknown";
}

IngestResult ingest_stream(std::istream& in, Source source, std::string_view name) {
  IngestResult result;
  const std::string source_name(name);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    ++result.lines;

    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(source_name, line_no, "expected headword<TAB>text");

    const auto head_tokens = tokenize(std::string_view(line).substr(0, tab));
    if (head_tokens.size() != 1) {
      result.warnings.push_back(source_name + ":" + std::to_string(line_no) +
                                ": headword is not a single token, skipped");
      ++result.skipped;
      continue;
    }
    auto tokens = tokenize(std::string_view(line).substr(tab + 1));
    if (tokens.empty()) {
      result.warnings.push_back(source_name + ":" + std::to_string(line_no) + ": empty definition, skipped");
      ++result.skipped;
      continue;
    }
    if (tokens.size() > kMaxDefinitionTokens) {
      result.warnings.push_back(source_name + ":" + std::to_string(line_no) + ": definition truncated to " +
                                std::to_string(kMaxDefinitionTokens) + " tokens");
      tokens.resize(kMaxDefinitionTokens);
      ++result.truncated;
    }
    result.records.push_back({head_tokens.front(), std::move(tokens), source});
  }
  return result;
}

namespace {

IngestResult ingest_file(const std::filesystem::path& path, Source source) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return ingest_stream(in, source, path.string());
}

}  // namespace

IngestResult ingest_dictionary(const std::filesystem::path& path) { return ingest_file(path, Source::dictionary); }
IngestResult ingest_encyclopedia(const std::filesystem::path& path) { return ingest_file(path, Source::encyclopedia); }
IngestResult ingest_eval(const std::filesystem::path& path) { return ingest_file(path, Source::eval); }

void write_records(std::ostream& out, std::span<const DefinitionRecord> records) {
  for (const auto& record : records) {
    out << record.headword << '\t';
    for (std::size_t i = 0; i < record.tokens.size(); ++i) {
      if (i) out << ' ';
      out << record.tokens[i];
    }
    out << '\n';
  }
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> counts)
    : tokens_(std::move(tokens)), counts_(std::move(counts)) {
  if (tokens_.size() != counts_.size()) throw Error("vocabulary: token/count size mismatch");
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (i > 0 && !(tokens_[i - 1] < tokens_[i])) throw Error("vocabulary: tokens must be sorted and unique");
    ids_.emplace(tokens_[i], i);
  }
}

std::optional<std::size_t> Vocabulary::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  Fnv1a hash;
  for (const auto& token : tokens_) {
    hash.update(token);
    hash.update("\n");
  }
  return hash.digest();
}

Vocabulary build_vocabulary(std::span<const DefinitionRecord> records, std::size_t min_count) {
  if (min_count < 1) throw Error("build_vocabulary: min_count must be at least 1");
  if (records.empty()) throw Error("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& record : records) {
    ++counts[record.headword];
    for (const auto& token : record.tokens) ++counts[token];
  }
  std::vector<std::string> tokens;
  std::vector<std::size_t> kept_counts;
  for (const auto& [token, count] : counts) {
    if (count < min_count) continue;
    tokens.push_back(token);
    kept_counts.push_back(count);
  }
  return Vocabulary(std::move(tokens), std::move(kept_counts));
}

Split split_seen_unseen(std::span<const DefinitionRecord> records, const SplitSpec& spec) {
  Split split;
  std::set<std::string> found;
  for (const auto& record : records) {
    if (spec.heldout_words.count(record.headword)) {
      split.unseen.push_back(record);
      found.insert(record.headword);
    } else {
      split.train.push_back(record);
    }
  }
  for (const auto& word : spec.heldout_words) {
    if (!found.count(word)) split.warnings.push_back("held-out word '" + word + "' has no records");
  }
  return split;
}

SplitSpec random_holdout(std::span<const DefinitionRecord> records, std::size_t count, std::uint64_t seed) {
  std::set<std::string> unique;
  for (const auto& record : records) unique.insert(record.headword);
  std::vector<std::string> words(unique.begin(), unique.end());
  if (count > words.size()) throw Error("random_holdout: more held-out words requested than headwords");
  std::mt19937_64 rng(seed);
  std::shuffle(words.begin(), words.end(), rng);
  SplitSpec spec;
  spec.seed = seed;
  spec.heldout_words.insert(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(count));
  return spec;
}

}  // namespace defembed
