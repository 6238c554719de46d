// Writes the synthetic toy-world fixtures shipped under data/toy.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "defembed/corpus.hpp"
#include "defembed/embedding_store.hpp"
#include "defembed/toy_world.hpp"

namespace fs = std::filesystem;
using namespace defembed;

namespace {

void write_tsv(const fs::path& path, const std::vector<DefinitionRecord>& records, const std::string& header) {
  std::ofstream out(path, std::ios::binary);
  out << "# " << header << '\n';
  write_records(out, records);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generate toy-world fixtures"};
  std::string out_dir = "data/toy";
  toy::WorldOptions options;
  options.french = true;
  std::size_t heldout = 12;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", options.seed, "world seed");
  app.add_option("--concepts", options.concepts, "number of concepts");
  app.add_option("--definitions", options.definitions, "dictionary pairs");
  app.add_option("--dim", options.dim, "embedding dimension");
  app.add_option("--heldout", heldout, "headwords to hold out for the unseen split");
  CLI11_PARSE(app, argc, argv);

  const auto world = toy::make_world(options);
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  write_tsv(dir / "dictionary.tsv", world.dictionary, "headword<TAB>definition");
  write_tsv(dir / "encyclopedia.tsv", world.encyclopedia, "title<TAB>first-paragraph sentence");
  write_tsv(dir / "concept_descriptions.tsv", world.concept_descriptions, "word<TAB>free-form description");
  write_tsv(dir / "crossword_long.tsv", world.crossword_long, "answer<TAB>long clue");
  write_tsv(dir / "crossword_short.tsv", world.crossword_short, "answer<TAB>short clue");
  write_tsv(dir / "crossword_single.tsv", world.crossword_single, "answer<TAB>single-word clue");

  std::vector<DefinitionRecord> bilingual;
  for (const auto& record : world.dictionary) {
    if (record.source == Source::dictionary && bilingual.size() < world.concepts.size()) {
      bilingual.push_back({world.french_of.at(record.headword), record.tokens, Source::eval});
    }
  }
  write_tsv(dir / "bilingual_eval.tsv", bilingual, "french word<TAB>english definition");

  const auto spec = random_holdout(world.dictionary, heldout, options.seed);
  std::ofstream held(dir / "heldout.txt");
  for (const auto& word : spec.heldout_words) held << word << '\n';

  save_embeddings(dir / "target_en.vec", world.english);
  save_embeddings(dir / "target_fr.vec", *world.french);
  std::cout << "wrote " << world.dictionary.size() << " definitions, " << world.english.size() << " en / "
            << world.french->size() << " fr vectors to " << dir.string() << '\n';
  return 0;
}
