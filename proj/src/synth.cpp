#include "attseg/synth.hpp"

#include "attseg/errors.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace attseg {

void SynthOptions::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("invalid synthetic corpus options: ") + what);
  };
  require(sentences >= 1, "sentences must be >= 1");
  require(source_vocab_size >= 1, "source_vocab_size must be >= 1");
  require(min_image_length >= 1 && min_image_length <= max_image_length, "bad image length range");
  require(alphabet_size >= 2 && alphabet_size <= 26, "alphabet_size must be in [2, 26]");
  require(min_words >= 1 && min_words <= max_words, "bad words-per-sentence range");
}

namespace {

std::string random_string(std::mt19937_64& rng, int min_len, int max_len, int letters) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<int> letter(0, letters - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + letter(rng)));
  return s;
}

}  // namespace

SynthCorpus make_synthetic_corpus(const SynthOptions& options) {
  options.validate();
  std::mt19937_64 rng(options.seed);
  SynthCorpus c;

  // Pigeonhole guard: the target space must hold an injective image set.
  double capacity = 0.0;
  for (int l = options.min_image_length; l <= options.max_image_length; ++l) {
    capacity += std::pow(static_cast<double>(options.alphabet_size), l);
  }
  if (capacity < 2.0 * options.source_vocab_size) {
    throw UsageError("synthetic corpus: alphabet too small for an injective mapping");
  }

  std::set<std::string> used_source, used_target;
  while (static_cast<int>(c.source_words.size()) < options.source_vocab_size) {
    std::string w = random_string(rng, 2, 8, 26);
    if (!used_source.insert(w).second) continue;
    std::string img;
    do {
      img = random_string(rng, options.min_image_length, options.max_image_length, options.alphabet_size);
    } while (!used_target.insert(img).second);
    c.source_words.push_back(w);
    c.mapping.emplace(w, img);
  }

  std::uniform_int_distribution<int> words(options.min_words, options.max_words);
  std::uniform_int_distribution<std::size_t> pick(0, c.source_words.size() - 1);
  for (int n = 0; n < options.sentences; ++n) {
    const int k = words(rng);
    std::string src, tgt;
    for (int i = 0; i < k; ++i) {
      const std::string& w = c.source_words[pick(rng)];
      if (i) {
        src.push_back(' ');
        tgt.push_back(' ');
      }
      src += w;
      tgt += c.mapping.at(w);
    }
    c.source_lines.push_back(std::move(src));
    c.target_lines.push_back(std::move(tgt));
  }
  return c;
}

void write_synthetic_corpus(const SynthCorpus& corpus, const std::filesystem::path& source_path,
                            const std::filesystem::path& target_path) {
  std::ofstream src(source_path, std::ios::binary);
  std::ofstream tgt(target_path, std::ios::binary);
  if (!src || !tgt) throw DataError("cannot write synthetic corpus files");
  for (const auto& l : corpus.source_lines) src << l << '\n';
  for (const auto& l : corpus.target_lines) tgt << l << '\n';
}

}  // namespace attseg
