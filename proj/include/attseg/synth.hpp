#pragma once

// Synthetic parallel corpora with a known word-to-string mapping.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace attseg {

struct SynthOptions {
  int sentences = 500;
  int source_vocab_size = 20;
  std::uint64_t seed = 1;
  int min_image_length = 2;
  int max_image_length = 6;
  int alphabet_size = 10;  // target letters drawn from the first N of a-z
  int min_words = 3;
  int max_words = 8;

  void validate() const;
};

struct SynthCorpus {
  std::vector<std::string> source_words;
  std::map<std::string, std::string> mapping;  // source word -> target image
  std::vector<std::string> source_lines;
  std::vector<std::string> target_lines;  // gold: images joined by spaces
};

// Random injective mapping from source words to target strings; each source
// line is a uniform draw of words, its target the concatenated images.
SynthCorpus make_synthetic_corpus(const SynthOptions& options);

void write_synthetic_corpus(const SynthCorpus& corpus, const std::filesystem::path& source_path,
                            const std::filesystem::path& target_path);

}  // namespace attseg
