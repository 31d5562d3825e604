#pragma once

// Segmentation metrics, corpus statistics and the word-length / attention
// correlation. All ratios are micro-averaged over the corpus.

#include "attseg/corpus.hpp"
#include "attseg/segmentation.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace attseg {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  std::size_t correct = 0;
  std::size_t predicted = 0;
  std::size_t reference = 0;
};

// Harmonic mean, 0 when p + r is 0.
double f_measure(double precision, double recall);

// Internal boundaries only. An empty denominator yields 1 when the other
// side is empty corpus-wide too, otherwise 0.
PRF boundary_prf(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold);

// Exact (start, end) span matches per sentence.
PRF token_prf(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold);

// Fraction of sentences whose boundary sets are identical.
double exact_match(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold);

struct CorpusStats {
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::size_t types = 0;
  double avg_token_length = 0.0;     // characters per token
  double avg_sentence_length = 0.0;  // tokens per sentence
};

CorpusStats corpus_stats(const std::vector<std::vector<std::string>>& tokenized);
CorpusStats corpus_stats(const std::vector<SegmentedSentence>& corpus);

// Pearson correlation between source word length and the attention mass its
// column receives (rows summed, EOS row included), pooled over every token
// instance. nullopt when undefined (fewer than two observations or zero
// variance).
std::optional<double> length_attention_correlation(const std::vector<AttentionMatrix>& matrices,
                                                   const std::vector<SentencePair>& pairs,
                                                   bool include_eos = true);

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct MetricsReport {
  PRF boundary;
  PRF token;
  double exact = 0.0;
  std::size_t exact_count = 0;
  CorpusStats stats;  // of the predicted segmentation
  std::optional<double> correlation;

  // Ordered NAME -> value; P/R/F/X scaled by 100.
  std::vector<std::pair<std::string, double>> entries() const;
};

MetricsReport evaluate(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold);

// "NAME<TAB>value" per line.
void write_report(std::ostream& out, const MetricsReport& report);
std::map<std::string, double> read_report(std::istream& in);

// Parses space-segmented lines into segmented sentences (units via tokenizer).
std::vector<SegmentedSentence> read_segmentation(const std::filesystem::path& path,
                                                 const UnitTokenizer& tokenizer = {});
std::vector<SegmentedSentence> parse_segmentation(const std::vector<std::string>& lines,
                                                  const UnitTokenizer& tokenizer = {});

}  // namespace attseg
