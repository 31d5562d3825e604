#pragma once

// Align-to-segment: force-decode every pair, align each emitted target unit
// to its argmax source position, and break wherever consecutive units align
// to different source positions.

#include "attseg/corpus.hpp"
#include "attseg/model.hpp"

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace attseg {

struct AttentionMatrix {
  std::size_t id = 0;
  Matrix weights;  // I x J: decoding steps (EOS step last) by source tokens (EOS last)

  int rows() const { return static_cast<int>(weights.rows()); }
  int cols() const { return static_cast<int>(weights.cols()); }
};

struct SegmentedSentence {
  std::vector<std::string> units;
  std::vector<int> boundaries;  // sorted; p means a break between units p and p+1 (1-based)

  // Half-open [start, end) spans over units, 0-based.
  std::vector<std::pair<int, int>> spans() const;
  std::vector<std::string> tokens() const;
  std::string text() const;

  static SegmentedSentence from_spans(std::vector<std::string> units,
                                      const std::vector<std::pair<int, int>>& spans);
};

// Evaluation mode, batched; results are returned in corpus order.
std::vector<AttentionMatrix> force_decode_corpus(Model& model, const std::vector<EncodedPair>& pairs,
                                                 int batch_size = 64);

// argmax column of every row; ties go to the lowest column. 0-based.
std::vector<int> argmax_rows(const Matrix& rows);

// argmax column per real-unit row (the final EOS row is skipped); ties go to
// the lowest column. 0-based column indices.
std::vector<int> align(const AttentionMatrix& attention);

std::vector<int> boundaries_from_alignment(const std::vector<int>& alignment);

// Throws DataError when matrices and pairs disagree on ids or shapes.
std::vector<SegmentedSentence> segment_corpus(const std::vector<SentencePair>& pairs,
                                              const std::vector<AttentionMatrix>& matrices);

// "# id I J" then I lines of J tab-separated values, per sentence.
void write_attention_dump(std::ostream& out, const std::vector<AttentionMatrix>& matrices);
std::vector<AttentionMatrix> read_attention_dump(std::istream& in);

}  // namespace attseg
