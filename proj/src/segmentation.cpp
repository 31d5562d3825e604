#include "attseg/segmentation.hpp"

#include "attseg/errors.hpp"
#include "attseg/text.hpp"

#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace attseg {

std::vector<std::pair<int, int>> SegmentedSentence::spans() const {
  std::vector<std::pair<int, int>> out;
  int start = 0;
  for (int b : boundaries) {
    out.emplace_back(start, b);
    start = b;
  }
  out.emplace_back(start, static_cast<int>(units.size()));
  return out;
}

std::vector<std::string> SegmentedSentence::tokens() const {
  std::vector<std::string> out;
  for (const auto& [s, e] : spans()) {
    std::string tok;
    for (int i = s; i < e; ++i) tok += units[static_cast<std::size_t>(i)];
    out.push_back(std::move(tok));
  }
  return out;
}

std::string SegmentedSentence::text() const { return join_with_boundaries(units, boundaries); }

SegmentedSentence SegmentedSentence::from_spans(std::vector<std::string> units,
                                                const std::vector<std::pair<int, int>>& spans) {
  SegmentedSentence s;
  s.units = std::move(units);
  for (std::size_t k = 1; k < spans.size(); ++k) s.boundaries.push_back(spans[k].first);
  return s;
}

std::vector<AttentionMatrix> force_decode_corpus(Model& model, const std::vector<EncodedPair>& pairs,
                                                 int batch_size) {
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  std::vector<AttentionMatrix> out(pairs.size());
  Rng unused(0);
  std::vector<std::size_t> rows(pairs.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t len = std::min(pairs.size() - start, static_cast<std::size_t>(batch_size));
    const Batch batch = make_batch(pairs, std::span<const std::size_t>(rows).subspan(start, len));
    Graph g;
    const ForwardResult fwd = forward_teacher_forced(g, model, batch, false, unused);
    for (int r = 0; r < batch.size(); ++r) {
      AttentionMatrix& a = out[start + static_cast<std::size_t>(r)];
      a.id = batch.ids[static_cast<std::size_t>(r)];
      a.weights = attention_matrix(fwd, batch, r);
    }
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix& w) {
  std::vector<int> a;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < w.cols(); ++j) {
      if (w(i, j) > w(i, best)) best = j;
    }
    a.push_back(static_cast<int>(best));
  }
  return a;
}

std::vector<int> align(const AttentionMatrix& attention) {
  const Matrix& w = attention.weights;
  if (w.rows() < 1) return {};
  return argmax_rows(w.topRows(w.rows() - 1));
}

std::vector<int> boundaries_from_alignment(const std::vector<int>& alignment) {
  std::vector<int> b;
  for (std::size_t p = 1; p < alignment.size(); ++p) {
    if (alignment[p - 1] != alignment[p]) b.push_back(static_cast<int>(p));
  }
  return b;
}

std::vector<SegmentedSentence> segment_corpus(const std::vector<SentencePair>& pairs,
                                              const std::vector<AttentionMatrix>& matrices) {
  if (pairs.size() != matrices.size()) {
    throw DataError("segment_corpus: " + std::to_string(pairs.size()) + " pairs but " +
                    std::to_string(matrices.size()) + " attention matrices");
  }
  std::vector<SegmentedSentence> out;
  out.reserve(pairs.size());
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const AttentionMatrix& a = matrices[n];
    const SentencePair& p = pairs[n];
    if (a.id != n) {
      throw DataError("segment_corpus: matrix " + std::to_string(n) + " carries id " +
                      std::to_string(a.id));
    }
    if (static_cast<std::size_t>(a.rows()) != p.target_units.size() + 1 ||
        static_cast<std::size_t>(a.cols()) != p.source_words.size() + 1) {
      throw DataError("segment_corpus: matrix shape does not match sentence " + std::to_string(n + 1));
    }
    SegmentedSentence s;
    s.units = p.target_units;
    s.boundaries = boundaries_from_alignment(align(a));
    out.push_back(std::move(s));
  }
  return out;
}

void write_attention_dump(std::ostream& out, const std::vector<AttentionMatrix>& matrices) {
  for (const auto& a : matrices) {
    out << "# " << a.id << ' ' << a.rows() << ' ' << a.cols() << '\n';
    for (int i = 0; i < a.rows(); ++i) {
      for (int j = 0; j < a.cols(); ++j) {
        if (j) out << '\t';
        out << format_double(a.weights(i, j));
      }
      out << '\n';
    }
  }
}

std::vector<AttentionMatrix> read_attention_dump(std::istream& in) {
  std::vector<AttentionMatrix> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream header(line);
    std::string hash;
    AttentionMatrix a;
    int rows = 0, cols = 0;
    if (!(header >> hash >> a.id >> rows >> cols) || hash != "#" || rows < 1 || cols < 1) {
      throw DataError("attention dump: bad block header '" + line + "'");
    }
    a.weights.resize(rows, cols);
    for (int i = 0; i < rows; ++i) {
      if (!std::getline(in, line)) throw DataError("attention dump: truncated block " + std::to_string(a.id));
      std::istringstream row(line);
      for (int j = 0; j < cols; ++j) {
        std::string tok;
        if (!std::getline(row, tok, '\t')) throw DataError("attention dump: short row in block " + std::to_string(a.id));
        try {
          a.weights(i, j) = parse_double(tok, "attention weight");
        } catch (const UsageError& e) {
          throw DataError(std::string("attention dump: ") + e.what());
        }
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace attseg
