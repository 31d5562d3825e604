#include "attseg/evaluation.hpp"

#include "attseg/errors.hpp"
#include "attseg/text.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

namespace attseg {

namespace {

void check_streams(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold) {
  if (pred.size() != gold.size()) {
    throw DataError("prediction has " + std::to_string(pred.size()) + " sentences, reference has " +
                    std::to_string(gold.size()));
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].units != gold[i].units) {
      throw DataError("sentence " + std::to_string(i + 1) + ": unit streams differ ('" + pred[i].text() +
                      "' vs '" + gold[i].text() + "')");
    }
  }
}

double ratio(std::size_t num, std::size_t den, std::size_t other_side) {
  if (den == 0) return other_side == 0 ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

PRF finish(std::size_t correct, std::size_t predicted, std::size_t reference) {
  PRF out;
  out.correct = correct;
  out.predicted = predicted;
  out.reference = reference;
  out.precision = ratio(correct, predicted, reference);
  out.recall = ratio(correct, reference, predicted);
  out.f = f_measure(out.precision, out.recall);
  return out;
}

}  // namespace

double f_measure(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

PRF boundary_prf(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold) {
  check_streams(pred, gold);
  std::size_t correct = 0, predicted = 0, reference = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::set<int> g(gold[i].boundaries.begin(), gold[i].boundaries.end());
    const std::set<int> p(pred[i].boundaries.begin(), pred[i].boundaries.end());
    for (int b : p) correct += g.count(b);
    predicted += p.size();
    reference += g.size();
  }
  return finish(correct, predicted, reference);
}

PRF token_prf(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold) {
  check_streams(pred, gold);
  std::size_t correct = 0, predicted = 0, reference = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto gs = gold[i].spans();
    const std::set<std::pair<int, int>> g(gs.begin(), gs.end());
    const auto ps = pred[i].spans();
    for (const auto& s : ps) correct += g.count(s);
    predicted += ps.size();
    reference += gs.size();
  }
  return finish(correct, predicted, reference);
}

double exact_match(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold) {
  check_streams(pred, gold);
  if (pred.empty()) return 1.0;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::set<int> g(gold[i].boundaries.begin(), gold[i].boundaries.end());
    const std::set<int> p(pred[i].boundaries.begin(), pred[i].boundaries.end());
    if (g == p) ++exact;
  }
  return static_cast<double>(exact) / static_cast<double>(pred.size());
}

CorpusStats corpus_stats(const std::vector<std::vector<std::string>>& tokenized) {
  if (tokenized.empty()) throw DataError("corpus statistics need at least one sentence");
  CorpusStats s;
  s.sentences = tokenized.size();
  std::unordered_set<std::string> types;
  std::size_t chars = 0;
  for (const auto& sentence : tokenized) {
    for (const auto& tok : sentence) {
      ++s.tokens;
      chars += utf8_length(tok);
      types.insert(tok);
    }
  }
  s.types = types.size();
  s.avg_token_length = s.tokens ? static_cast<double>(chars) / static_cast<double>(s.tokens) : 0.0;
  s.avg_sentence_length = static_cast<double>(s.tokens) / static_cast<double>(s.sentences);
  return s;
}

CorpusStats corpus_stats(const std::vector<SegmentedSentence>& corpus) {
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(corpus.size());
  for (const auto& s : corpus) tokenized.push_back(s.tokens());
  return corpus_stats(tokenized);
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> length_attention_correlation(const std::vector<AttentionMatrix>& matrices,
                                                   const std::vector<SentencePair>& pairs,
                                                   bool include_eos) {
  if (matrices.size() != pairs.size()) {
    throw DataError("correlation: " + std::to_string(matrices.size()) + " matrices for " +
                    std::to_string(pairs.size()) + " pairs");
  }
  std::vector<double> lengths, mass;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const Matrix& w = matrices[n].weights;
    const auto& lens = pairs[n].source_word_lengths;
    if (static_cast<std::size_t>(w.cols()) != lens.size()) {
      throw DataError("correlation: matrix " + std::to_string(n) + " has " + std::to_string(w.cols()) +
                      " columns, sentence has " + std::to_string(lens.size()) + " tokens");
    }
    const Eigen::Index cols = include_eos ? w.cols() : w.cols() - 1;
    for (Eigen::Index j = 0; j < cols; ++j) {
      lengths.push_back(lens[static_cast<std::size_t>(j)]);
      mass.push_back(w.col(j).sum());
    }
  }
  return pearson(lengths, mass);
}

std::vector<std::pair<std::string, double>> MetricsReport::entries() const {
  std::vector<std::pair<std::string, double>> e = {
      {"BP", 100.0 * boundary.precision},
      {"BR", 100.0 * boundary.recall},
      {"BF", 100.0 * boundary.f},
      {"WP", 100.0 * token.precision},
      {"WR", 100.0 * token.recall},
      {"WF", 100.0 * token.f},
      {"X", 100.0 * exact},
      {"tokens", static_cast<double>(stats.tokens)},
      {"types", static_cast<double>(stats.types)},
      {"avg_token_len", stats.avg_token_length},
      {"avg_sent_len", stats.avg_sentence_length},
  };
  if (correlation) e.emplace_back("correlation", *correlation);
  return e;
}

MetricsReport evaluate(const std::vector<SegmentedSentence>& pred, const std::vector<SegmentedSentence>& gold) {
  MetricsReport r;
  r.boundary = boundary_prf(pred, gold);
  r.token = token_prf(pred, gold);
  r.exact = exact_match(pred, gold);
  r.exact_count = static_cast<std::size_t>(std::llround(r.exact * static_cast<double>(pred.size())));
  r.stats = corpus_stats(pred);
  return r;
}

void write_report(std::ostream& out, const MetricsReport& report) {
  for (const auto& [k, v] : report.entries()) out << k << '\t' << format_double(v) << '\n';
}

std::map<std::string, double> read_report(std::istream& in) {
  std::map<std::string, double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("report line " + std::to_string(line_no) + ": missing tab");
    try {
      out[line.substr(0, tab)] = parse_double(trim(std::string_view(line).substr(tab + 1)), line.substr(0, tab));
    } catch (const UsageError& e) {
      throw DataError("report line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SegmentedSentence> parse_segmentation(const std::vector<std::string>& lines,
                                                  const UnitTokenizer& tokenizer) {
  std::vector<SegmentedSentence> out;
  out.reserve(lines.size());
  for (std::size_t n = 0; n < lines.size(); ++n) {
    SegmentedSentence s;
    std::string_view rest(lines[n]);
    bool any = false;
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) break;
      rest = rest.substr(start);
      const auto end = rest.find_first_of(" \t");
      const std::string_view word = rest.substr(0, end);
      if (any) s.boundaries.push_back(static_cast<int>(s.units.size()));
      try {
        for (auto& u : tokenizer.split(word)) s.units.push_back(std::move(u));
      } catch (const DataError& e) {
        throw DataError("line " + std::to_string(n + 1) + ": " + e.what());
      }
      any = true;
      rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end);
    }
    if (!any) throw DataError("line " + std::to_string(n + 1) + ": empty line");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SegmentedSentence> read_segmentation(const std::filesystem::path& path,
                                                 const UnitTokenizer& tokenizer) {
  return parse_segmentation(read_lines(path), tokenizer);
}

}  // namespace attseg
