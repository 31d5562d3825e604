#include "attseg/corpus.hpp"

#include "attseg/errors.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace attseg {

// ---------------------------------------------------------------------------
// UTF-8

std::optional<std::vector<std::string>> utf8_scalars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < text.size()) {
    const unsigned char lead = byte(i);
    std::size_t len = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      len = 1;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
      cp = lead & 0x07;
    } else {
      return std::nullopt;
    }
    if (i + len > text.size()) return std::nullopt;
    for (std::size_t k = 1; k < len; ++k) {
      const unsigned char c = byte(i + k);
      if ((c & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (c & 0x3F);
    }
    static constexpr char32_t min_for_len[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_for_len[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return std::nullopt;
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::size_t utf8_length(std::string_view text) {
  auto scalars = utf8_scalars(text);
  if (!scalars) throw DataError("invalid UTF-8 in '" + std::string(text) + "'");
  return scalars->size();
}

// ---------------------------------------------------------------------------
// UnitTokenizer

UnitTokenizer::UnitTokenizer(std::vector<std::string> inventory) : inventory_(std::move(inventory)) {
  inventory_.erase(std::remove(inventory_.begin(), inventory_.end(), std::string{}),
                   inventory_.end());
  std::stable_sort(inventory_.begin(), inventory_.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
}

UnitTokenizer UnitTokenizer::from_file(const std::filesystem::path& path) {
  std::vector<std::string> symbols;
  for (auto& line : read_lines(path)) {
    if (!line.empty()) symbols.push_back(line);
  }
  if (symbols.empty()) throw DataError("symbol inventory " + path.string() + " is empty");
  return UnitTokenizer(std::move(symbols));
}

std::vector<std::string> UnitTokenizer::split(std::string_view text) const {
  if (inventory_.empty()) {
    auto scalars = utf8_scalars(text);
    if (!scalars) throw DataError("invalid UTF-8");
    return std::move(*scalars);
  }
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::string* match = nullptr;
    for (const auto& sym : inventory_) {
      if (text.compare(i, sym.size(), sym) == 0) {
        match = &sym;
        break;
      }
    }
    if (match == nullptr) {
      throw DataError("no inventory symbol matches at byte " + std::to_string(i) + " of '" +
                      std::string(text) + "'");
    }
    out.push_back(*match);
    i += match->size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<s>", "</s>", "<unk>"}) add(s);
}

int Vocabulary::add(const std::string& symbol) {
  auto it = index_.find(symbol);
  if (it != index_.end()) return it->second;
  const int idx = static_cast<int>(symbols_.size());
  index_.emplace(symbol, idx);
  symbols_.push_back(symbol);
  return idx;
}

int Vocabulary::lookup(std::string_view symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? unk : it->second;
}

bool Vocabulary::contains(std::string_view symbol) const { return index_.find(symbol) != index_.end(); }

const std::string& Vocabulary::symbol(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= symbols_.size()) {
    throw DataError("vocabulary index " + std::to_string(index) + " out of range");
  }
  return symbols_[static_cast<std::size_t>(index)];
}

// ---------------------------------------------------------------------------
// Loading

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

namespace {

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void line_error(const char* side, std::size_t line, const std::string& what) {
  throw DataError(std::string(side) + " line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<SentencePair> parse_parallel(const std::vector<std::string>& source_lines,
                                         const std::vector<std::string>& target_lines,
                                         const LoadOptions& options) {
  if (source_lines.size() != target_lines.size()) {
    const std::size_t first_extra = std::min(source_lines.size(), target_lines.size()) + 1;
    throw DataError("line count mismatch: source has " + std::to_string(source_lines.size()) +
                    " lines, target has " + std::to_string(target_lines.size()) +
                    " (first unmatched line " + std::to_string(first_extra) + ")");
  }
  const UnitTokenizer default_tokenizer;
  const UnitTokenizer& tok = options.tokenizer ? *options.tokenizer : default_tokenizer;

  std::vector<SentencePair> pairs;
  pairs.reserve(source_lines.size());
  for (std::size_t n = 0; n < source_lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    SentencePair pair;

    if (!utf8_scalars(source_lines[n])) line_error("source", line_no, "invalid UTF-8");
    if (!utf8_scalars(target_lines[n])) line_error("target", line_no, "invalid UTF-8");

    pair.source_words = split_whitespace(source_lines[n]);
    if (pair.source_words.empty()) line_error("source", line_no, "empty line");
    for (const auto& w : pair.source_words) {
      pair.source_word_lengths.push_back(static_cast<int>(utf8_length(w)));
    }
    pair.source_word_lengths.push_back(1);  // EOS

    const auto target_words = split_whitespace(target_lines[n]);
    if (target_words.empty()) line_error("target", line_no, "empty line");
    if (!options.gold && target_words.size() > 1) {
      line_error("target", line_no, "unsegmented target contains whitespace");
    }
    std::vector<int> boundaries;
    try {
      for (const auto& word : target_words) {
        if (!pair.target_units.empty()) boundaries.push_back(static_cast<int>(pair.target_units.size()));
        for (auto& unit : tok.split(word)) pair.target_units.push_back(std::move(unit));
      }
    } catch (const DataError& e) {
      line_error("target", line_no, e.what());
    }
    if (options.gold) pair.gold_boundaries = std::move(boundaries);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<SentencePair> load_parallel(const std::filesystem::path& source_path,
                                        const std::filesystem::path& target_path,
                                        const LoadOptions& options) {
  return parse_parallel(read_lines(source_path), read_lines(target_path), options);
}

Vocabularies build_vocabularies(const std::vector<SentencePair>& pairs) {
  Vocabularies v;
  for (const auto& p : pairs) {
    for (const auto& w : p.source_words) v.source.add(w);
    for (const auto& u : p.target_units) v.target.add(u);
  }
  return v;
}

std::vector<EncodedPair> encode_corpus(const std::vector<SentencePair>& pairs,
                                       const Vocabularies& vocab, EncodeStats* stats) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  EncodeStats local;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto& p = pairs[n];
    EncodedPair e;
    e.id = n;
    for (const auto& w : p.source_words) {
      const int idx = vocab.source.lookup(w);
      if (idx == Vocabulary::unk) ++local.source_unknown;
      e.source.push_back(idx);
    }
    e.source.push_back(Vocabulary::eos);
    e.target.push_back(Vocabulary::bos);
    for (const auto& u : p.target_units) {
      const int idx = vocab.target.lookup(u);
      if (idx == Vocabulary::unk) ++local.target_unknown;
      e.target.push_back(idx);
    }
    e.target.push_back(Vocabulary::eos);
    e.source_lengths = p.source_word_lengths;
    out.push_back(std::move(e));
  }
  if (stats) *stats = local;
  return out;
}

// ---------------------------------------------------------------------------
// Batching

std::vector<int> IndexGrid::column(int c) const {
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) out[static_cast<std::size_t>(r)] = at(r, c);
  return out;
}

Batch make_batch(const std::vector<EncodedPair>& pairs, std::span<const std::size_t> rows) {
  Batch b;
  const int n = static_cast<int>(rows.size());
  int max_src = 0;
  int max_steps = 0;
  for (std::size_t r : rows) {
    max_src = std::max(max_src, pairs[r].source_len());
    max_steps = std::max(max_steps, pairs[r].target_steps());
  }
  b.source = IndexGrid{n, max_src, std::vector<int>(static_cast<std::size_t>(n * max_src), Vocabulary::pad)};
  b.target = IndexGrid{n, max_steps + 1,
                       std::vector<int>(static_cast<std::size_t>(n * (max_steps + 1)), Vocabulary::pad)};
  b.source_mask = Matrix::Zero(n, max_src);
  b.source_word_lengths = Matrix::Zero(n, max_src);
  b.target_mask = Matrix::Zero(n, max_steps);
  for (int i = 0; i < n; ++i) {
    const EncodedPair& p = pairs[rows[static_cast<std::size_t>(i)]];
    b.ids.push_back(p.id);
    for (int j = 0; j < p.source_len(); ++j) {
      b.source.at(i, j) = p.source[static_cast<std::size_t>(j)];
      b.source_mask(i, j) = 1.0;
      b.source_word_lengths(i, j) = p.source_lengths[static_cast<std::size_t>(j)];
    }
    for (int k = 0; k < static_cast<int>(p.target.size()); ++k) {
      b.target.at(i, k) = p.target[static_cast<std::size_t>(k)];
    }
    for (int s = 0; s < p.target_steps(); ++s) b.target_mask(i, s) = 1.0;
    b.source_lengths.push_back(p.source_len());
    b.target_lengths.push_back(p.target_steps());
  }
  return b;
}

std::vector<Batch> epoch_batches(const std::vector<EncodedPair>& pairs, int batch_size,
                                 std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  Rng rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].target_steps() < pairs[b].target_steps();
  });

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(batch_size));
    batches.push_back(make_batch(pairs, std::span<const std::size_t>(order).subspan(start, len)));
  }
  return batches;
}

std::string join_with_boundaries(const std::vector<std::string>& units,
                                 const std::vector<int>& boundaries) {
  std::string out;
  std::size_t next = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (next < boundaries.size() && static_cast<std::size_t>(boundaries[next]) == i) {
      out.push_back(' ');
      ++next;
    }
    out += units[i];
  }
  return out;
}

}  // namespace attseg
