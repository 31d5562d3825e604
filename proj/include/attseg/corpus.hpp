#pragma once

// Parallel corpus loading, vocabularies and padded mini-batches.

#include "attseg/gradcore.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attseg {

// Splits a UTF-8 string into Unicode scalar values (each returned as its
// UTF-8 byte sequence). Returns nullopt on malformed input.
std::optional<std::vector<std::string>> utf8_scalars(std::string_view text);

// Number of Unicode scalar values in text; throws DataError on invalid UTF-8.
std::size_t utf8_length(std::string_view text);

// Greedy longest-match tokenizer over a fixed inventory of target symbols.
// Without an inventory every Unicode scalar value is one unit.
class UnitTokenizer {
public:
  UnitTokenizer() = default;
  explicit UnitTokenizer(std::vector<std::string> inventory);
  static UnitTokenizer from_file(const std::filesystem::path& path);

  // Throws DataError when text contains bytes no inventory symbol covers.
  std::vector<std::string> split(std::string_view text) const;
  bool has_inventory() const { return !inventory_.empty(); }

private:
  std::vector<std::string> inventory_;  // sorted by decreasing byte length
};

class Vocabulary {
public:
  static constexpr int pad = 0;
  static constexpr int bos = 1;
  static constexpr int eos = 2;
  static constexpr int unk = 3;
  static constexpr int reserved = 4;

  Vocabulary();

  // Returns the index of symbol, inserting it when new.
  int add(const std::string& symbol);
  // Index of symbol, or unk.
  int lookup(std::string_view symbol) const;
  bool contains(std::string_view symbol) const;
  const std::string& symbol(int index) const;
  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

private:
  std::map<std::string, int, std::less<>> index_;
  std::vector<std::string> symbols_;
};

// One line pair as text. EOS/BOS are implicit here and added on encoding.
struct SentencePair {
  std::vector<std::string> source_words;
  std::vector<std::string> target_units;
  // Character counts of the source words followed by 1 for EOS.
  std::vector<int> source_word_lengths;
  // Internal boundaries p in 1..n-1 (break after unit p); only for gold data.
  std::optional<std::vector<int>> gold_boundaries;
};

struct LoadOptions {
  bool gold = false;
  const UnitTokenizer* tokenizer = nullptr;
};

// Reads aligned source/target files. Throws DataError naming the offending
// line on count mismatch, empty lines or invalid UTF-8.
std::vector<SentencePair> load_parallel(const std::filesystem::path& source_path,
                                        const std::filesystem::path& target_path,
                                        const LoadOptions& options = {});

// Same as load_parallel over in-memory lines.
std::vector<SentencePair> parse_parallel(const std::vector<std::string>& source_lines,
                                         const std::vector<std::string>& target_lines,
                                         const LoadOptions& options = {});

std::vector<std::string> read_lines(const std::filesystem::path& path);

struct Vocabularies {
  Vocabulary source;
  Vocabulary target;
};

// Indices assigned by first occurrence in corpus order.
Vocabularies build_vocabularies(const std::vector<SentencePair>& pairs);

// Index-encoded pair: source ends in EOS; target is BOS, units..., EOS.
struct EncodedPair {
  std::size_t id = 0;
  std::vector<int> source;
  std::vector<int> target;
  std::vector<int> source_lengths;

  // Source length J including EOS.
  int source_len() const { return static_cast<int>(source.size()); }
  // Decoding steps I: real units plus the EOS step.
  int target_steps() const { return static_cast<int>(target.size()) - 1; }
};

struct EncodeStats {
  std::size_t source_unknown = 0;
  std::size_t target_unknown = 0;
};

std::vector<EncodedPair> encode_corpus(const std::vector<SentencePair>& pairs,
                                       const Vocabularies& vocab,
                                       EncodeStats* stats = nullptr);

// Row-major integer grid.
struct IndexGrid {
  int rows = 0;
  int cols = 0;
  std::vector<int> data;

  int& at(int r, int c) { return data[static_cast<std::size_t>(r * cols + c)]; }
  int at(int r, int c) const { return data[static_cast<std::size_t>(r * cols + c)]; }
  // Column c as a contiguous vector (one entry per row).
  std::vector<int> column(int c) const;
};

struct Batch {
  std::vector<std::size_t> ids;  // corpus ids of the rows
  IndexGrid source;              // rows x max J, PAD beyond length
  Matrix source_mask;            // rows x max J
  Matrix source_word_lengths;    // rows x max J, 0 on padding
  IndexGrid target;              // rows x (max I + 1), column 0 is BOS
  Matrix target_mask;            // rows x max I over decoding steps
  std::vector<int> source_lengths;
  std::vector<int> target_lengths;

  int size() const { return static_cast<int>(ids.size()); }
  int max_source() const { return source.cols; }
  int max_steps() const { return target.cols - 1; }
};

// Pads the given pairs (in the given order) into one batch.
Batch make_batch(const std::vector<EncodedPair>& pairs, std::span<const std::size_t> rows);

// Shuffle keyed by (seed, epoch), stable sort by target length, cut into
// chunks of batch_size.
std::vector<Batch> epoch_batches(const std::vector<EncodedPair>& pairs, int batch_size,
                                 std::uint64_t seed, int epoch);

// Re-inserts single spaces at boundaries; inverse of gold loading.
std::string join_with_boundaries(const std::vector<std::string>& units,
                                 const std::vector<int>& boundaries);

}  // namespace attseg
