#include "attseg/corpus.hpp"
#include "attseg/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace attseg;

namespace {

std::vector<std::string> units_of(const std::string& s) {
  std::vector<std::string> out;
  for (char c : s) out.emplace_back(1, c);
  return out;
}

std::vector<SentencePair> gold_corpus(const std::vector<std::string>& src,
                                      const std::vector<std::string>& tgt) {
  LoadOptions opt;
  opt.gold = true;
  return parse_parallel(src, tgt, opt);
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("gold spaces become boundaries") {
  auto pairs = gold_corpus({"il mange"}, {"a bc"});
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].target_units == units_of("abc"));
  REQUIRE(pairs[0].gold_boundaries);
  CHECK(*pairs[0].gold_boundaries == std::vector<int>{1});

  auto single = gold_corpus({"x"}, {"abc"});
  CHECK(single[0].gold_boundaries->empty());
}

TEST_CASE("source word lengths carry an EOS of length one") {
  auto pairs = parse_parallel({"wa"}, {"xyz"});
  CHECK(pairs[0].source_word_lengths == std::vector<int>{2, 1});
  auto multi = parse_parallel({"été ab"}, {"q"});
  CHECK(multi[0].source_word_lengths == std::vector<int>{3, 2, 1});
}

TEST_CASE("multi-byte target units") {
  auto pairs = parse_parallel({"w"}, {"ɛbà"});
  CHECK(pairs[0].target_units == std::vector<std::string>{"ɛ", "b", "à"});

  UnitTokenizer tok({"ng", "a", "b", "n"});
  LoadOptions opt;
  opt.tokenizer = &tok;
  auto digraphs = parse_parallel({"w"}, {"ngabn"}, opt);
  CHECK(digraphs[0].target_units == std::vector<std::string>{"ng", "a", "b", "n"});
  CHECK_THROWS_AS(parse_parallel({"w"}, {"ngx"}, opt), DataError);
}

TEST_CASE("malformed corpora name the offending line") {
  auto message = [](auto&& fn) {
    try {
      fn();
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message([] { parse_parallel({"a", "b"}, {"x"}); }).find("mismatch") != std::string::npos);
  CHECK(message([] { parse_parallel({"a", ""}, {"x", "y"}); }).find("line 2") != std::string::npos);
  CHECK(message([] { parse_parallel({"a", "b"}, {"x", "  "}); }).find("target line 2") != std::string::npos);
  CHECK(message([] { parse_parallel({"a", "b\xff"}, {"x", "y"}); }).find("source line 2") !=
        std::string::npos);
  CHECK(message([] { parse_parallel({"a"}, {"x y"}); }).find("whitespace") != std::string::npos);
}

TEST_CASE("utf8 helpers") {
  CHECK(utf8_length("abc") == 3);
  CHECK(utf8_length("ɛ́") == 2);
  CHECK_FALSE(utf8_scalars("\xc3").has_value());
  CHECK_FALSE(utf8_scalars("\xc0\xaf").has_value());  // overlong
  CHECK_THROWS_AS(utf8_length("\xe2\x82"), DataError);
}

TEST_CASE("file loading strips carriage returns") {
  const auto dir = std::filesystem::temp_directory_path() / "attseg_corpus_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "src.txt") << "il mange\r\nelle dort\r\n";
    std::ofstream(dir / "tgt.txt") << "ab c\r\nde\r\n";
  }
  LoadOptions opt;
  opt.gold = true;
  auto pairs = load_parallel(dir / "src.txt", dir / "tgt.txt", opt);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].source_words == std::vector<std::string>{"il", "mange"});
  CHECK(pairs[1].target_units == units_of("de"));
  CHECK_THROWS_AS(load_parallel(dir / "missing.txt", dir / "tgt.txt"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("vocabularies by first occurrence") {
  auto pairs = parse_parallel({"a b", "b c"}, {"ab", "ba"});
  const Vocabularies v = build_vocabularies(pairs);
  CHECK(v.source.size() == Vocabulary::reserved + 3);
  CHECK(v.source.lookup("a") == 4);
  CHECK(v.source.lookup("b") == 5);
  CHECK(v.source.lookup("c") == 6);
  CHECK(v.target.size() == Vocabulary::reserved + 2);
  CHECK(v.target.symbol(4) == "a");
  CHECK(v.target.lookup("zz") == Vocabulary::unk);
  CHECK_FALSE(v.target.contains("zz"));
  CHECK_THROWS_AS(v.target.symbol(99), DataError);
}

TEST_CASE("encoding adds EOS and BOS and counts unknowns") {
  auto train = parse_parallel({"a b"}, {"xy"});
  const Vocabularies v = build_vocabularies(train);
  auto test = parse_parallel({"a q"}, {"xz"});
  EncodeStats stats;
  auto enc = encode_corpus(test, v, &stats);
  REQUIRE(enc.size() == 1);
  CHECK(enc[0].source == std::vector<int>{4, Vocabulary::unk, Vocabulary::eos});
  CHECK(enc[0].target == std::vector<int>{Vocabulary::bos, 4, Vocabulary::unk, Vocabulary::eos});
  CHECK(enc[0].source_len() == 3);
  CHECK(enc[0].target_steps() == 3);
  CHECK(enc[0].source_lengths == std::vector<int>{1, 1, 1});
  CHECK(stats.source_unknown == 1);
  CHECK(stats.target_unknown == 1);
}

TEST_CASE("batch padding and masks") {
  auto pairs = parse_parallel({"a b c d", "a b"}, {"abcd", "ab"});
  const auto enc = encode_corpus(pairs, build_vocabularies(pairs));
  const std::size_t rows[] = {0, 1};
  const Batch b = make_batch(enc, rows);
  CHECK(b.size() == 2);
  CHECK(b.max_source() == 5);
  CHECK(b.max_steps() == 5);
  // Second row: I = 3 (a, b, EOS) padded to 5.
  Matrix expected(1, 5);
  expected << 1, 1, 1, 0, 0;
  CHECK(b.target_mask.row(1) == expected);
  CHECK(b.source_mask.row(1) == expected);
  CHECK(b.target.at(1, 0) == Vocabulary::bos);
  CHECK(b.target.at(1, 3) == Vocabulary::eos);
  CHECK(b.target.at(1, 4) == Vocabulary::pad);
  CHECK(b.source_word_lengths(1, 2) == 1.0);
  CHECK(b.source_word_lengths(1, 3) == 0.0);
  for (int r = 0; r < b.size(); ++r) {
    CHECK(b.target_mask.row(r).sum() == b.target_lengths[static_cast<std::size_t>(r)]);
    CHECK(b.source_mask.row(r).sum() == b.source_lengths[static_cast<std::size_t>(r)]);
  }
}

TEST_CASE("epoch batches") {
  std::vector<std::string> src, tgt;
  std::mt19937 gen(4);
  std::uniform_int_distribution<int> len(1, 9);
  for (int i = 0; i < 37; ++i) {
    src.push_back("w" + std::to_string(i % 5) + " v");
    tgt.push_back(std::string(static_cast<std::size_t>(len(gen)), 'a'));
  }
  auto pairs = parse_parallel(src, tgt);
  const auto enc = encode_corpus(pairs, build_vocabularies(pairs));

  SUBCASE("chunk sizes") {
    std::vector<EncodedPair> five(enc.begin(), enc.begin() + 5);
    auto batches = epoch_batches(five, 2, 1, 1);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 2);
    CHECK(batches[1].size() == 2);
    CHECK(batches[2].size() == 1);
  }
  SUBCASE("deterministic per seed and epoch, different across epochs") {
    auto ids = [&](int epoch) {
      std::vector<std::size_t> out;
      for (const auto& b : epoch_batches(enc, 8, 42, epoch)) out.insert(out.end(), b.ids.begin(), b.ids.end());
      return out;
    };
    CHECK(ids(3) == ids(3));
    CHECK(ids(3) != ids(4));
  }
  SUBCASE("each epoch partitions the corpus, sorted by length") {
    for (int epoch = 1; epoch <= 5; ++epoch) {
      std::multiset<std::size_t> seen;
      int prev_len = 0;
      for (const auto& b : epoch_batches(enc, 6, 9, epoch)) {
        for (std::size_t r = 0; r < b.ids.size(); ++r) {
          seen.insert(b.ids[r]);
          CHECK(b.target_lengths[r] >= prev_len);
          prev_len = b.target_lengths[r];
        }
      }
      CHECK(seen.size() == enc.size());
      CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == enc.size());
    }
  }
  CHECK_THROWS_AS(epoch_batches(enc, 0, 1, 1), UsageError);
}

TEST_CASE("gold round trip through boundaries") {
  const std::vector<std::string> lines = {"ab c de", "abc", "a b c", "ɛb à"};
  auto pairs = gold_corpus({"x", "x", "x", "x"}, lines);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    CHECK(join_with_boundaries(pairs[i].target_units, *pairs[i].gold_boundaries) == lines[i]);
  }
}

}  // TEST_SUITE
