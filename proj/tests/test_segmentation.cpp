#include "attseg/errors.hpp"
#include "attseg/segmentation.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

using namespace attseg;

namespace {

AttentionMatrix matrix_of(std::size_t id, std::initializer_list<std::initializer_list<double>> rows) {
  AttentionMatrix a;
  a.id = id;
  a.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) a.weights(r, c++) = v;
    ++r;
  }
  return a;
}

std::vector<std::string> units_of(const std::string& s) {
  std::vector<std::string> out;
  for (char c : s) out.emplace_back(1, c);
  return out;
}

std::string strip_spaces(std::string s) {
  s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
  return s;
}

}  // namespace

TEST_SUITE("segmentation") {

TEST_CASE("align and boundaries on the worked examples") {
  // Trailing row stands for the EOS step and is ignored by align.
  const auto A = matrix_of(0, {{0.7, 0.3}, {0.6, 0.4}, {0.2, 0.8}, {0.0, 1.0}});
  CHECK(align(A) == std::vector<int>{0, 0, 1});
  CHECK(boundaries_from_alignment(align(A)) == std::vector<int>{2});

  CHECK(argmax_rows(matrix_of(0, {{0.5, 0.5}}).weights) == std::vector<int>{0});
  CHECK(align(matrix_of(0, {{1.0}, {1.0}, {1.0}})) == std::vector<int>{0, 0});

  CHECK(boundaries_from_alignment({0, 0, 0, 0}).empty());
  CHECK(boundaries_from_alignment({2, 0, 1}) == std::vector<int>{1, 2});
  CHECK(boundaries_from_alignment({5}).empty());
}

TEST_CASE("spans and text") {
  SegmentedSentence s;
  s.units = units_of("abc");
  s.boundaries = {2};
  CHECK(s.spans() == std::vector<std::pair<int, int>>{{0, 2}, {2, 3}});
  CHECK(s.tokens() == std::vector<std::string>{"ab", "c"});
  CHECK(s.text() == "ab c");
  const auto back = SegmentedSentence::from_spans(s.units, s.spans());
  CHECK(back.boundaries == s.boundaries);
}

TEST_CASE("segment_corpus") {
  const auto pairs = parse_parallel({"a b", "c d e"}, {"abc", "xyzw"});
  const std::vector<AttentionMatrix> mats = {
      matrix_of(0, {{0.7, 0.2, 0.1}, {0.6, 0.3, 0.1}, {0.2, 0.7, 0.1}, {0, 0, 1}}),
      matrix_of(1, {{0, 0, 0, 1}, {0, 0, 0, 1}, {0, 0, 0, 1}, {0, 0, 0, 1}, {0, 0, 0, 1}}),
  };
  const auto seg = segment_corpus(pairs, mats);
  REQUIRE(seg.size() == 2);
  CHECK(seg[0].text() == "ab c");
  CHECK(seg[1].text() == "xyzw");
  for (std::size_t n = 0; n < seg.size(); ++n) {
    CHECK(strip_spaces(seg[n].text()) == join_with_boundaries(pairs[n].target_units, {}));
    CHECK(seg[n].tokens().size() == 1 + seg[n].boundaries.size());
  }

  auto wrong_id = mats;
  wrong_id[1].id = 7;
  CHECK_THROWS_AS(segment_corpus(pairs, wrong_id), DataError);
  auto wrong_shape = mats;
  wrong_shape[0].weights = Matrix::Ones(2, 3);
  CHECK_THROWS_AS(segment_corpus(pairs, wrong_shape), DataError);
  CHECK_THROWS_AS(segment_corpus(pairs, {mats[0]}), DataError);
}

TEST_CASE("random matrices agree with an exhaustive change-point scan") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dimI(1, 20), dimJ(1, 10), grid(0, 4);
  for (int trial = 0; trial < 500; ++trial) {
    const int I = dimI(rng), J = dimJ(rng);
    AttentionMatrix a;
    a.weights.resize(I, J);
    // Coarse values make ties common.
    for (Eigen::Index k = 0; k < a.weights.size(); ++k) a.weights.data()[k] = grid(rng) + 1;
    for (int i = 0; i < I; ++i) a.weights.row(i) /= a.weights.row(i).sum();

    std::vector<int> oracle_a;
    for (int i = 0; i + 1 < I; ++i) {
      double best = -1.0;
      for (int j = 0; j < J; ++j) best = std::max(best, a.weights(i, j));
      int first = 0;
      while (a.weights(i, first) != best) ++first;
      oracle_a.push_back(first);
    }
    std::set<int> oracle_b;
    for (std::size_t p = 0; p + 1 < oracle_a.size(); ++p) {
      if (oracle_a[p] != oracle_a[p + 1]) oracle_b.insert(static_cast<int>(p) + 1);
    }
    const auto got = boundaries_from_alignment(align(a));
    CHECK(align(a) == oracle_a);
    CHECK(std::set<int>(got.begin(), got.end()) == oracle_b);
    CHECK(std::is_sorted(got.begin(), got.end()));
    CHECK(got.size() + 1 <= std::max<std::size_t>(1, oracle_a.size()));
  }
}

TEST_CASE("force decoding returns one matrix per pair in corpus order") {
  const auto pairs = parse_parallel({"a b", "c", "a b c d", "d"}, {"xy", "z", "xyzzy", "w"});
  const Vocabularies vocab = build_vocabularies(pairs);
  const auto enc = encode_corpus(pairs, vocab);
  HyperParams hp;
  hp.embedding_dim = 4;
  hp.encoder_hidden = 3;
  hp.decoder_hidden = 5;
  hp.attention_hidden = 4;
  for (AttentionMode mode : {AttentionMode::plain, AttentionMode::length_bias}) {
    hp.attention_mode = mode;
    Model m = init_parameters(hp, vocab, 2);
    Rng rng(3);
    std::uniform_real_distribution<double> d(-1.5, 1.5);
    for (auto& p : m.params) p.value = p.value.unaryExpr([&](double) { return d(rng); });

    const auto batched = force_decode_corpus(m, enc, 3);
    const auto single = force_decode_corpus(m, enc, 1);
    REQUIRE(batched.size() == pairs.size());
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      CHECK(batched[n].id == n);
      CHECK(batched[n].rows() == enc[n].target_steps());
      CHECK(batched[n].cols() == enc[n].source_len());
      CHECK((batched[n].weights - single[n].weights).cwiseAbs().maxCoeff() <= 1e-12);
    }
    const auto seg = segment_corpus(pairs, batched);
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      CHECK(strip_spaces(seg[n].text()) == strip_spaces(join_with_boundaries(pairs[n].target_units, {})));
    }
  }
  Model m = init_parameters(hp, vocab, 2);
  CHECK_THROWS_AS(force_decode_corpus(m, enc, 0), UsageError);
}

TEST_CASE("attention dump round trip") {
  std::vector<AttentionMatrix> mats = {matrix_of(0, {{0.1, 0.9}, {1.0 / 3.0, 2.0 / 3.0}}),
                                       matrix_of(1, {{1.0}})};
  std::stringstream ss;
  write_attention_dump(ss, mats);
  CHECK(ss.str().rfind("# 0 2 2\n", 0) == 0);
  const auto back = read_attention_dump(ss);
  REQUIRE(back.size() == 2);
  for (std::size_t n = 0; n < 2; ++n) {
    CHECK(back[n].id == mats[n].id);
    CHECK(back[n].weights == mats[n].weights);
  }
  std::istringstream bad("# 0 2 2\n0.5\t0.5\n");
  CHECK_THROWS_AS(read_attention_dump(bad), DataError);
  std::istringstream junk("# 0 1 2\n0.5\tx\n");
  CHECK_THROWS_AS(read_attention_dump(junk), DataError);
}

}  // TEST_SUITE
