#include "attseg/errors.hpp"
#include "attseg/synth.hpp"
#include "attseg/training.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace attseg;

namespace {

HyperParams tiny_hp() {
  HyperParams hp;
  hp.embedding_dim = 6;
  hp.encoder_hidden = 5;
  hp.decoder_hidden = 7;
  hp.attention_hidden = 4;
  hp.dropout_rate = 0.0;
  hp.epochs = 4;
  hp.wait = 2;
  hp.batch_size = 2;
  return hp;
}

Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Matrix random_stochastic(int I, int J, Rng& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Matrix m(I, J);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  for (int i = 0; i < I; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

// Straight from the definition, one term at a time.
double aux_oracle(const Matrix& A, double r) {
  double dots = 0.0;
  for (Eigen::Index i = 0; i + 1 < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) dots += A(i, j) * A(i + 1, j);
  }
  const double x = static_cast<double>(A.rows()) - r * static_cast<double>(A.cols()) - dots;
  return std::sqrt(x * x + 0.001);
}

struct Toy {
  std::vector<SentencePair> pairs;
  Vocabularies vocab;
  std::vector<EncodedPair> encoded;
  Toy(const std::vector<std::string>& src, const std::vector<std::string>& tgt)
      : pairs(parse_parallel(src, tgt)), vocab(build_vocabularies(pairs)),
        encoded(encode_corpus(pairs, vocab)) {}
};

void scramble(Model& m, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& p : m.params) p.value = p.value.unaryExpr([&](double) { return d(rng); });
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("auxiliary loss closed forms") {
  const double floor = std::sqrt(0.001);
  CHECK(std::abs(aux_loss(Matrix::Identity(3, 3), 1.0) - floor) < 1e-12);
  CHECK(std::abs(aux_loss(Matrix::Ones(4, 1), 1.0) - floor) < 1e-12);
  CHECK(std::abs(aux_loss(rows_of({{1, 0}, {1, 0}, {0, 1}}), 1.0) - floor) < 1e-12);
  CHECK(std::abs(aux_loss(rows_of({{1, 0}, {0, 1}, {1, 0}}), 1.0) - std::sqrt(1.001)) < 1e-12);
  CHECK(aux_loss(rows_of({{1, 0}, {0, 1}, {1, 0}}), 1.0) == doctest::Approx(1.0005).epsilon(1e-4));
  CHECK(std::abs(aux_loss(Matrix::Identity(3, 3), 2.0) - std::sqrt(9.001)) < 1e-12);
  CHECK_THROWS_AS(aux_loss(Matrix(0, 3), 1.0), NumericError);
}

TEST_CASE("auxiliary loss bounds on random matrices") {
  Rng rng(31);
  std::uniform_int_distribution<int> dim(1, 12);
  for (int trial = 0; trial < 300; ++trial) {
    const int I = dim(rng), J = dim(rng);
    const Matrix A = random_stochastic(I, J, rng);
    const double overlap = consecutive_row_overlap(A);
    CHECK(overlap >= 0.0);
    CHECK(overlap <= I - 1 + 1e-12);
    const double boundaries = I - overlap;
    CHECK(boundaries >= 1.0 - 1e-12);
    CHECK(boundaries <= I);
    CHECK(aux_loss(A, 1.0) >= 0.0);
    CHECK(std::abs(aux_loss(A, 1.0) - aux_oracle(A, 1.0)) < 1e-12);
    // At the balance point the loss is exactly its floor.
    const double r = (I - overlap) / J;
    CHECK(aux_loss(A, r) == doctest::Approx(std::sqrt(0.001)).epsilon(1e-9));
  }
}

TEST_CASE("batched auxiliary loss is the per-sentence mean") {
  const Toy toy({"a b c", "d e", "a"}, {"xyzxy", "yy", "zxyzxxy"});
  HyperParams hp = tiny_hp();
  for (AttentionMode mode : {AttentionMode::plain, AttentionMode::length_bias}) {
    hp.attention_mode = mode;
    Model m = init_parameters(hp, toy.vocab, 1);
    scramble(m, 2);
    const std::size_t rows[] = {0, 1, 2};
    const Batch b = make_batch(toy.encoded, rows);
    for (double r : {1.0, 2.0, 0.7}) {
      Graph g;
      Rng rng(0);
      const ForwardResult fwd = forward_teacher_forced(g, m, b, false, rng);
      double expected = 0.0;
      for (int row = 0; row < b.size(); ++row) expected += aux_oracle(attention_matrix(fwd, b, row), r);
      expected /= b.size();
      CHECK(std::abs(aux_loss(g, fwd, b, r).scalar() - expected) < 1e-12);
    }
  }
}

TEST_CASE("nll is a token mean that ignores padding") {
  const Toy toy({"a b c", "d e", "a"}, {"xyzxy", "yy", "z"});
  Model m = init_parameters(tiny_hp(), toy.vocab, 1);
  scramble(m, 3);
  auto nll_sum = [&](std::vector<std::size_t> rows) {
    const Batch b = make_batch(toy.encoded, rows);
    Graph g;
    Rng rng(0);
    const ForwardResult fwd = forward_teacher_forced(g, m, b, false, rng);
    return nll_loss(g, fwd, b).scalar() * b.target_mask.sum();
  };
  const double together = nll_sum({0, 1, 2});
  const double apart = nll_sum({0}) + nll_sum({1}) + nll_sum({2});
  CHECK(together == doctest::Approx(apart).epsilon(1e-12));

  m.params.at("out.W_o").value.setZero();
  m.params.at("out.b_o").value.setZero();
  const std::size_t rows[] = {0, 1, 2};
  const Batch b = make_batch(toy.encoded, rows);
  Graph g;
  Rng rng(0);
  const ForwardResult fwd = forward_teacher_forced(g, m, b, false, rng);
  CHECK(nll_loss(g, fwd, b).scalar() ==
        doctest::Approx(std::log(static_cast<double>(m.target_vocab_size()))).epsilon(1e-14));
}

TEST_CASE("lambda schedule") {
  CHECK(lambda_aux(100, 200, 800) == 0.0);
  CHECK(lambda_aux(600, 200, 800) == 0.5);
  CHECK(lambda_aux(800, 200, 800) == 0.75);
  double prev = 0.0;
  for (int k = 1; k <= 800; ++k) {
    const double l = lambda_aux(k, 200, 800);
    CHECK(l >= prev);
    if (k <= 200) CHECK(l == 0.0);
    CHECK(l <= 600.0 / 800.0);
    prev = l;
  }
}

TEST_CASE("adam") {
  ParameterStore store;
  Parameter& w = store.add("w", Matrix::Constant(2, 3, 0.5));
  Parameter& z = store.add("z", Matrix::Constant(1, 2, -1.0));
  OptimizerState state;
  const AdamConfig cfg{0.01};

  SUBCASE("first step moves each entry by about lr against the gradient") {
    w.grad = Matrix::Constant(2, 3, 3.0);
    w.grad(1, 2) = -1e-3;
    z.grad = Matrix::Zero(1, 2);
    adam_step(store, state, cfg);
    CHECK(w.value(0, 0) == doctest::Approx(0.5 - 0.01).epsilon(1e-9));
    CHECK(w.value(1, 2) == doctest::Approx(0.5 + 0.01).epsilon(1e-6));
    CHECK(z.value == Matrix::Constant(1, 2, -1.0));
    CHECK(state.step == 1);
  }
  SUBCASE("matches an independent implementation over several steps") {
    Rng rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    double value = 0.5, m1 = 0.0, m2 = 0.0;
    for (int t = 1; t <= 6; ++t) {
      const double grad = n(rng);
      w.grad = Matrix::Constant(2, 3, grad);
      z.grad = Matrix::Zero(1, 2);
      adam_step(store, state, cfg);
      m1 = 0.9 * m1 + 0.1 * grad;
      m2 = 0.999 * m2 + 0.001 * grad * grad;
      const double mhat = m1 / (1.0 - std::pow(0.9, t));
      const double vhat = m2 / (1.0 - std::pow(0.999, t));
      value -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
      CHECK(w.value(0, 0) == doctest::Approx(value).epsilon(1e-13));
    }
  }
  SUBCASE("non-finite gradient names the parameter") {
    w.grad = Matrix::Zero(2, 3);
    z.grad = Matrix::Zero(1, 2);
    z.grad(0, 1) = std::nan("");
    try {
      adam_step(store, state, cfg);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("'z'") != std::string::npos);
    }
  }
}

TEST_CASE("training modes and determinism") {
  const Toy toy({"a b", "c", "a c", "b b c"}, {"xyzz", "w", "xyw", "zzzzw"});
  HyperParams hp = tiny_hp();

  SUBCASE("base: no auxiliary weight") {
    const TrainResult r = train_encoded(toy.encoded, toy.vocab, hp);
    REQUIRE(r.log.size() == 4);
    for (const auto& row : r.log) {
      CHECK(row.lambda_aux == 0.0);
      CHECK(row.total == row.nll);
    }
  }
  SUBCASE("aux: total equals nll until the wait is over") {
    hp.loss_mode = LossMode::aux;
    hp.dropout_rate = 0.3;
    const TrainResult r = train_encoded(toy.encoded, toy.vocab, hp);
    for (const auto& row : r.log) {
      CHECK(row.aux > 0.0);
      if (row.epoch <= hp.wait) {
        CHECK(row.lambda_aux == 0.0);
        CHECK(row.total == row.nll);
      } else {
        CHECK(row.lambda_aux == lambda_aux(row.epoch, hp.wait, hp.epochs));
      }
    }
  }
  SUBCASE("same seed, same trajectory") {
    hp.loss_mode = LossMode::aux_ratio;
    hp.ratio = 1.5;
    hp.dropout_rate = 0.5;
    const TrainResult a = train_encoded(toy.encoded, toy.vocab, hp);
    const TrainResult b = train_encoded(toy.encoded, toy.vocab, hp);
    for (const auto& p : a.model.params) CHECK(b.model.params.at(p.name).value == p.value);
    hp.seed = 2;
    const TrainResult c = train_encoded(toy.encoded, toy.vocab, hp);
    CHECK(c.model.params.at("att.W_a").value != a.model.params.at("att.W_a").value);
  }
  SUBCASE("callback can stop early") {
    int calls = 0;
    const TrainResult r = train_encoded(toy.encoded, toy.vocab, hp, [&](const LossBreakdown&) {
      return ++calls < 2;
    });
    CHECK(r.log.size() == 2);
  }
  SUBCASE("divergence reports epoch and batch") {
    hp.learning_rate = 1e308;
    hp.epochs = 20;
    try {
      train_encoded(toy.encoded, toy.vocab, hp);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch ") != std::string::npos);
      CHECK(msg.find("batch ") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(train_encoded({}, toy.vocab, hp), DataError);
}

TEST_CASE("training reduces NLL on a learnable synthetic corpus") {
  SynthOptions opt;
  opt.sentences = 40;
  opt.source_vocab_size = 6;
  opt.max_words = 4;
  opt.seed = 5;
  const SynthCorpus c = make_synthetic_corpus(opt);
  LoadOptions lo;
  lo.gold = true;
  const auto pairs = parse_parallel(c.source_lines, c.target_lines, lo);
  HyperParams hp = tiny_hp();
  hp.epochs = 200;
  hp.wait = 0;
  hp.batch_size = 16;
  hp.learning_rate = 0.01;
  const TrainResult r = train(pairs, hp);
  CHECK(r.log[199].nll < r.log[0].nll);
  CHECK(r.log[199].nll < 0.5 * r.log[0].nll);
}

TEST_CASE("loss log and length ratio") {
  std::ostringstream out;
  write_loss_log(out, {{1, 2.5, 0.25, 0.0, 2.5}, {2, 2.0, 0.5, 0.125, 2.0625}});
  CHECK(out.str() == "1\t2.5\t0.25\t0\t2.5\n2\t2\t0.5\t0.125\t2.0625\n");

  LoadOptions lo;
  lo.gold = true;
  const auto pairs = parse_parallel({"a b", "c d e", "f"}, {"x y z", "xy", "x y z w"}, lo);
  CHECK(length_ratio(pairs) == doctest::Approx(8.0 / 6.0));
  CHECK(length_ratio(pairs, 2) == doctest::Approx(4.0 / 5.0));
  CHECK(length_ratio(pairs, 100, true) == doctest::Approx(11.0 / 9.0));
  CHECK_THROWS_AS(length_ratio(parse_parallel({"a"}, {"x"})), DataError);
  CHECK_THROWS_AS(length_ratio({}), DataError);
}

}  // TEST_SUITE
