#include "attseg/model.hpp"

#include "attseg/errors.hpp"
#include "attseg/text.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace attseg {

// ---------------------------------------------------------------------------
// HyperParams

const char* to_string(AttentionMode m) {
  return m == AttentionMode::plain ? "plain" : "length_bias";
}

const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::base: return "base";
    case LossMode::aux: return "aux";
    case LossMode::aux_ratio: return "aux_ratio";
  }
  return "?";
}

AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "plain") return AttentionMode::plain;
  if (s == "length_bias") return AttentionMode::length_bias;
  throw UsageError("unknown attention_mode '" + s + "' (expected plain or length_bias)");
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "base") return LossMode::base;
  if (s == "aux") return LossMode::aux;
  if (s == "aux_ratio") return LossMode::aux_ratio;
  throw UsageError("unknown loss_mode '" + s + "' (expected base, aux or aux_ratio)");
}

void HyperParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("invalid hyperparameters: ") + what);
  };
  require(embedding_dim >= 1 && encoder_hidden >= 1 && decoder_hidden >= 1 &&
              attention_hidden >= 1,
          "all dimensions must be >= 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0, 1)");
  require(temperature > 0.0, "temperature must be > 0");
  require(epochs >= 1, "epochs must be >= 1");
  require(wait >= 0 && wait <= epochs, "wait must be in [0, epochs]");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(ratio > 0.0, "ratio must be > 0");
}

std::vector<std::pair<std::string, std::string>> HyperParams::to_pairs() const {
  return {
      {"embedding_dim", std::to_string(embedding_dim)},
      {"encoder_hidden", std::to_string(encoder_hidden)},
      {"decoder_hidden", std::to_string(decoder_hidden)},
      {"attention_hidden", std::to_string(attention_hidden)},
      {"dropout_rate", format_double(dropout_rate)},
      {"temperature", format_double(temperature)},
      {"attention_mode", to_string(attention_mode)},
      {"epochs", std::to_string(epochs)},
      {"wait", std::to_string(wait)},
      {"batch_size", std::to_string(batch_size)},
      {"learning_rate", format_double(learning_rate)},
      {"loss_mode", to_string(loss_mode)},
      {"ratio", format_double(ratio)},
      {"seed", std::to_string(seed)},
  };
}

bool HyperParams::set(const std::string& key, const std::string& value) {
  if (key == "embedding_dim") embedding_dim = parse_int<int>(value, key);
  else if (key == "encoder_hidden") encoder_hidden = parse_int<int>(value, key);
  else if (key == "decoder_hidden") decoder_hidden = parse_int<int>(value, key);
  else if (key == "attention_hidden") attention_hidden = parse_int<int>(value, key);
  else if (key == "dropout_rate") dropout_rate = parse_double(value, key);
  else if (key == "temperature") temperature = parse_double(value, key);
  else if (key == "attention_mode") attention_mode = parse_attention_mode(value);
  else if (key == "epochs") epochs = parse_int<int>(value, key);
  else if (key == "wait") wait = parse_int<int>(value, key);
  else if (key == "batch_size") batch_size = parse_int<int>(value, key);
  else if (key == "learning_rate") learning_rate = parse_double(value, key);
  else if (key == "loss_mode") loss_mode = parse_loss_mode(value);
  else if (key == "ratio") ratio = parse_double(value, key);
  else if (key == "seed") seed = parse_int<std::uint64_t>(value, key);
  else return false;
  return true;
}

// ---------------------------------------------------------------------------
// Initialization

double glorot_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {

Matrix uniform(int rows, int cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix normal(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix glorot(int rows, int cols, Rng& rng) { return uniform(rows, cols, glorot_bound(rows, cols), rng); }

void add_gru(ParameterStore& store, const std::string& prefix, int input, int hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (const char* gate : {"z", "r", "n"}) {
    store.add(prefix + ".W_" + gate, uniform(input, hidden, bound, rng));
    store.add(prefix + ".U_" + gate, uniform(hidden, hidden, bound, rng));
    store.add(prefix + ".b_" + gate, Matrix::Zero(1, hidden));
  }
}

struct GruParams {
  Var W_z, U_z, b_z, W_r, U_r, b_r, W_n, U_n, b_n;
};

GruParams gru_params(Graph& g, ParameterStore& store, const std::string& prefix) {
  auto p = [&](const char* n) { return g.param(store.at(prefix + n)); };
  return {p(".W_z"), p(".U_z"), p(".b_z"), p(".W_r"), p(".U_r"),
          p(".b_r"), p(".W_n"), p(".U_n"), p(".b_n")};
}

// z = s(xW_z + hU_z + b_z), r = s(xW_r + hU_r + b_r),
// n = tanh(xW_n + b_n + r * hU_n), h' = n + z * (h - n).
Var gru_cell(const GruParams& p, Var x, Var h) {
  Var z = sigmoid(add(add(matmul(x, p.W_z), matmul(h, p.U_z)), p.b_z));
  Var r = sigmoid(add(add(matmul(x, p.W_r), matmul(h, p.U_r)), p.b_r));
  Var n = tanh(add(add(matmul(x, p.W_n), p.b_n), mul(r, matmul(h, p.U_n))));
  return add(n, mul(z, sub(h, n)));
}

Var embed(Graph& g, Model& model, const char* table, const IndexGrid& grid, int col,
          bool training, Rng& rng) {
  const std::vector<int> ids = grid.column(col);
  Var e = gather_rows(g.param(model.params.at(table)), ids);
  return training ? dropout(e, model.hp.dropout_rate, rng) : e;
}

}  // namespace

Model init_parameters(const HyperParams& hp, Vocabularies vocab, std::uint64_t seed) {
  hp.validate();
  Model m;
  m.hp = hp;
  m.vocab = std::move(vocab);
  Rng rng(seed);
  const int E = hp.embedding_dim;
  const int H = hp.encoder_hidden;
  const int D = hp.decoder_hidden;
  const int A = hp.attention_hidden;
  const int Vs = m.source_vocab_size();
  const int Vt = m.target_vocab_size();
  auto& s = m.params;

  s.add("src_emb", normal(Vs, E, 0.1, rng));
  s.add("tgt_emb", normal(Vt, E, 0.1, rng));
  add_gru(s, "enc_fwd", E, H, rng);
  add_gru(s, "enc_bwd", E, H, rng);
  s.add("bridge.W", glorot(H, D, rng));
  s.add("bridge.b", Matrix::Zero(1, D));
  s.add("att.W_a", glorot(D, A, rng));
  s.add("att.U_a", glorot(2 * H, A, rng));
  s.add("att.v_a", glorot(A, 1, rng));
  add_gru(s, "dec", E + 2 * H, D, rng);
  s.add("out.W_h", glorot(E + D + 2 * H, D, rng));
  s.add("out.b_h", Matrix::Zero(1, D));
  s.add("out.W_o", glorot(D, Vt, rng));
  s.add("out.b_o", Matrix::Zero(1, Vt));
  return m;
}

// ---------------------------------------------------------------------------
// Forward computation

EncoderStates encode(Graph& g, Model& model, const Batch& batch, bool training, Rng& rng) {
  const int B = batch.size();
  const int J = batch.max_source();
  const int H = model.hp.encoder_hidden;

  std::vector<Var> inputs;
  inputs.reserve(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) inputs.push_back(embed(g, model, "src_emb", batch.source, j, training, rng));

  const GruParams fwd = gru_params(g, model.params, "enc_fwd");
  const GruParams bwd = gru_params(g, model.params, "enc_bwd");
  const Var zero = g.constant(Matrix::Zero(B, H));

  std::vector<Var> forward_states(static_cast<std::size_t>(J));
  Var h = zero;
  for (int j = 0; j < J; ++j) {
    h = gru_cell(fwd, inputs[static_cast<std::size_t>(j)], h);
    forward_states[static_cast<std::size_t>(j)] = h;
  }

  // Right-to-left: rows keep the zero state until their first real position.
  std::vector<Var> backward_states(static_cast<std::size_t>(J));
  h = zero;
  for (int j = J - 1; j >= 0; --j) {
    const Var next = gru_cell(bwd, inputs[static_cast<std::size_t>(j)], h);
    h = where_rows(batch.source_mask.col(j), next, h);
    backward_states[static_cast<std::size_t>(j)] = h;
  }

  EncoderStates enc;
  enc.mask = batch.source_mask;
  enc.word_lengths = batch.source_word_lengths;
  enc.backward_first = backward_states[0];
  const Var U_a = g.param(model.params.at("att.U_a"));
  for (int j = 0; j < J; ++j) {
    const Var parts[] = {forward_states[static_cast<std::size_t>(j)],
                         backward_states[static_cast<std::size_t>(j)]};
    Var state = concat_cols(parts);
    enc.states.push_back(state);
    enc.keys.push_back(matmul(state, U_a));
  }
  return enc;
}

AttentionOutput attend(Graph& g, Model& model, Var s_prev, const EncoderStates& enc) {
  const Var W_a = g.param(model.params.at("att.W_a"));
  const Var v_a = g.param(model.params.at("att.v_a"));
  const Var query = matmul(s_prev, W_a);

  std::vector<Var> energies;
  energies.reserve(enc.keys.size());
  for (const Var& key : enc.keys) energies.push_back(matmul(tanh(add(key, query)), v_a));
  Var e = concat_cols(energies);
  if (model.hp.temperature != 1.0) e = scale(e, 1.0 / model.hp.temperature);

  Var weights = masked_softmax(e, enc.mask);
  if (model.hp.attention_mode == AttentionMode::length_bias) {
    weights = row_normalize(mul(weights, g.constant(enc.word_lengths)));
  }

  Var context;
  for (std::size_t j = 0; j < enc.states.size(); ++j) {
    const Var term = mul(enc.states[j], column(weights, static_cast<Eigen::Index>(j)));
    context = context.valid() ? add(context, term) : term;
  }
  return {weights, context};
}

DecodeOutput decode_step(Graph& g, Model& model, Var prev_embedding, Var s_prev, Var context,
                         Var current_embedding, bool update_state) {
  auto p = [&](const char* n) { return g.param(model.params.at(n)); };
  const Var features[] = {prev_embedding, s_prev, context};
  const Var hidden = tanh(add(matmul(concat_cols(features), p("out.W_h")), p("out.b_h")));
  const Var logits = add(matmul(hidden, p("out.W_o")), p("out.b_o"));
  if (!update_state) return {logits, s_prev};
  const Var input[] = {current_embedding, context};
  const Var next = gru_cell(gru_params(g, model.params, "dec"), concat_cols(input), s_prev);
  return {logits, next};
}

ForwardResult forward_teacher_forced(Graph& g, Model& model, const Batch& batch, bool training,
                                     Rng& rng) {
  const EncoderStates enc = encode(g, model, batch, training, rng);
  const int steps = batch.max_steps();

  std::vector<Var> embeddings;
  for (int k = 0; k <= steps; ++k) {
    embeddings.push_back(embed(g, model, "tgt_emb", batch.target, k, training, rng));
  }

  Var s = tanh(add(matmul(enc.backward_first, g.param(model.params.at("bridge.W"))),
                   g.param(model.params.at("bridge.b"))));
  ForwardResult out;
  for (int i = 1; i <= steps; ++i) {
    const AttentionOutput att = attend(g, model, s, enc);
    const DecodeOutput step =
        decode_step(g, model, embeddings[static_cast<std::size_t>(i - 1)], s, att.context,
                    embeddings[static_cast<std::size_t>(i)], i < steps);
    out.logits.push_back(step.logits);
    out.attention.push_back(att.weights);
    out.targets.push_back(batch.target.column(i));
    s = step.state;
  }
  return out;
}

Matrix attention_matrix(const ForwardResult& fwd, const Batch& batch, int row) {
  const int I = batch.target_lengths[static_cast<std::size_t>(row)];
  const int J = batch.source_lengths[static_cast<std::size_t>(row)];
  Matrix A(I, J);
  for (int i = 0; i < I; ++i) {
    A.row(i) = fwd.attention[static_cast<std::size_t>(i)].value().row(row).head(J);
  }
  return A;
}

// ---------------------------------------------------------------------------
// Model file

namespace {
constexpr const char* kModelMagic = "attseg-model";
constexpr int kModelVersion = 1;

void write_vocab(std::ostream& out, const char* side, const Vocabulary& v) {
  out << "vocab " << side << ' ' << (v.size() - Vocabulary::reserved) << '\n';
  for (std::size_t i = Vocabulary::reserved; i < v.size(); ++i) out << v.symbols()[i] << '\n';
}

Vocabulary read_vocab(std::istream& in, const char* side) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(std::string("model file: missing ") + side + " vocabulary");
  std::istringstream header(line);
  std::string tag, name;
  std::size_t count = 0;
  if (!(header >> tag >> name >> count) || tag != "vocab" || name != side) {
    throw DataError("model file: bad vocabulary header '" + line + "'");
  }
  Vocabulary v;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw DataError("model file: truncated vocabulary");
    v.add(line);
  }
  if (v.size() != count + Vocabulary::reserved) throw DataError("model file: duplicate vocabulary symbol");
  return v;
}
}  // namespace

void write_model(std::ostream& out, const Model& model) {
  out << kModelMagic << ' ' << kModelVersion;
  for (const auto& [k, v] : model.hp.to_pairs()) out << ' ' << k << '=' << v;
  out << '\n';
  write_vocab(out, "source", model.vocab.source);
  write_vocab(out, "target", model.vocab.target);
  for (const auto& p : model.params) {
    out << "param " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(p.value(r, c));
      }
      out << '\n';
    }
  }
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path.string());
  write_model(out, model);
  if (!out) throw DataError("error writing model file " + path.string());
}

Model read_model(std::istream& in) {
  Model m;
  std::string line;
  if (!std::getline(in, line)) throw DataError("model file: empty");
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  if (!(header >> magic >> version) || magic != kModelMagic) {
    throw DataError("model file: missing '" + std::string(kModelMagic) + "' header");
  }
  if (version != kModelVersion) {
    throw DataError("model file: unsupported version " + std::to_string(version));
  }
  std::string kv;
  try {
    while (header >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || !m.hp.set(kv.substr(0, eq), kv.substr(eq + 1))) {
        throw DataError("model file: bad header field '" + kv + "'");
      }
    }
    m.hp.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  m.vocab.source = read_vocab(in, "source");
  m.vocab.target = read_vocab(in, "target");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ph(line);
    std::string tag, name;
    Eigen::Index rows = 0, cols = 0;
    if (!(ph >> tag >> name >> rows >> cols) || tag != "param" || rows < 0 || cols < 0) {
      throw DataError("model file: bad parameter header '" + line + "'");
    }
    Matrix value(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw DataError("model file: truncated parameter " + name);
      std::string_view rest(line);
      for (Eigen::Index c = 0; c < cols; ++c) {
        const auto sp = rest.find(' ');
        const std::string_view tok = rest.substr(0, sp);
        double v = 0.0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
          throw DataError("model file: bad value in parameter " + name);
        }
        value(r, c) = v;
        rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
      }
      if (!rest.empty()) throw DataError("model file: extra values in parameter " + name);
    }
    try {
      m.params.add(name, std::move(value));
    } catch (const UsageError& e) {
      throw DataError(std::string("model file: ") + e.what());
    }
  }

  // Shapes must agree with a freshly initialized model.
  const Model shape = init_parameters(m.hp, m.vocab, 0);
  if (shape.params.size() != m.params.size()) throw DataError("model file: parameter set mismatch");
  for (const auto& p : shape.params) {
    if (!m.params.contains(p.name)) throw DataError("model file: missing parameter " + p.name);
    const auto& got = m.params.at(p.name).value;
    if (got.rows() != p.value.rows() || got.cols() != p.value.cols()) {
      throw DataError("model file: wrong shape for parameter " + p.name);
    }
  }
  return m;
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace attseg
