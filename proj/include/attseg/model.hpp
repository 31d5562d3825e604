#pragma once

// Attentional GRU encoder-decoder over source words and target units.
//
// Encoder: bidirectional GRU over dropped-out source embeddings; h_j is the
// concatenation of the forward and backward states at position j.
// Attention: e_ij = v^T tanh(W_a s_{i-1} + U_a h_j), alpha = masked softmax of
// e/T, optionally reweighted by source word length and renormalized.
// Decoder ("generate first"): logits_i = g(e(y_{i-1}), s_{i-1}, c_i), then
// s_i = GRU(s_{i-1}, [e(y_i), c_i]) with ground-truth y_i.

#include "attseg/corpus.hpp"
#include "attseg/gradcore.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace attseg {

enum class AttentionMode { plain, length_bias };
enum class LossMode { base, aux, aux_ratio };

const char* to_string(AttentionMode m);
const char* to_string(LossMode m);
AttentionMode parse_attention_mode(const std::string& s);
LossMode parse_loss_mode(const std::string& s);

struct HyperParams {
  int embedding_dim = 64;
  int encoder_hidden = 64;  // per direction
  int decoder_hidden = 64;
  int attention_hidden = 64;
  double dropout_rate = 0.5;
  double temperature = 1.0;
  AttentionMode attention_mode = AttentionMode::plain;
  int epochs = 800;
  int wait = 200;
  int batch_size = 64;
  double learning_rate = 0.001;
  LossMode loss_mode = LossMode::base;
  double ratio = 1.0;
  std::uint64_t seed = 1;

  // Throws UsageError naming the first violated constraint.
  void validate() const;

  // Ordered key/value view, shared by the model header and config files.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  // Sets one field from its textual key; returns false for unknown keys.
  bool set(const std::string& key, const std::string& value);
};

struct Model {
  HyperParams hp;
  Vocabularies vocab;
  ParameterStore params;

  int source_vocab_size() const { return static_cast<int>(vocab.source.size()); }
  int target_vocab_size() const { return static_cast<int>(vocab.target.size()); }
};

// Glorot-normalized uniform bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(int fan_in, int fan_out);

// Builds every named parameter. Embeddings ~ N(0, 0.1); GRU input and
// recurrent matrices ~ U(+-1/sqrt(hidden)); all other matrices Glorot
// uniform; biases zero.
Model init_parameters(const HyperParams& hp, Vocabularies vocab, std::uint64_t seed);

struct EncoderStates {
  std::vector<Var> states;  // one rows x 2H node per source position
  std::vector<Var> keys;    // U_a h_j, precomputed per position
  Var backward_first;       // right-to-left state at position 1
  Matrix mask;              // rows x J
  Matrix word_lengths;      // rows x J
};

EncoderStates encode(Graph& g, Model& model, const Batch& batch, bool training, Rng& rng);

struct AttentionOutput {
  Var weights;  // rows x J; biased weights in length_bias mode
  Var context;  // rows x 2H
};

AttentionOutput attend(Graph& g, Model& model, Var s_prev, const EncoderStates& enc);

struct DecodeOutput {
  Var logits;  // rows x target vocab
  Var state;   // s_i
};

// Output layer on (prev embedding, s_prev, context), then the GRU update with
// the current ground-truth embedding. With update_state false the returned
// state is s_prev.
DecodeOutput decode_step(Graph& g, Model& model, Var prev_embedding, Var s_prev, Var context,
                         Var current_embedding, bool update_state = true);

struct ForwardResult {
  std::vector<Var> logits;     // one rows x V node per decoding step
  std::vector<Var> attention;  // one rows x J node per decoding step
  std::vector<std::vector<int>> targets;  // per step, gold unit per row
};

ForwardResult forward_teacher_forced(Graph& g, Model& model, const Batch& batch, bool training,
                                     Rng& rng);

// Per-sentence I x J attention matrix for row r of a forward pass (real rows
// and columns only).
Matrix attention_matrix(const ForwardResult& fwd, const Batch& batch, int row);

// Plain-text model file: header with version and hyperparameters, both
// vocabularies, then every parameter as name/rows/cols and row-major values.
void write_model(std::ostream& out, const Model& model);
void save_model(const std::filesystem::path& path, const Model& model);
Model read_model(std::istream& in);
Model load_model(const std::filesystem::path& path);

}  // namespace attseg
