#pragma once

#include "attseg/corpus.hpp"
#include "attseg/gradcore.hpp"
#include "attseg/model.hpp"

#include <functional>
#include <iosfwd>
#include <vector>

namespace attseg {

struct LossBreakdown {
  int epoch = 0;
  double nll = 0.0;
  double aux = 0.0;
  double lambda_aux = 0.0;
  double total = 0.0;
};

// Mean over non-pad target positions of -log p(gold unit).
Var nll_loss(Graph& g, const ForwardResult& fwd, const Batch& batch);

// smooth_abs(I - r*J - sum_{i<I} <A_i, A_{i+1}>) for one I x J matrix whose
// rows sum to 1. I and J are the matrix dimensions (EOS row/column included).
double aux_loss(const Matrix& attention, double ratio);

// Consecutive-row dot-product sum of one attention matrix.
double consecutive_row_overlap(const Matrix& attention);

// Batched auxiliary loss: mean over sentences, padded rows excluded.
Var aux_loss(Graph& g, const ForwardResult& fwd, const Batch& batch, double ratio);

// max(k - W, 0) / K.
double lambda_aux(int epoch, int wait, int total_epochs);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
};

// One bias-corrected Adam update of every parameter from its grad. Throws
// NumericError naming the parameter when a gradient is not finite.
void adam_step(ParameterStore& params, OptimizerState& state, const AdamConfig& config);

struct TrainResult {
  Model model;
  std::vector<LossBreakdown> log;
};

// Called after every epoch; returning false stops training early.
using EpochCallback = std::function<bool(const LossBreakdown&)>;

// K epochs of shuffled mini-batches, NLL plus the scheduled auxiliary term.
// Deterministic given hp.seed.
TrainResult train(const std::vector<SentencePair>& pairs, const HyperParams& hp,
                  const EpochCallback& on_epoch = {});

// Same, starting from already-built vocabularies and encoded pairs.
TrainResult train_encoded(const std::vector<EncodedPair>& pairs, Vocabularies vocab,
                          const HyperParams& hp, const EpochCallback& on_epoch = {});

// Loss log: one tab-separated line per epoch (epoch, nll, aux, lambda, total).
void write_loss_log(std::ostream& out, const std::vector<LossBreakdown>& log);

// Gold target tokens per source token over the first `count` gold pairs.
// EOS is not counted unless count_eos is set.
double length_ratio(const std::vector<SentencePair>& pairs, std::size_t count = 100,
                    bool count_eos = false);

}  // namespace attseg
