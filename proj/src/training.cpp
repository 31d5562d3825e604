#include "attseg/training.hpp"

#include "attseg/errors.hpp"
#include "attseg/text.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace attseg {

Var nll_loss(Graph& /*g*/, const ForwardResult& fwd, const Batch& batch) {
  const double tokens = batch.target_mask.sum();
  if (tokens <= 0.0) throw NumericError("nll_loss: batch has no target positions");
  Var total;
  for (std::size_t s = 0; s < fwd.logits.size(); ++s) {
    const Var step = cross_entropy(fwd.logits[s], fwd.targets[s],
                                   batch.target_mask.col(static_cast<Eigen::Index>(s)));
    total = total.valid() ? add(total, step) : step;
  }
  return scale(total, 1.0 / tokens);
}

double consecutive_row_overlap(const Matrix& attention) {
  double overlap = 0.0;
  for (Eigen::Index i = 0; i + 1 < attention.rows(); ++i) {
    overlap += attention.row(i).dot(attention.row(i + 1));
  }
  return overlap;
}

double aux_loss(const Matrix& attention, double ratio) {
  if (attention.rows() < 1) throw NumericError("aux_loss: attention matrix has no rows");
  const double x = static_cast<double>(attention.rows()) -
                   ratio * static_cast<double>(attention.cols()) -
                   consecutive_row_overlap(attention);
  return std::sqrt(x * x + kSmoothAbsEps);
}

Var aux_loss(Graph& g, const ForwardResult& fwd, const Batch& batch, double ratio) {
  const int B = batch.size();
  Matrix offset(B, 1);
  for (int r = 0; r < B; ++r) {
    offset(r, 0) = batch.target_lengths[static_cast<std::size_t>(r)] -
                   ratio * batch.source_lengths[static_cast<std::size_t>(r)];
  }
  Var overlap;
  for (std::size_t s = 0; s + 1 < fwd.attention.size(); ++s) {
    // Step s+1 is real only when both rows belong to the sentence.
    const Var dots = mul(row_dot(fwd.attention[s], fwd.attention[s + 1]),
                         g.constant(batch.target_mask.col(static_cast<Eigen::Index>(s + 1))));
    overlap = overlap.valid() ? add(overlap, dots) : dots;
  }
  Var x = g.constant(std::move(offset));
  if (overlap.valid()) x = sub(x, overlap);
  return mean(smooth_abs(x));
}

double lambda_aux(int epoch, int wait, int total_epochs) {
  return static_cast<double>(std::max(epoch - wait, 0)) / static_cast<double>(total_epochs);
}

void adam_step(ParameterStore& params, OptimizerState& state, const AdamConfig& config) {
  for (const auto& p : params) {
    if (!p.grad.allFinite()) throw NumericError("non-finite gradient for parameter '" + p.name + "'");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      state.second_moment.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (auto& p : params) {
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    m = config.beta1 * m + (1.0 - config.beta1) * p.grad;
    v = config.beta2 * v + (1.0 - config.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= config.learning_rate * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + config.epsilon);
    ++k;
  }
}

namespace {

double sentence_aux_mean(const ForwardResult& fwd, const Batch& batch, double ratio) {
  double total = 0.0;
  for (int r = 0; r < batch.size(); ++r) total += aux_loss(attention_matrix(fwd, batch, r), ratio);
  return total / batch.size();
}

}  // namespace

TrainResult train_encoded(const std::vector<EncodedPair>& pairs, Vocabularies vocab,
                          const HyperParams& hp, const EpochCallback& on_epoch) {
  hp.validate();
  if (pairs.empty()) throw DataError("cannot train on an empty corpus");

  TrainResult result{init_parameters(hp, std::move(vocab), hp.seed), {}};
  Model& model = result.model;
  std::seed_seq dropout_seed{static_cast<std::uint32_t>(hp.seed),
                             static_cast<std::uint32_t>(hp.seed >> 32), 0x64726f70u};
  Rng rng(dropout_seed);
  OptimizerState opt;
  const AdamConfig adam{hp.learning_rate};
  const bool use_aux = hp.loss_mode != LossMode::base;
  const double ratio = hp.loss_mode == LossMode::aux_ratio ? hp.ratio : 1.0;

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    const double lambda = use_aux ? lambda_aux(epoch, hp.wait, hp.epochs) : 0.0;
    double nll_sum = 0.0, tokens = 0.0, aux_sum = 0.0;
    int batch_no = 0;
    for (const Batch& batch : epoch_batches(pairs, hp.batch_size, hp.seed, epoch)) {
      ++batch_no;
      try {
        model.params.zero_grad();
        Graph g;
        const ForwardResult fwd = forward_teacher_forced(g, model, batch, true, rng);
        const Var nll = nll_loss(g, fwd, batch);
        Var total = nll;
        double aux_value = 0.0;
        if (use_aux && lambda > 0.0) {
          const Var aux = aux_loss(g, fwd, batch, ratio);
          aux_value = aux.scalar();
          total = add(nll, scale(aux, lambda));
        } else if (use_aux) {
          aux_value = sentence_aux_mean(fwd, batch, ratio);
        }
        if (!std::isfinite(total.scalar())) throw NumericError("non-finite loss");
        g.backward(total);
        adam_step(model.params, opt, adam);

        const double n_tok = batch.target_mask.sum();
        nll_sum += nll.scalar() * n_tok;
        tokens += n_tok;
        aux_sum += aux_value * batch.size();
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_no) +
                           ": " + e.what());
      }
    }
    LossBreakdown row;
    row.epoch = epoch;
    row.nll = nll_sum / tokens;
    row.aux = aux_sum / static_cast<double>(pairs.size());
    row.lambda_aux = lambda;
    row.total = row.nll + lambda * row.aux;
    result.log.push_back(row);
    if (on_epoch && !on_epoch(row)) break;
  }
  return result;
}

TrainResult train(const std::vector<SentencePair>& pairs, const HyperParams& hp,
                  const EpochCallback& on_epoch) {
  Vocabularies vocab = build_vocabularies(pairs);
  const auto encoded = encode_corpus(pairs, vocab);
  return train_encoded(encoded, std::move(vocab), hp, on_epoch);
}

void write_loss_log(std::ostream& out, const std::vector<LossBreakdown>& log) {
  for (const auto& row : log) {
    out << row.epoch << '\t' << format_double(row.nll) << '\t' << format_double(row.aux) << '\t'
        << format_double(row.lambda_aux) << '\t' << format_double(row.total) << '\n';
  }
}

double length_ratio(const std::vector<SentencePair>& pairs, std::size_t count, bool count_eos) {
  const std::size_t n = std::min(count, pairs.size());
  if (n == 0) throw DataError("length ratio needs at least one gold sentence");
  double target = 0.0, source = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!pairs[i].gold_boundaries) {
      throw DataError("length ratio needs gold segmentations (line " + std::to_string(i + 1) + ")");
    }
    target += static_cast<double>(pairs[i].gold_boundaries->size() + 1);
    source += static_cast<double>(pairs[i].source_words.size());
    if (count_eos) {
      target += 1.0;
      source += 1.0;
    }
  }
  return target / source;
}

}  // namespace attseg
