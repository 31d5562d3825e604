#include "attseg/commands.hpp"

#include "attseg/errors.hpp"
#include "attseg/text.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>

namespace attseg {

namespace fs = std::filesystem;

namespace {

void require_path(const fs::path& p, const char* key) {
  if (p.empty()) throw UsageError(std::string("missing required setting '") + key + "'");
}

void require_file(const fs::path& p, const char* key) {
  require_path(p, key);
  if (!fs::is_regular_file(p)) {
    throw UsageError(std::string(key) + ": no such file " + p.string());
  }
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

UnitTokenizer tokenizer_for(const RunConfig& config) {
  return config.symbols.empty() ? UnitTokenizer{} : UnitTokenizer::from_file(config.symbols);
}

void write_segmented(const fs::path& path, const std::vector<SegmentedSentence>& segmented) {
  auto out = open_out(path);
  for (const auto& s : segmented) out << s.text() << '\n';
}

}  // namespace

std::vector<SentencePair> load_config_corpus(const RunConfig& config) {
  require_file(config.source, "source");
  require_file(config.target, "target");
  const UnitTokenizer tok = tokenizer_for(config);
  return load_parallel(config.source, config.target, LoadOptions{config.gold_target, &tok});
}

HyperParams resolve_hyperparams(const RunConfig& config, const std::vector<SentencePair>& pairs) {
  HyperParams hp = config.hp;
  if (hp.loss_mode == LossMode::aux_ratio && config.ratio_source == RatioSource::first_100_gold) {
    if (!config.gold_target) {
      throw UsageError("ratio_source = first_100_gold needs a gold-segmented target (gold_target = true)");
    }
    hp.ratio = length_ratio(pairs, 100, config.ratio_count_eos);
  }
  hp.validate();
  return hp;
}

// ---------------------------------------------------------------------------
// train

TrainOutcome cmd_train(const RunConfig& config, std::ostream& msg) {
  require_path(config.model, "model");
  const auto pairs = load_config_corpus(config);
  const HyperParams hp = resolve_hyperparams(config, pairs);

  TrainOutcome outcome{train(pairs, hp), hp.ratio};
  save_model(config.model, outcome.result.model);

  if (!config.loss_log.empty()) {
    auto log = open_out(config.loss_log);
    log << "# mode=" << to_string(config.mode) << " loss_mode=" << to_string(hp.loss_mode)
        << " ratio=" << format_double(hp.ratio) << '\n';
    write_loss_log(log, outcome.result.log);
  }
  const LossBreakdown& last = outcome.result.log.back();
  msg << "epoch " << last.epoch << " nll " << format_double(last.nll) << " aux "
      << format_double(last.aux) << " lambda " << format_double(last.lambda_aux) << " total "
      << format_double(last.total) << '\n';
  if (hp.loss_mode == LossMode::aux_ratio) msg << "ratio " << format_double(hp.ratio) << '\n';
  return outcome;
}

// ---------------------------------------------------------------------------
// segment

SegmentOutcome cmd_segment(const RunConfig& config, std::ostream& msg) {
  require_file(config.model, "model");
  require_path(config.output, "output");
  SegmentOutcome out;
  out.pairs = load_config_corpus(config);
  Model model = load_model(config.model);
  const auto encoded = encode_corpus(out.pairs, model.vocab, &out.unknown);
  out.matrices = force_decode_corpus(model, encoded, model.hp.batch_size);
  out.segmented = segment_corpus(out.pairs, out.matrices);
  write_segmented(config.output, out.segmented);
  if (!config.attention_dump.empty()) {
    auto dump = open_out(config.attention_dump);
    write_attention_dump(dump, out.matrices);
  }
  msg << "segmented " << out.segmented.size() << " sentences";
  msg << "; unknown symbols: source " << out.unknown.source_unknown << ", target "
      << out.unknown.target_unknown << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// evaluate / stats

namespace {
void print_stats(std::ostream& msg, const char* label, const CorpusStats& s) {
  msg << label << "\ttokens " << s.tokens << "\ttypes " << s.types << "\tavg_token_len "
      << std::fixed << std::setprecision(2) << s.avg_token_length << "\tavg_sent_len "
      << s.avg_sentence_length << std::defaultfloat << std::setprecision(6) << '\n';
}
}  // namespace

MetricsReport cmd_evaluate(const RunConfig& config, std::ostream& msg) {
  require_file(config.output, "output");
  require_file(config.gold, "gold");
  const UnitTokenizer tok = tokenizer_for(config);
  const auto pred = read_segmentation(config.output, tok);
  const auto gold = read_segmentation(config.gold, tok);
  MetricsReport report = evaluate(pred, gold);

  if (!config.attention_dump.empty() && fs::is_regular_file(config.attention_dump) &&
      !config.source.empty() && fs::is_regular_file(config.source)) {
    std::ifstream dump(config.attention_dump);
    const auto matrices = read_attention_dump(dump);
    std::vector<std::string> target_lines;
    for (const auto& s : gold) target_lines.push_back(join_with_boundaries(s.units, {}));
    const auto pairs = parse_parallel(read_lines(config.source), target_lines, LoadOptions{false, &tok});
    report.correlation = length_attention_correlation(matrices, pairs, config.correlation_include_eos);
  }

  if (!config.report.empty()) {
    auto out = open_out(config.report);
    write_report(out, report);
  }
  for (const auto& [k, v] : report.entries()) msg << k << '\t' << format_double(v) << '\n';
  print_stats(msg, "pred", report.stats);
  print_stats(msg, "gold", corpus_stats(gold));
  return report;
}

CorpusStats cmd_stats(const fs::path& path, const RunConfig& config, std::ostream& msg) {
  require_file(path, "input");
  const auto stats = corpus_stats(read_segmentation(path, tokenizer_for(config)));
  msg << "sentences\t" << stats.sentences << '\n'
      << "tokens\t" << stats.tokens << '\n'
      << "types\t" << stats.types << '\n'
      << "avg_token_len\t" << format_double(stats.avg_token_length) << '\n'
      << "avg_sent_len\t" << format_double(stats.avg_sentence_length) << '\n';
  return stats;
}

// ---------------------------------------------------------------------------
// pipeline / multirun

namespace {
std::vector<SegmentedSentence> gold_segmentation(const std::vector<SentencePair>& pairs) {
  std::vector<SegmentedSentence> gold;
  gold.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].gold_boundaries) {
      throw DataError("line " + std::to_string(i + 1) + ": reference segmentation missing");
    }
    gold.push_back({pairs[i].target_units, *pairs[i].gold_boundaries});
  }
  return gold;
}
}  // namespace

PipelineResult run_pipeline(const std::vector<SentencePair>& gold_pairs, const HyperParams& hp,
                            bool correlation_include_eos) {
  const auto gold = gold_segmentation(gold_pairs);
  PipelineResult r;
  r.training = train(gold_pairs, hp);
  const auto encoded = encode_corpus(gold_pairs, r.training.model.vocab);
  r.matrices = force_decode_corpus(r.training.model, encoded, hp.batch_size);
  r.segmented = segment_corpus(gold_pairs, r.matrices);
  r.report = evaluate(r.segmented, gold);
  r.report.correlation = length_attention_correlation(r.matrices, gold_pairs, correlation_include_eos);
  return r;
}

MultiRunSummary summarize(std::vector<std::vector<std::pair<std::string, double>>> runs) {
  MultiRunSummary s;
  s.runs = std::move(runs);
  if (s.runs.empty()) return s;
  for (const auto& [name, _] : s.runs.front()) {
    std::vector<double> values;
    for (const auto& run : s.runs) {
      for (const auto& [k, v] : run) {
        if (k == name) values.push_back(v);
      }
    }
    MetricSummary m;
    m.name = name;
    for (double v : values) m.mean += v;
    m.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - m.mean) * (v - m.mean);
      m.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    s.metrics.push_back(m);
  }
  return s;
}

MultiRunSummary cmd_multirun(const RunConfig& config, std::ostream& msg) {
  if (config.runs < 1) throw UsageError("runs must be >= 1");
  require_path(config.output, "output");
  if (!config.gold_target) throw UsageError("multirun evaluates against the target: set gold_target = true");
  const auto pairs = load_config_corpus(config);
  const auto gold = gold_segmentation(pairs);
  const HyperParams base_hp = resolve_hyperparams(config, pairs);
  fs::create_directories(config.output);

  std::vector<std::vector<std::pair<std::string, double>>> runs;
  for (int k = 0; k < config.runs; ++k) {
    HyperParams hp = base_hp;
    hp.seed = base_hp.seed + static_cast<std::uint64_t>(k);
    char name[32];
    std::snprintf(name, sizeof(name), "run_%02d", k + 1);
    const fs::path dir = config.output / name;
    fs::create_directories(dir);

    RunConfig echo = config;
    echo.hp = hp;
    {
      auto out = open_out(dir / "config.txt");
      write_config(out, echo);
    }

    PipelineResult r = run_pipeline(pairs, hp, config.correlation_include_eos);
    save_model(dir / "model.txt", r.training.model);
    {
      auto log = open_out(dir / "loss.tsv");
      write_loss_log(log, r.training.log);
    }
    write_segmented(dir / "segmented.txt", r.segmented);
    {
      auto rep = open_out(dir / "report.tsv");
      write_report(rep, r.report);
    }
    msg << name << " seed " << hp.seed << " BF " << format_double(100.0 * r.report.boundary.f)
        << " WF " << format_double(100.0 * r.report.token.f) << '\n';
    runs.push_back(r.report.entries());
  }

  MultiRunSummary summary = summarize(std::move(runs));
  auto out = open_out(config.output / "summary.tsv");
  for (const auto& m : summary.metrics) {
    out << m.name << '\t' << format_double(m.mean) << '\t' << format_double(m.stddev) << '\n';
    msg << m.name << "\tmean " << format_double(m.mean) << "\tsd " << format_double(m.stddev) << '\n';
  }
  return summary;
}

// ---------------------------------------------------------------------------
// synth

SynthCorpus cmd_synth(const SynthOptions& options, const fs::path& source_path, const fs::path& target_path,
                      std::ostream& msg) {
  SynthCorpus c = make_synthetic_corpus(options);
  if (source_path.has_parent_path()) fs::create_directories(source_path.parent_path());
  if (target_path.has_parent_path()) fs::create_directories(target_path.parent_path());
  write_synthetic_corpus(c, source_path, target_path);
  msg << "wrote " << c.source_lines.size() << " sentence pairs over " << c.source_words.size()
      << " source words\n";
  return c;
}

// ---------------------------------------------------------------------------
// gradcheck

bool GradcheckSummary::passed() const {
  for (const auto& c : cases) {
    if (!(c.report.max_relative_error <= threshold)) return false;
  }
  return !cases.empty();
}

GradcheckSummary cmd_gradcheck(std::ostream& msg, std::uint64_t seed) {
  const std::vector<std::string> source = {"il mange bien", "elle dort"};
  const std::vector<std::string> target = {"abcd", "efgab"};
  const auto pairs = parse_parallel(source, target);
  const Vocabularies vocab = build_vocabularies(pairs);
  const auto encoded = encode_corpus(pairs, vocab);
  const std::size_t rows[] = {0, 1};
  const Batch batch = make_batch(encoded, rows);

  HyperParams hp;
  hp.embedding_dim = 5;
  hp.encoder_hidden = 4;
  hp.decoder_hidden = 6;
  hp.attention_hidden = 5;
  hp.dropout_rate = 0.0;

  struct Case {
    const char* loss;
    double nll_weight;
    double aux_weight;
    double ratio;
  };
  const Case cases[] = {
      {"nll", 1.0, 0.0, 1.0},
      {"aux(r=1)", 0.0, 1.0, 1.0},
      {"aux(r=2)", 0.0, 1.0, 2.0},
      {"nll+0.5*aux", 1.0, 0.5, 1.0},
  };

  GradcheckSummary summary;
  for (AttentionMode mode : {AttentionMode::plain, AttentionMode::length_bias}) {
    hp.attention_mode = mode;
    for (const Case& c : cases) {
      Model model = init_parameters(hp, vocab, seed);
      // At the training init the attention is nearly uniform and many
      // gradients sit near 1e-9, below the rounding floor of an h = 1e-5
      // difference. Recurrent weights stay moderate so the gates do not
      // saturate; everything else is drawn wide so attention is peaked.
      Rng rng(seed);
      std::uniform_real_distribution<double> wide(-1.5, 1.5);
      for (auto& p : model.params) {
        const bool recurrent = p.name.rfind("enc_", 0) == 0 || p.name.rfind("dec.", 0) == 0;
        const double f = recurrent ? 1.0 / 3.0 : 1.0;
        p.value = p.value.unaryExpr([&](double) { return f * wide(rng); });
      }
      auto loss = [&](Graph& g) {
        Rng rng(0);
        const ForwardResult fwd = forward_teacher_forced(g, model, batch, false, rng);
        Var total;
        if (c.nll_weight != 0.0) total = scale(nll_loss(g, fwd, batch), c.nll_weight);
        if (c.aux_weight != 0.0) {
          const Var aux = scale(aux_loss(g, fwd, batch, c.ratio), c.aux_weight);
          total = total.valid() ? add(total, aux) : aux;
        }
        return total;
      };
      GradcheckCase result{std::string(to_string(mode)) + " " + c.loss,
                           finite_diff_check(loss, model.params, 1e-5)};
      msg << result.label << ": max relative error "
          << format_double(result.report.max_relative_error) << '\n';
      for (const auto& e : result.report.entries) {
        msg << "  " << e.name << '\t' << format_double(e.max_relative_error) << '\n';
      }
      summary.cases.push_back(std::move(result));
    }
  }
  msg << (summary.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (threshold "
      << format_double(summary.threshold) << ")\n";
  return summary;
}

}  // namespace attseg
