#pragma once

// The experiment commands behind the attseg tool. Each takes a RunConfig,
// writes its artifacts, and reports progress on the given stream.

#include "attseg/config.hpp"
#include "attseg/evaluation.hpp"
#include "attseg/segmentation.hpp"
#include "attseg/synth.hpp"
#include "attseg/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace attseg {

// Corpus named by config.source/config.target (gold_target decides whether
// spaces in the target mark reference boundaries).
std::vector<SentencePair> load_config_corpus(const RunConfig& config);

// Hyperparameters with the aux_ratio factor resolved from the corpus when
// ratio_source is first_100_gold.
HyperParams resolve_hyperparams(const RunConfig& config, const std::vector<SentencePair>& pairs);

struct TrainOutcome {
  TrainResult result;
  double ratio = 1.0;
};

TrainOutcome cmd_train(const RunConfig& config, std::ostream& msg);

struct SegmentOutcome {
  std::vector<SentencePair> pairs;
  std::vector<AttentionMatrix> matrices;
  std::vector<SegmentedSentence> segmented;
  EncodeStats unknown;
};

SegmentOutcome cmd_segment(const RunConfig& config, std::ostream& msg);

// Scores config.output against config.gold into config.report. When both
// config.attention_dump and config.source exist the correlation is included.
MetricsReport cmd_evaluate(const RunConfig& config, std::ostream& msg);

CorpusStats cmd_stats(const std::filesystem::path& path, const RunConfig& config, std::ostream& msg);

// In-memory train -> force-decode -> segment -> evaluate on a gold corpus.
struct PipelineResult {
  TrainResult training;
  std::vector<AttentionMatrix> matrices;
  std::vector<SegmentedSentence> segmented;
  MetricsReport report;
};

PipelineResult run_pipeline(const std::vector<SentencePair>& gold_pairs, const HyperParams& hp,
                            bool correlation_include_eos = true);

struct MetricSummary {
  std::string name;
  double mean = 0.0;
  double stddev = 0.0;
};

struct MultiRunSummary {
  std::vector<std::vector<std::pair<std::string, double>>> runs;
  std::vector<MetricSummary> metrics;
};

// Sample mean and standard deviation (n - 1; 0 for a single run) per metric.
MultiRunSummary summarize(std::vector<std::vector<std::pair<std::string, double>>> runs);

// Seeds seed .. seed+runs-1; per-run artifacts under config.output/run_NN and
// a summary.tsv with mean and standard deviation per metric.
MultiRunSummary cmd_multirun(const RunConfig& config, std::ostream& msg);

SynthCorpus cmd_synth(const SynthOptions& options, const std::filesystem::path& source_path,
                      const std::filesystem::path& target_path, std::ostream& msg);

struct GradcheckCase {
  std::string label;
  GradCheckReport report;
};

struct GradcheckSummary {
  std::vector<GradcheckCase> cases;
  double threshold = 1e-4;
  bool passed() const;
};

// Toy model, finite differences for NLL, AUX (r = 1 and r = 2) and
// NLL + 0.5 AUX under plain and length-biased attention.
GradcheckSummary cmd_gradcheck(std::ostream& msg, std::uint64_t seed = 7);

}  // namespace attseg
