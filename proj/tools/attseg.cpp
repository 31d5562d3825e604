// attseg: bilingual word segmentation from attention matrices.

#include "attseg/commands.hpp"
#include "attseg/errors.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>

namespace {

using attseg::ExitCode;
using attseg::RunConfig;

struct ConfigFlags {
  std::string config_file;
  std::string echo_file;
  std::map<std::string, std::string> values;
};

// Every RunConfig key becomes a --key flag on the subcommand.
void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_file, "key = value configuration file");
  cmd->add_option("--echo-config", flags.echo_file, "write the effective configuration here");
  for (const auto& [key, value] : RunConfig{}.to_pairs()) {
    cmd->add_option("--" + key, flags.values[key], "default: " + (value.empty() ? "(unset)" : value));
  }
}

RunConfig resolve(const CLI::App* cmd, const ConfigFlags& flags) {
  RunConfig cfg;
  if (!flags.config_file.empty()) cfg = attseg::load_config(flags.config_file);
  // to_pairs() lists "mode" first, so presets apply before explicit overrides.
  for (const auto& [key, _] : RunConfig{}.to_pairs()) {
    if (cmd->count("--" + key) > 0) cfg.set(key, flags.values.at(key));
  }
  if (!flags.echo_file.empty()) {
    std::ofstream out(flags.echo_file);
    if (!out) throw attseg::UsageError("cannot write " + flags.echo_file);
    attseg::write_config(out, cfg);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attseg: unsupervised word segmentation from neural attention"};
  app.require_subcommand(1);

  ConfigFlags train_flags, segment_flags, evaluate_flags, stats_flags, multirun_flags;
  auto* train = app.add_subcommand("train", "train an attentional encoder-decoder");
  add_config_flags(train, train_flags);
  auto* segment = app.add_subcommand("segment", "force-decode a corpus and segment the target side");
  add_config_flags(segment, segment_flags);
  auto* evaluate = app.add_subcommand("evaluate", "score --output against --gold");
  add_config_flags(evaluate, evaluate_flags);
  auto* stats = app.add_subcommand("stats", "token/type statistics of a segmented file");
  std::string stats_input;
  stats->add_option("input", stats_input, "segmented text file")->required();
  add_config_flags(stats, stats_flags);
  auto* multirun = app.add_subcommand("multirun", "train+segment+evaluate over consecutive seeds");
  add_config_flags(multirun, multirun_flags);

  attseg::SynthOptions synth_opts;
  std::string synth_source, synth_target;
  auto* synth = app.add_subcommand("synth", "write a synthetic parallel corpus");
  synth->add_option("--sentences", synth_opts.sentences);
  synth->add_option("--source-vocab", synth_opts.source_vocab_size);
  synth->add_option("--seed", synth_opts.seed);
  synth->add_option("--min-len", synth_opts.min_image_length, "shortest target image");
  synth->add_option("--max-len", synth_opts.max_image_length, "longest target image");
  synth->add_option("--alphabet", synth_opts.alphabet_size, "target alphabet size");
  synth->add_option("--min-words", synth_opts.min_words);
  synth->add_option("--max-words", synth_opts.max_words);
  synth->add_option("--source", synth_source)->required();
  synth->add_option("--target", synth_target, "gold (space-segmented) target file")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  std::uint64_t gradcheck_seed = 7;
  gradcheck->add_option("--seed", gradcheck_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (train->parsed()) {
      attseg::cmd_train(resolve(train, train_flags), std::cout);
    } else if (segment->parsed()) {
      attseg::cmd_segment(resolve(segment, segment_flags), std::cerr);
    } else if (evaluate->parsed()) {
      attseg::cmd_evaluate(resolve(evaluate, evaluate_flags), std::cout);
    } else if (stats->parsed()) {
      attseg::cmd_stats(stats_input, resolve(stats, stats_flags), std::cout);
    } else if (multirun->parsed()) {
      attseg::cmd_multirun(resolve(multirun, multirun_flags), std::cout);
    } else if (synth->parsed()) {
      attseg::cmd_synth(synth_opts, synth_source, synth_target, std::cout);
    } else if (gradcheck->parsed()) {
      const auto summary = attseg::cmd_gradcheck(std::cout, gradcheck_seed);
      return summary.passed() ? 0 : static_cast<int>(ExitCode::numeric);
    }
  } catch (const attseg::Error& e) {
    std::cerr << "attseg: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "attseg: " << e.what() << '\n';
    return static_cast<int>(ExitCode::data);
  }
  return 0;
}
