#pragma once

// Run configuration: hyperparameters plus paths and experiment switches.
// Stored as flat "key = value" text; '#' starts a comment.

#include "attseg/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace attseg {

// Method presets: base = plain attention, NLL only; bias = word-length biased
// attention; aux = auxiliary length loss with r = 1; aux_ratio = auxiliary
// loss with the gold length ratio.
enum class Method { base, bias, aux, aux_ratio };

const char* to_string(Method m);
Method parse_method(const std::string& s);

enum class RatioSource { first_100_gold, explicit_value };

struct RunConfig {
  HyperParams hp;
  Method mode = Method::base;

  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path gold;  // reference segmentation for evaluate
  std::filesystem::path model;
  std::filesystem::path output;
  std::filesystem::path attention_dump;
  std::filesystem::path report;
  std::filesystem::path loss_log;
  std::filesystem::path symbols;

  bool gold_target = false;  // target file is space-segmented
  int runs = 10;
  RatioSource ratio_source = RatioSource::first_100_gold;
  bool ratio_count_eos = false;
  bool correlation_include_eos = true;

  // Sets attention_mode and loss_mode from the preset.
  void apply_mode(Method m);

  // Applies one key; "mode" applies its preset immediately. Returns false
  // for unknown keys.
  bool set(const std::string& key, const std::string& value);

  std::vector<std::pair<std::string, std::string>> to_pairs() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
void write_config(std::ostream& out, const RunConfig& config);

}  // namespace attseg
