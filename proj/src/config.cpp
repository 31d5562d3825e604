#include "attseg/config.hpp"

#include "attseg/errors.hpp"
#include "attseg/text.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace attseg {

const char* to_string(Method m) {
  switch (m) {
    case Method::base: return "base";
    case Method::bias: return "bias";
    case Method::aux: return "aux";
    case Method::aux_ratio: return "aux_ratio";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "base") return Method::base;
  if (s == "bias") return Method::bias;
  if (s == "aux") return Method::aux;
  if (s == "aux_ratio") return Method::aux_ratio;
  throw UsageError("unknown mode '" + s + "' (expected base, bias, aux or aux_ratio)");
}

void RunConfig::apply_mode(Method m) {
  mode = m;
  hp.attention_mode = m == Method::bias ? AttentionMode::length_bias : AttentionMode::plain;
  switch (m) {
    case Method::base:
    case Method::bias: hp.loss_mode = LossMode::base; break;
    case Method::aux: hp.loss_mode = LossMode::aux; break;
    case Method::aux_ratio: hp.loss_mode = LossMode::aux_ratio; break;
  }
}

namespace {
bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("invalid boolean '" + value + "' for " + key);
}
const char* bool_text(bool b) { return b ? "true" : "false"; }
}  // namespace

bool RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "mode") apply_mode(parse_method(value));
  else if (key == "source") source = value;
  else if (key == "target") target = value;
  else if (key == "gold") gold = value;
  else if (key == "model") model = value;
  else if (key == "output") output = value;
  else if (key == "attention_dump") attention_dump = value;
  else if (key == "report") report = value;
  else if (key == "loss_log") loss_log = value;
  else if (key == "symbols") symbols = value;
  else if (key == "gold_target") gold_target = parse_bool(value, key);
  else if (key == "runs") runs = parse_int<int>(value, key);
  else if (key == "ratio_source") {
    if (value == "first_100_gold") ratio_source = RatioSource::first_100_gold;
    else if (value == "explicit") ratio_source = RatioSource::explicit_value;
    else throw UsageError("unknown ratio_source '" + value + "' (expected first_100_gold or explicit)");
  } else if (key == "ratio_count_eos") ratio_count_eos = parse_bool(value, key);
  else if (key == "correlation_include_eos") correlation_include_eos = parse_bool(value, key);
  else return hp.set(key, value);
  return true;
}

std::vector<std::pair<std::string, std::string>> RunConfig::to_pairs() const {
  std::vector<std::pair<std::string, std::string>> out = {{"mode", to_string(mode)}};
  for (auto& kv : hp.to_pairs()) out.push_back(std::move(kv));
  out.insert(out.end(), {
                            {"source", source.string()},
                            {"target", target.string()},
                            {"gold", gold.string()},
                            {"model", model.string()},
                            {"output", output.string()},
                            {"attention_dump", attention_dump.string()},
                            {"report", report.string()},
                            {"loss_log", loss_log.string()},
                            {"symbols", symbols.string()},
                            {"gold_target", bool_text(gold_target)},
                            {"runs", std::to_string(runs)},
                            {"ratio_source", ratio_source == RatioSource::first_100_gold
                                                 ? "first_100_gold"
                                                 : "explicit"},
                            {"ratio_count_eos", bool_text(ratio_count_eos)},
                            {"correlation_include_eos", bool_text(correlation_include_eos)},
                        });
  return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_pairs() == b.to_pairs(); }

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (!base.set(key, value)) {
      throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  return parse_config(in, std::move(base));
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& [k, v] : config.to_pairs()) out << k << " = " << v << '\n';
}

}  // namespace attseg
