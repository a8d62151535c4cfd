#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgclep/corpus.hpp"
#include "fgclep/errors.hpp"
#include "fgclep/evalkit.hpp"
#include "fgclep/pipeline.hpp"
#include "fgclep/proposer.hpp"

namespace fgclep::cli {

struct EvalConfig {
  std::vector<double> fractions = {0.01, 0.1, 1.0};
  std::vector<std::string> lead_names = evalkit::default_lead_names();
};

struct RunConfig {
  corpus::SynthConfig corpus;
  pipeline::TrainConfig train;
  proposer::ProposerConfig proposer;
  EvalConfig eval;
};

// The full documented default document; every key in a user config or a --set
// override must exist here.
inline nlohmann::json default_config_json() {
  RunConfig d;
  nlohmann::json j;
  j["corpus"] = {{"n_train", d.corpus.n_train},
                 {"n_valid", d.corpus.n_valid},
                 {"n_test", d.corpus.n_test},
                 {"p_mention", d.corpus.p_mention},
                 {"seed", d.corpus.seed},
                 {"lead_count", d.corpus.lead_count},
                 {"sample_rate", d.corpus.sample_rate},
                 {"duration", d.corpus.duration}};
  j["train"] = d.train.to_json();
  j["proposer"] = {{"mode", proposer::proposer_mode_name(d.proposer.mode)},
                   {"threshold", d.proposer.threshold},
                   {"calibrated", d.proposer.calibrated},
                   {"p_halluc", d.proposer.p_halluc},
                   {"endpoint", d.proposer.endpoint},
                   {"model", d.proposer.model},
                   {"timeout_s", d.proposer.timeout_s},
                   {"retries", d.proposer.retries}};
  j["eval"] = {{"fractions", d.eval.fractions}, {"lead_names", d.eval.lead_names}};
  return j;
}

namespace detail {

inline void merge_section(nlohmann::json& base, const nlohmann::json& overlay,
                          const std::string& path) {
  if (!overlay.is_object()) {
    fail(errc::config_error, "config section '" + path + "' must be an object");
  }
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) {
      fail(errc::config_error, "unknown config key '" + key_path + "'");
    }
    if (base[it.key()].is_object()) {
      merge_section(base[it.key()], it.value(), key_path);
    } else {
      base[it.key()] = it.value();
    }
  }
}

// Parses "section.key=value" against the default document's value type.
inline void apply_set(nlohmann::json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    fail(errc::config_error, "--set expects section.key=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  nlohmann::json* node = &doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) {
      fail(errc::config_error, "unknown config key '" + path + "'");
    }
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->contains(leaf)) {
    fail(errc::config_error, "unknown config key '" + path + "'");
  }
  nlohmann::json& slot = (*node)[leaf];
  try {
    if (slot.is_boolean()) {
      if (value == "true" || value == "1") {
        slot = true;
      } else if (value == "false" || value == "0") {
        slot = false;
      } else {
        fail(errc::config_error, "'" + path + "' expects true or false");
      }
    } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
      slot = std::stoll(value);
    } else if (slot.is_number_float()) {
      slot = std::stod(value);
    } else if (slot.is_string()) {
      slot = value;
    } else if (slot.is_array()) {
      const bool numeric = slot.empty() || slot[0].is_number();
      nlohmann::json arr = nlohmann::json::array();
      std::size_t pos = 0;
      while (pos <= value.size()) {
        const std::size_t comma = value.find(',', pos);
        const std::string item = value.substr(pos, comma - pos);
        if (!item.empty()) arr.push_back(numeric ? nlohmann::json(std::stod(item))
                                                 : nlohmann::json(item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      slot = arr;
    } else {
      fail(errc::config_error, "'" + path + "' has an unsupported type");
    }
  } catch (const std::invalid_argument&) {
    fail(errc::config_error, "cannot parse value '" + value + "' for '" + path + "'");
  } catch (const std::out_of_range&) {
    fail(errc::config_error, "value '" + value + "' out of range for '" + path + "'");
  }
}

}  // namespace detail

// Defaults, overridden by the optional config file, overridden by --set flags.
inline RunConfig load_run_config(const std::string& config_path,
                                 const std::vector<std::string>& set_flags) {
  nlohmann::json doc = default_config_json();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) fail(errc::io_error, "cannot open config '" + config_path + "'");
    nlohmann::json file_json;
    try {
      file_json = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(errc::config_error, "config '" + config_path + "': " + e.what());
    }
    detail::merge_section(doc, file_json, "");
  }
  for (const auto& s : set_flags) detail::apply_set(doc, s);

  RunConfig cfg;
  try {
    const auto& c = doc.at("corpus");
    cfg.corpus.n_train = c.at("n_train").get<int>();
    cfg.corpus.n_valid = c.at("n_valid").get<int>();
    cfg.corpus.n_test = c.at("n_test").get<int>();
    cfg.corpus.p_mention = c.at("p_mention").get<double>();
    cfg.corpus.seed = c.at("seed").get<std::uint64_t>();
    cfg.corpus.lead_count = c.at("lead_count").get<int>();
    cfg.corpus.sample_rate = c.at("sample_rate").get<double>();
    cfg.corpus.duration = c.at("duration").get<double>();
    cfg.train = pipeline::TrainConfig::from_json(doc.at("train"));
    const auto& p = doc.at("proposer");
    cfg.proposer.mode = proposer::proposer_mode_from_name(p.at("mode").get<std::string>());
    cfg.proposer.threshold = p.at("threshold").get<double>();
    cfg.proposer.calibrated = p.at("calibrated").get<bool>();
    cfg.proposer.p_halluc = p.at("p_halluc").get<double>();
    cfg.proposer.endpoint = p.at("endpoint").get<std::string>();
    cfg.proposer.model = p.at("model").get<std::string>();
    cfg.proposer.timeout_s = p.at("timeout_s").get<double>();
    cfg.proposer.retries = p.at("retries").get<int>();
    const auto& e = doc.at("eval");
    cfg.eval.fractions = e.at("fractions").get<std::vector<double>>();
    cfg.eval.lead_names = e.at("lead_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(errc::config_error, std::string("bad config value: ") + e.what());
  }
  if (!(cfg.proposer.threshold > 0.0 && cfg.proposer.threshold < 1.0)) {
    fail(errc::config_error, "proposer.threshold must lie in (0, 1)");
  }
  return cfg;
}

}  // namespace fgclep::cli
