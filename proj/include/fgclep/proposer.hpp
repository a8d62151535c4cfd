#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "fgclep/alignment.hpp"
#include "fgclep/corpus.hpp"
#include "fgclep/errors.hpp"
#include "fgclep/model.hpp"
#include "fgclep/rng.hpp"

namespace fgclep::proposer {

struct FeatureProposal {
  int report_id = -1;
  std::string candidate;
  std::string source;  // "oracle" | "llm"
  double score = 0.0;
  bool accepted = false;
};

enum class ProposerMode { oracle, llm };

inline const char* proposer_mode_name(ProposerMode m) {
  return m == ProposerMode::oracle ? "oracle" : "llm";
}

inline ProposerMode proposer_mode_from_name(const std::string& s) {
  if (s == "oracle") return ProposerMode::oracle;
  if (s == "llm") return ProposerMode::llm;
  fail(errc::config_error, "unknown proposer mode '" + s + "'");
}

struct ProposerConfig {
  ProposerMode mode = ProposerMode::oracle;
  double threshold = 0.95;
  // true: score = sigmoid(t * sim + b) using the learned scalars; false: the
  // plain sigmoid(sim) scale, whose range caps near 0.731.
  bool calibrated = true;
  double p_halluc = 0.3;       // oracle mode
  std::string endpoint;        // llm mode; falls back to FGCLEP_LLM_ENDPOINT
  std::string model = "llama3-8b-instruct";
  double timeout_s = 30.0;
  int retries = 3;
};

// Candidate features for a report from the rule map: the union over every
// bundle of each diagnosis (over-generation mirrors the many-presentations
// problem), plus, with probability p_halluc, one random feature outside that
// union (a planted hallucination).
inline std::vector<std::string> propose_oracle(const corpus::ReportText& report,
                                               rng::SplitMix64& rng, double p_halluc) {
  std::set<int> union_ids;
  for (const auto& diagnosis : report.diagnoses) {
    const corpus::DiagnosisRule& rule = corpus::rule_for(diagnosis);
    for (const auto& bundle : rule.bundles) {
      union_ids.insert(bundle.begin(), bundle.end());
    }
  }
  std::vector<std::string> phrases;
  for (int id : union_ids) phrases.push_back(corpus::feature_name(id));
  const bool hallucinate = rng.next_unit() < p_halluc;
  if (hallucinate) {
    std::vector<int> outside;
    for (int id = 0; id < corpus::kFeatureCount; ++id) {
      if (!union_ids.count(id)) outside.push_back(id);
    }
    if (!outside.empty()) {
      phrases.push_back(corpus::feature_name(outside[rng.below(outside.size())]));
    }
  }
  return phrases;
}

// Extracts the first balanced [...] span and returns its quoted items,
// trimmed, lowercased, deduplicated in order.
inline std::vector<std::string> parse_feature_list(const std::string& reply) {
  const std::size_t open = reply.find('[');
  if (open == std::string::npos) {
    fail(errc::parse_error, "no bracketed list in reply: " + reply);
  }
  std::size_t close = std::string::npos;
  int depth = 0;
  for (std::size_t i = open; i < reply.size(); ++i) {
    if (reply[i] == '[') ++depth;
    if (reply[i] == ']' && --depth == 0) {
      close = i;
      break;
    }
  }
  if (close == std::string::npos) {
    fail(errc::parse_error, "unbalanced bracketed list in reply: " + reply);
  }
  std::vector<std::string> items;
  std::set<std::string> seen;
  std::size_t i = open + 1;
  while (i < close) {
    const char quote = reply[i];
    if (quote == '"' || quote == '\'') {
      const std::size_t end = reply.find(quote, i + 1);
      if (end == std::string::npos || end > close) break;
      std::string item = reply.substr(i + 1, end - i - 1);
      const auto first = item.find_first_not_of(" \t\r\n");
      const auto last = item.find_last_not_of(" \t\r\n");
      item = first == std::string::npos ? "" : item.substr(first, last - first + 1);
      std::transform(item.begin(), item.end(), item.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (!item.empty() && seen.insert(item).second) items.push_back(item);
      i = end + 1;
    } else {
      ++i;
    }
  }
  if (items.empty()) {
    fail(errc::parse_error, "bracketed list holds no quoted items: " + reply);
  }
  return items;
}

inline double proposal_score(double sim, bool calibrated, double temperature, double logit_bias) {
  const double x = calibrated ? temperature * sim + logit_bias : sim;
  return 1.0 / (1.0 + std::exp(-x));
}

// Scores a candidate phrase against one ECG with the coarse model and applies
// the strict acceptance threshold.
inline FeatureProposal validate_feature(const model::ModelView& view,
                                        const corpus::EcgRecord& ecg, const std::string& phrase,
                                        double threshold, bool calibrated) {
  const std::vector<int> ids = encoders::tokenize(*view.vocab, phrase);
  if (ids.empty()) {
    fail(errc::empty_input, "candidate '" + phrase + "' tokenizes to an empty list");
  }
  const numerics::Vec txt_proj = encoders::embed_text(*view.params, view.cfg.txt, ids).second;
  const numerics::Vec ecg_proj = encoders::embed_ecg(*view.params, view.cfg.ecg, ecg.signal).second;
  const double sim = alignment::cosine_sim(ecg_proj, txt_proj);
  FeatureProposal p;
  p.candidate = phrase;
  p.score = proposal_score(sim, calibrated, std::exp(view.params->scalar("align.logit_scale_log")),
                           view.params->scalar("align.logit_bias"));
  p.accepted = p.score > threshold;
  return p;
}

// Appends one "Noted <phrase>." sentence per accepted phrase, in order,
// skipping phrases whose exact text already appears in the report.
inline corpus::ReportText augment_report(const corpus::ReportText& report,
                                         const std::vector<std::string>& accepted) {
  corpus::ReportText out = report;
  for (const auto& phrase : accepted) {
    if (out.text.find(phrase) != std::string::npos) continue;
    out.text += " Noted " + phrase + ".";
  }
  return out;
}

}  // namespace fgclep::proposer
