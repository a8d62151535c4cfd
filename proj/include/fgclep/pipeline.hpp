#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgclep/checkpoint.hpp"
#include "fgclep/corpus.hpp"
#include "fgclep/gradcheck.hpp"
#include "fgclep/llm_client.hpp"
#include "fgclep/metrics.hpp"
#include "fgclep/model.hpp"
#include "fgclep/optimizer.hpp"
#include "fgclep/proposer.hpp"
#include "fgclep/vocab.hpp"

namespace fgclep::pipeline {

struct TrainConfig {
  int batch_size = 100;
  int epochs_stage1 = 10;
  int epochs_stage3 = 3;
  double base_lr = 2e-5;
  double weight_decay = 1e-4;
  double warmup_frac = 0.1;
  double lambda = 0.5;
  model::LossVariant loss_variant = model::LossVariant::sigmoid_fnm;
  bool from_scratch = false;
  std::uint64_t seed = 42;

  nlohmann::json to_json() const {
    return nlohmann::json{{"batch_size", batch_size},
                          {"epochs_stage1", epochs_stage1},
                          {"epochs_stage3", epochs_stage3},
                          {"base_lr", base_lr},
                          {"weight_decay", weight_decay},
                          {"warmup_frac", warmup_frac},
                          {"lambda", lambda},
                          {"loss_variant", model::loss_variant_name(loss_variant)},
                          {"from_scratch", from_scratch},
                          {"seed", seed}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.epochs_stage1 = j.at("epochs_stage1").get<int>();
    cfg.epochs_stage3 = j.at("epochs_stage3").get<int>();
    cfg.base_lr = j.at("base_lr").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.warmup_frac = j.at("warmup_frac").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.loss_variant = model::loss_variant_from_name(j.at("loss_variant").get<std::string>());
    cfg.from_scratch = j.at("from_scratch").get<bool>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
  }
};

namespace detail {

inline std::vector<std::vector<int>> tokenize_records(const corpus::Corpus& corpus,
                                                      const encoders::Vocabulary& vocab) {
  std::vector<std::vector<int>> ids(corpus.records.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    ids[i] = encoders::tokenize(vocab, corpus.records[i].report.text);
  }
  return ids;
}

}  // namespace detail

// One contrastive training stage. `init` continues from an earlier checkpoint
// (parameters and vocabulary are taken from it); a null init builds the
// vocabulary from the corpus train split and draws fresh parameters.
inline Checkpoint train_stage(const corpus::Corpus& corpus, const Checkpoint* init,
                              const TrainConfig& cfg, int epochs, const std::string& stage_tag,
                              MetricsLog* metrics) {
  if (cfg.batch_size < 2) {
    fail(errc::config_error, "contrastive training needs batch_size >= 2");
  }
  if (epochs < 0) fail(errc::config_error, "epochs must be nonnegative");
  const std::vector<int> train_idx = corpus::split_indices(corpus, corpus::Split::train);
  if (static_cast<int>(train_idx.size()) < cfg.batch_size) {
    fail(errc::config_error, "corpus too small: train split holds " +
                                 std::to_string(train_idx.size()) + " records, batch size is " +
                                 std::to_string(cfg.batch_size));
  }

  Checkpoint ck;
  ck.stage = stage_tag;
  if (init) {
    ck.vocab = init->vocab;
    ck.params = init->params;
    ck.config = init->config;
  } else {
    ck.vocab = encoders::build_vocabulary(corpus);
    model::ModelConfig mcfg;
    mcfg.ecg.in_channels = corpus.records.front().ecg.lead_count;
    mcfg.txt.vocab_size = ck.vocab.size();
    ck.params = model::init_params(mcfg, cfg.seed);
    ck.config["model"] = mcfg.to_json();
  }
  ck.config["train"] = cfg.to_json();
  ck.config["train"]["epochs_run"] = epochs;
  ck.config["train"]["stage_tag"] = stage_tag;

  const model::ModelConfig mcfg = ck.model_config();
  const auto loss_fn = model::make_loss_fn(mcfg, cfg.loss_variant, cfg.lambda);
  const auto token_ids = detail::tokenize_records(corpus, ck.vocab);

  numerics::OptimizerHyper hyper;
  hyper.lr = cfg.base_lr;
  hyper.weight_decay = cfg.weight_decay;
  ck.optimizer = numerics::OptimizerState(ck.params, hyper);
  ck.has_optimizer = true;

  const long steps_per_epoch = static_cast<long>(train_idx.size()) / cfg.batch_size;
  const long total_steps = steps_per_epoch * epochs;
  long global_step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<int> order = train_idx;
    auto shuffle_rng = rng::stream(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch));
    rng::shuffle(order, shuffle_rng);
    for (long step = 0; step < steps_per_epoch; ++step) {
      numerics::Batch batch;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const int rec = order[static_cast<std::size_t>(step) * cfg.batch_size + b];
        batch.signals.push_back(&corpus.records[static_cast<std::size_t>(rec)].ecg.signal);
        batch.token_ids.push_back(token_ids[static_cast<std::size_t>(rec)]);
      }
      ++global_step;
      const double lr = numerics::lr_at(global_step, total_steps, cfg.base_lr, cfg.warmup_frac);
      double loss = 0.0;
      try {
        const auto fb = numerics::forward_backward(ck.params, batch, loss_fn);
        loss = fb.loss;
        ck.optimizer.hyper.lr = lr;
        numerics::adamw_step(ck.params, fb.grads, ck.optimizer);
      } catch (const Error& e) {
        if (e.code() == errc::numeric_failure) {
          fail(errc::numeric_failure,
               std::string(e.what()) + " (stage " + stage_tag + ", optimizer step " +
                   std::to_string(global_step) + ")");
        }
        throw;
      }
      if (metrics) {
        metrics->write({{"type", "train_step"},
                        {"stage", stage_tag},
                        {"epoch", epoch},
                        {"step", global_step},
                        {"lr", lr},
                        {"loss", loss}});
      }
    }
  }
  return ck;
}

struct AugmentResult {
  corpus::Corpus corpus;
  std::vector<proposer::FeatureProposal> proposals;
  nlohmann::json stats;
};

// Stage 2: propose -> validate -> append for every train-split record. Valid
// and test reports and all signals pass through untouched. Proposal failures
// never abort the pass; the record keeps its original report.
inline AugmentResult augment_corpus(const corpus::Corpus& input, const Checkpoint& coarse,
                                    const proposer::ProposerConfig& pcfg, std::uint64_t seed,
                                    MetricsLog* metrics, proposer::LlmClient* client = nullptr) {
  if (coarse.stage != "clep") {
    fail(errc::config_error, "augmentation requires a stage-1 (clep) checkpoint, got '" +
                                 coarse.stage + "'");
  }
  proposer::HttpLlmClient http_client;
  if (pcfg.mode == proposer::ProposerMode::llm && !client) client = &http_client;

  const model::ModelView view = coarse.view();
  const double temperature = std::exp(view.params->scalar("align.logit_scale_log"));
  const double logit_bias = view.params->scalar("align.logit_bias");

  AugmentResult out;
  out.corpus = input;

  const std::vector<int> train_idx = corpus::split_indices(input, corpus::Split::train);
  std::vector<const numerics::Mat*> signals;
  signals.reserve(train_idx.size());
  for (int idx : train_idx) {
    signals.push_back(&input.records[static_cast<std::size_t>(idx)].ecg.signal);
  }
  const numerics::Mat ecg_proj = model::embed_signals_proj(view, signals);

  std::map<std::string, numerics::Vec> phrase_cache;
  auto phrase_embedding = [&](const std::string& phrase) -> const numerics::Vec& {
    auto it = phrase_cache.find(phrase);
    if (it == phrase_cache.end()) {
      it = phrase_cache.emplace(phrase, model::embed_prompt_proj(view, phrase)).first;
    }
    return it->second;
  };

  long proposed_total = 0;
  long accepted_total = 0;
  std::map<std::string, std::pair<long, long>> per_feature;  // phrase -> (proposed, accepted)
  std::vector<int> failed_records;

  for (std::size_t bi = 0; bi < train_idx.size(); ++bi) {
    corpus::Record& rec = out.corpus.records[static_cast<std::size_t>(train_idx[bi])];
    std::vector<std::string> candidates;
    try {
      if (pcfg.mode == proposer::ProposerMode::oracle) {
        auto rec_rng = rng::stream(seed, 0xA000 + static_cast<std::uint64_t>(rec.id));
        candidates = proposer::propose_oracle(rec.report, rec_rng, pcfg.p_halluc);
      } else {
        candidates = proposer::propose_llm(rec.report, pcfg, *client);
      }
    } catch (const Error& e) {
      if (e.code() == errc::transport || e.code() == errc::parse_error) {
        failed_records.push_back(rec.id);
        continue;
      }
      throw;
    }

    std::vector<std::string> accepted;
    for (const auto& phrase : candidates) {
      proposer::FeatureProposal p;
      p.report_id = rec.id;
      p.candidate = phrase;
      p.source = proposer_mode_name(pcfg.mode);
      try {
        const double sim =
            alignment::cosine_sim(ecg_proj.row(static_cast<Eigen::Index>(bi)).transpose(),
                                  phrase_embedding(phrase));
        p.score = proposer::proposal_score(sim, pcfg.calibrated, temperature, logit_bias);
        p.accepted = p.score > pcfg.threshold;
      } catch (const Error& e) {
        if (e.code() != errc::empty_input && e.code() != errc::degenerate_vector) throw;
        p.score = 0.0;
        p.accepted = false;
      }
      ++proposed_total;
      auto& pf = per_feature[phrase];
      ++pf.first;
      if (p.accepted) {
        ++accepted_total;
        ++pf.second;
        accepted.push_back(phrase);
      }
      out.proposals.push_back(std::move(p));
    }
    rec.report = proposer::augment_report(rec.report, accepted);
  }

  nlohmann::json per_feature_json = nlohmann::json::object();
  for (const auto& [phrase, counts] : per_feature) {
    per_feature_json[phrase] = {{"proposed", counts.first}, {"accepted", counts.second}};
  }
  out.stats = {{"type", "augmentation"},
               {"mode", proposer_mode_name(pcfg.mode)},
               {"threshold", pcfg.threshold},
               {"calibrated", pcfg.calibrated},
               {"records", train_idx.size()},
               {"proposed", proposed_total},
               {"accepted", accepted_total},
               {"per_feature", per_feature_json},
               {"failed_records", failed_records}};
  if (metrics) metrics->write(out.stats);
  return out;
}

struct PipelineResult {
  Checkpoint clep;
  Checkpoint fgclep;
  corpus::Corpus augmented;
  nlohmann::json augment_stats;
};

// The full three-stage run: contrastive pre-training, report augmentation,
// continued training on the augmented corpus.
inline PipelineResult run_fgclep(const corpus::Corpus& corpus, const TrainConfig& cfg,
                                 const proposer::ProposerConfig& pcfg, MetricsLog* metrics,
                                 proposer::LlmClient* client = nullptr) {
  PipelineResult result;
  result.clep = train_stage(corpus, nullptr, cfg, cfg.epochs_stage1, "clep", metrics);
  AugmentResult aug = augment_corpus(corpus, result.clep, pcfg, cfg.seed, metrics, client);
  result.augment_stats = aug.stats;
  if (cfg.epochs_stage3 == 0) {
    result.fgclep = result.clep;
    result.fgclep.stage = "fgclep";
    result.fgclep.config["train"]["stage_tag"] = "fgclep";
  } else if (cfg.from_scratch) {
    TrainConfig fresh = cfg;
    fresh.seed = rng::mix(cfg.seed, 3);
    result.fgclep = train_stage(aug.corpus, nullptr, fresh, cfg.epochs_stage3, "fgclep", metrics);
  } else {
    result.fgclep = train_stage(aug.corpus, &result.clep, cfg, cfg.epochs_stage3, "fgclep", metrics);
  }
  result.augmented = std::move(aug.corpus);
  return result;
}

}  // namespace fgclep::pipeline
