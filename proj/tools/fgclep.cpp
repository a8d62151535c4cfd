// fgclep: synthesize paired ECG-report corpora, run the three-stage
// contrastive pipeline, and evaluate the resulting checkpoints.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fgclep/checkpoint.hpp"
#include "fgclep/corpus.hpp"
#include "fgclep/corpus_io.hpp"
#include "fgclep/errors.hpp"
#include "fgclep/evalkit.hpp"
#include "fgclep/metrics.hpp"
#include "fgclep/pipeline.hpp"
#include "fgclep/run_config.hpp"

namespace {

namespace fs = std::filesystem;
using fgclep::cli::RunConfig;

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_json_output(const nlohmann::json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << "\n";
    return;
  }
  ensure_parent_dir(out_path);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) fgclep::fail(fgclep::errc::io_error, "cannot write '" + out_path + "'");
  out << doc.dump(2) << "\n";
  std::cerr << "wrote " << out_path << "\n";
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
};

RunConfig resolve_config(const CommonOpts& opts) {
  return fgclep::cli::load_run_config(opts.config_path, opts.sets);
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.sets, "Override a config key, e.g. --set train.base_lr=1e-3")
      ->take_all();
}

std::vector<int> eval_split_indices(const fgclep::corpus::Corpus& corpus,
                                    const std::string& split) {
  if (split == "all") {
    std::vector<int> idx(corpus.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    return idx;
  }
  return fgclep::corpus::split_indices(corpus, fgclep::corpus::split_from_name(split));
}

int run_cli(int argc, char** argv) {
  CLI::App app{"FG-CLEP: fine-grained contrastive ECG-report pre-training at desk scale"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired corpus");
  CommonOpts synth_opts;
  std::string synth_out;
  add_common(synth, synth_opts);
  synth->add_option("--out", synth_out, "Output base path (writes <out>.jsonl and <out>.sig)")
      ->required();
  synth->callback([&] {
    const RunConfig cfg = resolve_config(synth_opts);
    const auto corpus = fgclep::corpus::synth_corpus(cfg.corpus);
    ensure_parent_dir(synth_out);
    fgclep::corpus::save_corpus(corpus, synth_out);
    std::cerr << "wrote " << synth_out << ".jsonl and " << synth_out << ".sig ("
              << corpus.records.size() << " records)\n";
  });

  // ---- train (stage 1 only) ----
  auto* train = app.add_subcommand("train", "Stage-1 contrastive training");
  CommonOpts train_opts;
  std::string train_corpus, train_out;
  add_common(train, train_opts);
  train->add_option("--corpus", train_corpus, "Corpus base path")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->callback([&] {
    const RunConfig cfg = resolve_config(train_opts);
    const auto corpus = fgclep::corpus::load_corpus(train_corpus);
    fs::create_directories(train_out);
    fgclep::pipeline::MetricsLog metrics(train_out + "/metrics.jsonl");
    auto ck = fgclep::pipeline::train_stage(corpus, nullptr, cfg.train, cfg.train.epochs_stage1,
                                            "clep", &metrics);
    fgclep::pipeline::save_checkpoint(ck, train_out + "/clep.ckpt");
    std::cerr << "wrote " << train_out << "/clep.ckpt\n";
  });

  // ---- augment ----
  auto* augment = app.add_subcommand("augment", "Stage-2 report augmentation");
  CommonOpts aug_opts;
  std::string aug_corpus, aug_ckpt, aug_out;
  add_common(augment, aug_opts);
  augment->add_option("--corpus", aug_corpus, "Corpus base path")->required();
  augment->add_option("--ckpt", aug_ckpt, "Stage-1 checkpoint")->required();
  augment->add_option("--out", aug_out, "Output corpus base path")->required();
  augment->callback([&] {
    const RunConfig cfg = resolve_config(aug_opts);
    const auto corpus = fgclep::corpus::load_corpus(aug_corpus);
    auto coarse = fgclep::pipeline::load_checkpoint(aug_ckpt);
    ensure_parent_dir(aug_out);
    fgclep::pipeline::MetricsLog metrics(aug_out + ".metrics.jsonl");
    auto result = fgclep::pipeline::augment_corpus(corpus, coarse, cfg.proposer, cfg.train.seed,
                                                   &metrics);
    fgclep::corpus::save_corpus(result.corpus, aug_out);
    std::cerr << "wrote " << aug_out << ".jsonl/.sig; accepted " << result.stats["accepted"]
              << " of " << result.stats["proposed"] << " proposals\n";
  });

  // ---- run (all three stages) ----
  auto* run = app.add_subcommand("run", "Full three-stage pipeline");
  CommonOpts run_opts;
  std::string run_corpus, run_out;
  add_common(run, run_opts);
  run->add_option("--corpus", run_corpus,
                  "Corpus base path (synthesized from the config when omitted)");
  run->add_option("--out", run_out, "Output directory")->required();
  run->callback([&] {
    const RunConfig cfg = resolve_config(run_opts);
    fs::create_directories(run_out);
    fgclep::corpus::Corpus corpus;
    if (run_corpus.empty()) {
      corpus = fgclep::corpus::synth_corpus(cfg.corpus);
      fgclep::corpus::save_corpus(corpus, run_out + "/corpus");
      std::cerr << "synthesized " << corpus.records.size() << " records\n";
    } else {
      corpus = fgclep::corpus::load_corpus(run_corpus);
    }
    fgclep::pipeline::MetricsLog metrics(run_out + "/metrics.jsonl");
    auto result = fgclep::pipeline::run_fgclep(corpus, cfg.train, cfg.proposer, &metrics);
    fgclep::pipeline::save_checkpoint(result.clep, run_out + "/clep.ckpt");
    fgclep::pipeline::save_checkpoint(result.fgclep, run_out + "/fgclep.ckpt");
    fgclep::corpus::save_corpus(result.augmented, run_out + "/augmented");
    std::cerr << "wrote " << run_out << "/clep.ckpt, fgclep.ckpt, augmented.{jsonl,sig}\n";
  });

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->require_subcommand(1);

  auto* zs = eval->add_subcommand("zero-shot", "Zero-shot classification macro AUC");
  CommonOpts zs_opts;
  std::string zs_ckpt, zs_corpus, zs_labels = "diagnoses", zs_split = "test", zs_out;
  bool zs_ensemble = false;
  add_common(zs, zs_opts);
  zs->add_option("--ckpt", zs_ckpt, "Checkpoint path")->required();
  zs->add_option("--corpus", zs_corpus, "Corpus base path")->required();
  zs->add_option("--labels", zs_labels, "Label set: diagnoses|features");
  zs->add_option("--split", zs_split, "Split to score: train|valid|test|all");
  zs->add_flag("--ensemble", zs_ensemble, "Lead-wise prompt ensemble");
  zs->add_option("--out", zs_out, "Report JSON path (stdout when omitted)");
  zs->callback([&] {
    const RunConfig cfg = resolve_config(zs_opts);
    const auto ck = fgclep::pipeline::load_checkpoint(zs_ckpt);
    const auto corpus = fgclep::corpus::load_corpus(zs_corpus);
    const auto idx = eval_split_indices(corpus, zs_split);
    std::vector<const fgclep::numerics::Mat*> signals;
    for (int i : idx) signals.push_back(&corpus.records[static_cast<std::size_t>(i)].ecg.signal);
    const auto view = ck.view();
    const auto labels = fgclep::evalkit::build_labels(corpus, idx, zs_labels);
    const auto scores =
        zs_ensemble
            ? fgclep::evalkit::ensemble_zero_shot(view, signals, labels.class_names,
                                                  cfg.eval.lead_names)
            : fgclep::evalkit::zero_shot(view, signals, labels.class_names);
    std::vector<std::string> skipped;
    std::map<std::string, double> per_class;
    const double auc = fgclep::evalkit::macro_auc(scores, labels, &skipped, &per_class);
    nlohmann::json report{{"task", "zero_shot"},
                          {"checkpoint_digest", fgclep::pipeline::digest_hex(ck.digest)},
                          {"labels", zs_labels},
                          {"split", zs_split},
                          {"ensemble", zs_ensemble},
                          {"per_class_auc", per_class},
                          {"macro_auc", auc},
                          {"skipped_classes", skipped},
                          {"config", {{"lead_names", cfg.eval.lead_names}}}};
    write_json_output(report, zs_out);
  });

  auto* probe = eval->add_subcommand("linear-probe", "Frozen-encoder linear probe macro AUC");
  CommonOpts probe_opts;
  std::string probe_ckpt, probe_corpus, probe_labels = "diagnoses", probe_out;
  bool probe_projected = false;
  add_common(probe, probe_opts);
  probe->add_option("--ckpt", probe_ckpt, "Checkpoint path")->required();
  probe->add_option("--corpus", probe_corpus, "Corpus base path")->required();
  probe->add_option("--labels", probe_labels, "Label set: diagnoses|features");
  probe->add_flag("--projected", probe_projected, "Probe the projected embedding e_p instead of e");
  probe->add_option("--out", probe_out, "Report JSON path (stdout when omitted)");
  probe->callback([&] {
    const RunConfig cfg = resolve_config(probe_opts);
    const auto ck = fgclep::pipeline::load_checkpoint(probe_ckpt);
    const auto corpus = fgclep::corpus::load_corpus(probe_corpus);
    fgclep::evalkit::ProbeOptions opt;
    opt.probe_projected = probe_projected;
    const auto result = fgclep::evalkit::linear_probe(ck.view(), corpus, probe_labels,
                                                      cfg.eval.fractions, cfg.train.seed, opt);
    nlohmann::json by_fraction = nlohmann::json::object();
    for (const auto& [fraction, auc] : result.auc_by_fraction) {
      by_fraction[std::to_string(fraction)] = auc;
    }
    nlohmann::json report{{"task", "linear_probe"},
                          {"checkpoint_digest", fgclep::pipeline::digest_hex(ck.digest)},
                          {"labels", probe_labels},
                          {"auc_by_fraction", by_fraction},
                          {"warnings", result.warnings},
                          {"config", {{"fractions", cfg.eval.fractions},
                                      {"probe_projected", probe_projected}}}};
    write_json_output(report, probe_out);
  });

  // ---- retrieve ----
  auto* retrieve = app.add_subcommand("retrieve", "Text-to-ECG retrieval");
  CommonOpts ret_opts;
  std::string ret_ckpt, ret_corpus, ret_query, ret_out;
  int ret_k = 5;
  add_common(retrieve, ret_opts);
  retrieve->add_option("--ckpt", ret_ckpt, "Checkpoint path")->required();
  retrieve->add_option("--corpus", ret_corpus, "Corpus base path")->required();
  retrieve->add_option("--query", ret_query, "Query text")->required();
  retrieve->add_option("-k,--top-k", ret_k, "Number of records to return");
  retrieve->add_option("--out", ret_out, "Result JSON path (stdout when omitted)");
  retrieve->callback([&] {
    resolve_config(ret_opts);
    const auto ck = fgclep::pipeline::load_checkpoint(ret_ckpt);
    const auto corpus = fgclep::corpus::load_corpus(ret_corpus);
    std::vector<std::string> warnings;
    const auto hits = fgclep::evalkit::retrieve(ck.view(), ret_query, corpus, ret_k, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    nlohmann::json results = nlohmann::json::array();
    for (const auto& [id, score] : hits) results.push_back({{"id", id}, {"score", score}});
    write_json_output({{"task", "retrieve"},
                       {"checkpoint_digest", fgclep::pipeline::digest_hex(ck.digest)},
                       {"query", ret_query},
                       {"results", results}},
                      ret_out);
  });

  // ---- export ----
  auto* exp = app.add_subcommand("export", "CSV exports for external plotting");
  exp->require_subcommand(1);

  auto* emb = exp->add_subcommand("embeddings", "Raw ECG embeddings, one row per record");
  std::string emb_ckpt, emb_corpus, emb_out;
  emb->add_option("--ckpt", emb_ckpt, "Checkpoint path")->required();
  emb->add_option("--corpus", emb_corpus, "Corpus base path")->required();
  emb->add_option("--out", emb_out, "CSV output path")->required();
  emb->callback([&] {
    const auto ck = fgclep::pipeline::load_checkpoint(emb_ckpt);
    const auto corpus = fgclep::corpus::load_corpus(emb_corpus);
    ensure_parent_dir(emb_out);
    fgclep::evalkit::export_embeddings(ck.view(), corpus, emb_out);
    std::cerr << "wrote " << emb_out << "\n";
  });

  auto* heat = exp->add_subcommand("heatmap", "Report similarity matrix for a batch of records");
  std::string heat_ckpt, heat_corpus, heat_out;
  std::vector<int> heat_ids;
  heat->add_option("--ckpt", heat_ckpt, "Checkpoint path")->required();
  heat->add_option("--corpus", heat_corpus, "Corpus base path")->required();
  heat->add_option("--ids", heat_ids, "Record ids for the batch")->required()->delimiter(',');
  heat->add_option("--out", heat_out, "CSV output path")->required();
  heat->callback([&] {
    const auto ck = fgclep::pipeline::load_checkpoint(heat_ckpt);
    const auto corpus = fgclep::corpus::load_corpus(heat_corpus);
    ensure_parent_dir(heat_out);
    fgclep::evalkit::export_similarity_heatmap(ck.view(), corpus, heat_ids, heat_out);
    std::cerr << "wrote " << heat_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const fgclep::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
