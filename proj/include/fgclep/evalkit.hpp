#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgclep/alignment.hpp"
#include "fgclep/corpus.hpp"
#include "fgclep/errors.hpp"
#include "fgclep/model.hpp"
#include "fgclep/optimizer.hpp"
#include "fgclep/params.hpp"

namespace fgclep::evalkit {

using numerics::Mat;
using numerics::Vec;

struct LabelMatrix {
  Eigen::MatrixXi y;  // n x C, entries in {0, 1}
  std::vector<std::string> class_names;
};

// Multi-label scores in (0, 1); rows are never normalized across classes.
struct ScoreMatrix {
  Mat p;
  std::vector<std::string> class_names;
};

inline const std::vector<std::string>& default_lead_names() {
  static const std::vector<std::string> names = {"I",   "II",  "III", "aVR", "aVL", "aVF",
                                                 "V1",  "V2",  "V3",  "V4",  "V5",  "V6"};
  return names;
}

// Ground truth for the synthetic tasks: diagnosis phrases or planted feature
// phrases as classes.
inline LabelMatrix build_labels(const corpus::Corpus& corpus,
                                const std::vector<int>& record_indices,
                                const std::string& kind) {
  LabelMatrix out;
  if (kind == "diagnoses") {
    for (const auto& rule : corpus::diagnosis_rules()) out.class_names.push_back(rule.diagnosis);
  } else if (kind == "features") {
    for (const auto& f : corpus::feature_library()) out.class_names.push_back(f.name);
  } else {
    fail(errc::config_error, "unknown label set '" + kind + "' (want diagnoses|features)");
  }
  out.y = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(record_indices.size()),
                                static_cast<Eigen::Index>(out.class_names.size()));
  for (std::size_t i = 0; i < record_indices.size(); ++i) {
    const corpus::Record& rec = corpus.records[static_cast<std::size_t>(record_indices[i])];
    if (kind == "diagnoses") {
      for (std::size_t c = 0; c < out.class_names.size(); ++c) {
        const bool hit = std::find(rec.report.diagnoses.begin(), rec.report.diagnoses.end(),
                                   out.class_names[c]) != rec.report.diagnoses.end();
        out.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = hit ? 1 : 0;
      }
    } else {
      for (int f : rec.ecg.true_features) {
        out.y(static_cast<Eigen::Index>(i), f) = 1;
      }
    }
  }
  return out;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat prompt_scores(const Mat& ecg_proj, const model::ModelView& view,
                         const std::vector<std::string>& prompts) {
  Mat scores(ecg_proj.rows(), static_cast<Eigen::Index>(prompts.size()));
  for (std::size_t c = 0; c < prompts.size(); ++c) {
    Vec txt;
    try {
      txt = model::embed_prompt_proj(view, prompts[c]);
    } catch (const Error& e) {
      if (e.code() == errc::empty_input) {
        fail(errc::empty_input, "class '" + prompts[c] + "' tokenizes to an empty list");
      }
      throw;
    }
    for (Eigen::Index i = 0; i < ecg_proj.rows(); ++i) {
      const double sim = alignment::cosine_sim(ecg_proj.row(i).transpose(), txt);
      scores(i, static_cast<Eigen::Index>(c)) = sigmoid(sim);
    }
  }
  return scores;
}

}  // namespace detail

// Zero-shot scores: sigmoid of the ECG-prompt cosine, one column per class.
inline ScoreMatrix zero_shot(const model::ModelView& view,
                             const std::vector<const Mat*>& signals,
                             const std::vector<std::string>& class_names) {
  if (class_names.empty()) fail(errc::config_error, "zero_shot: no classes given");
  const Mat ecg_proj = model::embed_signals_proj(view, signals);
  ScoreMatrix out;
  out.class_names = class_names;
  out.p = detail::prompt_scores(ecg_proj, view, class_names);
  return out;
}

// Lead-wise prompt ensemble: for each class, the plain prompt plus one
// "<class> in lead <x>" prompt per lead; the score is the elementwise max.
inline ScoreMatrix ensemble_zero_shot(const model::ModelView& view,
                                      const std::vector<const Mat*>& signals,
                                      const std::vector<std::string>& class_names,
                                      const std::vector<std::string>& lead_names) {
  if (class_names.empty()) fail(errc::config_error, "ensemble_zero_shot: no classes given");
  const Mat ecg_proj = model::embed_signals_proj(view, signals);
  ScoreMatrix out;
  out.class_names = class_names;
  out.p.resize(ecg_proj.rows(), static_cast<Eigen::Index>(class_names.size()));
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    std::vector<std::string> prompts = {class_names[c]};
    for (const auto& lead : lead_names) {
      prompts.push_back(class_names[c] + " in lead " + lead);
    }
    const Mat scores = detail::prompt_scores(ecg_proj, view, prompts);
    out.p.col(static_cast<Eigen::Index>(c)) = scores.rowwise().maxCoeff();
  }
  return out;
}

// Single-class AUC with ties counted one half, via averaged ranks. Returns a
// value identical to brute-force pair counting.
inline double auc_ranked(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }
  double rank_sum = 0.0;
  long n_pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) {
      rank_sum += rank[k];
      ++n_pos;
    }
  }
  const long n_neg = static_cast<long>(n) - n_pos;
  const double numer =
      rank_sum - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0);
  return numer / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Macro AUC over classes that carry both label values; single-valued classes
// are skipped and reported by name.
inline double macro_auc(const ScoreMatrix& scores, const LabelMatrix& labels,
                        std::vector<std::string>* skipped = nullptr,
                        std::map<std::string, double>* per_class = nullptr) {
  if (scores.p.rows() != labels.y.rows() || scores.p.cols() != labels.y.cols()) {
    fail(errc::shape_mismatch, "score and label shapes differ");
  }
  double total = 0.0;
  long used = 0;
  for (Eigen::Index c = 0; c < scores.p.cols(); ++c) {
    const long n_pos = labels.y.col(c).sum();
    const long n_neg = labels.y.rows() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
      if (skipped) skipped->push_back(labels.class_names[static_cast<std::size_t>(c)]);
      continue;
    }
    std::vector<double> s(static_cast<std::size_t>(scores.p.rows()));
    std::vector<int> y(static_cast<std::size_t>(scores.p.rows()));
    for (Eigen::Index i = 0; i < scores.p.rows(); ++i) {
      s[static_cast<std::size_t>(i)] = scores.p(i, c);
      y[static_cast<std::size_t>(i)] = labels.y(i, c);
    }
    const double auc = auc_ranked(s, y);
    if (per_class) (*per_class)[labels.class_names[static_cast<std::size_t>(c)]] = auc;
    total += auc;
    ++used;
  }
  if (used == 0) fail(errc::empty_evaluation, "no class carries both label values");
  return total / static_cast<double>(used);
}

// ============================================================================
// Linear probe on frozen embeddings
// ============================================================================

struct ProbeOptions {
  int steps = 500;
  double lr = 1e-2;
  bool probe_projected = false;  // default probes the pre-projection embedding
};

struct ProbeOutcome {
  double auc = 0.0;
  std::vector<std::string> warnings;
};

// Core probe: trains an affine per-class sigmoid classifier on the given
// embeddings with full-batch adaptive-moment steps, then reports macro AUC on
// the test embeddings.
inline ProbeOutcome probe_embeddings(const Mat& train_e, const LabelMatrix& train_y,
                                     const Mat& test_e, const LabelMatrix& test_y,
                                     const ProbeOptions& opt = {}) {
  const Eigen::Index dim = train_e.cols();
  const Eigen::Index classes = train_y.y.cols();
  const Eigen::Index n = train_e.rows();

  ProbeOutcome out;
  std::vector<char> usable(static_cast<std::size_t>(classes), 1);
  for (Eigen::Index c = 0; c < classes; ++c) {
    const long n_pos = train_y.y.col(c).sum();
    if (n_pos == 0 || n_pos == n) {
      usable[static_cast<std::size_t>(c)] = 0;
      out.warnings.push_back("class '" + train_y.class_names[static_cast<std::size_t>(c)] +
                             "' is single-valued in the probe subsample; skipped");
    }
  }

  numerics::ParamStore probe;
  probe.add("probe.weight", classes, dim);
  probe.add("probe.bias", classes, 1);
  numerics::OptimizerHyper hyper;
  hyper.lr = opt.lr;
  hyper.weight_decay = 0.0;
  numerics::OptimizerState state(probe, hyper);

  const Mat y = train_y.y.cast<double>();
  for (int it = 0; it < opt.steps; ++it) {
    const Mat logits = (train_e * probe.at("probe.weight").transpose()).rowwise() +
                       probe.at("probe.bias").col(0).transpose();
    Mat d_logits = ((1.0 / (1.0 + (-logits.array()).exp())) - y.array()).matrix() /
                   static_cast<double>(n);
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (!usable[static_cast<std::size_t>(c)]) d_logits.col(c).setZero();
    }
    numerics::GradStore grads(probe);
    grads.at("probe.weight").noalias() = d_logits.transpose() * train_e;
    grads.at("probe.bias").col(0) = d_logits.colwise().sum().transpose();
    numerics::adamw_step(probe, grads, state);
  }

  const Mat test_logits = (test_e * probe.at("probe.weight").transpose()).rowwise() +
                          probe.at("probe.bias").col(0).transpose();
  ScoreMatrix scores;
  scores.class_names = train_y.class_names;
  scores.p = (1.0 / (1.0 + (-test_logits.array()).exp())).matrix();

  // Drop classes skipped in training from the evaluation as well.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < classes; ++c) {
    if (usable[static_cast<std::size_t>(c)]) keep.push_back(c);
  }
  ScoreMatrix kept_scores;
  LabelMatrix kept_labels;
  kept_scores.p.resize(scores.p.rows(), static_cast<Eigen::Index>(keep.size()));
  kept_labels.y.resize(test_y.y.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    kept_scores.p.col(static_cast<Eigen::Index>(k)) = scores.p.col(keep[k]);
    kept_labels.y.col(static_cast<Eigen::Index>(k)) = test_y.y.col(keep[k]);
    kept_scores.class_names.push_back(scores.class_names[static_cast<std::size_t>(keep[k])]);
    kept_labels.class_names.push_back(scores.class_names[static_cast<std::size_t>(keep[k])]);
  }
  std::vector<std::string> eval_skipped;
  out.auc = macro_auc(kept_scores, kept_labels, &eval_skipped);
  for (const auto& name : eval_skipped) {
    out.warnings.push_back("class '" + name + "' is single-valued in the test split; skipped");
  }
  return out;
}

struct LinearProbeResult {
  std::vector<std::pair<double, double>> auc_by_fraction;
  std::vector<std::string> warnings;
};

// Freezes the encoder, extracts embeddings, and probes nested train subsets of
// the requested fractions.
inline LinearProbeResult linear_probe(const model::ModelView& view, const corpus::Corpus& corpus,
                                      const std::string& label_kind,
                                      const std::vector<double>& fractions, std::uint64_t seed,
                                      const ProbeOptions& opt = {}) {
  const std::vector<int> train_idx = corpus::split_indices(corpus, corpus::Split::train);
  const std::vector<int> test_idx = corpus::split_indices(corpus, corpus::Split::test);
  if (train_idx.empty() || test_idx.empty()) {
    fail(errc::config_error, "linear probe needs nonempty train and test splits");
  }

  auto embed = [&](const std::vector<int>& idx) {
    std::vector<const Mat*> signals;
    for (int i : idx) signals.push_back(&corpus.records[static_cast<std::size_t>(i)].ecg.signal);
    Mat raw;
    const Mat proj = model::embed_signals_proj(view, signals, &raw);
    return opt.probe_projected ? proj : raw;
  };
  const Mat train_e = embed(train_idx);
  const Mat test_e = embed(test_idx);
  const LabelMatrix test_y = build_labels(corpus, test_idx, label_kind);

  std::vector<int> shuffled(train_idx.size());
  std::iota(shuffled.begin(), shuffled.end(), 0);
  auto g = rng::stream(seed, 0x980BE);
  rng::shuffle(shuffled, g);

  LinearProbeResult out;
  for (double fraction : fractions) {
    const long k = std::lround(fraction * static_cast<double>(train_idx.size()));
    if (k < 2) {
      fail(errc::config_error, "fraction " + std::to_string(fraction) +
                                   " leaves fewer than two probe records");
    }
    Mat sub_e(k, train_e.cols());
    std::vector<int> sub_records;
    for (long i = 0; i < k; ++i) {
      sub_e.row(i) = train_e.row(shuffled[static_cast<std::size_t>(i)]);
      sub_records.push_back(train_idx[static_cast<std::size_t>(shuffled[static_cast<std::size_t>(i)])]);
    }
    const LabelMatrix sub_y = build_labels(corpus, sub_records, label_kind);
    ProbeOutcome probe = probe_embeddings(sub_e, sub_y, test_e, test_y, opt);
    out.auc_by_fraction.emplace_back(fraction, probe.auc);
    for (auto& w : probe.warnings) {
      out.warnings.push_back("fraction " + std::to_string(fraction) + ": " + w);
    }
  }
  return out;
}

// ============================================================================
// Retrieval and exports
// ============================================================================

// Ranks every record by sigmoid(cosine) against the query text; equal scores
// order by ascending record id.
inline std::vector<std::pair<int, double>> retrieve(const model::ModelView& view,
                                                    const std::string& query,
                                                    const corpus::Corpus& corpus, int k,
                                                    std::vector<std::string>* warnings = nullptr) {
  if (k < 1) fail(errc::config_error, "retrieve: k must be at least 1");
  const Vec query_proj = model::embed_prompt_proj(view, query);
  std::vector<const Mat*> signals;
  for (const auto& rec : corpus.records) signals.push_back(&rec.ecg.signal);
  const Mat ecg_proj = model::embed_signals_proj(view, signals);
  std::vector<std::pair<int, double>> scored;
  scored.reserve(corpus.records.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const double sim =
        alignment::cosine_sim(ecg_proj.row(static_cast<Eigen::Index>(i)).transpose(), query_proj);
    scored.emplace_back(corpus.records[i].id, detail::sigmoid(sim));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (k > static_cast<int>(scored.size())) {
    if (warnings) {
      warnings->push_back("k=" + std::to_string(k) + " exceeds the corpus size " +
                          std::to_string(scored.size()) + "; clamped");
    }
    k = static_cast<int>(scored.size());
  }
  scored.resize(static_cast<std::size_t>(k));
  return scored;
}

namespace detail {

inline void write_double(std::ofstream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace detail

// CSV of raw ECG embeddings: id, split, dim_0..dim_{D-1}.
inline void export_embeddings(const model::ModelView& view, const corpus::Corpus& corpus,
                              const std::string& path) {
  std::vector<const Mat*> signals;
  for (const auto& rec : corpus.records) signals.push_back(&rec.ecg.signal);
  Mat raw;
  model::embed_signals_proj(view, signals, &raw);
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot write '" + path + "'");
  out << "id,split";
  for (Eigen::Index d = 0; d < raw.cols(); ++d) out << ",dim_" << d;
  out << "\n";
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    out << corpus.records[i].id << "," << corpus::split_name(corpus.records[i].split);
    for (Eigen::Index d = 0; d < raw.cols(); ++d) {
      out << ",";
      detail::write_double(out, raw(static_cast<Eigen::Index>(i), d));
    }
    out << "\n";
  }
  if (!out) fail(errc::io_error, "write to '" + path + "' failed");
}

// CSV of the text-text similarity matrix for a batch of records, with record
// ids as the header row and column.
inline void export_similarity_heatmap(const model::ModelView& view, const corpus::Corpus& corpus,
                                      const std::vector<int>& record_ids,
                                      const std::string& path) {
  std::vector<const corpus::Record*> records;
  for (int id : record_ids) {
    const corpus::Record* found = nullptr;
    for (const auto& rec : corpus.records) {
      if (rec.id == id) {
        found = &rec;
        break;
      }
    }
    if (!found) fail(errc::config_error, "record id " + std::to_string(id) + " not in corpus");
    records.push_back(found);
  }
  if (records.empty()) fail(errc::config_error, "heatmap needs at least one record id");
  Mat txt_proj(static_cast<Eigen::Index>(records.size()), view.cfg.txt.proj_dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    txt_proj.row(static_cast<Eigen::Index>(i)) =
        model::embed_prompt_proj(view, records[i]->report.text).transpose();
  }
  const Mat s = alignment::similarity_matrix(txt_proj);
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot write '" + path + "'");
  out << "id";
  for (const auto* rec : records) out << "," << rec->id;
  out << "\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << records[i]->id;
    for (std::size_t j = 0; j < records.size(); ++j) {
      out << ",";
      detail::write_double(out, s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out << "\n";
  }
  if (!out) fail(errc::io_error, "write to '" + path + "' failed");
}

}  // namespace fgclep::evalkit
