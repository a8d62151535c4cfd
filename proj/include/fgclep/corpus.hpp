#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fgclep/errors.hpp"
#include "fgclep/rng.hpp"

namespace fgclep::corpus {

// ============================================================================
// Feature library and diagnosis rule map
// ============================================================================

enum FeatureId : int {
  kProlongedPr = 0,
  kInvertedT = 1,
  kStElevation = 2,
  kWideQrs = 3,
  kAbsentP = 4,
  kIrregularRr = 5,
  kTallR = 6,
  kQWave = 7,
};

constexpr int kFeatureCount = 8;

struct WaveformFeature {
  int id;
  std::string name;  // canonical lowercase phrase
};

inline const std::vector<WaveformFeature>& feature_library() {
  static const std::vector<WaveformFeature> lib = {
      {kProlongedPr, "prolonged pr interval"},
      {kInvertedT, "inverted t wave"},
      {kStElevation, "st elevation"},
      {kWideQrs, "wide qrs complex"},
      {kAbsentP, "absent p wave"},
      {kIrregularRr, "irregular rr intervals"},
      {kTallR, "tall r wave"},
      {kQWave, "deep q wave"},
  };
  return lib;
}

inline const std::string& feature_name(int id) {
  if (id < 0 || id >= kFeatureCount) {
    fail(errc::invalid_feature, "feature id " + std::to_string(id) + " out of range");
  }
  return feature_library()[static_cast<std::size_t>(id)].name;
}

// -1 when the phrase is not a library feature
inline int feature_id_by_name(const std::string& name) {
  for (const auto& f : feature_library()) {
    if (f.name == name) return f.id;
  }
  return -1;
}

struct DiagnosisRule {
  std::string diagnosis;
  std::vector<std::vector<int>> bundles;  // alternative feature presentations
};

// One diagnosis maps to several alternative bundles and several diagnoses
// share features, so diagnosis text does not determine the feature set.
inline const std::vector<DiagnosisRule>& diagnosis_rules() {
  static const std::vector<DiagnosisRule> rules = {
      {"normal ecg", {{}}},
      {"first degree av block", {{kProlongedPr}}},
      {"atrial fibrillation", {{kAbsentP, kIrregularRr}}},
      {"myocardial infarction", {{kStElevation, kInvertedT}, {kQWave, kInvertedT}}},
      {"bundle branch block", {{kWideQrs}, {kWideQrs, kTallR}}},
      {"ventricular hypertrophy", {{kTallR}, {kTallR, kStElevation}}},
  };
  return rules;
}

inline const DiagnosisRule& rule_for(const std::string& diagnosis) {
  for (const auto& r : diagnosis_rules()) {
    if (r.diagnosis == diagnosis) return r;
  }
  fail(errc::unknown_diagnosis, "no rule for diagnosis '" + diagnosis + "'");
}

// ============================================================================
// Beat model constants
// ============================================================================

struct BeatComponent {
  double offset;  // seconds relative to beat center
  double width;   // gaussian width, seconds
  double amp;     // millivolts before lead weighting
};

// P, Q, R, S, T
inline const std::vector<BeatComponent>& beat_components() {
  static const std::vector<BeatComponent> comps = {
      {-0.16, 0.02, 0.15},  // P
      {-0.03, 0.008, -0.10},  // Q
      {0.0, 0.01, 1.00},  // R
      {0.03, 0.008, -0.20},  // S
      {0.30, 0.05, 0.30},  // T
  };
  return comps;
}

constexpr double kNoiseSigma = 0.02;       // mV
constexpr double kHeartRateLo = 60.0;      // bpm
constexpr double kHeartRateHi = 90.0;      // bpm
constexpr double kRrJitter = 0.30;         // per-beat uniform fraction
constexpr double kFirstBeatOffset = 0.30;  // seconds
constexpr double kBeatTailMargin = 0.50;   // covers component tails past the record end
// Components are evaluated only within this many widths of their center, so a
// feature's signal footprint has a closed-form window.
constexpr double kComponentSupportWidths = 4.0;
constexpr double kStPlateauLo = 0.06;   // seconds after beat center
constexpr double kStPlateauHi = 0.20;
constexpr double kStPlateauAmp = 0.20;  // mV, unweighted, all leads
constexpr double kProlongedPrOffset = -0.28;
constexpr double kWideQrsWidthFactor = 2.5;
constexpr double kTallRAmpFactor = 1.8;
constexpr double kQWaveAmpFactor = 4.0;
constexpr int kInvertedTLeadLimit = 6;  // leads [0, 6) get the flipped T

inline double lead_weight(int lead, int lead_count) {
  return 0.5 + 0.5 * static_cast<double>(lead + 1) / static_cast<double>(lead_count);
}

// ============================================================================
// Domain types
// ============================================================================

struct SynthConfig {
  int n_train = 2000;
  int n_valid = 200;
  int n_test = 500;
  double p_mention = 0.2;
  std::uint64_t seed = 42;
  int lead_count = 12;
  double sample_rate = 100.0;  // Hz
  double duration = 10.0;      // seconds
};

struct EcgRecord {
  Eigen::MatrixXd signal;  // leads x samples, millivolts
  double sample_rate = 0.0;
  int lead_count = 0;
  std::vector<int> true_features;  // sorted, unique; empty when unknown
  std::uint64_t seed = 0;
};

struct ReportText {
  std::string text;
  std::vector<int> mentioned_features;  // sorted subset of true_features
  std::vector<std::string> diagnoses;
};

enum class Split { train, valid, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  fail(errc::format_error, "unknown split tag '" + s + "'");
}

struct Record {
  int id = 0;
  Split split = Split::train;
  EcgRecord ecg;
  ReportText report;
};

struct Corpus {
  std::vector<Record> records;
  // Synthesis parameters for generated corpora. The on-disk pair format has no
  // slot for them, so imported/loaded corpora leave this empty.
  std::optional<SynthConfig> generator_config;
};

// ============================================================================
// Signal synthesis
// ============================================================================

namespace detail {

inline bool has_feature(const std::vector<int>& features, int id) {
  return std::find(features.begin(), features.end(), id) != features.end();
}

}  // namespace detail

// Beat centers for a record. Jitter draws come from their own stream so that
// the noise and heart-rate draws are identical with and without irregular_rr.
inline std::vector<double> beat_centers(bool irregular_rr, std::uint64_t seed,
                                        const SynthConfig& cfg) {
  auto hr_rng = rng::stream(seed, 1);
  const double bpm = hr_rng.uniform(kHeartRateLo, kHeartRateHi);
  const double base_period = 60.0 / bpm;
  auto jitter_rng = rng::stream(seed, 2);
  std::vector<double> beats;
  double t = kFirstBeatOffset;
  while (t < cfg.duration + kBeatTailMargin) {
    beats.push_back(t);
    const double u = jitter_rng.uniform(-kRrJitter, kRrJitter);
    t += base_period * (irregular_rr ? 1.0 + u : 1.0);
  }
  return beats;
}

inline EcgRecord synth_ecg(const std::vector<int>& features, std::uint64_t seed,
                           const SynthConfig& cfg) {
  for (int f : features) {
    if (f < 0 || f >= kFeatureCount) {
      fail(errc::invalid_feature, "feature id " + std::to_string(f) + " out of range");
    }
  }
  if (cfg.sample_rate <= 0 || cfg.duration <= 0 || cfg.lead_count < 2 || cfg.lead_count > 12) {
    fail(errc::config_error, "synth config needs positive sample_rate/duration and 2..12 leads");
  }
  const double exact_samples = cfg.sample_rate * cfg.duration;
  const int n_samples = static_cast<int>(std::llround(exact_samples));
  if (std::abs(exact_samples - n_samples) > 1e-9) {
    fail(errc::config_error, "sample_rate * duration must be an integer sample count");
  }

  const bool prolonged_pr = detail::has_feature(features, kProlongedPr);
  const bool inverted_t = detail::has_feature(features, kInvertedT);
  const bool st_elevation = detail::has_feature(features, kStElevation);
  const bool wide_qrs = detail::has_feature(features, kWideQrs);
  const bool absent_p = detail::has_feature(features, kAbsentP);
  const bool irregular_rr = detail::has_feature(features, kIrregularRr);
  const bool tall_r = detail::has_feature(features, kTallR);
  const bool q_wave = detail::has_feature(features, kQWave);

  // Component table after feature transforms. T keeps its base amplitude here;
  // the inverted-T sign is applied per lead below.
  std::vector<BeatComponent> comps = beat_components();
  if (prolonged_pr) comps[0].offset = kProlongedPrOffset;
  if (absent_p) comps[0].amp = 0.0;
  if (q_wave) comps[1].amp *= kQWaveAmpFactor;
  if (wide_qrs) {
    comps[1].width *= kWideQrsWidthFactor;
    comps[2].width *= kWideQrsWidthFactor;
    comps[3].width *= kWideQrsWidthFactor;
  }
  if (tall_r) comps[2].amp *= kTallRAmpFactor;

  const int leads = cfg.lead_count;
  Eigen::MatrixXd signal = Eigen::MatrixXd::Zero(leads, n_samples);
  const std::vector<double> beats = beat_centers(irregular_rr, seed, cfg);

  std::vector<double> weights(static_cast<std::size_t>(leads));
  for (int l = 0; l < leads; ++l) weights[static_cast<std::size_t>(l)] = lead_weight(l, leads);

  for (double tau : beats) {
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
      const BeatComponent& c = comps[ci];
      if (c.amp == 0.0) continue;
      const double center = tau + c.offset;
      const double half = kComponentSupportWidths * c.width;
      const int s_lo = std::max(0, static_cast<int>(std::ceil((center - half) * cfg.sample_rate)));
      const int s_hi =
          std::min(n_samples - 1, static_cast<int>(std::floor((center + half) * cfg.sample_rate)));
      const bool is_t = ci == 4;
      for (int s = s_lo; s <= s_hi; ++s) {
        const double dt = s / cfg.sample_rate - center;
        const double g = c.amp * std::exp(-dt * dt / (2.0 * c.width * c.width));
        for (int l = 0; l < leads; ++l) {
          const double sign = (is_t && inverted_t && l < kInvertedTLeadLimit) ? -1.0 : 1.0;
          signal(l, s) += g * weights[static_cast<std::size_t>(l)] * sign;
        }
      }
    }
    if (st_elevation) {
      const int s_lo =
          std::max(0, static_cast<int>(std::ceil((tau + kStPlateauLo) * cfg.sample_rate)));
      const int s_hi = std::min(n_samples - 1,
                                static_cast<int>(std::floor((tau + kStPlateauHi) * cfg.sample_rate)));
      for (int s = s_lo; s <= s_hi; ++s) {
        for (int l = 0; l < leads; ++l) signal(l, s) += kStPlateauAmp;
      }
    }
  }

  auto noise_rng = rng::stream(seed, 3);
  for (int l = 0; l < leads; ++l) {
    for (int s = 0; s < n_samples; ++s) signal(l, s) += kNoiseSigma * noise_rng.normal();
  }

  EcgRecord rec;
  rec.signal = std::move(signal);
  rec.sample_rate = cfg.sample_rate;
  rec.lead_count = leads;
  rec.true_features = features;
  std::sort(rec.true_features.begin(), rec.true_features.end());
  rec.true_features.erase(std::unique(rec.true_features.begin(), rec.true_features.end()),
                          rec.true_features.end());
  rec.seed = seed;
  return rec;
}

// ============================================================================
// Closed-form detectability windows (per beat, relative times)
// ============================================================================

struct ProbeWindow {
  int lead;               // single representative affected lead
  double lo;              // seconds relative to beat center
  double hi;
  bool jittered_beats;    // window follows the with-feature beat grid
  bool skip_first_beat;   // first beat carries no accumulated jitter
};

inline ProbeWindow feature_probe_window(int feature_id, int lead_count) {
  const int top = lead_count - 1;
  switch (feature_id) {
    case kProlongedPr: return {top, kProlongedPrOffset - 0.01, kProlongedPrOffset + 0.01, false, false};
    case kInvertedT: return {std::min(kInvertedTLeadLimit - 1, top), 0.275, 0.325, false, false};
    case kStElevation: return {top, kStPlateauLo + 0.01, kStPlateauHi - 0.01, false, false};
    case kWideQrs: return {top, -0.05, 0.05, false, false};
    case kAbsentP: return {top, -0.17, -0.15, false, false};
    case kIrregularRr: return {top, -0.05, 0.05, true, true};
    case kTallR: return {top, -0.01, 0.01, false, false};
    case kQWave: return {top, -0.04, -0.02, false, false};
    default: fail(errc::invalid_feature, "feature id " + std::to_string(feature_id));
  }
}

// ============================================================================
// Reports and corpus synthesis
// ============================================================================

inline ReportText render_report(const std::vector<std::string>& diagnoses,
                                const std::vector<int>& mentioned) {
  if (diagnoses.empty()) fail(errc::empty_input, "render_report needs at least one diagnosis");
  std::string text = "ECG shows ";
  for (std::size_t i = 0; i < diagnoses.size(); ++i) {
    if (i > 0) text += " and ";
    text += diagnoses[i];
  }
  text += ".";
  std::vector<int> ids = mentioned;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (int id : ids) {
    text += " Noted " + feature_name(id) + ".";
  }
  ReportText rep;
  rep.text = std::move(text);
  rep.mentioned_features = std::move(ids);
  rep.diagnoses = diagnoses;
  return rep;
}

inline Corpus synth_corpus(const SynthConfig& cfg) {
  if (cfg.n_train <= 0 || cfg.n_valid <= 0 || cfg.n_test <= 0) {
    fail(errc::config_error, "corpus sizes must be positive");
  }
  const auto& rules = diagnosis_rules();
  const int total = cfg.n_train + cfg.n_valid + cfg.n_test;
  Corpus corpus;
  corpus.generator_config = cfg;
  corpus.records.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const std::uint64_t record_seed = cfg.seed + static_cast<std::uint64_t>(i);
    auto choice_rng = rng::stream(record_seed, 0);
    const DiagnosisRule& rule = rules[choice_rng.below(rules.size())];
    const std::vector<int>& bundle = rule.bundles[choice_rng.below(rule.bundles.size())];
    std::vector<int> sorted_bundle = bundle;
    std::sort(sorted_bundle.begin(), sorted_bundle.end());
    std::vector<int> mentioned;
    for (int fid : sorted_bundle) {
      if (choice_rng.next_unit() < cfg.p_mention) mentioned.push_back(fid);
    }
    Record rec;
    rec.id = i;
    rec.split = i < cfg.n_train              ? Split::train
                : i < cfg.n_train + cfg.n_valid ? Split::valid
                                                : Split::test;
    rec.ecg = synth_ecg(sorted_bundle, record_seed, cfg);
    rec.report = render_report({rule.diagnosis}, mentioned);
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

inline std::vector<int> split_indices(const Corpus& corpus, Split split) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (corpus.records[i].split == split) idx.push_back(static_cast<int>(i));
  }
  return idx;
}

}  // namespace fgclep::corpus
