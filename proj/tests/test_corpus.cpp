#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "fgclep/corpus.hpp"
#include "fgclep/corpus_io.hpp"
#include "fgclep/vocab.hpp"
#include "test_support.hpp"

using namespace fgclep;
namespace fs = std::filesystem;

namespace {

corpus::SynthConfig tiny_cfg() {
  corpus::SynthConfig cfg;
  cfg.n_train = 2;
  cfg.n_valid = 1;
  cfg.n_test = 1;
  cfg.duration = 3.0;
  return cfg;
}

std::vector<int> r_peaks(const Eigen::VectorXd& x, double threshold) {
  std::vector<int> peaks;
  for (int s = 1; s + 1 < x.size(); ++s) {
    if (x(s) > threshold && x(s) > x(s - 1) && x(s) >= x(s + 1)) peaks.push_back(s);
  }
  return peaks;
}

}  // namespace

TEST_CASE("feature library is fixed and unique") {
  const auto& lib = corpus::feature_library();
  REQUIRE(lib.size() == 8);
  std::set<std::string> names;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    CHECK(lib[i].id == static_cast<int>(i));
    names.insert(lib[i].name);
  }
  CHECK(names.size() == 8);
  CHECK(corpus::feature_name(corpus::kProlongedPr) == "prolonged pr interval");
  CHECK_THROWS_AS(corpus::feature_name(8), Error);
}

TEST_CASE("rule map realizes the non-bijective structure") {
  const auto& rules = corpus::diagnosis_rules();
  REQUIRE(rules.size() == 6);

  // the designated normal rule has one empty bundle; all other bundles are nonempty
  bool saw_multi_bundle = false;
  std::map<int, std::set<std::string>> feature_to_diagnoses;
  for (const auto& rule : rules) {
    REQUIRE(!rule.bundles.empty());
    if (rule.bundles.size() >= 2) saw_multi_bundle = true;
    for (const auto& bundle : rule.bundles) {
      if (rule.diagnosis != "normal ecg") CHECK(!bundle.empty());
      for (int f : bundle) feature_to_diagnoses[f].insert(rule.diagnosis);
    }
  }
  CHECK(saw_multi_bundle);
  CHECK(corpus::rule_for("normal ecg").bundles.size() == 1);
  CHECK(corpus::rule_for("normal ecg").bundles[0].empty());

  bool feature_shared = false;
  for (const auto& [f, diags] : feature_to_diagnoses) {
    if (diags.size() >= 2) feature_shared = true;
  }
  CHECK(feature_shared);
  CHECK_THROWS_AS(corpus::rule_for("no such diagnosis"), Error);
}

TEST_CASE("baseline record has plausible beats with P, R, T in every lead") {
  corpus::SynthConfig cfg;
  const auto rec = corpus::synth_ecg({}, 7, cfg);
  REQUIRE(rec.signal.rows() == 12);
  REQUIRE(rec.signal.cols() == 1000);
  CHECK(rec.signal.allFinite());
  CHECK(rec.true_features.empty());

  for (int lead = 0; lead < 12; ++lead) {
    const double w = corpus::lead_weight(lead, 12);
    const Eigen::VectorXd x = rec.signal.row(lead).transpose();
    const auto peaks = r_peaks(x, 0.4 * w);
    REQUIRE(peaks.size() >= 3);
    for (std::size_t i = 1; i < peaks.size(); ++i) {
      const double period = (peaks[i] - peaks[i - 1]) / cfg.sample_rate;
      CHECK(period >= 0.65);
      CHECK(period <= 1.01);
    }
    for (int r : peaks) {
      if (r < 25 || r + 46 > x.size()) continue;
      CHECK(x.segment(r - 22, 13).maxCoeff() > 0.05);          // P bump
      CHECK(x.segment(r + 15, 31).maxCoeff() > 0.10 * w);      // T bump
    }
  }
}

TEST_CASE("inverted T changes only T-wave windows on the affected leads") {
  corpus::SynthConfig cfg;
  const auto with_f = corpus::synth_ecg({corpus::kInvertedT}, 7, cfg);
  const auto without = corpus::synth_ecg({}, 7, cfg);
  const Eigen::MatrixXd diff = with_f.signal - without.signal;

  const auto beats = corpus::beat_centers(false, 7, cfg);
  const double lo = 0.30 - corpus::kComponentSupportWidths * 0.05;
  const double hi = 0.30 + corpus::kComponentSupportWidths * 0.05;
  auto inside_t_window = [&](double t) {
    for (double tau : beats) {
      if (t >= tau + lo && t <= tau + hi) return true;
    }
    return false;
  };

  long nonzero_inside = 0;
  for (int lead = 0; lead < 12; ++lead) {
    for (int s = 0; s < diff.cols(); ++s) {
      const double t = s / cfg.sample_rate;
      if (diff(lead, s) != 0.0) {
        REQUIRE(lead < corpus::kInvertedTLeadLimit);
        REQUIRE(inside_t_window(t));
        ++nonzero_inside;
      }
    }
  }
  CHECK(nonzero_inside > 100);
}

TEST_CASE("synthesis is deterministic and rejects unknown features") {
  corpus::SynthConfig cfg;
  cfg.duration = 2.0;
  const auto a = corpus::synth_ecg({corpus::kTallR}, 11, cfg);
  const auto b = corpus::synth_ecg({corpus::kTallR}, 11, cfg);
  REQUIRE(a.signal.rows() == b.signal.rows());
  CHECK(a.signal == b.signal);  // bit-identical
  CHECK_THROWS_AS(corpus::synth_ecg({42}, 1, cfg), Error);
  CHECK_THROWS_AS(corpus::synth_ecg({-1}, 1, cfg), Error);
}

TEST_CASE("planted features are separable: windowed mean |diff| beats 5 sigma") {
  corpus::SynthConfig cfg;
  const double threshold = 5.0 * corpus::kNoiseSigma;
  const int n_seeds = 20;
  for (int f = 0; f < corpus::kFeatureCount; ++f) {
    const auto probe = corpus::feature_probe_window(f, cfg.lead_count);
    double total = 0.0;
    long cells = 0;
    for (int seed = 0; seed < n_seeds; ++seed) {
      const auto with_f = corpus::synth_ecg({f}, seed, cfg);
      const auto without = corpus::synth_ecg({}, seed, cfg);
      const Eigen::MatrixXd diff = with_f.signal - without.signal;
      const auto beats = corpus::beat_centers(probe.jittered_beats, seed, cfg);
      for (std::size_t k = probe.skip_first_beat ? 1u : 0u; k < beats.size(); ++k) {
        const int s_lo = static_cast<int>(std::ceil((beats[k] + probe.lo) * cfg.sample_rate));
        const int s_hi = static_cast<int>(std::floor((beats[k] + probe.hi) * cfg.sample_rate));
        for (int s = std::max(0, s_lo); s <= std::min<int>(999, s_hi); ++s) {
          total += std::abs(diff(probe.lead, s));
          ++cells;
        }
      }
    }
    REQUIRE(cells > 0);
    INFO("feature " << corpus::feature_name(f) << " mean |diff| " << total / cells);
    CHECK(total / static_cast<double>(cells) > threshold);
  }
}

TEST_CASE("render_report follows the sentence template") {
  const auto a = corpus::render_report({"normal ecg"}, {});
  CHECK(a.text == "ECG shows normal ecg.");

  const auto b = corpus::render_report({"first degree av block"}, {corpus::kProlongedPr});
  CHECK(b.text == "ECG shows first degree av block. Noted prolonged pr interval.");

  const auto c = corpus::render_report({"myocardial infarction"}, {});
  CHECK(c.text == "ECG shows myocardial infarction.");
  CHECK(c.text.find("Noted") == std::string::npos);

  const auto d = corpus::render_report({"a", "b"}, {corpus::kInvertedT, corpus::kProlongedPr});
  CHECK(d.text == "ECG shows a and b. Noted prolonged pr interval. Noted inverted t wave.");

  CHECK_THROWS_AS(corpus::render_report({}, {}), Error);
}

TEST_CASE("synthesized corpora honor p_mention and split structure") {
  corpus::SynthConfig cfg = tiny_cfg();
  cfg.n_train = 40;
  cfg.n_valid = 5;
  cfg.n_test = 5;

  cfg.p_mention = 0.0;
  for (const auto& rec : corpus::synth_corpus(cfg).records) {
    CHECK(rec.report.text.find("Noted") == std::string::npos);
  }

  cfg.p_mention = 1.0;
  for (const auto& rec : corpus::synth_corpus(cfg).records) {
    CHECK(rec.report.mentioned_features == rec.ecg.true_features);
    for (int f : rec.ecg.true_features) {
      CHECK(rec.report.text.find(corpus::feature_name(f)) != std::string::npos);
    }
  }
}

TEST_CASE("default corpus mentions about a fifth of planted features") {
  corpus::SynthConfig cfg;  // 2000/200/500, p_mention 0.2
  cfg.duration = 1.0;       // mention statistics do not depend on the signals
  const auto corpus_full = corpus::synth_corpus(cfg);
  REQUIRE(corpus_full.records.size() == 2700);
  long planted = 0;
  long mentioned = 0;
  std::set<corpus::Split> splits;
  for (const auto& rec : corpus_full.records) {
    planted += static_cast<long>(rec.ecg.true_features.size());
    mentioned += static_cast<long>(rec.report.mentioned_features.size());
    splits.insert(rec.split);
    CHECK(rec.report.text.size() >= 3);
  }
  REQUIRE(planted > 0);
  const double fraction = static_cast<double>(mentioned) / static_cast<double>(planted);
  CHECK(fraction == Catch::Approx(0.20).margin(0.02));
  CHECK(splits.size() == 3);

  // every report passes the three-word cleaning rule
  for (const auto& rec : corpus_full.records) {
    CHECK(encoders::split_words(rec.report.text).size() >= 3);
  }
}

TEST_CASE("identical config and seed give byte-identical corpus files") {
  const auto dir = test_support::fresh_dir("corpus_det");
  corpus::SynthConfig cfg = tiny_cfg();
  corpus::save_corpus(corpus::synth_corpus(cfg), (dir / "a").string());
  corpus::save_corpus(corpus::synth_corpus(cfg), (dir / "b").string());
  CHECK(test_support::slurp((dir / "a.jsonl").string()) ==
        test_support::slurp((dir / "b.jsonl").string()));
  CHECK(test_support::slurp((dir / "a.sig").string()) ==
        test_support::slurp((dir / "b.sig").string()));
}

TEST_CASE("save/load round trip preserves every record field and signal bits") {
  const auto dir = test_support::fresh_dir("corpus_rt");
  corpus::SynthConfig cfg = tiny_cfg();
  cfg.n_train = 1;
  cfg.n_valid = 1;
  cfg.n_test = 1;
  const auto original = corpus::synth_corpus(cfg);
  corpus::save_corpus(original, (dir / "c").string());
  const auto loaded = corpus::load_corpus((dir / "c").string());
  REQUIRE(loaded.records.size() == original.records.size());
  for (std::size_t i = 0; i < original.records.size(); ++i) {
    const auto& a = original.records[i];
    const auto& b = loaded.records[i];
    CHECK(a.id == b.id);
    CHECK(a.split == b.split);
    CHECK(a.report.text == b.report.text);
    CHECK(a.report.diagnoses == b.report.diagnoses);
    CHECK(a.report.mentioned_features == b.report.mentioned_features);
    CHECK(a.ecg.true_features == b.ecg.true_features);
    CHECK(a.ecg.seed == b.ecg.seed);
    CHECK(a.ecg.signal == b.ecg.signal);  // bit-for-bit
  }
}

TEST_CASE("corrupt signal blobs are rejected") {
  const auto dir = test_support::fresh_dir("corpus_bad");
  corpus::SynthConfig cfg = tiny_cfg();
  cfg.n_train = 1;  // 3 records total
  const auto original = corpus::synth_corpus(cfg);
  corpus::save_corpus(original, (dir / "c").string());

  SECTION("wrong magic") {
    auto bytes = test_support::slurp((dir / "c.sig").string());
    bytes[0] = 'X';
    test_support::spit((dir / "c.sig").string(), bytes);
    try {
      corpus::load_corpus((dir / "c").string());
      FAIL("expected a format error");
    } catch (const Error& e) {
      CHECK(e.code() == errc::format_error);
    }
  }

  SECTION("truncated blob names the offending record") {
    auto bytes = test_support::slurp((dir / "c.sig").string());
    bytes.resize(bytes.size() - 100);
    test_support::spit((dir / "c.sig").string(), bytes);
    try {
      corpus::load_corpus((dir / "c").string());
      FAIL("expected a truncation error");
    } catch (const Error& e) {
      CHECK(e.code() == errc::truncation);
      CHECK(std::string(e.what()).find("record 2") != std::string::npos);
    }
  }
}

TEST_CASE("import_pairs pairs blobs with report lines") {
  const auto dir = test_support::fresh_dir("corpus_import");
  corpus::SynthConfig cfg = tiny_cfg();
  cfg.n_train = 8;
  cfg.n_valid = 1;
  cfg.n_test = 1;
  const auto source = corpus::synth_corpus(cfg);
  corpus::save_corpus(source, (dir / "ext").string());

  SECTION("ten signals and ten reports give a 7/1/2 split") {
    std::string reports;
    for (int i = 0; i < 10; ++i) reports += "imported report number " + std::to_string(i) + "\n";
    test_support::spit((dir / "reports.txt").string(), reports);
    const auto imported =
        corpus::import_pairs((dir / "ext.sig").string(), (dir / "reports.txt").string());
    REQUIRE(imported.records.size() == 10);
    CHECK(corpus::split_indices(imported, corpus::Split::train).size() == 7);
    CHECK(corpus::split_indices(imported, corpus::Split::valid).size() == 1);
    CHECK(corpus::split_indices(imported, corpus::Split::test).size() == 2);
    for (const auto& rec : imported.records) {
      CHECK(rec.ecg.true_features.empty());
      CHECK(rec.ecg.signal.allFinite());
    }
  }

  SECTION("row-count mismatch is a consistency error") {
    std::string reports;
    for (int i = 0; i < 9; ++i) reports += "imported report number " + std::to_string(i) + "\n";
    test_support::spit((dir / "reports9.txt").string(), reports);
    try {
      corpus::import_pairs((dir / "ext.sig").string(), (dir / "reports9.txt").string());
      FAIL("expected a consistency error");
    } catch (const Error& e) {
      CHECK(e.code() == errc::consistency);
    }
  }

  SECTION("short reports are rejected with a cleaning notice") {
    std::string reports;
    for (int i = 0; i < 10; ++i) {
      reports += i == 4 ? "too short\n" : "imported report number " + std::to_string(i) + "\n";
    }
    test_support::spit((dir / "reports_short.txt").string(), reports);
    std::vector<corpus::ImportNotice> notices;
    const auto imported = corpus::import_pairs((dir / "ext.sig").string(),
                                               (dir / "reports_short.txt").string(), &notices);
    CHECK(imported.records.size() == 9);
    REQUIRE(notices.size() == 1);
    CHECK(notices[0].line == 4);
    CHECK(notices[0].message.find("fewer than three words") != std::string::npos);
  }
}
