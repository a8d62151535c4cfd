#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "fgclep/corpus.hpp"
#include "fgclep/encoders.hpp"
#include "fgclep/gradcheck.hpp"
#include "fgclep/model.hpp"
#include "fgclep/vocab.hpp"

using namespace fgclep;
using numerics::Batch;
using numerics::GradStore;
using numerics::Mat;
using numerics::ParamStore;

namespace {

encoders::Vocabulary demo_vocab() {
  encoders::Vocabulary v;
  int next = 1;
  for (const auto& w : {"ecg", "shows", "normal", "a", "b", "prolonged", "pr", "interval"}) {
    v.word_to_id[w] = next++;
  }
  return v;
}

model::ModelConfig small_cfg(int vocab_size) {
  model::ModelConfig cfg;
  cfg.ecg.in_channels = 4;
  cfg.txt.vocab_size = vocab_size;
  return cfg;
}

Mat random_signal(int leads, int samples, std::uint64_t seed) {
  auto g = rng::stream(seed, 2);
  Mat s(leads, samples);
  for (int l = 0; l < leads; ++l) {
    for (int c = 0; c < samples; ++c) s(l, c) = g.normal();
  }
  return s;
}

}  // namespace

TEST_CASE("tokenizer folds case and splits on non-alphanumerics") {
  const auto vocab = demo_vocab();
  const auto ids = encoders::tokenize(vocab, "ECG shows Normal ecg.");
  REQUIRE(ids.size() == 4);
  CHECK(ids.front() == ids.back());
  CHECK(ids[0] == vocab.id_of("ecg"));
  CHECK(ids[2] == vocab.id_of("normal"));

  CHECK(encoders::tokenize(vocab, "XyzzyUnknownWord") == std::vector<int>{0});
  CHECK(encoders::tokenize(vocab, "prolonged PR interval") ==
        encoders::tokenize(vocab, "prolonged pr interval"));
  CHECK(encoders::tokenize(vocab, "").empty());
  CHECK(encoders::tokenize(vocab, "...!?").empty());
}

TEST_CASE("vocabulary is deterministic, capped, and train-split only") {
  corpus::SynthConfig cfg;
  cfg.n_train = 30;
  cfg.n_valid = 3;
  cfg.n_test = 3;
  cfg.duration = 1.0;
  cfg.p_mention = 1.0;
  const auto c = corpus::synth_corpus(cfg);
  const auto v1 = encoders::build_vocabulary(c);
  const auto v2 = encoders::build_vocabulary(c);
  CHECK(v1.word_to_id == v2.word_to_id);
  CHECK(v1.size() <= 5000);
  CHECK(v1.id_of("ecg") != encoders::Vocabulary::kUnknownId);

  const auto capped = encoders::build_vocabulary(c, 4);
  CHECK(capped.size() == 4);

  // round trip through the manifest representation
  const auto restored = encoders::Vocabulary::from_json(v1.to_json());
  CHECK(restored.word_to_id == v1.word_to_id);
}

TEST_CASE("embed_ecg collapses to the projection bias on zero input") {
  const auto cfg = small_cfg(9);
  auto params = model::init_params(cfg, 3);
  params.at("ecg.proj.weight").setZero();
  params.at("ecg.proj.bias").setConstant(0.25);
  const Mat zero = Mat::Zero(4, 64);
  const auto [raw, proj] = encoders::embed_ecg(params, cfg.ecg, zero);
  CHECK(raw.size() == cfg.ecg.raw_dim);
  CHECK(proj.isApproxToConstant(0.25, 1e-15));
}

TEST_CASE("embed_ecg is deterministic and shape-checked") {
  const auto cfg = small_cfg(9);
  const auto params = model::init_params(cfg, 3);
  const Mat sig = random_signal(4, 64, 7);
  const auto [raw1, proj1] = encoders::embed_ecg(params, cfg.ecg, sig);
  const auto [raw2, proj2] = encoders::embed_ecg(params, cfg.ecg, sig);
  CHECK(raw1 == raw2);
  CHECK(proj1 == proj2);
  CHECK(raw1.allFinite());

  const Mat wrong = Mat::Zero(5, 64);
  CHECK_THROWS_AS(encoders::embed_ecg(params, cfg.ecg, wrong), Error);
}

TEST_CASE("ecg encoder gradient of ||e_p||^2 matches finite differences") {
  const auto cfg = small_cfg(9);
  const auto params = model::init_params(cfg, 11);
  Mat sig = random_signal(4, 48, 13);
  Batch batch;
  batch.signals.push_back(&sig);
  batch.token_ids.push_back({1});

  const auto loss_fn = [cfg](const ParamStore& p, const Batch& b, GradStore* g) {
    encoders::EcgForwardCache cache;
    const Mat raw = encoders::ecg_forward(p, cfg.ecg, b.signals, g ? &cache : nullptr);
    const Mat proj = encoders::project(raw, p.at("ecg.proj.weight"), p.at("ecg.proj.bias"));
    const double loss = 0.5 * proj.squaredNorm();
    if (g) {
      Mat d_raw;
      encoders::project_backward(raw, p.at("ecg.proj.weight"), proj, d_raw,
                                 g->at("ecg.proj.weight"), g->at("ecg.proj.bias"));
      encoders::ecg_backward(p, cfg.ecg, cache, d_raw, *g);
    }
    return loss;
  };
  CHECK(numerics::grad_check(params, batch, loss_fn, 1e-5, 16) <= 1e-4);
}

TEST_CASE("text embedding ignores token order and duplication exactly") {
  const auto vocab = demo_vocab();
  const auto cfg = small_cfg(vocab.size());
  const auto params = model::init_params(cfg, 5);

  const auto ids_a = encoders::tokenize(vocab, "prolonged pr interval");
  auto ids_perm = ids_a;
  std::reverse(ids_perm.begin(), ids_perm.end());
  const auto [raw_a, proj_a] = encoders::embed_text(params, cfg.txt, ids_a);
  const auto [raw_b, proj_b] = encoders::embed_text(params, cfg.txt, ids_perm);
  CHECK(raw_a == raw_b);
  CHECK(proj_a == proj_b);

  const auto ab = encoders::tokenize(vocab, "a b");
  const auto abab = encoders::tokenize(vocab, "a b a b");
  const auto [raw_ab, proj_ab] = encoders::embed_text(params, cfg.txt, ab);
  const auto [raw_abab, proj_abab] = encoders::embed_text(params, cfg.txt, abab);
  CHECK(raw_ab == raw_abab);
  CHECK(proj_ab == proj_abab);

  CHECK_THROWS_AS(encoders::embed_text(params, cfg.txt, {}), Error);
}

TEST_CASE("text encoder gradient of ||t_p||^2 matches finite differences") {
  const auto vocab = demo_vocab();
  const auto cfg = small_cfg(vocab.size());
  const auto params = model::init_params(cfg, 19);
  Batch batch;
  batch.token_ids.push_back(encoders::tokenize(vocab, "ecg shows normal a b"));
  batch.token_ids.push_back(encoders::tokenize(vocab, "prolonged pr interval pr"));

  const auto loss_fn = [cfg](const ParamStore& p, const Batch& b, GradStore* g) {
    encoders::TextForwardCache cache;
    const Mat raw = encoders::text_forward(p, cfg.txt, b.token_ids, g ? &cache : nullptr);
    const Mat proj = encoders::project(raw, p.at("txt.proj.weight"), p.at("txt.proj.bias"));
    const double loss = 0.5 * proj.squaredNorm();
    if (g) {
      Mat d_raw;
      encoders::project_backward(raw, p.at("txt.proj.weight"), proj, d_raw,
                                 g->at("txt.proj.weight"), g->at("txt.proj.bias"));
      encoders::text_backward(p, cfg.txt, cache, d_raw, *g);
    }
    return loss;
  };
  CHECK(numerics::grad_check(params, batch, loss_fn, 1e-5, 16) <= 1e-4);
}

TEST_CASE("projection dimensions agree across modalities") {
  const auto vocab = demo_vocab();
  const auto cfg = small_cfg(vocab.size());
  const auto params = model::init_params(cfg, 29);
  Mat sig = random_signal(4, 40, 31);
  Batch batch;
  batch.signals.push_back(&sig);
  batch.token_ids.push_back(encoders::tokenize(vocab, "ecg shows normal"));
  const auto emb = model::embed_batch(params, cfg, batch);
  CHECK(emb.ecg_proj.cols() == emb.txt_proj.cols());
  CHECK(emb.ecg_proj.rows() == emb.txt_proj.rows());
  CHECK(emb.ecg_proj.allFinite());
  CHECK(emb.txt_proj.allFinite());
}
