#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgclep/alignment.hpp"
#include "fgclep/encoders.hpp"
#include "fgclep/gradcheck.hpp"
#include "fgclep/params.hpp"
#include "fgclep/rng.hpp"

namespace fgclep::model {

using numerics::Batch;
using numerics::GradStore;
using numerics::Mat;
using numerics::ParamStore;
using numerics::Vec;

struct ModelConfig {
  encoders::EcgEncoderConfig ecg;
  encoders::TextEncoderConfig txt;

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"ecg",
         {{"in_channels", ecg.in_channels},
          {"channels", ecg.channels},
          {"kernel", ecg.kernel},
          {"stride", ecg.stride},
          {"raw_dim", ecg.raw_dim},
          {"proj_dim", ecg.proj_dim}}},
        {"txt",
         {{"vocab_size", txt.vocab_size},
          {"embed_dim", txt.embed_dim},
          {"hidden_dim", txt.hidden_dim},
          {"raw_dim", txt.raw_dim},
          {"proj_dim", txt.proj_dim}}}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    const auto& e = j.at("ecg");
    cfg.ecg.in_channels = e.at("in_channels").get<int>();
    cfg.ecg.channels = e.at("channels").get<std::vector<int>>();
    cfg.ecg.kernel = e.at("kernel").get<int>();
    cfg.ecg.stride = e.at("stride").get<int>();
    cfg.ecg.raw_dim = e.at("raw_dim").get<int>();
    cfg.ecg.proj_dim = e.at("proj_dim").get<int>();
    const auto& t = j.at("txt");
    cfg.txt.vocab_size = t.at("vocab_size").get<int>();
    cfg.txt.embed_dim = t.at("embed_dim").get<int>();
    cfg.txt.hidden_dim = t.at("hidden_dim").get<int>();
    cfg.txt.raw_dim = t.at("raw_dim").get<int>();
    cfg.txt.proj_dim = t.at("proj_dim").get<int>();
    if (cfg.ecg.proj_dim != cfg.txt.proj_dim) {
      fail(errc::config_error, "projection dims must agree across modalities");
    }
    return cfg;
  }
};

namespace detail {

// Uniform +-sqrt(6/(fan_in+fan_out)). For conv tensors both fans include the
// kernel width.
inline void init_uniform(Mat& w, double fan_in, double fan_out, rng::SplitMix64& g) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = g.uniform(-limit, limit);
  }
}

inline void init_normal(Mat& w, double stddev, rng::SplitMix64& g) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = stddev * g.normal();
  }
}

inline rng::SplitMix64 tensor_stream(std::uint64_t seed, const std::string& name) {
  return rng::stream(seed, rng::fnv1a(name));
}

}  // namespace detail

// Registers and initializes every learnable tensor, including the alignment
// scalars, in a fixed order. Each tensor draws from its own stream keyed by
// name, so layouts can evolve without reshuffling every other tensor.
inline ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamStore params;
  encoders::add_ecg_params(params, cfg.ecg);
  encoders::add_text_params(params, cfg.txt);
  params.add("align.logit_scale_log", 1, 1)(0, 0) = std::log(10.0);
  params.add("align.logit_bias", 1, 1)(0, 0) = -10.0;

  int in_ch = cfg.ecg.in_channels;
  for (std::size_t i = 0; i < cfg.ecg.channels.size(); ++i) {
    const int out_ch = cfg.ecg.channels[i];
    const std::string name = "ecg.conv" + std::to_string(i + 1) + ".weight";
    auto g = detail::tensor_stream(seed, name);
    detail::init_uniform(params.at(name), static_cast<double>(in_ch) * cfg.ecg.kernel,
                         static_cast<double>(out_ch) * cfg.ecg.kernel, g);
    in_ch = out_ch;
  }
  {
    auto g = detail::tensor_stream(seed, "ecg.proj.weight");
    detail::init_uniform(params.at("ecg.proj.weight"), cfg.ecg.raw_dim, cfg.ecg.proj_dim, g);
  }
  {
    auto g = detail::tensor_stream(seed, "txt.embedding");
    detail::init_normal(params.at("txt.embedding"), 0.02, g);
  }
  {
    auto g = detail::tensor_stream(seed, "txt.fc1.weight");
    detail::init_uniform(params.at("txt.fc1.weight"), cfg.txt.embed_dim, cfg.txt.hidden_dim, g);
  }
  {
    auto g = detail::tensor_stream(seed, "txt.fc2.weight");
    detail::init_uniform(params.at("txt.fc2.weight"), cfg.txt.hidden_dim, cfg.txt.raw_dim, g);
  }
  {
    auto g = detail::tensor_stream(seed, "txt.proj.weight");
    detail::init_uniform(params.at("txt.proj.weight"), cfg.txt.raw_dim, cfg.txt.proj_dim, g);
  }
  return params;
}

// Borrowed read-only handle on a trained model.
struct ModelView {
  const numerics::ParamStore* params = nullptr;
  ModelConfig cfg;
  const encoders::Vocabulary* vocab = nullptr;
};

enum class LossVariant { sigmoid_fnm, sigmoid_only, infonce };

inline const char* loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::sigmoid_fnm: return "sigmoid_fnm";
    case LossVariant::sigmoid_only: return "sigmoid_only";
    case LossVariant::infonce: return "infonce";
  }
  return "?";
}

inline LossVariant loss_variant_from_name(const std::string& s) {
  if (s == "sigmoid_fnm") return LossVariant::sigmoid_fnm;
  if (s == "sigmoid_only") return LossVariant::sigmoid_only;
  if (s == "infonce") return LossVariant::infonce;
  fail(errc::config_error, "unknown loss variant '" + s + "'");
}

// Raw and projected embeddings for a batch.
struct EmbeddingBatch {
  Mat ecg_raw;    // B x D
  Mat ecg_proj;   // B x P
  Mat txt_raw;    // B x M
  Mat txt_proj;   // B x P
};

inline EmbeddingBatch embed_batch(const ParamStore& params, const ModelConfig& cfg,
                                  const Batch& batch) {
  EmbeddingBatch out;
  out.ecg_raw = encoders::ecg_forward(params, cfg.ecg, batch.signals, nullptr);
  out.ecg_proj = encoders::project(out.ecg_raw, params.at("ecg.proj.weight"),
                                   params.at("ecg.proj.bias"));
  out.txt_raw = encoders::text_forward(params, cfg.txt, batch.token_ids, nullptr);
  out.txt_proj = encoders::project(out.txt_raw, params.at("txt.proj.weight"),
                                   params.at("txt.proj.bias"));
  return out;
}

// Projected ECG embeddings for many records, evaluated in bounded batches.
inline Mat embed_signals_proj(const ModelView& view, const std::vector<const Mat*>& signals,
                              Mat* raw_out = nullptr, int batch_cap = 100) {
  const int n = static_cast<int>(signals.size());
  Mat proj(n, view.cfg.ecg.proj_dim);
  if (raw_out) raw_out->resize(n, view.cfg.ecg.raw_dim);
  for (int start = 0; start < n; start += batch_cap) {
    const int count = std::min(batch_cap, n - start);
    std::vector<const Mat*> part(signals.begin() + start, signals.begin() + start + count);
    const Mat raw = encoders::ecg_forward(*view.params, view.cfg.ecg, part, nullptr);
    proj.middleRows(start, count) = encoders::project(raw, view.params->at("ecg.proj.weight"),
                                                      view.params->at("ecg.proj.bias"));
    if (raw_out) raw_out->middleRows(start, count) = raw;
  }
  return proj;
}

// Projected embedding of a free-text prompt.
inline Vec embed_prompt_proj(const ModelView& view, const std::string& text) {
  const std::vector<int> ids = encoders::tokenize(*view.vocab, text);
  if (ids.empty()) fail(errc::empty_input, "prompt '" + text + "' tokenizes to an empty list");
  return encoders::embed_text(*view.params, view.cfg.txt, ids).second;
}

// Full-model loss closure for the trainer and the gradient checker. The
// similarity target is a per-batch constant; `frozen_target`, when set, pins
// it across evaluations so central differences see the same constant the
// backward pass saw (the target is detached from the gradient).
inline numerics::LossFn make_loss_fn(ModelConfig cfg, LossVariant variant, double lambda,
                                     std::shared_ptr<const Mat> frozen_target = nullptr) {
  return [cfg, variant, lambda, frozen_target](const ParamStore& params, const Batch& batch,
                                               GradStore* grads) -> double {
    if (batch.signals.size() != batch.token_ids.size() || batch.signals.empty()) {
      fail(errc::config_error, "batch must pair every signal with a report");
    }
    encoders::EcgForwardCache ecg_cache;
    encoders::TextForwardCache txt_cache;
    const Mat ecg_raw = encoders::ecg_forward(params, cfg.ecg, batch.signals,
                                              grads ? &ecg_cache : nullptr);
    const Mat txt_raw = encoders::text_forward(params, cfg.txt, batch.token_ids,
                                               grads ? &txt_cache : nullptr);
    const Mat ecg_proj =
        encoders::project(ecg_raw, params.at("ecg.proj.weight"), params.at("ecg.proj.bias"));
    const Mat txt_proj =
        encoders::project(txt_raw, params.at("txt.proj.weight"), params.at("txt.proj.bias"));

    alignment::AlignmentParams ap;
    ap.logit_scale_log = params.scalar("align.logit_scale_log");
    ap.logit_bias = params.scalar("align.logit_bias");
    ap.lambda = variant == LossVariant::sigmoid_fnm ? lambda : 0.0;

    double loss = 0.0;
    alignment::AlignmentGrads ag;
    const Mat* target = frozen_target ? frozen_target.get() : nullptr;
    if (grads) {
      if (variant == LossVariant::infonce) {
        loss = alignment::infonce_loss_grad(ecg_proj, txt_proj, ap.logit_scale_log, ag);
      } else {
        loss = alignment::loss_total_grad(ecg_proj, txt_proj, ap, ag, target).l_total;
      }
      Mat d_ecg_raw, d_txt_raw;
      encoders::project_backward(ecg_raw, params.at("ecg.proj.weight"), ag.d_ecg_proj, d_ecg_raw,
                                 grads->at("ecg.proj.weight"), grads->at("ecg.proj.bias"));
      encoders::project_backward(txt_raw, params.at("txt.proj.weight"), ag.d_txt_proj, d_txt_raw,
                                 grads->at("txt.proj.weight"), grads->at("txt.proj.bias"));
      encoders::ecg_backward(params, cfg.ecg, ecg_cache, d_ecg_raw, *grads);
      encoders::text_backward(params, cfg.txt, txt_cache, d_txt_raw, *grads);
      grads->scalar("align.logit_scale_log") += ag.d_logit_scale_log;
      grads->scalar("align.logit_bias") += ag.d_logit_bias;
    } else {
      if (variant == LossVariant::infonce) {
        loss = alignment::infonce_loss(ecg_proj, txt_proj, ap.temperature());
      } else {
        loss = alignment::loss_total(ecg_proj, txt_proj, ap, target).l_total;
      }
    }
    return loss;
  };
}

}  // namespace fgclep::model
