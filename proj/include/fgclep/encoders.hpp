#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fgclep/errors.hpp"
#include "fgclep/params.hpp"
#include "fgclep/vocab.hpp"

namespace fgclep::encoders {

using numerics::GradStore;
using numerics::Mat;
using numerics::ParamStore;
using numerics::Vec;

// ============================================================================
// Configurations ("resnet-mini" / "bow-mlp" toy stand-ins)
// ============================================================================

struct EcgEncoderConfig {
  int in_channels = 12;
  std::vector<int> channels = {16, 32, 64, 128};
  int kernel = 7;
  int stride = 2;
  int raw_dim = 128;  // equals channels.back(); global average pool output
  int proj_dim = 64;
};

struct TextEncoderConfig {
  int vocab_size = 0;   // set once the vocabulary is built
  int embed_dim = 64;
  int hidden_dim = 128;
  int raw_dim = 128;
  int proj_dim = 64;
};

inline int conv_out_len(int in_len, int kernel, int stride) {
  const int pad = kernel / 2;
  return (in_len + 2 * pad - kernel) / stride + 1;
}

// Smooth shifted rectifier, log(1 + e^z) - log 2. An exact-kink rectifier
// breaks central-difference gradient checks (nudging a bias moves every kink
// in its channel at once), and the unshifted form's log 2 plateau would bury
// the small-scale text embeddings that cosine alignment depends on.
inline Mat softplus(const Mat& z) {
  return (z.array().max(0.0) + (-z.array().abs()).exp().log1p() - std::numbers::ln2).matrix();
}

inline Mat softplus_grad(const Mat& z) {
  return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

// ============================================================================
// ECG encoder: strided conv blocks with rectifiers, then global average pool
// ============================================================================

struct EcgForwardCache {
  int batch = 0;
  std::vector<int> in_lens;
  std::vector<int> out_lens;
  std::vector<Mat> cols;  // im2col input per block: (C_in*K) x (B*L_out)
  std::vector<Mat> pre;   // pre-activation per block: C_out x (B*L_out)
};

namespace detail {

inline std::string conv_w(int block) { return "ecg.conv" + std::to_string(block + 1) + ".weight"; }
inline std::string conv_b(int block) { return "ecg.conv" + std::to_string(block + 1) + ".bias"; }

// col((ic*K + k), b*L_out + p) = x(ic, p*stride + k - pad), zero outside.
inline void im2col(const Mat& x, int batch, int in_len, int kernel, int stride, Mat& col) {
  const int pad = kernel / 2;
  const int channels = static_cast<int>(x.rows()) ;
  const int out_len = conv_out_len(in_len, kernel, stride);
  col.resize(static_cast<Eigen::Index>(channels) * kernel,
             static_cast<Eigen::Index>(batch) * out_len);
  for (int b = 0; b < batch; ++b) {
    for (int p = 0; p < out_len; ++p) {
      const Eigen::Index c = static_cast<Eigen::Index>(b) * out_len + p;
      double* dst = col.data() + c * col.rows();
      for (int ic = 0; ic < channels; ++ic) {
        for (int k = 0; k < kernel; ++k) {
          const int q = p * stride + k - pad;
          dst[ic * kernel + k] =
              (q >= 0 && q < in_len) ? x(ic, static_cast<Eigen::Index>(b) * in_len + q) : 0.0;
        }
      }
    }
  }
}

inline void col2im_accumulate(const Mat& dcol, int batch, int in_len, int channels, int kernel,
                              int stride, Mat& dx) {
  const int pad = kernel / 2;
  const int out_len = conv_out_len(in_len, kernel, stride);
  dx.setZero(channels, static_cast<Eigen::Index>(batch) * in_len);
  for (int b = 0; b < batch; ++b) {
    for (int p = 0; p < out_len; ++p) {
      const Eigen::Index c = static_cast<Eigen::Index>(b) * out_len + p;
      const double* src = dcol.data() + c * dcol.rows();
      for (int ic = 0; ic < channels; ++ic) {
        for (int k = 0; k < kernel; ++k) {
          const int q = p * stride + k - pad;
          if (q >= 0 && q < in_len) {
            dx(ic, static_cast<Eigen::Index>(b) * in_len + q) += src[ic * kernel + k];
          }
        }
      }
    }
  }
}

}  // namespace detail

inline void add_ecg_params(ParamStore& params, const EcgEncoderConfig& cfg) {
  if (cfg.raw_dim != cfg.channels.back()) {
    fail(errc::config_error, "ecg raw_dim must equal the last conv channel count");
  }
  int in_ch = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const int out_ch = cfg.channels[i];
    params.add(detail::conv_w(static_cast<int>(i)), out_ch,
               static_cast<Eigen::Index>(in_ch) * cfg.kernel);
    params.add(detail::conv_b(static_cast<int>(i)), out_ch, 1);
    in_ch = out_ch;
  }
  params.add("ecg.proj.weight", cfg.proj_dim, cfg.raw_dim);
  params.add("ecg.proj.bias", cfg.proj_dim, 1);
}

// Raw embeddings for a batch of signals; rows are records. Pass a cache to
// keep the intermediates needed by ecg_backward.
inline Mat ecg_forward(const ParamStore& params, const EcgEncoderConfig& cfg,
                       const std::vector<const Mat*>& signals, EcgForwardCache* cache) {
  if (signals.empty()) fail(errc::config_error, "ecg_forward: empty batch");
  const int batch = static_cast<int>(signals.size());
  const int in_len = static_cast<int>(signals[0]->cols());
  for (const Mat* s : signals) {
    if (s->rows() != cfg.in_channels) {
      fail(errc::shape_mismatch, "signal has " + std::to_string(s->rows()) +
                                     " leads, encoder expects " + std::to_string(cfg.in_channels));
    }
    if (s->cols() != in_len) {
      fail(errc::shape_mismatch, "signals in a batch must share a sample count");
    }
  }

  EcgForwardCache local;
  EcgForwardCache& c = cache ? *cache : local;
  c.batch = batch;
  c.in_lens.clear();
  c.out_lens.clear();
  c.cols.assign(cfg.channels.size(), Mat());
  c.pre.assign(cfg.channels.size(), Mat());

  Mat x(cfg.in_channels, static_cast<Eigen::Index>(batch) * in_len);
  for (int b = 0; b < batch; ++b) {
    x.middleCols(static_cast<Eigen::Index>(b) * in_len, in_len) = *signals[b];
  }

  int cur_len = in_len;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const int out_len = conv_out_len(cur_len, cfg.kernel, cfg.stride);
    if (out_len <= 0) fail(errc::shape_mismatch, "signal too short for the conv stack");
    c.in_lens.push_back(cur_len);
    c.out_lens.push_back(out_len);
    detail::im2col(x, batch, cur_len, cfg.kernel, cfg.stride, c.cols[i]);
    const Mat& w = params.at(detail::conv_w(static_cast<int>(i)));
    const Mat& bias = params.at(detail::conv_b(static_cast<int>(i)));
    Mat z;
    z.noalias() = w * c.cols[i];
    z.colwise() += bias.col(0);
    c.pre[i] = z;
    x = softplus(z);
    cur_len = out_len;
  }

  const int last_len = c.out_lens.back();
  Mat raw(batch, cfg.raw_dim);
  for (int b = 0; b < batch; ++b) {
    raw.row(b) =
        x.middleCols(static_cast<Eigen::Index>(b) * last_len, last_len).rowwise().mean();
  }
  return raw;
}

inline void ecg_backward(const ParamStore& params, const EcgEncoderConfig& cfg,
                         const EcgForwardCache& cache, const Mat& d_raw, GradStore& grads) {
  const int batch = cache.batch;
  const int n_blocks = static_cast<int>(cfg.channels.size());
  const int last_len = cache.out_lens.back();

  Mat d_act(cfg.channels.back(), static_cast<Eigen::Index>(batch) * last_len);
  for (int b = 0; b < batch; ++b) {
    d_act.middleCols(static_cast<Eigen::Index>(b) * last_len, last_len).colwise() =
        (d_raw.row(b).transpose() / static_cast<double>(last_len)).eval();
  }

  for (int i = n_blocks - 1; i >= 0; --i) {
    const Mat slope = softplus_grad(cache.pre[static_cast<std::size_t>(i)]);
    Mat dz = d_act.array() * slope.array();
    grads.at(detail::conv_w(i)).noalias() += dz * cache.cols[static_cast<std::size_t>(i)].transpose();
    grads.at(detail::conv_b(i)).col(0) += dz.rowwise().sum();
    if (i > 0) {
      const Mat& w = params.at(detail::conv_w(i));
      Mat dcol;
      dcol.noalias() = w.transpose() * dz;
      detail::col2im_accumulate(dcol, batch, cache.in_lens[static_cast<std::size_t>(i)],
                                cfg.channels[static_cast<std::size_t>(i) - 1], cfg.kernel,
                                cfg.stride, d_act);
    }
  }
}

// ============================================================================
// Text encoder: mean of word embeddings through a two-layer rectified map
// ============================================================================

struct TextRecordCache {
  std::vector<std::pair<int, int>> id_counts;  // sorted unique (id, count)
  int total = 0;
  Vec mean;  // embed_dim
  Vec z1;    // hidden_dim, pre-activation
  Vec h1;    // hidden_dim, post-rectifier
  Vec z2;    // raw_dim, pre-activation
};

struct TextForwardCache {
  std::vector<TextRecordCache> records;
};

inline void add_text_params(ParamStore& params, const TextEncoderConfig& cfg) {
  if (cfg.vocab_size <= 0) fail(errc::config_error, "text encoder needs a built vocabulary");
  params.add("txt.embedding", cfg.vocab_size, cfg.embed_dim);
  params.add("txt.fc1.weight", cfg.hidden_dim, cfg.embed_dim);
  params.add("txt.fc1.bias", cfg.hidden_dim, 1);
  params.add("txt.fc2.weight", cfg.raw_dim, cfg.hidden_dim);
  params.add("txt.fc2.bias", cfg.raw_dim, 1);
  params.add("txt.proj.weight", cfg.proj_dim, cfg.raw_dim);
  params.add("txt.proj.bias", cfg.proj_dim, 1);
}

// Mean pooling sums in sorted-id order with per-id counts, so permutations and
// duplications of the token list reproduce the embedding bit for bit.
inline Mat text_forward(const ParamStore& params, const TextEncoderConfig& cfg,
                        const std::vector<std::vector<int>>& token_ids, TextForwardCache* cache) {
  if (token_ids.empty()) fail(errc::config_error, "text_forward: empty batch");
  const Mat& embedding = params.at("txt.embedding");
  const Mat& w1 = params.at("txt.fc1.weight");
  const Mat& b1 = params.at("txt.fc1.bias");
  const Mat& w2 = params.at("txt.fc2.weight");
  const Mat& b2 = params.at("txt.fc2.bias");

  Mat raw(static_cast<Eigen::Index>(token_ids.size()), cfg.raw_dim);
  if (cache) cache->records.assign(token_ids.size(), TextRecordCache());
  for (std::size_t r = 0; r < token_ids.size(); ++r) {
    const auto& ids = token_ids[r];
    if (ids.empty()) {
      fail(errc::empty_input, "record " + std::to_string(r) + " tokenizes to an empty list");
    }
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    TextRecordCache rc;
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const int id = sorted[i];
      if (id < 0 || id >= cfg.vocab_size) {
        fail(errc::shape_mismatch, "token id " + std::to_string(id) + " outside the vocabulary");
      }
      rc.id_counts.emplace_back(id, static_cast<int>(j - i));
      i = j;
    }
    rc.total = static_cast<int>(sorted.size());
    Vec mean = Vec::Zero(cfg.embed_dim);
    for (const auto& [id, count] : rc.id_counts) {
      mean += static_cast<double>(count) * embedding.row(id).transpose();
    }
    mean /= static_cast<double>(rc.total);
    rc.mean = mean;
    rc.z1 = w1 * mean + b1.col(0);
    rc.h1 = softplus(rc.z1);
    rc.z2 = w2 * rc.h1 + b2.col(0);
    raw.row(static_cast<Eigen::Index>(r)) = softplus(rc.z2).transpose();
    if (cache) cache->records[r] = std::move(rc);
  }
  return raw;
}

inline void text_backward(const ParamStore& params, const TextEncoderConfig& cfg,
                          const TextForwardCache& cache, const Mat& d_raw, GradStore& grads) {
  const Mat& w1 = params.at("txt.fc1.weight");
  const Mat& w2 = params.at("txt.fc2.weight");
  Mat& g_embed = grads.at("txt.embedding");
  Mat& g_w1 = grads.at("txt.fc1.weight");
  Mat& g_b1 = grads.at("txt.fc1.bias");
  Mat& g_w2 = grads.at("txt.fc2.weight");
  Mat& g_b2 = grads.at("txt.fc2.bias");

  for (std::size_t r = 0; r < cache.records.size(); ++r) {
    const TextRecordCache& rc = cache.records[r];
    const Vec dt = d_raw.row(static_cast<Eigen::Index>(r)).transpose();
    const Vec dz2 = (dt.array() * softplus_grad(rc.z2).array()).matrix();
    g_w2.noalias() += dz2 * rc.h1.transpose();
    g_b2.col(0) += dz2;
    const Vec dh1 = w2.transpose() * dz2;
    const Vec dz1 = (dh1.array() * softplus_grad(rc.z1).array()).matrix();
    g_w1.noalias() += dz1 * rc.mean.transpose();
    g_b1.col(0) += dz1;
    const Vec dmean = w1.transpose() * dz1;
    for (const auto& [id, count] : rc.id_counts) {
      g_embed.row(id) +=
          (static_cast<double>(count) / static_cast<double>(rc.total)) * dmean.transpose();
    }
  }
}

// ============================================================================
// Projection heads (single affine maps; normalization lives in the loss)
// ============================================================================

inline Mat project(const Mat& raw, const Mat& w, const Mat& bias) {
  Mat out = raw * w.transpose();
  out.rowwise() += bias.col(0).transpose();
  return out;
}

inline void project_backward(const Mat& raw, const Mat& w, const Mat& d_proj, Mat& d_raw,
                             Mat& g_w, Mat& g_bias) {
  d_raw.noalias() = d_proj * w;
  g_w.noalias() += d_proj.transpose() * raw;
  g_bias.col(0) += d_proj.colwise().sum().transpose();
}

// Single-record conveniences.
inline std::pair<Vec, Vec> embed_ecg(const ParamStore& params, const EcgEncoderConfig& cfg,
                                     const Mat& signal) {
  std::vector<const Mat*> one{&signal};
  const Mat raw = ecg_forward(params, cfg, one, nullptr);
  const Mat proj = project(raw, params.at("ecg.proj.weight"), params.at("ecg.proj.bias"));
  return {raw.row(0).transpose(), proj.row(0).transpose()};
}

inline std::pair<Vec, Vec> embed_text(const ParamStore& params, const TextEncoderConfig& cfg,
                                      const std::vector<int>& token_ids) {
  if (token_ids.empty()) fail(errc::empty_input, "embed_text: empty token list");
  const Mat raw = text_forward(params, cfg, {token_ids}, nullptr);
  const Mat proj = project(raw, params.at("txt.proj.weight"), params.at("txt.proj.bias"));
  return {raw.row(0).transpose(), proj.row(0).transpose()};
}

}  // namespace fgclep::encoders
