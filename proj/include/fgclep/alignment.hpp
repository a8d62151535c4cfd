#pragma once

#include <cmath>
#include <string>

#include "fgclep/errors.hpp"
#include "fgclep/params.hpp"

namespace fgclep::alignment {

using numerics::Mat;
using numerics::Vec;

// Learnable logit scale (log-space storage, effective t = exp) and bias, plus
// the loss weight. Defaults give t = 10, b = -10 at initialization; the large
// negative bias offsets the negative-pair imbalance of a fresh batch.
struct AlignmentParams {
  double logit_scale_log = std::log(10.0);
  double logit_bias = -10.0;
  double lambda = 0.5;

  double temperature() const { return std::exp(logit_scale_log); }
};

struct LossBreakdown {
  double l_sig = 0.0;
  double l_fnm = 0.0;
  double l_total = 0.0;
  double lambda = 0.0;
};

struct AlignmentGrads {
  Mat d_ecg_proj;  // B x P
  Mat d_txt_proj;  // B x P
  double d_logit_scale_log = 0.0;
  double d_logit_bias = 0.0;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// -log(sigmoid(x)) = softplus(-x), computed without overflow.
inline double softplus_neg(double x) {
  return x > 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

struct NormalizedRows {
  Mat unit;   // rows scaled to unit norm
  Vec norms;  // original row norms
};

inline NormalizedRows normalize_rows(const Mat& m, const char* who) {
  NormalizedRows out;
  out.unit.resize(m.rows(), m.cols());
  out.norms.resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 0.0)) {
      fail(errc::degenerate_vector,
           std::string(who) + " row " + std::to_string(i) + " has zero norm");
    }
    out.norms(i) = n;
    out.unit.row(i) = m.row(i) / n;
  }
  return out;
}

// Pulls d loss / d cosine back through the normalization into both embedding
// matrices. cos = U V^T with U, V the unit rows of E, T.
inline void cosine_backward(const NormalizedRows& e, const NormalizedRows& t, const Mat& cos,
                            const Mat& d_cos, Mat& d_e, Mat& d_t) {
  const Vec row_dot = (d_cos.array() * cos.array()).rowwise().sum();
  const Vec col_dot = (d_cos.array() * cos.array()).colwise().sum().transpose();
  d_e = d_cos * t.unit - row_dot.asDiagonal() * e.unit;
  d_e.array().colwise() /= e.norms.array();
  d_t = d_cos.transpose() * e.unit - col_dot.asDiagonal() * t.unit;
  d_t.array().colwise() /= t.norms.array();
}

inline double loss_sig_core(const Mat& cos, double t, double b, Mat* d_cos, double* d_t,
                            double* d_b) {
  const Eigen::Index batch = cos.rows();
  double loss = 0.0;
  if (d_cos) d_cos->setZero(batch, batch);
  double g_t = 0.0;
  double g_b = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      const double z = i == j ? 1.0 : -1.0;
      const double logit = t * cos(i, j) + b;
      loss += softplus_neg(z * logit);
      if (d_cos) {
        const double d_logit = -z * sigmoid(-z * logit) / static_cast<double>(batch);
        (*d_cos)(i, j) = d_logit * t;
        g_t += d_logit * cos(i, j);
        g_b += d_logit;
      }
    }
  }
  if (d_t) *d_t = g_t;
  if (d_b) *d_b = g_b;
  return loss / static_cast<double>(batch);
}

inline double loss_fnm_core(const Mat& cos, const Mat& target, Mat* d_cos) {
  const Eigen::Index batch = cos.rows();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      const double diff = cos(i, j) - target(i, j);
      loss += std::abs(diff);
      if (d_cos) {
        (*d_cos)(i, j) += (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) /
                          static_cast<double>(batch);
      }
    }
  }
  return loss / static_cast<double>(batch);
}

}  // namespace detail

inline double cosine_sim(const Vec& a, const Vec& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) {
    fail(errc::degenerate_vector, "cosine_sim: zero-norm input");
  }
  return a.dot(b) / (na * nb);
}

// Text-text cosine matrix. Used as a constant target: no gradient flows into
// it, otherwise the loss could be satisfied by collapsing the text embeddings.
inline Mat similarity_matrix(const Mat& txt_proj) {
  const auto t = detail::normalize_rows(txt_proj, "similarity_matrix");
  return t.unit * t.unit.transpose();
}

// Cross-modal cosine matrix: entry (i, j) compares ECG i with text j.
inline Mat cross_similarity(const Mat& ecg_proj, const Mat& txt_proj) {
  const auto e = detail::normalize_rows(ecg_proj, "ecg embeddings");
  const auto t = detail::normalize_rows(txt_proj, "txt embeddings");
  return e.unit * t.unit.transpose();
}

// +1 on the diagonal (paired), -1 elsewhere.
inline Mat batch_match(Eigen::Index batch) {
  Mat z = Mat::Constant(batch, batch, -1.0);
  z.diagonal().setConstant(1.0);
  return z;
}

// Pairwise sigmoid loss: -(1/B) sum_ij log sigmoid(z_ij (t cos_ij + b)).
inline double loss_sig(const Mat& ecg_proj, const Mat& txt_proj, double t, double b) {
  return detail::loss_sig_core(cross_similarity(ecg_proj, txt_proj), t, b, nullptr, nullptr,
                               nullptr);
}

// L1 pull of the cross-modal cosines toward the text-text similarity target,
// normalized by 1/B.
inline double loss_fnm(const Mat& ecg_proj, const Mat& txt_proj, const Mat& similarity_target) {
  return detail::loss_fnm_core(cross_similarity(ecg_proj, txt_proj), similarity_target, nullptr);
}

// The similarity target acts as a per-batch constant label matrix. The
// default recomputes it from txt_proj; passing `similarity_target` pins it,
// which is what a finite-difference check of the detached loss needs.
inline LossBreakdown loss_total(const Mat& ecg_proj, const Mat& txt_proj,
                                const AlignmentParams& params,
                                const Mat* similarity_target = nullptr) {
  const auto e = detail::normalize_rows(ecg_proj, "ecg embeddings");
  const auto t = detail::normalize_rows(txt_proj, "txt embeddings");
  const Mat cos = e.unit * t.unit.transpose();
  const Mat target = similarity_target ? *similarity_target
                                       : Mat(t.unit * t.unit.transpose());
  LossBreakdown out;
  out.lambda = params.lambda;
  out.l_sig = detail::loss_sig_core(cos, params.temperature(), params.logit_bias, nullptr, nullptr,
                                    nullptr);
  out.l_fnm = detail::loss_fnm_core(cos, target, nullptr);
  out.l_total = out.l_sig + params.lambda * out.l_fnm;
  return out;
}

// As loss_total, but also fills gradients with respect to both projected
// embedding matrices and the two learnable scalars. The similarity target is
// detached: the fnm term sees it as a constant.
inline LossBreakdown loss_total_grad(const Mat& ecg_proj, const Mat& txt_proj,
                                     const AlignmentParams& params, AlignmentGrads& grads,
                                     const Mat* similarity_target = nullptr) {
  const auto e = detail::normalize_rows(ecg_proj, "ecg embeddings");
  const auto t = detail::normalize_rows(txt_proj, "txt embeddings");
  const Mat cos = e.unit * t.unit.transpose();
  const Mat target = similarity_target ? *similarity_target
                                       : Mat(t.unit * t.unit.transpose());
  const double temperature = params.temperature();

  LossBreakdown out;
  out.lambda = params.lambda;
  Mat d_cos;
  double d_temperature = 0.0;
  out.l_sig = detail::loss_sig_core(cos, temperature, params.logit_bias, &d_cos, &d_temperature,
                                    &grads.d_logit_bias);
  Mat d_cos_fnm = Mat::Zero(cos.rows(), cos.cols());
  out.l_fnm = detail::loss_fnm_core(cos, target, &d_cos_fnm);
  out.l_total = out.l_sig + params.lambda * out.l_fnm;
  d_cos += params.lambda * d_cos_fnm;
  grads.d_logit_scale_log = d_temperature * temperature;
  detail::cosine_backward(e, t, cos, d_cos, grads.d_ecg_proj, grads.d_txt_proj);
  return out;
}

// Symmetric softmax contrastive loss (ablation arm): mean of the ECG->text and
// text->ECG cross-entropies over the batch.
inline double infonce_loss(const Mat& ecg_proj, const Mat& txt_proj, double t) {
  const Mat cos = cross_similarity(ecg_proj, txt_proj);
  const Eigen::Index batch = cos.rows();
  const Mat logits = t * cos;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double row_max = logits.row(i).maxCoeff();
    double denom = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) denom += std::exp(logits(i, j) - row_max);
    loss += -(logits(i, i) - row_max) + std::log(denom);
    const double col_max = logits.col(i).maxCoeff();
    denom = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) denom += std::exp(logits(j, i) - col_max);
    loss += -(logits(i, i) - col_max) + std::log(denom);
  }
  return loss / (2.0 * static_cast<double>(batch));
}

inline double infonce_loss_grad(const Mat& ecg_proj, const Mat& txt_proj, double logit_scale_log,
                                AlignmentGrads& grads) {
  const auto e = detail::normalize_rows(ecg_proj, "ecg embeddings");
  const auto t = detail::normalize_rows(txt_proj, "txt embeddings");
  const Mat cos = e.unit * t.unit.transpose();
  const Eigen::Index batch = cos.rows();
  const double temperature = std::exp(logit_scale_log);
  const Mat logits = temperature * cos;

  // Loss accumulation mirrors infonce_loss term for term so the forward-only
  // path returns the same bits.
  Mat d_logits = Mat::Zero(batch, batch);
  double loss = 0.0;
  Vec p(batch);
  Vec q(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double row_max = logits.row(i).maxCoeff();
    double rsum = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      p(j) = std::exp(logits(i, j) - row_max);
      rsum += p(j);
    }
    loss += -(logits(i, i) - row_max) + std::log(rsum);
    for (Eigen::Index j = 0; j < batch; ++j) {
      d_logits(i, j) += (p(j) / rsum - (i == j ? 1.0 : 0.0)) / (2.0 * static_cast<double>(batch));
    }
    const double col_max = logits.col(i).maxCoeff();
    double csum = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      q(j) = std::exp(logits(j, i) - col_max);
      csum += q(j);
    }
    loss += -(logits(i, i) - col_max) + std::log(csum);
    for (Eigen::Index j = 0; j < batch; ++j) {
      d_logits(j, i) += (q(j) / csum - (i == j ? 1.0 : 0.0)) / (2.0 * static_cast<double>(batch));
    }
  }
  const Mat d_cos = temperature * d_logits;
  grads.d_logit_scale_log = temperature * (d_logits.array() * cos.array()).sum();
  grads.d_logit_bias = 0.0;
  detail::cosine_backward(e, t, cos, d_cos, grads.d_ecg_proj, grads.d_txt_proj);
  return loss / (2.0 * static_cast<double>(batch));
}

}  // namespace fgclep::alignment
