#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fgclep/alignment.hpp"
#include "fgclep/rng.hpp"

using namespace fgclep;
using numerics::Mat;
using numerics::Vec;

namespace {

Mat random_rows(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  auto g = rng::stream(seed, 1);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g.normal();
  }
  return m;
}

// Plain scalar re-derivation of the pairwise sigmoid loss, independent of the
// Eigen implementation path.
double oracle_loss_sig(const Mat& e, const Mat& t, double temperature, double bias) {
  const auto batch = e.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      double dot = 0.0, ne = 0.0, nt = 0.0;
      for (Eigen::Index d = 0; d < e.cols(); ++d) {
        dot += e(i, d) * t(j, d);
        ne += e(i, d) * e(i, d);
        nt += t(j, d) * t(j, d);
      }
      const double sim = dot / (std::sqrt(ne) * std::sqrt(nt));
      const double z = i == j ? 1.0 : -1.0;
      total += -std::log(1.0 / (1.0 + std::exp(-z * (temperature * sim + bias))));
    }
  }
  return total / static_cast<double>(batch);
}

double oracle_cosine(const Mat& a, Eigen::Index i, const Mat& b, Eigen::Index j) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index d = 0; d < a.cols(); ++d) {
    dot += a(i, d) * b(j, d);
    na += a(i, d) * a(i, d);
    nb += b(j, d) * b(j, d);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double oracle_loss_fnm(const Mat& e, const Mat& t) {
  const auto batch = e.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      total += std::abs(oracle_cosine(e, i, t, j) - oracle_cosine(t, i, t, j));
    }
  }
  return total / static_cast<double>(batch);
}

double oracle_infonce(const Mat& e, const Mat& t, double temperature) {
  const auto batch = e.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    double row_denom = 0.0, col_denom = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      row_denom += std::exp(temperature * oracle_cosine(e, i, t, j));
      col_denom += std::exp(temperature * oracle_cosine(e, j, t, i));
    }
    const double diag = std::exp(temperature * oracle_cosine(e, i, t, i));
    total += -std::log(diag / row_denom) - std::log(diag / col_denom);
  }
  return total / (2.0 * static_cast<double>(batch));
}

}  // namespace

TEST_CASE("cosine similarity basics") {
  Vec v(3);
  v << 0.3, -2.0, 0.7;
  CHECK(alignment::cosine_sim(v, v) == Catch::Approx(1.0).margin(1e-12));

  Vec a(2), b(2), c(2);
  a << 1, 0;
  b << 0, 1;
  c << 1, 1;
  CHECK(alignment::cosine_sim(a, b) == Catch::Approx(0.0).margin(1e-15));
  CHECK(alignment::cosine_sim(a, c) == Catch::Approx(0.70711).margin(1e-5));

  Vec zero = Vec::Zero(2);
  CHECK_THROWS_AS(alignment::cosine_sim(zero, a), Error);
}

TEST_CASE("similarity matrix properties") {
  SECTION("identical reports give an all-ones matrix") {
    Mat t(3, 4);
    t.row(0) << 0.2, -1.0, 0.5, 0.3;
    t.row(1) = t.row(0);
    t.row(2) = t.row(0);
    const Mat s = alignment::similarity_matrix(t);
    CHECK(s.isApproxToConstant(1.0, 1e-12));
  }

  SECTION("orthogonal rows give the identity") {
    Mat t(2, 2);
    t << 1, 0, 0, 1;
    const Mat s = alignment::similarity_matrix(t);
    CHECK(s(0, 0) == Catch::Approx(1.0).margin(1e-15));
    CHECK(s(0, 1) == Catch::Approx(0.0).margin(1e-15));
    CHECK(s(1, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(s(1, 1) == Catch::Approx(1.0).margin(1e-15));
  }

  SECTION("random batches: symmetric, unit diagonal, bounded") {
    const Mat t = random_rows(8, 16, 21);
    const Mat s = alignment::similarity_matrix(t);
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    for (Eigen::Index i = 0; i < 8; ++i) {
      CHECK(std::abs(s(i, i) - 1.0) <= 1e-12);
      for (Eigen::Index j = 0; j < 8; ++j) {
        CHECK(s(i, j) >= -1.0 - 1e-12);
        CHECK(s(i, j) <= 1.0 + 1e-12);
      }
    }
  }

  SECTION("degenerate rows are named") {
    Mat t = Mat::Zero(2, 3);
    t.row(0) << 1, 2, 3;
    try {
      alignment::similarity_matrix(t);
      FAIL("expected a degenerate-vector error");
    } catch (const Error& e) {
      CHECK(e.code() == errc::degenerate_vector);
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
  }
}

TEST_CASE("batch match matrix marks the diagonal") {
  const Mat z = alignment::batch_match(4);
  CHECK(z.diagonal().sum() == Catch::Approx(4.0));
  CHECK(z.sum() == Catch::Approx(4.0 - 12.0));
}

TEST_CASE("sigmoid loss closed forms") {
  // B = 1, sim = 0: -log sigmoid(0) = ln 2
  Mat e1(1, 4), t1(1, 4);
  e1 << 1, 0, 0, 0;
  t1 << 0, 1, 0, 0;
  CHECK(alignment::loss_sig(e1, t1, 1.0, 0.0) == Catch::Approx(std::log(2.0)).margin(1e-12));

  // B = 2, every pairwise sim 0: four ln 2 terms over B = 2
  Mat e2(2, 4), t2(2, 4);
  e2 << 1, 0, 0, 0, 0, 1, 0, 0;
  t2 << 0, 0, 1, 0, 0, 0, 0, 1;
  CHECK(alignment::loss_sig(e2, t2, 1.0, 0.0) ==
        Catch::Approx(2.0 * std::log(2.0)).margin(1e-12));
}

TEST_CASE("sigmoid loss matches the scalar oracle at trained-scale logits") {
  const Mat e = random_rows(2, 8, 31);
  const Mat t = random_rows(2, 8, 32);
  CHECK(alignment::loss_sig(e, t, 10.0, -10.0) ==
        Catch::Approx(oracle_loss_sig(e, t, 10.0, -10.0)).margin(1e-12));

  const Mat e4 = random_rows(4, 8, 33);
  const Mat t4 = random_rows(4, 8, 34);
  CHECK(alignment::loss_sig(e4, t4, 10.0, -10.0) ==
        Catch::Approx(oracle_loss_sig(e4, t4, 10.0, -10.0)).margin(1e-12));
}

TEST_CASE("fnm loss analytic values and oracle agreement") {
  SECTION("zero when the cross-modal matrix equals the target") {
    const Mat t = random_rows(4, 8, 41);
    const Mat s = alignment::similarity_matrix(t);
    CHECK(alignment::loss_fnm(t, t, s) == 0.0);
  }

  SECTION("hand-built 2x2 instance") {
    // cross sims [[0.9, 0.1], [0.2, 0.8]] against the identity target
    Mat t(2, 3);
    t << 1, 0, 0, 0, 1, 0;
    Mat e(2, 3);
    e.row(0) << 0.9, 0.1, std::sqrt(1.0 - 0.81 - 0.01);
    e.row(1) << 0.2, 0.8, std::sqrt(1.0 - 0.04 - 0.64);
    const Mat s = alignment::similarity_matrix(t);
    CHECK(alignment::loss_fnm(e, t, s) == Catch::Approx(0.3).margin(1e-12));
  }

  SECTION("random batch vs oracle") {
    const Mat e = random_rows(4, 8, 43);
    const Mat t = random_rows(4, 8, 44);
    const Mat s = alignment::similarity_matrix(t);
    CHECK(alignment::loss_fnm(e, t, s) == Catch::Approx(oracle_loss_fnm(e, t)).margin(1e-12));
  }
}

TEST_CASE("combined loss honors lambda exactly") {
  const Mat e = random_rows(5, 8, 51);
  const Mat t = random_rows(5, 8, 52);

  alignment::AlignmentParams params;
  params.lambda = 0.0;
  const auto zero_arm = alignment::loss_total(e, t, params);
  CHECK(zero_arm.l_total == zero_arm.l_sig);
  CHECK(zero_arm.l_sig ==
        alignment::loss_sig(e, t, params.temperature(), params.logit_bias));

  params.lambda = 0.5;
  const auto both = alignment::loss_total(e, t, params);
  CHECK(both.l_total == both.l_sig + 0.5 * both.l_fnm);
  CHECK(both.l_fnm == alignment::loss_fnm(e, t, alignment::similarity_matrix(t)));
}

TEST_CASE("combined loss gradients match finite differences on all surfaces") {
  const Mat e = random_rows(4, 6, 61);
  const Mat t = random_rows(4, 6, 62);
  alignment::AlignmentParams params;
  params.lambda = 0.5;

  alignment::AlignmentGrads grads;
  const auto base = alignment::loss_total_grad(e, t, params, grads);

  // The similarity target is a constant of the batch (detached), so the
  // differences are taken with it held at its base value.
  const Mat target0 = alignment::similarity_matrix(t);
  const double step = 1e-6;
  auto loss_at = [&](const Mat& ee, const Mat& tt, double rho, double bias) {
    alignment::AlignmentParams p = params;
    p.logit_scale_log = rho;
    p.logit_bias = bias;
    return alignment::loss_total(ee, tt, p, &target0).l_total;
  };

  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      Mat ep = e, em = e;
      ep(i, j) += step;
      em(i, j) -= step;
      const double numeric = (loss_at(ep, t, params.logit_scale_log, params.logit_bias) -
                              loss_at(em, t, params.logit_scale_log, params.logit_bias)) /
                             (2 * step);
      CHECK(grads.d_ecg_proj(i, j) == Catch::Approx(numeric).margin(1e-5));
    }
  }
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      Mat tp = t, tm = t;
      tp(i, j) += step;
      tm(i, j) -= step;
      const double numeric = (loss_at(e, tp, params.logit_scale_log, params.logit_bias) -
                              loss_at(e, tm, params.logit_scale_log, params.logit_bias)) /
                             (2 * step);
      CHECK(grads.d_txt_proj(i, j) == Catch::Approx(numeric).margin(1e-5));
    }
  }
  const double d_rho = (loss_at(e, t, params.logit_scale_log + step, params.logit_bias) -
                        loss_at(e, t, params.logit_scale_log - step, params.logit_bias)) /
                       (2 * step);
  CHECK(grads.d_logit_scale_log == Catch::Approx(d_rho).margin(1e-6));
  const double d_bias = (loss_at(e, t, params.logit_scale_log, params.logit_bias + step) -
                         loss_at(e, t, params.logit_scale_log, params.logit_bias - step)) /
                        (2 * step);
  CHECK(grads.d_logit_bias == Catch::Approx(d_bias).margin(1e-6));

  CHECK(base.l_total == alignment::loss_total(e, t, params).l_total);
}

TEST_CASE("infonce closed forms and oracle agreement") {
  Mat e1 = random_rows(1, 4, 71);
  Mat t1 = random_rows(1, 4, 72);
  CHECK(alignment::infonce_loss(e1, t1, 10.0) == Catch::Approx(0.0).margin(1e-12));

  // all four pairwise sims equal: uniform softmax over two entries
  Mat e2(2, 3), t2(2, 3);
  e2.row(0) << 1, 0, 0;
  e2.row(1) << 1, 0, 0;
  t2.row(0) << 0, 1, 0;
  t2.row(1) << 0, 1, 0;
  CHECK(alignment::infonce_loss(e2, t2, 3.0) == Catch::Approx(std::log(2.0)).margin(1e-12));

  const Mat e4 = random_rows(4, 8, 73);
  const Mat t4 = random_rows(4, 8, 74);
  CHECK(alignment::infonce_loss(e4, t4, 10.0) ==
        Catch::Approx(oracle_infonce(e4, t4, 10.0)).margin(1e-12));

  alignment::AlignmentGrads grads;
  const double rho = std::log(10.0);
  const double with_grads = alignment::infonce_loss_grad(e4, t4, rho, grads);
  CHECK(with_grads == alignment::infonce_loss(e4, t4, std::exp(rho)));
}

TEST_CASE("infonce gradients match finite differences on the embedding surfaces") {
  const Mat e = random_rows(4, 6, 91);
  const Mat t = random_rows(4, 6, 92);
  const double rho = std::log(10.0);
  alignment::AlignmentGrads grads;
  alignment::infonce_loss_grad(e, t, rho, grads);

  const double step = 1e-6;
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      Mat ep = e, em = e;
      ep(i, j) += step;
      em(i, j) -= step;
      const double numeric = (alignment::infonce_loss(ep, t, std::exp(rho)) -
                              alignment::infonce_loss(em, t, std::exp(rho))) /
                             (2 * step);
      CHECK(grads.d_ecg_proj(i, j) == Catch::Approx(numeric).margin(1e-5));

      Mat tp = t, tm = t;
      tp(i, j) += step;
      tm(i, j) -= step;
      const double numeric_t = (alignment::infonce_loss(e, tp, std::exp(rho)) -
                                alignment::infonce_loss(e, tm, std::exp(rho))) /
                               (2 * step);
      CHECK(grads.d_txt_proj(i, j) == Catch::Approx(numeric_t).margin(1e-5));
    }
  }
  const double numeric_rho = (alignment::infonce_loss(e, t, std::exp(rho + step)) -
                              alignment::infonce_loss(e, t, std::exp(rho - step))) /
                             (2 * step);
  CHECK(grads.d_logit_scale_log == Catch::Approx(numeric_rho).margin(1e-6));
}

TEST_CASE("losses are invariant to joint batch permutations") {
  const Mat e = random_rows(6, 8, 81);
  const Mat t = random_rows(6, 8, 82);
  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Mat ep(6, 8), tp(6, 8);
  for (int i = 0; i < 6; ++i) {
    ep.row(i) = e.row(perm[static_cast<std::size_t>(i)]);
    tp.row(i) = t.row(perm[static_cast<std::size_t>(i)]);
  }
  alignment::AlignmentParams params;
  const auto a = alignment::loss_total(e, t, params);
  const auto b = alignment::loss_total(ep, tp, params);
  CHECK(a.l_sig == Catch::Approx(b.l_sig).margin(1e-12));
  CHECK(a.l_fnm == Catch::Approx(b.l_fnm).margin(1e-12));
  CHECK(alignment::infonce_loss(e, t, 10.0) ==
        Catch::Approx(alignment::infonce_loss(ep, tp, 10.0)).margin(1e-12));
}

TEST_CASE("sigmoid loss pressure is monotone per pair") {
  // 3-d construction: rotating e_0 in the (x, z) plane moves only the
  // positive-pair similarity sim(e_0, t_0) = cos(angle); every other pair
  // stays fixed.
  Mat t(2, 3);
  t.row(0) << 1.0, 0.0, 0.0;
  t.row(1) << 0.0, 1.0, 0.0;

  auto positive_sim = [&](double cos_value) {
    Mat e(2, 3);
    e.row(0) << cos_value, 0.0, std::sqrt(1.0 - cos_value * cos_value);
    e.row(1) << 0.0, 1.0, 0.0;
    return alignment::loss_sig(e, t, 4.0, -1.0);
  };
  CHECK(positive_sim(0.9) < positive_sim(0.7));
  CHECK(positive_sim(0.7) < positive_sim(0.4));

  // moving e_1 toward t_0 raises only the negative-pair similarity
  auto negative_sim = [&](double cos_value) {
    Mat e(2, 3);
    e.row(0) << 1.0, 0.0, 0.0;
    e.row(1) << cos_value, 0.0, std::sqrt(1.0 - cos_value * cos_value);
    return alignment::loss_sig(e, t, 4.0, -1.0);
  };
  CHECK(negative_sim(0.6) > negative_sim(0.3));
  CHECK(negative_sim(0.3) > negative_sim(0.0));
}
