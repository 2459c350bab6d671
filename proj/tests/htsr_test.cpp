#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "tempbal/htsr.hpp"

using namespace tempbal;

namespace {

Esd esd_of(std::vector<double> ev) {
  std::sort(ev.begin(), ev.end());
  Esd e;
  e.n = static_cast<Eigen::Index>(ev.size());
  e.m = e.n;
  e.eigenvalues = std::move(ev);
  return e;
}

std::vector<double> random_spectrum(std::mt19937_64& rng, int n) {
  std::lognormal_distribution<double> d(0.0, 1.5);
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (double& v : ev) v = d(rng);
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace

TEST(HillAlpha, GeometricExample) {
  const double e = std::numbers::e;
  EXPECT_NEAR(hill_alpha({1.0, e, e * e, e * e * e}, 2), 5.0 / 3.0, 1e-12);
}

TEST(HillAlpha, PowersOfTwo) {
  const double want = 1.0 + 2.0 / (3.0 * std::log(2.0));
  EXPECT_NEAR(hill_alpha({1, 2, 4, 8}, 2), want, 1e-12);
  EXPECT_NEAR(want, 1.961797, 1e-6);
}

TEST(HillAlpha, FlatTailIsInfinitySentinel) {
  EXPECT_EQ(hill_alpha({5, 5, 5, 5}, 2), kAlphaInfinity);
}

TEST(HillAlpha, RangeAndDegenerateThreshold) {
  EXPECT_THROW(hill_alpha({1, 2, 3, 4}, 0), UsageError);
  EXPECT_THROW(hill_alpha({1, 2, 3, 4}, 4), UsageError);
  EXPECT_THROW(hill_alpha({0, 0, 3, 4}, 2), DegenerateSpectrumError);
}

TEST(HillAlphaProperty, MatchesDirectEvaluation) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 8 + static_cast<int>(rng() % 505);
    const auto ev = random_spectrum(rng, n);
    const int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n - 1));
    EXPECT_NEAR(hill_alpha(ev, k), oracle::hill_direct(ev, k), 1e-12) << "n=" << n << " k=" << k;
  }
}

TEST(HillAlphaProperty, ScaleInvariance) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> log_c(-6.0, 6.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 8 + static_cast<int>(rng() % 200);
    const auto ev = random_spectrum(rng, n);
    // Powers of two scale every ratio exactly.
    const double pow2 = std::ldexp(1.0, static_cast<int>(rng() % 80) - 40);
    std::vector<double> a = ev, b = ev;
    for (double& v : a) v *= pow2;
    const double c = std::pow(10.0, log_c(rng));
    for (double& v : b) v *= c;
    const double base = hill_alpha(ev, n / 2);
    EXPECT_EQ(hill_alpha(a, n / 2), base);
    EXPECT_NEAR(hill_alpha(b, n / 2), base, 1e-12 * base);
  }
}

TEST(SelectK, MedianFloorsHalf) {
  std::vector<double> ev(10);
  std::iota(ev.begin(), ev.end(), 1.0);
  EXPECT_EQ(select_k(esd_of(ev), LambdaMinPolicy::median()), 5);
  ev.push_back(11.0);
  EXPECT_EQ(select_k(esd_of(ev), LambdaMinPolicy::median()), 5);
}

TEST(SelectK, GoodnessOfFitFindsPowerLawOnset) {
  // 512 inverse-CDF power-law samples (alpha 2.5, lambda_min 1) above a
  // uniform (0, 1) bulk of 512.
  std::vector<double> ev = oracle::power_law_quantiles(512, 2.5, 1.0);
  for (int i = 0; i < 512; ++i) ev.push_back((i + 0.5) / 512.0);
  const Esd esd = esd_of(ev);
  const LayerMetrics m = layer_metrics(esd, LambdaMinPolicy::goodness_of_fit());
  EXPECT_GT(m.lambda_min, 0.1);
  EXPECT_LT(m.lambda_min, 10.0);
  EXPECT_NEAR(m.alpha_hill, 2.5, 0.25);
}

TEST(SelectK, GoodnessOfFitMatchesBruteForce) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ev = random_spectrum(rng, 16 + static_cast<int>(rng() % 100));
    const int n = static_cast<int>(ev.size());
    int best = -1;
    double best_d = 2.0;
    for (int k = 2; k <= n - 1; ++k) {
      // Independent KS evaluation over the descending tail.
      const double alpha = oracle::hill_direct(ev, k);
      const double thr = ev[static_cast<std::size_t>(n - k - 1)];
      double d = 0.0;
      for (int j = 0; j < k; ++j) {
        const double x = ev[static_cast<std::size_t>(n - 1 - j)];
        const double f_emp = static_cast<double>(k - j) / k;
        d = std::max(d, std::abs(f_emp - (1.0 - std::pow(x / thr, 1.0 - alpha))));
      }
      if (d <= best_d + 1e-12) {
        best_d = std::min(best_d, d);
        best = k;
      }
    }
    EXPECT_EQ(select_k(esd_of(ev), LambdaMinPolicy::goodness_of_fit()), best);
  }
}

TEST(SelectK, FixFingerPointMassBulk) {
  // Bulk concentrated at 0.1 puts the histogram peak in the first bin, whose
  // left edge is 0.1 itself; only the tail lies strictly above it.
  std::vector<double> ev(450, 0.1);
  for (int i = 0; i < 50; ++i) ev.push_back(1.0 + 0.5 * i);
  const int k = select_k(esd_of(ev), LambdaMinPolicy::fix_finger());
  EXPECT_GE(k, 45);
  EXPECT_LE(k, 55);
  EXPECT_EQ(k, 50);
}

TEST(SelectK, FixFingerMatchesHistogramOracle) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const int bins = 10 + static_cast<int>(rng() % 120);
    auto ev = random_spectrum(rng, 64 + static_cast<int>(rng() % 400));
    for (int i = 0; i < 20; ++i) ev.push_back(50.0 * (1 + i));
    std::sort(ev.begin(), ev.end());
    double lo = 0, width = 0;
    const auto counts = oracle::log_histogram(ev, bins, lo, width);
    int peak = 0;
    for (int b = 1; b < bins; ++b)
      if (counts[static_cast<std::size_t>(b)] > counts[static_cast<std::size_t>(peak)]) peak = b;
    const double edge = lo + peak * width;
    int k = 0;
    for (double v : ev) k += std::log10(v) > edge;
    k = std::clamp(k, 2, static_cast<int>(ev.size()) - 1);
    EXPECT_EQ(select_k(esd_of(ev), LambdaMinPolicy::fix_finger(bins)), k) << "trial " << trial;
  }
}

TEST(SelectK, FixFingerTiesGoToSmallerLambda) {
  // Two equal clusters: peak is the lower one.
  std::vector<double> ev;
  for (int i = 0; i < 10; ++i) ev.push_back(1.0);
  for (int i = 0; i < 10; ++i) ev.push_back(1000.0);
  EXPECT_EQ(select_k(esd_of(ev), LambdaMinPolicy::fix_finger(10)), 10);
}

TEST(SelectK, FixFingerRejectsTooFewBins) {
  EXPECT_THROW(select_k(esd_of({1, 2, 3, 4, 5}), LambdaMinPolicy::fix_finger(1)), UsageError);
}

TEST(SelectK, AllZeroSpectrumIsDegenerate) {
  for (auto p : {LambdaMinPolicy::median(), LambdaMinPolicy::goodness_of_fit(), LambdaMinPolicy::fix_finger()})
    EXPECT_THROW(select_k(esd_of(std::vector<double>(8, 0.0)), p), DegenerateSpectrumError);
}

TEST(KsDistance, BoundedForAllCandidates) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ev = random_spectrum(rng, 8 + static_cast<int>(rng() % 200));
    const int n = static_cast<int>(ev.size());
    for (int k = 2; k <= n - 1; ++k) {
      const double a = hill_alpha(ev, k);
      if (!std::isfinite(a)) continue;
      const double d = ks_distance(ev, k, a);
      ASSERT_GE(d, 0.0);
      ASSERT_LE(d, 1.0);
    }
  }
}

TEST(LayerMetrics, PowersOfTwoMedian) {
  const LayerMetrics m = layer_metrics(esd_of({1, 2, 4, 8, 16, 32, 64, 128}), LambdaMinPolicy::median());
  EXPECT_EQ(m.k, 4);
  EXPECT_NEAR(m.alpha_hill, 1.0 + 4.0 / (10.0 * std::log(2.0)), 1e-12);
  EXPECT_NEAR(m.alpha_hill, 1.57708, 5e-6);  // 1.5770780...
  EXPECT_EQ(m.spectral_norm, 128.0);
  EXPECT_EQ(m.lambda_min, 8.0);
  EXPECT_NEAR(m.alpha_weighted, m.alpha_hill * std::log10(128.0), 1e-12);
}

TEST(LayerMetrics, ZeroMatrixIsDegenerate) {
  EXPECT_THROW(layer_metrics(compute_esd(orient(Eigen::MatrixXd::Zero(5, 8))), LambdaMinPolicy::median()),
               DegenerateSpectrumError);
}

TEST(LayerMetrics, DiagonalSpectralNorm) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 6);
  w.diagonal() << 3, 1, 0.5, 0.25;
  const auto m = layer_metrics(compute_esd(orient(w)), LambdaMinPolicy::median());
  EXPECT_NEAR(m.spectral_norm, 9.0, 1e-12);
}

TEST(LayerMetrics, FlatTailPropagatesSentinel) {
  const auto m = layer_metrics(esd_of({1, 1, 1, 1, 1, 1}), LambdaMinPolicy::median());
  EXPECT_EQ(m.alpha_hill, kAlphaInfinity);
  EXPECT_EQ(m.alpha_weighted, kAlphaInfinity);
}

TEST(LayerMetrics, TooFewEigenvaluesIsDegenerate) {
  EXPECT_THROW(layer_metrics(esd_of({1, 2, 3}), LambdaMinPolicy::median()), DegenerateSpectrumError);
}

TEST(PowerIteration, PaddedDiagonal) {
  Eigen::MatrixXd w(2, 3);
  w << 3, 0, 0, 0, 1, 0;
  const auto t = power_iteration_sigma(w);
  EXPECT_NEAR(t.sigma, 3.0, 1e-9);
  EXPECT_NEAR(std::abs(t.u[0]), 1.0, 1e-6);
  EXPECT_NEAR(std::abs(t.v[0]), 1.0, 1e-6);
}

TEST(PowerIteration, MatchesDenseSvd) {
  std::mt19937_64 rng(16);
  const Eigen::MatrixXd w = oracle::random_matrix(50, 30, rng);
  const double want = oracle::top_singular_value(w);
  EXPECT_NEAR(power_iteration_sigma(w, 1e-7, 10000).sigma, want, 1e-6 * want);
}

TEST(PowerIteration, ZeroMatrixStopsImmediately) {
  const auto t = power_iteration_sigma(Eigen::MatrixXd::Zero(4, 7));
  EXPECT_EQ(t.sigma, 0.0);
  EXPECT_EQ(t.iterations, 1);
}

TEST(PowerIteration, NonConvergenceCarriesResidual) {
  std::mt19937_64 rng(17);
  const Eigen::MatrixXd w = oracle::random_matrix(40, 40, rng);
  try {
    power_iteration_sigma(w, 1e-15, 2);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.last_residual(), 0.0);
    EXPECT_EQ(e.code(), ExitCode::kNumerical);
  }
}

TEST(PowerIterationProperty, SigmaSquaredEqualsTopEigenvalue) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 40; ++trial) {
    const int r = 2 + static_cast<int>(rng() % 60), c = 2 + static_cast<int>(rng() % 60);
    const auto mat = orient(oracle::random_matrix(r, c, rng));
    const double top = compute_esd(mat).max();
    const double sigma = power_iteration_sigma(mat, 1e-12, 100000).sigma;
    EXPECT_NEAR(sigma * sigma, top, 1e-9 * top);
  }
}
