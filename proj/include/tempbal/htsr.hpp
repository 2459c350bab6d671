#ifndef TEMPBAL_HTSR_HPP_
#define TEMPBAL_HTSR_HPP_

// Heavy-tailed spectral metrics: Hill tail-exponent estimate of an ESD,
// lambda_min (tail size) selection policies, and the top singular triplet
// by power iteration.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempbal/error.hpp"
#include "tempbal/esd.hpp"

namespace tempbal {

inline constexpr double kAlphaInfinity = std::numeric_limits<double>::infinity();

enum class LambdaMinRule { kMedian, kGoodnessOfFit, kFixFinger };

struct LambdaMinPolicy {
  LambdaMinRule rule = LambdaMinRule::kMedian;
  int histogram_bins = 100;  // FixFinger only

  static LambdaMinPolicy median() { return {}; }
  static LambdaMinPolicy goodness_of_fit() { return {LambdaMinRule::kGoodnessOfFit, 100}; }
  static LambdaMinPolicy fix_finger(int bins = 100) { return {LambdaMinRule::kFixFinger, bins}; }
};

struct LayerMetrics {
  std::string source_name;
  double alpha_hill = 0.0;  // kAlphaInfinity for a perfectly flat tail
  int k = 0;
  double lambda_min = 0.0;
  double spectral_norm = 0.0;  // largest ESD eigenvalue
  double alpha_weighted = 0.0;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
};

// Hill estimator over the top k eigenvalues with threshold lambda_{n-k}
// (1-based, ascending): 1 + k / sum_{i=1..k} ln(lambda_{n-i+1} / lambda_{n-k}).
inline double hill_alpha(const std::vector<double>& ascending, int k) {
  const auto n = static_cast<int>(ascending.size());
  if (k < 1 || k > n - 1)
    throw UsageError("hill_alpha: k=" + std::to_string(k) + " outside [1, " + std::to_string(n - 1) + "]");
  const double threshold = ascending[static_cast<std::size_t>(n - k - 1)];
  if (!(threshold > 0.0))
    throw DegenerateSpectrumError("hill_alpha: threshold eigenvalue lambda_{n-k} is zero");
  double log_sum = 0.0;
  for (int i = 1; i <= k; ++i) log_sum += std::log(ascending[static_cast<std::size_t>(n - i)] / threshold);
  if (log_sum == 0.0) return kAlphaInfinity;
  return 1.0 + k / log_sum;
}

inline double hill_alpha(const Esd& esd, int k) { return hill_alpha(esd.eigenvalues, k); }

// Kolmogorov-Smirnov distance between the empirical CDF of the top-k tail and
// the continuous truncated power law starting at lambda_{n-k}.
inline double ks_distance(const std::vector<double>& ascending, int k, double alpha) {
  const auto n = static_cast<int>(ascending.size());
  const double threshold = ascending[static_cast<std::size_t>(n - k - 1)];
  double d = 0.0;
  for (int j = 1; j <= k; ++j) {
    const double x = ascending[static_cast<std::size_t>(n - k - 1 + j)];
    const double model = 1.0 - std::pow(x / threshold, 1.0 - alpha);
    const double empirical = static_cast<double>(j) / k;
    d = std::max(d, std::abs(empirical - model));
  }
  return d;
}

namespace detail {

inline void require_usable_spectrum(const std::vector<double>& ev) {
  if (ev.size() < 4)
    throw DegenerateSpectrumError("spectrum has " + std::to_string(ev.size()) +
                                  " eigenvalues; at least 4 are needed for a tail fit");
  if (!(ev.back() > 0.0)) throw DegenerateSpectrumError("all eigenvalues are zero");
}

inline int select_k_goodness_of_fit(const std::vector<double>& ev) {
  const auto n = static_cast<int>(ev.size());
  int best_k = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 2; k <= n - 1; ++k) {
    if (!(ev[static_cast<std::size_t>(n - k - 1)] > 0.0)) continue;
    const double alpha = hill_alpha(ev, k);
    if (!std::isfinite(alpha)) continue;
    const double d = ks_distance(ev, k, alpha);
    if (d <= best_d) {  // ties go to the larger k
      best_d = d;
      best_k = k;
    }
  }
  if (best_k < 0) throw DegenerateSpectrumError("goodness-of-fit: no candidate tail admits a fit");
  return best_k;
}

inline int select_k_fix_finger(const std::vector<double>& ev, int bins) {
  if (bins < 2) throw UsageError("fix-finger: histogram_bins must be >= 2");
  const auto n = static_cast<int>(ev.size());
  std::vector<double> logs;
  logs.reserve(ev.size());
  for (double v : ev)
    if (v > 0.0) logs.push_back(std::log10(v));
  const double lo = logs.front();
  const double hi = logs.back();
  const double width = (hi - lo) / bins;

  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double x : logs) {
    int b = width > 0.0 ? static_cast<int>(std::floor((x - lo) / width)) : 0;
    counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
  }
  // max_element returns the first maximum, i.e. the smallest lambda on ties.
  const auto peak = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  const double edge = lo + peak * width;
  const auto k = static_cast<int>(std::count_if(logs.begin(), logs.end(), [&](double x) { return x > edge; }));
  return std::clamp(k, 2, n - 1);
}

}  // namespace detail

inline int select_k(const Esd& esd, const LambdaMinPolicy& policy) {
  const auto& ev = esd.eigenvalues;
  detail::require_usable_spectrum(ev);
  switch (policy.rule) {
    case LambdaMinRule::kMedian:
      return static_cast<int>(ev.size() / 2);
    case LambdaMinRule::kGoodnessOfFit:
      return detail::select_k_goodness_of_fit(ev);
    case LambdaMinRule::kFixFinger:
      return detail::select_k_fix_finger(ev, policy.histogram_bins);
  }
  throw UsageError("unknown lambda_min policy");
}

inline LayerMetrics layer_metrics(const Esd& esd, const LambdaMinPolicy& policy) {
  if (esd.eigenvalues.empty()) throw DegenerateSpectrumError("empty spectrum");
  LayerMetrics out;
  out.source_name = esd.source_name;
  out.n = esd.n;
  out.m = esd.m;
  out.k = select_k(esd, policy);
  const auto n = esd.eigenvalues.size();
  out.lambda_min = esd.eigenvalues[n - static_cast<std::size_t>(out.k) - 1];
  out.alpha_hill = hill_alpha(esd, out.k);
  out.spectral_norm = esd.max();
  // A flat tail keeps the sentinel rather than producing inf * log10(...).
  out.alpha_weighted = std::isinf(out.alpha_hill) ? kAlphaInfinity
                                                  : out.alpha_hill * std::log10(out.spectral_norm);
  return out;
}

struct SingularTriplet {
  double sigma = 0.0;
  Eigen::VectorXd u;  // left, length n
  Eigen::VectorXd v;  // right, length m
  int iterations = 0;
};

// Alternates v <- normalize(W^T u), u <- normalize(W v) from u = ones/sqrt(n)
// until ||W v - sigma u|| <= tol * sigma.
inline SingularTriplet power_iteration_sigma(const Eigen::MatrixXd& w, double tol = 1e-7, int max_iter = 100) {
  if (!(tol > 0.0)) throw UsageError("power iteration: tol must be > 0");
  if (max_iter < 1) throw UsageError("power iteration: max_iter must be >= 1");
  const Eigen::Index n = w.rows();
  const Eigen::Index m = w.cols();

  SingularTriplet out;
  out.u = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    Eigen::VectorXd v = w.transpose() * out.u;
    const double vnorm = v.norm();
    if (vnorm == 0.0) {
      if (it == 1 && w.isZero(0.0)) {
        out.sigma = 0.0;
        out.v = Eigen::VectorXd::Constant(m, 1.0 / std::sqrt(static_cast<double>(m)));
        return out;
      }
      throw ConvergenceError("power iteration: iterate collapsed to zero", residual);
    }
    out.v = v / vnorm;
    Eigen::VectorXd wv = w * out.v;
    out.sigma = wv.norm();
    residual = (wv - out.sigma * out.u).norm();
    out.u = wv / out.sigma;
    if (residual <= tol * out.sigma) return out;
  }
  throw ConvergenceError("power iteration did not converge in " + std::to_string(max_iter) +
                             " iterations (last residual " + std::to_string(residual) + ")",
                         residual);
}

inline SingularTriplet power_iteration_sigma(const OrientedMatrix& mat, double tol = 1e-7, int max_iter = 100) {
  return power_iteration_sigma(mat.values, tol, max_iter);
}

}  // namespace tempbal

#endif  // TEMPBAL_HTSR_HPP_
