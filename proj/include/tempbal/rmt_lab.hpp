#ifndef TEMPBAL_RMT_LAB_HPP_
#define TEMPBAL_RMT_LAB_HPP_

// Synthetic spectra for checking the estimator against random-matrix facts:
// matrices with prescribed power-law decaying eigenvalues lambda_k =
// lambda_1 * k^-s (whose ESD tail exponent should be 1 + 1/s), and rank-1
// "bulk + spike" perturbations of Gaussian matrices.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "tempbal/error.hpp"
#include "tempbal/esd.hpp"
#include "tempbal/htsr.hpp"
#include "tempbal/util.hpp"

namespace tempbal {

// Relative tolerance on |alpha_hill - (1 + 1/s)| / (1 + 1/s) for Q >= 64.
inline constexpr double kSAlphaTolerance = 0.15;
inline constexpr int kSAlphaMinGatedQ = 64;

struct PLSpectrumSpec {
  int size = 64;  // Q
  double s = 1.0;
  double lambda1 = 1.0;
  std::uint64_t seed = 0;
};

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
// of R's diagonal folded into Q.
inline Eigen::MatrixXd haar_orthogonal(int size, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(size, size);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (int j = 0; j < size; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

inline std::vector<double> pl_eigenvalues(const PLSpectrumSpec& spec) {
  std::vector<double> out(static_cast<std::size_t>(spec.size));
  for (int k = 1; k <= spec.size; ++k) out[static_cast<std::size_t>(k - 1)] = spec.lambda1 * std::pow(k, -spec.s);
  return out;  // descending
}

inline OrientedMatrix synth_pl_matrix(const PLSpectrumSpec& spec) {
  if (spec.size < 8) throw UsageError("synth_pl_matrix: Q must be >= 8");
  if (spec.s < 0.0) throw UsageError("synth_pl_matrix: s must be >= 0");
  if (!(spec.lambda1 > 0.0)) throw UsageError("synth_pl_matrix: lambda1 must be > 0");
  std::mt19937_64 rng(spec.seed);
  const Eigen::MatrixXd u = haar_orthogonal(spec.size, rng);
  const Eigen::MatrixXd v = haar_orthogonal(spec.size, rng);
  Eigen::VectorXd sv(spec.size);
  const auto ev = pl_eigenvalues(spec);
  for (int k = 0; k < spec.size; ++k) sv[k] = std::sqrt(ev[static_cast<std::size_t>(k)]);
  return orient(Eigen::MatrixXd(u * sv.asDiagonal() * v.transpose()),
                "pl_Q" + std::to_string(spec.size) + "_s" + format_double(spec.s));
}

struct SAlphaRow {
  int size = 0;
  double s = 0.0;
  double alpha_hill = 0.0;
  double alpha_pred = 0.0;
  double rel_err = 0.0;

  bool gated() const { return size >= kSAlphaMinGatedQ; }
  bool within_tolerance() const { return !gated() || rel_err <= kSAlphaTolerance; }
};

// One row per s: Hill alpha (median tail) of a synthetic Q x Q matrix vs the
// predicted 1 + 1/s.
inline std::vector<SAlphaRow> verify_s_alpha(int size, const std::vector<double>& s_grid, std::uint64_t seed = 0,
                                             unsigned threads = analysis_threads()) {
  std::vector<SAlphaRow> rows(s_grid.size());
  for (double s : s_grid)
    if (!(s > 0.0)) throw UsageError("verify_s_alpha: every s must be > 0");
  parallel_for(s_grid.size(), threads, [&](std::size_t i) {
    PLSpectrumSpec spec{size, s_grid[i], 1.0, seed + i};
    const Esd esd = compute_esd(synth_pl_matrix(spec));
    const LayerMetrics m = layer_metrics(esd, LambdaMinPolicy::median());
    SAlphaRow& r = rows[i];
    r.size = size;
    r.s = s_grid[i];
    r.alpha_hill = m.alpha_hill;
    r.alpha_pred = 1.0 + 1.0 / s_grid[i];
    r.rel_err = std::abs(r.alpha_hill - r.alpha_pred) / r.alpha_pred;
  });
  return rows;
}

inline double mean_rel_err(const std::vector<SAlphaRow>& rows) {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.rel_err;
  return s / static_cast<double>(rows.size());
}

inline void write_s_alpha_csv(const std::vector<SAlphaRow>& rows, std::ostream& out) {
  out << "Q,s,alpha_hill,alpha_pred,rel_err\n";
  for (const auto& r : rows)
    out << r.size << ',' << format_double(r.s) << ',' << format_double(r.alpha_hill) << ','
        << format_double(r.alpha_pred) << ',' << format_double(r.rel_err) << '\n';
}

// i.i.d. N(0, stddev^2) entries.
inline OrientedMatrix gaussian_matrix(int rows, int cols, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, stddev);
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
  return orient(std::move(w), "gaussian_bulk");
}

struct SpikeResult {
  Esd esd_before;
  Esd esd_after;
  bool spike_detected = false;
};

// Spike separation: top eigenvalue above this multiple of the runner-up.
inline constexpr double kSpikeRatio = 3.0;

// Adds spike_scale * a b^T with seeded unit vectors a, b.
inline SpikeResult spike_experiment(const OrientedMatrix& bulk, double spike_scale, std::uint64_t seed = 0) {
  if (spike_scale < 0.0) throw UsageError("spike_experiment: spike_scale must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd a(bulk.n()), b(bulk.m());
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = gauss(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = gauss(rng);
  a.normalize();
  b.normalize();

  OrientedMatrix spiked = bulk;
  spiked.values += spike_scale * a * b.transpose();

  SpikeResult out;
  out.esd_before = compute_esd(bulk);
  out.esd_after = compute_esd(spiked);
  const auto& ev = out.esd_after.eigenvalues;
  if (ev.size() >= 2) out.spike_detected = ev[ev.size() - 1] > kSpikeRatio * ev[ev.size() - 2];
  return out;
}

}  // namespace tempbal

#endif  // TEMPBAL_RMT_LAB_HPP_
