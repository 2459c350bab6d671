#ifndef TEMPBAL_SCHEDULER_HPP_
#define TEMPBAL_SCHEDULER_HPP_

// Layer-wise learning-rate assignment driven by per-layer spectral metrics.
//
// Every epoch the global cosine-annealed rate eta_t is redistributed across
// layers: layers whose ESD tail is lighter (larger alpha) are under-trained
// and get a larger share, heavier-tailed layers a smaller one.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tempbal/error.hpp"
#include "tempbal/esd.hpp"
#include "tempbal/htsr.hpp"
#include "tempbal/util.hpp"
#include "tempbal/weight_store.hpp"

namespace tempbal {

// Ordered (layer name, value) pairs; order is the snapshot's layer order.
using LayerValues = std::vector<std::pair<std::string, double>>;

enum class Assignment { kTempBalanceLinear, kSqrt, kLog2, kStep, kLars, kGlobalOnly };
enum class ScheduleMetric { kAlphaHill, kSpectralNorm, kAlphaWeighted };

struct ScheduleConfig {
  double eta0 = 0.1;
  int total_epochs = 200;
  double s1 = 0.5;
  double s2 = 1.5;
  Assignment assignment = Assignment::kTempBalanceLinear;
  ScheduleMetric metric = ScheduleMetric::kAlphaHill;
  int start_epoch = 0;
  // Iterations between scheduling boundaries; nullopt means once per epoch.
  std::optional<long> update_interval_iters;
  bool exclude_first_last = true;
  double lars_eps = 1e-8;

  void validate() const {
    if (!(eta0 > 0.0)) throw UsageError("eta0 must be > 0");
    if (total_epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(s1 > 0.0) || !(s2 > 0.0)) throw UsageError("s1 and s2 must be > 0");
    if (s1 > s2) throw UsageError("s1 must be <= s2");
    if (start_epoch < 0 || start_epoch >= total_epochs) throw UsageError("start_epoch must lie in [0, epochs)");
    if (update_interval_iters && *update_interval_iters < 1) throw UsageError("update_interval must be >= 1");
    if (!(lars_eps > 0.0)) throw UsageError("lars_eps must be > 0");
  }
};

// Cosine annealing: (eta0 / 2) * (1 + cos(pi * t / T)). t may be fractional.
inline double cal_rate(double eta0, double t, int total_epochs) {
  if (total_epochs <= 0) throw UsageError("cal_rate: T must be > 0");
  if (t < 0.0 || t > total_epochs) throw UsageError("cal_rate: t outside [0, T]");
  const double progress = t / total_epochs;
  return (eta0 / 2.0) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace detail {

// Replaces the +inf alpha sentinel by the largest finite value present.
inline std::vector<double> substitute_sentinels(const LayerValues& metrics) {
  if (metrics.empty()) throw UsageError("empty metric map");
  std::vector<double> v;
  v.reserve(metrics.size());
  double max_finite = -std::numeric_limits<double>::infinity();
  bool any_finite = false;
  for (const auto& [name, a] : metrics) {
    if (std::isnan(a) || a == -std::numeric_limits<double>::infinity())
      throw NumericalError("metric for layer '" + name + "' is not a number");
    if (std::isfinite(a)) {
      max_finite = std::max(max_finite, a);
      any_finite = true;
    }
    v.push_back(a);
  }
  // All-sentinel maps degenerate to "all equal".
  const double fill = any_finite ? max_finite : 1.0;
  for (double& a : v)
    if (std::isinf(a)) a = fill;
  return v;
}

inline LayerValues zip(const LayerValues& names, const std::vector<double>& lrs) {
  LayerValues out;
  out.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace_back(names[i].first, lrs[i]);
  return out;
}

}  // namespace detail

// f(i) = eta_t * [ (a_i - a_min) / (a_max - a_min) * (s2 - s1) + s1 ].
// Only differences and one ratio of metric values enter, so any positive
// rescaling of the metrics that is exact in floating point leaves the result
// bit-identical.
inline LayerValues assign_tempbalance(double eta_t, const LayerValues& metrics, double s1, double s2) {
  const std::vector<double> a = detail::substitute_sentinels(metrics);
  const auto [lo_it, hi_it] = std::minmax_element(a.begin(), a.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> lr(a.size());
  if (hi == lo) {
    std::fill(lr.begin(), lr.end(), eta_t * ((s1 + s2) / 2.0));
  } else {
    const double range = hi - lo;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double ratio = (a[i] - lo) / range;
      const double scale = std::clamp(ratio * (s2 - s1) + s1, s1, s2);
      lr[i] = eta_t * scale;
    }
  }
  return detail::zip(metrics, lr);
}

enum class VariantAssignment { kSqrt, kLog2, kStep };

inline LayerValues assign_variant(double eta_t, const LayerValues& metrics, VariantAssignment variant, double s1,
                                  double s2) {
  const std::vector<double> a = detail::substitute_sentinels(metrics);
  const std::size_t layers = a.size();
  std::vector<double> lr(layers);

  switch (variant) {
    case VariantAssignment::kSqrt:
    case VariantAssignment::kLog2: {
      std::vector<double> t(layers);
      for (std::size_t i = 0; i < layers; ++i) {
        if (!(a[i] > 0.0))
          throw UsageError("metric for layer '" + metrics[i].first + "' must be > 0 for sqrt/log2 assignment");
        t[i] = variant == VariantAssignment::kSqrt ? std::sqrt(a[i]) : std::log2(a[i]);
      }
      const double mean = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(layers);
      if (mean == 0.0) throw NumericalError("log2 assignment: mean log metric is zero");
      for (std::size_t i = 0; i < layers; ++i) lr[i] = eta_t * (t[i] / mean);
      break;
    }
    case VariantAssignment::kStep: {
      if (layers == 1) {
        lr[0] = eta_t * ((s1 + s2) / 2.0);
        break;
      }
      std::vector<std::size_t> order(layers);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x] < a[y]; });
      const double step = (s2 - s1) / static_cast<double>(layers - 1);
      for (std::size_t rank = 0; rank < layers; ++rank)
        lr[order[rank]] = eta_t * (s1 + static_cast<double>(rank) * step);
      break;
    }
  }
  return detail::zip(metrics, lr);
}

// LARS-style trust ratio: eta_t * ||w|| / (||g|| + eps); zero weights ride eta_t.
inline LayerValues assign_lars(double eta_t, const LayerValues& weight_norms, const LayerValues& grad_norms,
                               double eps) {
  if (!(eps > 0.0)) throw UsageError("assign_lars: eps must be > 0");
  LayerValues out;
  out.reserve(weight_norms.size());
  for (const auto& [name, wn] : weight_norms) {
    auto g = std::find_if(grad_norms.begin(), grad_norms.end(), [&](const auto& p) { return p.first == name; });
    if (wn == 0.0 || g == grad_norms.end()) {
      out.emplace_back(name, eta_t);
    } else {
      out.emplace_back(name, eta_t * wn / (g->second + eps));
    }
  }
  return out;
}

// Per-layer outcome of the spectral analysis pass.
struct LayerAnalysis {
  std::string name;
  std::optional<LayerMetrics> metrics;
  std::string error;  // set when metrics is empty
};

// Parallel map over layers; degenerate layers are reported, not thrown.
inline std::vector<LayerAnalysis> analyze_snapshot(const WeightSnapshot& snapshot, const LambdaMinPolicy& policy,
                                                   unsigned threads = analysis_threads()) {
  std::vector<LayerAnalysis> out(snapshot.layers.size());
  parallel_for(snapshot.layers.size(), threads, [&](std::size_t i) {
    const auto& layer = snapshot.layers[i];
    out[i].name = layer.name;
    try {
      out[i].metrics = layer_metrics(compute_esd(layer), policy);
    } catch (const NumericalError& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

struct ScheduleDecision {
  int epoch = 0;
  double eta_t = 0.0;
  LayerValues per_layer;     // assigned learning rate, snapshot order
  LayerValues alphas_used;   // metric value per scheduled layer
  std::vector<std::string> flagged;  // degenerate layers that fell back to eta_t
  bool layerwise = false;    // false when every layer rides eta_t

  double lr(const std::string& name) const {
    for (const auto& [n, v] : per_layer)
      if (n == name) return v;
    return eta_t;
  }
};

inline double metric_value(const LayerMetrics& m, ScheduleMetric which) {
  switch (which) {
    case ScheduleMetric::kAlphaHill:
      return m.alpha_hill;
    case ScheduleMetric::kSpectralNorm:
      return m.spectral_norm;
    case ScheduleMetric::kAlphaWeighted:
      return m.alpha_weighted;
  }
  return m.alpha_hill;
}

inline double frobenius_norm(const LayerTensor& layer) {
  double s = 0.0;
  for (double v : layer.values) s += v * v;
  return std::sqrt(s);
}

// Assembles the decision from a finished analysis pass. grad_norms is only
// consulted by the LARS comparator.
inline ScheduleDecision decide(const ScheduleConfig& config, int t, const WeightSnapshot& snapshot,
                               const std::vector<LayerAnalysis>& analysis,
                               const LayerValues* grad_norms = nullptr) {
  if (t < 0 || t >= config.total_epochs)
    throw UsageError("schedule epoch " + std::to_string(t) + " outside [0, T)");
  ScheduleDecision d;
  d.epoch = t;
  d.eta_t = cal_rate(config.eta0, t, config.total_epochs);
  for (const auto& layer : snapshot.layers) d.per_layer.emplace_back(layer.name, d.eta_t);

  if (t < config.start_epoch || config.assignment == Assignment::kGlobalOnly) return d;
  d.layerwise = true;

  const std::size_t count = snapshot.layers.size();
  auto excluded = [&](std::size_t i) { return config.exclude_first_last && (i == 0 || i + 1 == count); };

  if (config.assignment == Assignment::kLars) {
    LayerValues wn;
    for (std::size_t i = 0; i < count; ++i)
      if (!excluded(i)) wn.emplace_back(snapshot.layers[i].name, frobenius_norm(snapshot.layers[i]));
    const LayerValues none;
    for (const auto& [name, lr] : assign_lars(d.eta_t, wn, grad_norms ? *grad_norms : none, config.lars_eps))
      for (auto& p : d.per_layer)
        if (p.first == name) p.second = lr;
    return d;
  }

  LayerValues metrics;
  for (std::size_t i = 0; i < count; ++i) {
    if (excluded(i)) continue;
    const auto& a = analysis.at(i);
    if (!a.metrics) {
      d.flagged.push_back(a.name);
      continue;
    }
    metrics.emplace_back(a.name, metric_value(*a.metrics, config.metric));
  }
  d.alphas_used = metrics;
  if (metrics.empty()) return d;

  LayerValues assigned;
  switch (config.assignment) {
    case Assignment::kTempBalanceLinear:
      assigned = assign_tempbalance(d.eta_t, metrics, config.s1, config.s2);
      break;
    case Assignment::kSqrt:
      assigned = assign_variant(d.eta_t, metrics, VariantAssignment::kSqrt, config.s1, config.s2);
      break;
    case Assignment::kLog2:
      assigned = assign_variant(d.eta_t, metrics, VariantAssignment::kLog2, config.s1, config.s2);
      break;
    case Assignment::kStep:
      assigned = assign_variant(d.eta_t, metrics, VariantAssignment::kStep, config.s1, config.s2);
      break;
    default:
      break;
  }
  for (const auto& [name, lr] : assigned)
    for (auto& p : d.per_layer)
      if (p.first == name) p.second = lr;
  return d;
}

inline ScheduleDecision schedule_epoch(const ScheduleConfig& config, int t, const WeightSnapshot& snapshot,
                                       const LambdaMinPolicy& policy, const LayerValues* grad_norms = nullptr) {
  config.validate();
  const bool needs_analysis = t >= config.start_epoch && config.assignment != Assignment::kGlobalOnly &&
                              config.assignment != Assignment::kLars;
  std::vector<LayerAnalysis> analysis;
  if (needs_analysis) analysis = analyze_snapshot(snapshot, policy);
  return decide(config, t, snapshot, analysis, grad_norms);
}

}  // namespace tempbal

#endif  // TEMPBAL_SCHEDULER_HPP_
