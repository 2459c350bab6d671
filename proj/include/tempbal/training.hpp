#ifndef TEMPBAL_TRAINING_HPP_
#define TEMPBAL_TRAINING_HPP_

// Deterministic desk-scale training loop that drives the layer-wise schedule
// end to end: at every scheduling boundary the current weights are analyzed,
// per-layer rates are assigned, and SGD runs with those rates until the next
// boundary.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempbal/dataset.hpp"
#include "tempbal/error.hpp"
#include "tempbal/htsr.hpp"
#include "tempbal/network.hpp"
#include "tempbal/optim.hpp"
#include "tempbal/scheduler.hpp"
#include "tempbal/util.hpp"
#include "tempbal/weight_store.hpp"

namespace tempbal {

struct TrainConfig {
  ModelSpec model;
  DatasetSpec data;
  ScheduleConfig schedule;
  LambdaMinPolicy policy;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 128;
  double lambda_sr = 0.0;
  int snr_max_iter = 1000;
  // Epochs actually run; defaults to schedule.total_epochs.
  std::optional<int> epochs;
  std::uint64_t seed = 0;
  bool record_timing = false;  // wall-clock columns make telemetry non-reproducible
  unsigned analysis_threads = 0;  // 0: TEMPBAL_THREADS / hardware default

  int run_epochs() const { return epochs.value_or(schedule.total_epochs); }
};

struct LayerTelemetry {
  int epoch = 0;
  std::string layer;
  std::optional<double> alpha_hill;
  std::optional<double> spectral_norm;
  double lr = 0.0;
  double grad_l2 = 0.0;  // mean over the epoch's steps of ||dL/dW||_2
};

struct EpochTelemetry {
  int epoch = 0;
  double eta_t = 0.0;
  double train_loss = 0.0;
  double eval_acc = 0.0;
  double analysis_sec = 0.0;
  double epoch_sec = 0.0;
};

struct TrainTelemetry {
  std::vector<LayerTelemetry> layers;
  std::vector<EpochTelemetry> epochs;
  bool record_timing = false;
};

inline constexpr const char* kTelemetryHeader =
    "epoch,layer,alpha_hill,spectral_norm,lr,grad_l2,train_loss,eval_acc,analysis_sec,epoch_sec";

inline void write_telemetry_csv(const TrainTelemetry& t, std::ostream& out) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << kTelemetryHeader << '\n';
  std::size_t row = 0;
  for (const auto& e : t.epochs) {
    for (; row < t.layers.size() && t.layers[row].epoch == e.epoch; ++row) {
      const auto& l = t.layers[row];
      out << l.epoch << ',' << l.layer << ',' << opt(l.alpha_hill) << ',' << opt(l.spectral_norm) << ','
          << format_double(l.lr) << ',' << format_double(l.grad_l2) << ",,,,\n";
    }
    out << e.epoch << ",_epoch_,,,,," << format_double(e.train_loss) << ',' << format_double(e.eval_acc) << ',';
    if (t.record_timing) out << format_double(e.analysis_sec) << ',' << format_double(e.epoch_sec);
    else out << ',';
    out << '\n';
  }
}

struct TrainResult {
  TrainTelemetry telemetry;
  WeightSnapshot final_snapshot;
  double final_eval_acc = 0.0;
  double analysis_seconds = 0.0;
  double total_seconds = 0.0;
};

inline TrainResult run_training(const TrainConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  auto seconds = [](Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };

  cfg.schedule.validate();
  const int epochs = cfg.run_epochs();
  if (epochs < 0 || epochs > cfg.schedule.total_epochs)
    throw UsageError("epochs must lie in [0, T]");
  if (cfg.lambda_sr < 0.0) throw UsageError("lambda_sr must be >= 0");
  const unsigned threads = cfg.analysis_threads ? cfg.analysis_threads : analysis_threads();

  const Dataset data = make_dataset(cfg.data, cfg.seed);
  ModelSpec model = cfg.model;
  Network net(model, static_cast<int>(data.dims()), data.classes);
  OptimState optim{cfg.momentum, cfg.weight_decay, cfg.batch_size, {}};

  TrainResult result;
  result.telemetry.record_timing = cfg.record_timing;
  const auto run_start = Clock::now();

  LayerValues last_grad_norms;  // LARS input from the previous window
  bool have_grad_norms = false;
  long global_iter = 0;

  std::vector<std::string> layer_names;
  for (const auto& l : net.snapshot(0).layers) layer_names.push_back(l.name);
  const std::size_t layer_count = layer_names.size();

  // Persist across epochs: with an iteration-based interval a window may
  // straddle an epoch boundary.
  ScheduleDecision decision;
  std::vector<LayerAnalysis> analysis;
  WeightSnapshot analyzed;
  LayerValues window_grad(layer_count);
  for (std::size_t i = 0; i < layer_count; ++i) window_grad[i] = {layer_names[i], 0.0};
  long window_steps = 0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    double analysis_sec = 0.0;

    auto boundary = [&] {
      const auto a0 = Clock::now();
      analyzed = net.snapshot(static_cast<std::uint32_t>(epoch));
      analysis = analyze_snapshot(analyzed, cfg.policy, threads);
      decision = decide(cfg.schedule, epoch, analyzed, analysis, have_grad_norms ? &last_grad_norms : nullptr);
      analysis_sec += seconds(a0, Clock::now());
    };
    if (!cfg.schedule.update_interval_iters) {
      boundary();
    } else if (!analysis.empty()) {
      // Same metrics, new epoch's global rate.
      decision = decide(cfg.schedule, epoch, analyzed, analysis, have_grad_norms ? &last_grad_norms : nullptr);
    }

    std::vector<double> grad_sum(layer_count, 0.0);
    long steps = 0;
    double loss_sum = 0.0;

    for (const auto& batch : epoch_batches(data.train_x.rows(), cfg.batch_size, cfg.seed, epoch)) {
      if (cfg.schedule.update_interval_iters && global_iter % *cfg.schedule.update_interval_iters == 0) {
        if (window_steps > 0) {
          for (auto& [n, g] : window_grad) g /= static_cast<double>(window_steps);
          last_grad_norms = window_grad;
          have_grad_norms = true;
          for (auto& [n, g] : window_grad) g = 0.0;
          window_steps = 0;
        }
        boundary();
      }
      Eigen::MatrixXd x(static_cast<Eigen::Index>(batch.size()), data.train_x.cols());
      Eigen::VectorXi y(static_cast<Eigen::Index>(batch.size()));
      for (std::size_t i = 0; i < batch.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = data.train_x.row(batch[i]);
        y[static_cast<Eigen::Index>(i)] = data.train_y[batch[i]];
      }
      std::vector<Eigen::MatrixXd> grads;
      const double loss = net.loss_and_grad(x, y, grads);
      if (!std::isfinite(loss))
        throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch), epoch);

      auto& params = net.params();
      std::size_t layer_idx = 0;
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].is_weight) continue;
        if (cfg.lambda_sr > 0.0)
          grads[i] += snr_grad_term(orient(params[i].value, params[i].layer), cfg.lambda_sr, 1e-7, cfg.snr_max_iter);
        const double gn = grads[i].norm();
        grad_sum[layer_idx] += gn;
        window_grad[layer_idx].second += gn;
        ++layer_idx;
      }
      sgd_step(params, grads, optim, decision.per_layer, decision.eta_t);
      loss_sum += loss;
      ++steps;
      ++window_steps;
      ++global_iter;
    }
    if (!cfg.schedule.update_interval_iters && window_steps > 0) {
      for (auto& [n, g] : window_grad) g /= static_cast<double>(window_steps);
      last_grad_norms = window_grad;
      have_grad_norms = true;
      for (auto& [n, g] : window_grad) g = 0.0;
      window_steps = 0;
    }

    EpochTelemetry e;
    e.epoch = epoch;
    e.eta_t = decision.eta_t;
    e.train_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
    if (!std::isfinite(e.train_loss))
      throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch), epoch);
    e.eval_acc = net.accuracy(data.eval_x, data.eval_y);
    e.analysis_sec = analysis_sec;
    e.epoch_sec = seconds(epoch_start, Clock::now());
    result.analysis_seconds += analysis_sec;

    for (std::size_t i = 0; i < layer_count; ++i) {
      LayerTelemetry row;
      row.epoch = epoch;
      row.layer = layer_names[i];
      if (i < analysis.size() && analysis[i].metrics) {
        row.alpha_hill = analysis[i].metrics->alpha_hill;
        row.spectral_norm = analysis[i].metrics->spectral_norm;
      }
      row.lr = decision.lr(layer_names[i]);
      row.grad_l2 = steps ? grad_sum[i] / static_cast<double>(steps) : 0.0;
      result.telemetry.layers.push_back(std::move(row));
    }
    result.telemetry.epochs.push_back(e);
    result.final_eval_acc = e.eval_acc;
  }

  result.final_snapshot = net.snapshot(static_cast<std::uint32_t>(epochs));
  if (epochs == 0) result.final_eval_acc = net.accuracy(data.eval_x, data.eval_y);
  result.total_seconds = seconds(run_start, Clock::now());
  return result;
}

}  // namespace tempbal

#endif  // TEMPBAL_TRAINING_HPP_
