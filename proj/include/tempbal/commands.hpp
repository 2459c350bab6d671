#ifndef TEMPBAL_COMMANDS_HPP_
#define TEMPBAL_COMMANDS_HPP_

// Subcommand bodies behind the `tempbal` executable. Each writes its primary
// output to the given stream and throws tempbal::Error subclasses, whose
// code() is the process exit status.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tempbal/config.hpp"
#include "tempbal/error.hpp"
#include "tempbal/esd.hpp"
#include "tempbal/htsr.hpp"
#include "tempbal/rmt_lab.hpp"
#include "tempbal/training.hpp"
#include "tempbal/util.hpp"
#include "tempbal/weight_store.hpp"

namespace tempbal {

inline LambdaMinPolicy parse_policy(const std::string& name, int bins) {
  if (bins < 2) throw UsageError("--bins must be >= 2");
  if (name == "median") return {LambdaMinRule::kMedian, bins};
  if (name == "ks") return {LambdaMinRule::kGoodnessOfFit, bins};
  if (name == "fixfinger") return {LambdaMinRule::kFixFinger, bins};
  throw UsageError("unknown policy '" + name + "' (expected median|ks|fixfinger)");
}

// Log10-eigenvalue histogram of the positive eigenvalues, TSV.
inline void write_esd_histogram(const Esd& esd, int bins, std::ostream& out) {
  out << "log10_lo\tlog10_hi\tcount\n";
  std::vector<double> logs;
  for (double v : esd.eigenvalues)
    if (v > 0.0) logs.push_back(std::log10(v));
  if (logs.empty()) return;
  const double lo = logs.front();
  const double hi = logs.back();
  const double width = (hi - lo) / bins;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double x : logs) {
    int b = width > 0.0 ? static_cast<int>(std::floor((x - lo) / width)) : 0;
    counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
  }
  for (int b = 0; b < bins; ++b)
    out << format_double(lo + b * width) << '\t' << format_double(lo + (b + 1) * width) << '\t'
        << counts[static_cast<std::size_t>(b)] << '\n';
}

inline std::string histogram_file_name(std::size_t index, const std::string& layer) {
  std::string safe;
  for (char c : layer) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return "esd_" + std::to_string(index) + "_" + safe + ".tsv";
}

inline constexpr const char* kAnalyzeHeader = "layer,n,m,k,lambda_min,alpha_hill,spectral_norm,alpha_weighted,status";

struct AnalyzeOptions {
  std::string snapshot_path;
  LambdaMinPolicy policy;
  std::optional<std::string> out_dir;  // metrics.csv + per-layer histograms
};

inline void cmd_analyze(const AnalyzeOptions& opt, std::ostream& out) {
  const WeightSnapshot snap = load_snapshot(opt.snapshot_path);

  struct Row {
    std::optional<Esd> esd;
    std::optional<LayerMetrics> metrics;
    std::string status = "ok";
  };
  std::vector<Row> rows(snap.layers.size());
  parallel_for(snap.layers.size(), analysis_threads(), [&](std::size_t i) {
    try {
      rows[i].esd = compute_esd(snap.layers[i]);
      rows[i].metrics = layer_metrics(*rows[i].esd, opt.policy);
    } catch (const NumericalError& e) {
      rows[i].status = std::string("degenerate: ") + e.what();
    }
  });

  std::ostringstream csv;
  csv << kAnalyzeHeader << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::string status = r.status;
    for (char& c : status)
      if (c == ',' || c == '\n') c = ';';
    csv << snap.layers[i].name << ',';
    if (r.esd) csv << r.esd->n << ',' << r.esd->m << ',';
    else csv << ",,";
    if (r.metrics) {
      const auto& m = *r.metrics;
      csv << m.k << ',' << format_double(m.lambda_min) << ',' << format_double(m.alpha_hill) << ','
          << format_double(m.spectral_norm) << ',' << format_double(m.alpha_weighted) << ',';
    } else {
      csv << ",,,,,";
    }
    csv << status << '\n';
  }
  out << csv.str();

  if (opt.out_dir) {
    std::filesystem::create_directories(*opt.out_dir);
    std::ofstream(std::filesystem::path(*opt.out_dir) / "metrics.csv") << csv.str();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].esd) continue;
      std::ofstream h(std::filesystem::path(*opt.out_dir) / histogram_file_name(i, snap.layers[i].name));
      write_esd_histogram(*rows[i].esd, opt.policy.histogram_bins, h);
    }
  }
}

struct TrainOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

struct TrainSummary {
  double final_eval_acc = 0.0;
  double analysis_seconds = 0.0;
  double total_seconds = 0.0;
  // Analysis time relative to the rest of training, in percent.
  double overhead_percent() const {
    const double rest = total_seconds - analysis_seconds;
    return rest > 0.0 ? 100.0 * analysis_seconds / rest : 0.0;
  }
};

inline TrainSummary cmd_train(const TrainOptions& opt, std::ostream& out) {
  RunConfig cfg = parse_run_config(opt.config_path, true);
  if (opt.seed) cfg.override_seed(*opt.seed);
  const TrainResult r = run_training(cfg.train);

  std::filesystem::create_directories(opt.out_dir);
  const auto dir = std::filesystem::path(opt.out_dir);
  {
    std::ofstream csv(dir / "telemetry.csv");
    if (!csv) throw DataError("cannot write telemetry.csv in '" + opt.out_dir + "'");
    write_telemetry_csv(r.telemetry, csv);
  }
  save_snapshot(r.final_snapshot, (dir / "final.wsnp").string());

  TrainSummary s{r.final_eval_acc, r.analysis_seconds, r.total_seconds};
  out << "final_eval_acc=" << format_double(s.final_eval_acc) << '\n';
  out << "analysis_overhead_percent=" << format_double(std::round(s.overhead_percent() * 100.0) / 100.0) << '\n';
  return s;
}

// "a:b:step" (inclusive) or "x,y,z".
inline std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  if (trim(text).empty()) throw UsageError(flag + ": empty grid");
  auto parts = split(text, ':');
  if (parts.size() == 3) {
    double a = 0, b = 0, step = 0;
    if (!parse_double(parts[0], a) || !parse_double(parts[1], b) || !parse_double(parts[2], step) || !(step > 0.0) ||
        b < a)
      throw UsageError(flag + ": expected start:stop:step with step > 0");
    for (long i = 0;; ++i) {
      const double v = a + static_cast<double>(i) * step;
      if (v > b + 1e-9 * std::max(1.0, std::abs(b))) break;
      out.push_back(v);
    }
    return out;
  }
  if (parts.size() != 1) throw UsageError(flag + ": expected start:stop:step or a comma list");
  for (const auto& p : split(text, ',')) {
    double v = 0;
    if (!parse_double(p, v)) throw UsageError(flag + ": bad number '" + p + "'");
    out.push_back(v);
  }
  return out;
}

struct RmtOptions {
  std::vector<int> sizes;
  std::vector<double> s_grid;
  std::optional<std::string> out_path;
  std::uint64_t seed = 0;
};

struct RmtReport {
  std::vector<SAlphaRow> rows;
  bool all_within_tolerance = true;
};

// Throws NumericalError (exit 3) after writing the table when a gated cell
// misses the tolerance.
inline RmtReport cmd_rmt(const RmtOptions& opt, std::ostream& out, std::ostream& log) {
  if (opt.sizes.empty()) throw UsageError("--q: empty size list");
  if (opt.s_grid.empty()) throw UsageError("--s: empty exponent list");
  for (int q : opt.sizes)
    if (q < 8) throw UsageError("--q: sizes must be >= 8");
  for (double s : opt.s_grid)
    if (!(s > 0.0)) throw UsageError("--s: exponents must be > 0");

  RmtReport rep;
  for (int q : opt.sizes) {
    auto rows = verify_s_alpha(q, opt.s_grid, opt.seed);
    log << "Q=" << q << " mean_rel_err=" << format_double(mean_rel_err(rows)) << '\n';
    rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
  }
  for (const auto& r : rep.rows) rep.all_within_tolerance = rep.all_within_tolerance && r.within_tolerance();

  if (opt.out_path) {
    std::ofstream f(*opt.out_path);
    if (!f) throw DataError("cannot write '" + *opt.out_path + "'");
    write_s_alpha_csv(rep.rows, f);
  } else {
    write_s_alpha_csv(rep.rows, out);
  }
  if (!rep.all_within_tolerance)
    throw NumericalError("s-alpha relation outside tolerance " + format_double(kSAlphaTolerance) +
                         " for at least one cell with Q >= " + std::to_string(kSAlphaMinGatedQ));
  return rep;
}

}  // namespace tempbal

#endif  // TEMPBAL_COMMANDS_HPP_
