#ifndef TEMPBAL_CONFIG_HPP_
#define TEMPBAL_CONFIG_HPP_

// Flat key=value run configuration. One pair per line, '#' starts a comment,
// unknown or repeated keys are rejected, absent keys keep their defaults.

#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tempbal/error.hpp"
#include "tempbal/training.hpp"
#include "tempbal/util.hpp"

namespace tempbal {

struct RunConfig {
  TrainConfig train;
  bool init_seed_set = false;

  // --seed on the command line; also reseeds init unless init_seed was given.
  void override_seed(std::uint64_t seed) {
    train.seed = seed;
    if (!init_seed_set) train.model.init_seed = seed;
  }
};

namespace detail {

struct ConfigKey {
  const char* name;
  const char* default_text;
  const char* doc;
  std::function<void(RunConfig&, const std::string&)> apply;
};

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw UsageError("config key " + key + ": invalid value '" + value + "' (" + why + ")");
}

inline double as_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!parse_double(v, out)) bad_value(key, v, "expected a number");
  return out;
}

inline long long as_int(const std::string& key, const std::string& v) {
  long long out = 0;
  if (!parse_int(v, out)) bad_value(key, v, "expected an integer");
  return out;
}

inline bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "expected true/false");
}

inline std::vector<int> as_int_list(const std::string& key, const std::string& v, char sep = ',') {
  std::vector<int> out;
  for (const auto& part : split(v, sep)) {
    long long x = as_int(key, part);
    if (x < 1) bad_value(key, v, "entries must be positive");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      // schedule
      {"eta0", "0.1", "initial global learning rate",
       [](RunConfig& c, const std::string& v) { c.train.schedule.eta0 = as_double("eta0", v); }},
      {"epochs", "200", "total epochs T of the cosine schedule",
       [](RunConfig& c, const std::string& v) { c.train.schedule.total_epochs = static_cast<int>(as_int("epochs", v)); }},
      {"run_epochs", "epochs", "epochs actually trained (<= epochs)",
       [](RunConfig& c, const std::string& v) { c.train.epochs = static_cast<int>(as_int("run_epochs", v)); }},
      {"s1", "0.5", "minimum learning-rate scaling ratio",
       [](RunConfig& c, const std::string& v) { c.train.schedule.s1 = as_double("s1", v); }},
      {"s2", "1.5", "maximum learning-rate scaling ratio",
       [](RunConfig& c, const std::string& v) { c.train.schedule.s2 = as_double("s2", v); }},
      {"assignment", "tempbalance", "tempbalance | sqrt | log2 | step | lars | global_only",
       [](RunConfig& c, const std::string& v) {
         auto& a = c.train.schedule.assignment;
         if (v == "tempbalance") a = Assignment::kTempBalanceLinear;
         else if (v == "sqrt") a = Assignment::kSqrt;
         else if (v == "log2") a = Assignment::kLog2;
         else if (v == "step") a = Assignment::kStep;
         else if (v == "lars") a = Assignment::kLars;
         else if (v == "global_only") a = Assignment::kGlobalOnly;
         else bad_value("assignment", v, "unknown assignment");
       }},
      {"metric", "alpha_hill", "alpha_hill | spectral_norm | alpha_weighted",
       [](RunConfig& c, const std::string& v) {
         auto& m = c.train.schedule.metric;
         if (v == "alpha_hill") m = ScheduleMetric::kAlphaHill;
         else if (v == "spectral_norm") m = ScheduleMetric::kSpectralNorm;
         else if (v == "alpha_weighted") m = ScheduleMetric::kAlphaWeighted;
         else bad_value("metric", v, "unknown metric");
       }},
      {"start_epoch", "0", "first epoch using layer-wise rates; earlier epochs use the global rate",
       [](RunConfig& c, const std::string& v) { c.train.schedule.start_epoch = static_cast<int>(as_int("start_epoch", v)); }},
      {"update_interval", "epoch", "'epoch' or a number of iterations between scheduling boundaries",
       [](RunConfig& c, const std::string& v) {
         if (v == "epoch") c.train.schedule.update_interval_iters.reset();
         else c.train.schedule.update_interval_iters = static_cast<long>(as_int("update_interval", v));
       }},
      {"exclude_first_last", "true", "first and last layers ride the global rate",
       [](RunConfig& c, const std::string& v) { c.train.schedule.exclude_first_last = as_bool("exclude_first_last", v); }},
      {"lars_eps", "1e-8", "epsilon in the LARS trust ratio",
       [](RunConfig& c, const std::string& v) { c.train.schedule.lars_eps = as_double("lars_eps", v); }},
      // lambda_min policy
      {"policy", "median", "median | ks | fixfinger",
       [](RunConfig& c, const std::string& v) {
         auto& p = c.train.policy.rule;
         if (v == "median") p = LambdaMinRule::kMedian;
         else if (v == "ks") p = LambdaMinRule::kGoodnessOfFit;
         else if (v == "fixfinger") p = LambdaMinRule::kFixFinger;
         else bad_value("policy", v, "unknown policy");
       }},
      {"bins", "100", "fix-finger histogram bins (>= 2)",
       [](RunConfig& c, const std::string& v) {
         long long b = as_int("bins", v);
         if (b < 2) bad_value("bins", v, "must be >= 2");
         c.train.policy.histogram_bins = static_cast<int>(b);
       }},
      // model
      {"hidden", "64,64,64", "hidden dense widths; the output layer width is the class count",
       [](RunConfig& c, const std::string& v) { c.train.model.hidden = as_int_list("hidden", v); }},
      {"activation", "relu", "relu | tanh",
       [](RunConfig& c, const std::string& v) {
         if (v == "relu") c.train.model.activation = Activation::kRelu;
         else if (v == "tanh") c.train.model.activation = Activation::kTanh;
         else bad_value("activation", v, "unknown activation");
       }},
      {"conv_stem", "", "conv blocks OUTxINxKHxKW separated by ',' (stride 1, no padding)",
       [](RunConfig& c, const std::string& v) {
         c.train.model.conv_stem.clear();
         if (v.empty()) return;
         for (const auto& block : split(v, ',')) {
           auto d = as_int_list("conv_stem", block, 'x');
           if (d.size() != 4) bad_value("conv_stem", v, "each block needs OUTxINxKHxKW");
           c.train.model.conv_stem.push_back({d[0], d[1], d[2], d[3]});
         }
       }},
      {"input_shape", "", "C,H,W layout of each input row (required with conv_stem)",
       [](RunConfig& c, const std::string& v) {
         auto d = as_int_list("input_shape", v);
         if (d.size() != 3) bad_value("input_shape", v, "expected C,H,W");
         c.train.model.input_shape = InputShape{d[0], d[1], d[2]};
       }},
      {"init", "he_normal", "he_normal | xavier_uniform",
       [](RunConfig& c, const std::string& v) {
         if (v == "he_normal") c.train.model.init = InitScheme::kHeNormal;
         else if (v == "xavier_uniform") c.train.model.init = InitScheme::kXavierUniform;
         else bad_value("init", v, "unknown init scheme");
       }},
      {"init_seed", "seed", "weight initialization seed",
       [](RunConfig& c, const std::string& v) {
         c.train.model.init_seed = static_cast<std::uint64_t>(as_int("init_seed", v));
         c.init_seed_set = true;
       }},
      // optimizer
      {"momentum", "0.9", "SGD momentum",
       [](RunConfig& c, const std::string& v) { c.train.momentum = as_double("momentum", v); }},
      {"weight_decay", "5e-4", "coupled L2 weight decay",
       [](RunConfig& c, const std::string& v) { c.train.weight_decay = as_double("weight_decay", v); }},
      {"batch_size", "128", "minibatch size",
       [](RunConfig& c, const std::string& v) {
         long long b = as_int("batch_size", v);
         if (b < 1) bad_value("batch_size", v, "must be >= 1");
         c.train.batch_size = static_cast<int>(b);
       }},
      {"lambda_sr", "0", "spectral-norm regularization strength (0 disables)",
       [](RunConfig& c, const std::string& v) { c.train.lambda_sr = as_double("lambda_sr", v); }},
      {"snr_max_iter", "1000", "power-iteration cap for the spectral-norm term",
       [](RunConfig& c, const std::string& v) { c.train.snr_max_iter = static_cast<int>(as_int("snr_max_iter", v)); }},
      // data
      {"dataset", "gaussian", "gaussian | csv",
       [](RunConfig& c, const std::string& v) {
         if (v == "gaussian") c.train.data.kind = DatasetKind::kGaussianMixture;
         else if (v == "csv") c.train.data.kind = DatasetKind::kCsv;
         else bad_value("dataset", v, "unknown dataset");
       }},
      {"classes", "2", "gaussian: number of classes",
       [](RunConfig& c, const std::string& v) { c.train.data.classes = static_cast<int>(as_int("classes", v)); }},
      {"dims", "16", "gaussian: feature dimension",
       [](RunConfig& c, const std::string& v) { c.train.data.dims = static_cast<int>(as_int("dims", v)); }},
      {"samples", "1000", "gaussian: total examples",
       [](RunConfig& c, const std::string& v) { c.train.data.samples = static_cast<int>(as_int("samples", v)); }},
      {"separation", "4", "gaussian: norm of each class mean",
       [](RunConfig& c, const std::string& v) { c.train.data.separation = as_double("separation", v); }},
      {"noise", "1", "gaussian: per-coordinate noise std",
       [](RunConfig& c, const std::string& v) { c.train.data.noise = as_double("noise", v); }},
      {"csv_path", "", "csv: path of a headered CSV file",
       [](RunConfig& c, const std::string& v) { c.train.data.csv_path = v; }},
      {"label_column", "label", "csv: label column name (or 0-based index)",
       [](RunConfig& c, const std::string& v) { c.train.data.label_column = v; }},
      {"train_fraction", "0.8", "fraction of examples in the training split",
       [](RunConfig& c, const std::string& v) { c.train.data.train_fraction = as_double("train_fraction", v); }},
      // run
      {"seed", "0", "data, shuffling and (by default) init seed",
       [](RunConfig& c, const std::string& v) {
         c.train.seed = static_cast<std::uint64_t>(as_int("seed", v));
         if (!c.init_seed_set) c.train.model.init_seed = c.train.seed;
       }},
      {"record_timing", "false", "write wall-clock seconds into telemetry (breaks byte-for-byte reproducibility)",
       [](RunConfig& c, const std::string& v) { c.train.record_timing = as_bool("record_timing", v); }},
      {"threads", "0", "analysis threads (0: TEMPBAL_THREADS or hardware)",
       [](RunConfig& c, const std::string& v) {
         long long t = as_int("threads", v);
         if (t < 0) bad_value("threads", v, "must be >= 0");
         c.train.analysis_threads = static_cast<unsigned>(t);
       }},
  };
  return keys;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  const auto& keys = detail::config_keys();
  // Applied in key-table order afterwards so line order never matters.
  std::vector<std::pair<std::string, std::string>> pairs;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto body = trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key(trim(body.substr(0, eq)));
    std::string value(trim(body.substr(eq + 1)));
    bool known = false;
    for (const auto& k : keys) known = known || key == k.name;
    if (!known) throw UsageError("unknown key " + key);
    if (!seen.insert(key).second) throw UsageError("duplicate key " + key);
    pairs.emplace_back(std::move(key), std::move(value));
  }
  for (const auto& k : keys)
    for (const auto& [key, value] : pairs)
      if (key == k.name) k.apply(cfg, value);
  cfg.train.schedule.validate();
  return cfg;
}

inline RunConfig parse_run_config(const std::string& text_or_path, bool is_path) {
  if (!is_path) {
    std::istringstream in(text_or_path);
    return parse_run_config(in);
  }
  std::ifstream in(text_or_path);
  if (!in) throw UsageError("cannot open config '" + text_or_path + "'");
  return parse_run_config(in);
}

inline std::string describe_config_keys() {
  std::ostringstream out;
  for (const auto& k : detail::config_keys())
    out << k.name << " (default: " << (*k.default_text ? k.default_text : "none") << ")  " << k.doc << '\n';
  return out.str();
}

}  // namespace tempbal

#endif  // TEMPBAL_CONFIG_HPP_
