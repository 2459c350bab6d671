// tempbal: spectral analysis, layer-wise schedule training runs and
// random-matrix checks from the command line.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tempbal/commands.hpp"

namespace {

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> out;
  for (double v : tempbal::parse_grid(text, "--q")) {
    if (v != static_cast<int>(v)) throw tempbal::UsageError("--q: sizes must be integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise learning-rate scheduling from weight-matrix spectra"};
  app.require_subcommand(1);

  std::string snapshot_path, policy = "median";
  int bins = 100;
  std::string analyze_out;
  auto* analyze = app.add_subcommand("analyze", "Per-layer ESD metrics of a .wsnp snapshot");
  analyze->add_option("snapshot", snapshot_path, "Snapshot file (.wsnp)")->required();
  analyze->add_option("--policy", policy, "lambda_min policy: median | ks | fixfinger");
  analyze->add_option("--bins", bins, "Histogram bins (fix-finger and ESD histograms)");
  analyze->add_option("--out-dir", analyze_out, "Also write metrics.csv and per-layer ESD histograms here");

  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool list_keys = false;
  auto* train = app.add_subcommand("train", "Train a desk-scale model under a layer-wise schedule");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out-dir", out_dir, "Directory for telemetry.csv and final.wsnp");
  train->add_flag("--list-keys", list_keys, "Print every config key with its default and exit");

  std::string q_text, s_text, rmt_out;
  std::uint64_t rmt_seed = 0;
  auto* rmt = app.add_subcommand("rmt", "Check the decay-exponent / ESD-exponent relation on synthetic matrices");
  rmt->add_option("--q", q_text, "Matrix sizes, e.g. 64,256,1024")->required();
  rmt->add_option("--s", s_text, "Decay exponents, start:stop:step or a comma list")->required();
  rmt->add_option("--out", rmt_out, "Write the CSV table here instead of stdout");
  rmt->add_option("--seed", rmt_seed, "Seed for the random orthogonal factors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(tempbal::ExitCode::kUsage);
  }

  try {
    if (*analyze) {
      tempbal::AnalyzeOptions opt{snapshot_path, tempbal::parse_policy(policy, bins), std::nullopt};
      if (!analyze_out.empty()) opt.out_dir = analyze_out;
      tempbal::cmd_analyze(opt, std::cout);
    } else if (*train) {
      if (list_keys) {
        std::cout << tempbal::describe_config_keys();
        return 0;
      }
      if (config_path.empty()) throw tempbal::UsageError("train: --config is required");
      tempbal::cmd_train({config_path, seed, out_dir}, std::cout);
    } else if (*rmt) {
      tempbal::RmtOptions opt;
      opt.sizes = parse_sizes(q_text);
      opt.s_grid = tempbal::parse_grid(s_text, "--s");
      if (!rmt_out.empty()) opt.out_path = rmt_out;
      opt.seed = rmt_seed;
      tempbal::cmd_rmt(opt, std::cout, std::cerr);
    }
  } catch (const tempbal::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(tempbal::ExitCode::kNumerical);
  }
  return 0;
}
