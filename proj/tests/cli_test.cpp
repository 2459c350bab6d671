#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tempbal/commands.hpp"

using namespace tempbal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tempbal_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TEMPBAL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallConfig =
    "# small run\n"
    "epochs = 3\n"
    "hidden = 10,10,10\n"
    "dims = 6\n"
    "samples = 120\n"
    "batch_size = 24\n"
    "seed = 4\n"
    "threads = 1\n";

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

}  // namespace

TEST(Config, DefaultsMatchDocumentation) {
  const RunConfig cfg = parse_run_config("", false);
  EXPECT_EQ(cfg.train.schedule.eta0, 0.1);
  EXPECT_EQ(cfg.train.schedule.total_epochs, 200);
  EXPECT_EQ(cfg.train.schedule.s1, 0.5);
  EXPECT_EQ(cfg.train.schedule.s2, 1.5);
  EXPECT_EQ(cfg.train.schedule.assignment, Assignment::kTempBalanceLinear);
  EXPECT_EQ(cfg.train.policy.rule, LambdaMinRule::kMedian);
  EXPECT_EQ(cfg.train.model.hidden, (std::vector<int>{64, 64, 64}));
  EXPECT_EQ(cfg.train.batch_size, 128);
  EXPECT_FALSE(cfg.train.record_timing);
  const std::string doc = describe_config_keys();
  for (const char* key : {"eta0", "assignment", "policy", "hidden", "lambda_sr", "dataset", "seed"})
    EXPECT_NE(doc.find(std::string(key) + " (default"), std::string::npos) << key;
}

TEST(Config, ParsesValues) {
  const RunConfig cfg = parse_run_config(
      "assignment = step\nmetric=spectral_norm\nstart_epoch=3\nupdate_interval=50\npolicy=fixfinger\nbins=40\n"
      "conv_stem=4x1x3x3\ninput_shape=1,6,6\ndataset=gaussian\nexclude_first_last=false\nrun_epochs=7\n",
      false);
  EXPECT_EQ(cfg.train.schedule.assignment, Assignment::kStep);
  EXPECT_EQ(cfg.train.schedule.metric, ScheduleMetric::kSpectralNorm);
  EXPECT_EQ(cfg.train.schedule.start_epoch, 3);
  EXPECT_EQ(cfg.train.schedule.update_interval_iters, 50);
  EXPECT_EQ(cfg.train.policy.rule, LambdaMinRule::kFixFinger);
  EXPECT_EQ(cfg.train.policy.histogram_bins, 40);
  ASSERT_EQ(cfg.train.model.conv_stem.size(), 1u);
  EXPECT_EQ(cfg.train.model.conv_stem[0].kernel_h, 3);
  EXPECT_EQ(cfg.train.model.input_shape->height, 6);
  EXPECT_FALSE(cfg.train.schedule.exclude_first_last);
  EXPECT_EQ(cfg.train.run_epochs(), 7);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_run_config("foo=1\n", false);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_EQ(std::string(e.what()), "unknown key foo");
  }
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_run_config("eta0=0.1\neta0=0.2\n", false), UsageError);
  EXPECT_THROW(parse_run_config("eta0\n", false), UsageError);
  EXPECT_THROW(parse_run_config("eta0=fast\n", false), UsageError);
  EXPECT_THROW(parse_run_config("assignment=magic\n", false), UsageError);
  EXPECT_THROW(parse_run_config("s1=2\ns2=1\n", false), UsageError);
  EXPECT_THROW(parse_run_config("/nonexistent/config.txt", true), UsageError);
}

TEST(Config, SeedOverrideReseedsInitUnlessPinned) {
  RunConfig a = parse_run_config("seed=1\n", false);
  a.override_seed(9);
  EXPECT_EQ(a.train.seed, 9u);
  EXPECT_EQ(a.train.model.init_seed, 9u);
  RunConfig b = parse_run_config("seed=1\ninit_seed=3\n", false);
  b.override_seed(9);
  EXPECT_EQ(b.train.model.init_seed, 3u);
}

TEST(ParseGrid, RangesAndLists) {
  EXPECT_EQ(parse_grid("0.5:1.5:0.25", "--s"), (std::vector<double>{0.5, 0.75, 1.0, 1.25, 1.5}));
  EXPECT_EQ(parse_grid("1,2.5", "--s"), (std::vector<double>{1.0, 2.5}));
  EXPECT_THROW(parse_grid("", "--s"), UsageError);
  EXPECT_THROW(parse_grid("1:0:1", "--s"), UsageError);
  EXPECT_THROW(parse_grid("1:2", "--s"), UsageError);
  EXPECT_THROW(parse_grid("a,b", "--s"), UsageError);
}

TEST(CmdAnalyze, SyntheticLayerAlphaNearTwo) {
  const fs::path dir = scratch("analyze_pl");
  const OrientedMatrix m = synth_pl_matrix({64, 1.0, 1.0, 3});
  LayerTensor l{"pl", {64, 64}, {}};
  for (Eigen::Index r = 0; r < 64; ++r)
    for (Eigen::Index c = 0; c < 64; ++c) l.values.push_back(m.values(r, c));
  save_snapshot({0, {l}}, (dir / "pl.wsnp").string());

  std::ostringstream out;
  cmd_analyze({(dir / "pl.wsnp").string(), LambdaMinPolicy::median(), (dir / "out").string()}, out);
  std::istringstream csv(out.str());
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, kAnalyzeHeader);
  const auto fields = split(row, ',');
  ASSERT_EQ(fields.size(), 9u);
  double alpha = 0;
  ASSERT_TRUE(parse_double(fields[5], alpha));
  EXPECT_LE(std::abs(alpha - 2.0) / 2.0, kSAlphaTolerance);
  EXPECT_EQ(fields[8], "ok");
  EXPECT_EQ(slurp(dir / "out" / "metrics.csv"), out.str());
  EXPECT_TRUE(fs::exists(dir / "out" / histogram_file_name(0, "pl")));
}

TEST(CmdAnalyze, DegenerateLayerIsReportedNotFatal) {
  const fs::path dir = scratch("analyze_degenerate");
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  LayerTensor ok{"ok", {8, 12}, {}};
  for (int i = 0; i < 96; ++i) ok.values.push_back(g(rng));
  save_snapshot({0, {ok, LayerTensor{"zero", {4, 4}, std::vector<double>(16, 0.0)}}},
                (dir / "s.wsnp").string());
  std::ostringstream out;
  cmd_analyze({(dir / "s.wsnp").string(), LambdaMinPolicy::goodness_of_fit(), std::nullopt}, out);
  EXPECT_NE(out.str().find("zero,4,4,,,,,,degenerate:"), std::string::npos) << out.str();
  EXPECT_NE(out.str().find(",ok\n"), std::string::npos);
}

TEST(CmdAnalyze, DeterministicBytes) {
  const fs::path dir = scratch("analyze_det");
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  LayerTensor a{"a", {16, 40}, {}}, b{"b", {3, 2, 3, 3}, {}};
  for (int i = 0; i < 640; ++i) a.values.push_back(g(rng));
  for (int i = 0; i < 54; ++i) b.values.push_back(g(rng));
  save_snapshot({0, {a, b}}, (dir / "s.wsnp").string());
  for (auto policy : {LambdaMinPolicy::median(), LambdaMinPolicy::goodness_of_fit(), LambdaMinPolicy::fix_finger(20)}) {
    std::ostringstream x, y;
    cmd_analyze({(dir / "s.wsnp").string(), policy, (dir / "o1").string()}, x);
    cmd_analyze({(dir / "s.wsnp").string(), policy, (dir / "o2").string()}, y);
    EXPECT_EQ(x.str(), y.str());
    for (const auto& e : fs::directory_iterator(dir / "o1"))
      EXPECT_EQ(slurp(e.path()), slurp(dir / "o2" / e.path().filename())) << e.path();
  }
}

TEST(CmdTrain, WritesArtifactsDeterministically) {
  const fs::path dir = scratch("train_det");
  const fs::path cfg = write_file(dir, "run.cfg", kSmallConfig);
  std::ostringstream log1, log2;
  cmd_train({cfg.string(), std::nullopt, (dir / "r1").string()}, log1);
  cmd_train({cfg.string(), std::nullopt, (dir / "r2").string()}, log2);
  EXPECT_EQ(slurp(dir / "r1" / "telemetry.csv"), slurp(dir / "r2" / "telemetry.csv"));
  EXPECT_EQ(slurp(dir / "r1" / "final.wsnp"), slurp(dir / "r2" / "final.wsnp"));
  EXPECT_NE(log1.str().find("final_eval_acc="), std::string::npos);
  EXPECT_NE(log1.str().find("analysis_overhead_percent="), std::string::npos);
  EXPECT_NO_THROW(load_snapshot((dir / "r1" / "final.wsnp").string()));

  std::ostringstream log3;
  cmd_train({cfg.string(), 99, (dir / "r3").string()}, log3);
  EXPECT_NE(slurp(dir / "r1" / "telemetry.csv"), slurp(dir / "r3" / "telemetry.csv"));
}

TEST(CmdTrain, GlobalOnlyLrConstantPerEpoch) {
  const fs::path dir = scratch("train_global");
  const fs::path cfg = write_file(dir, "run.cfg", std::string(kSmallConfig) + "assignment=global_only\n");
  std::ostringstream log;
  cmd_train({cfg.string(), std::nullopt, dir.string()}, log);
  std::istringstream csv(slurp(dir / "telemetry.csv"));
  std::string line;
  std::getline(csv, line);
  std::map<std::string, std::set<std::string>> lr_by_epoch;
  while (std::getline(csv, line)) {
    const auto f = split(line, ',');
    if (f[1] != "_epoch_") lr_by_epoch[f[0]].insert(f[4]);
  }
  EXPECT_EQ(lr_by_epoch.size(), 3u);
  for (const auto& [epoch, lrs] : lr_by_epoch) EXPECT_EQ(lrs.size(), 1u) << epoch;
}

TEST(CmdTrain, TempBalanceLrWithinRange) {
  const fs::path dir = scratch("train_tb");
  const fs::path cfg = write_file(dir, "run.cfg", std::string(kSmallConfig) + "assignment=tempbalance\n");
  std::ostringstream log;
  cmd_train({cfg.string(), std::nullopt, dir.string()}, log);
  std::istringstream csv(slurp(dir / "telemetry.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    const auto f = split(line, ',');
    if (f[1] == "_epoch_") continue;
    double lr = 0;
    long long epoch = 0;
    ASSERT_TRUE(parse_double(f[4], lr));
    ASSERT_TRUE(parse_int(f[0], epoch));
    const double eta = cal_rate(0.1, static_cast<double>(epoch), 3);
    EXPECT_GE(lr, 0.5 * eta - 1e-15);
    EXPECT_LE(lr, 1.5 * eta + 1e-15);
    ++rows;
  }
  EXPECT_EQ(rows, 12);
}

TEST(CmdRmt, SingleCellAndSizeComparison) {
  std::ostringstream out, log;
  const RmtReport r = cmd_rmt({{1024}, {1.0}, std::nullopt, 0}, out, log);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_LE(r.rows[0].rel_err, kSAlphaTolerance);
  EXPECT_TRUE(r.all_within_tolerance);

  std::ostringstream out2, log2;
  const auto grid = parse_grid("0.5:3.0:0.5", "--s");
  const auto small = cmd_rmt({{16}, grid, std::nullopt, 0}, out2, log2);
  const auto large = cmd_rmt({{256}, grid, std::nullopt, 0}, out2, log2);
  EXPECT_LE(mean_rel_err(large.rows), mean_rel_err(small.rows));
}

TEST(CmdRmt, ArgumentValidation) {
  std::ostringstream out, log;
  EXPECT_THROW(cmd_rmt({{64}, {}, std::nullopt, 0}, out, log), UsageError);
  EXPECT_THROW(cmd_rmt({{}, {1.0}, std::nullopt, 0}, out, log), UsageError);
  EXPECT_THROW(cmd_rmt({{4}, {1.0}, std::nullopt, 0}, out, log), UsageError);
  EXPECT_THROW(cmd_rmt({{64}, {-1.0}, std::nullopt, 0}, out, log), UsageError);
}

TEST(Executable, ExitCodes) {
  const fs::path dir = scratch("exit_codes");
  save_snapshot({0, {LayerTensor{"w", {6, 9}, std::vector<double>(54, 0.5)}}}, (dir / "ok.wsnp").string());
  write_file(dir, "garbage.wsnp", "not a snapshot");
  write_file(dir, "empty.wsnp", std::string("WSNP\x01\0\0\0\0\0\0\0\0\0\0\0", 16));
  write_file(dir, "unknown.cfg", "foo=1\n");
  const fs::path cfg = write_file(dir, "ok.cfg", kSmallConfig);
  const std::string d = dir.string();

  EXPECT_EQ(run_cli("analyze " + d + "/ok.wsnp"), 0);
  EXPECT_EQ(run_cli("analyze " + d + "/ok.wsnp --policy bogus"), 1);
  EXPECT_EQ(run_cli("analyze " + d + "/ok.wsnp --bins 1"), 1);
  EXPECT_EQ(run_cli("analyze"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("analyze " + d + "/garbage.wsnp"), 2);
  EXPECT_EQ(run_cli("analyze " + d + "/empty.wsnp"), 2);
  EXPECT_EQ(run_cli("analyze " + d + "/missing.wsnp"), 2);
  EXPECT_EQ(run_cli("train --config " + d + "/unknown.cfg"), 1);
  EXPECT_EQ(run_cli("train --config " + d + "/nope.cfg"), 1);
  EXPECT_EQ(run_cli("train --list-keys"), 0);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --out-dir " + d + "/run"), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "telemetry.csv"));
  EXPECT_EQ(run_cli("rmt --q 64 --s ''"), 1);
  EXPECT_EQ(run_cli("rmt --q 64 --s 1.0 --out " + d + "/rmt.csv"), 0);
  EXPECT_EQ(run_cli("rmt --q 8 --s 1.0"), 0);  // ungated size

  const fs::path diverge = write_file(dir, "diverge.cfg", std::string(kSmallConfig) + "eta0=1e8\nseparation=100\n");
  EXPECT_EQ(run_cli("train --config " + diverge.string() + " --out-dir " + d + "/div"), 3);
}
