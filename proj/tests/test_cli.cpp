#include <sys/wait.h>

#include <cstdlib>
#include <set>

#include <json.hpp>

#include "reskmd/experiment.hpp"
#include "test_util.hpp"

using namespace reskmd;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> snapshot_dir(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = testutil::read_text(e.path());
  return files;
}

ExperimentConfig small_config(const fs::path& out, const std::string& system = "saddle_node") {
  return load_config(std::nullopt, {"system.name=" + system, "ensemble.n_tipping=2", "ensemble.n_null=2",
                                    "analysis.indicators=reskmd_exact,variance,lag1_ac",
                                    "analysis.target_windows=6", "analysis.threads=2",
                                    "output.dir=" + out.string()});
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RESKMD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("load_config defaults and overrides") {
  const ExperimentConfig d = load_config(std::nullopt);
  CHECK(d.system == "saddle_node");
  CHECK(d.n_tipping == 20);
  CHECK(d.n_null == 20);
  CHECK(d.ramp.beta0 == 1.0);
  CHECK(d.kernels.size() == 2);
  CHECK(d.indicator_set().size() == 6);
  CHECK(d.analysis.windows.window_fraction == 0.5);

  const ExperimentConfig h = load_config(std::nullopt, {"system.name=hopf", "sim.sigma=0.02"});
  CHECK(h.ramp.beta0 == -1.0);
  CHECK(h.tipping_rate_min > 0.0);
  CHECK(h.sim.x0.size() == 2);
  CHECK(h.sim.x0(0) == 0.1);
  CHECK(h.sim.sigma == 0.02);

  const auto rates = load_config(std::nullopt, {"ensemble.n_tipping=3", "ensemble.n_null=2"}).ensemble_rates();
  REQUIRE(rates.size() == 5);
  CHECK(rates[0] == -0.005);
  CHECK(rates[1] == doctest::Approx(-0.0125));
  CHECK(rates[2] == -0.02);
  CHECK(rates[4] == 0.0);

  CHECK_ERROR_KIND(load_config(std::nullopt, {"sim.bogus=1"}), ErrorKind::Configuration);
  CHECK_ERROR_KIND(load_config(std::nullopt, {"plots.dir=x"}), ErrorKind::Configuration);
  CHECK_ERROR_KIND(load_config(std::nullopt, {"no_equals"}), ErrorKind::Configuration);
  CHECK_ERROR_KIND(load_config(std::nullopt, {"sim.dt=fast"}), ErrorKind::Configuration);
  CHECK_ERROR_KIND(load_config(std::nullopt, {"analysis.indicators="}), ErrorKind::Configuration);
  CHECK_ERROR_KIND(load_config(std::nullopt, {"analysis.indicators=entropy"}), ErrorKind::Configuration);
  CHECK_ERROR_KIND(load_config(std::nullopt, {"analysis.mode_weighting=max"}), ErrorKind::Configuration);
  CHECK_ERROR_KIND(load_config(std::nullopt, {"system.name=lorenz"}), ErrorKind::Configuration);
}

TEST_CASE("config files round trip through render_config") {
  testutil::TempDir dir("config");
  testutil::write_text(dir.path() / "a.ini",
                       "[system]\nname = hopf\nt_end = 150\n\n[analysis]\nkernels = rbf,0.5 laplacian,0.1\n"
                       "mode_weighting = koopman_modes\n");
  const ExperimentConfig a = load_config(dir.path() / "a.ini", {"sim.seed=9"});
  CHECK(a.system == "hopf");
  CHECK(a.ramp.t_end == 150.0);
  CHECK(a.sim.seed == 9);
  REQUIRE(a.kernels.size() == 2);
  CHECK(a.kernels[1].id() == "laplacian,0.1");
  CHECK(a.analysis.weighting == ModeWeighting::KoopmanModes);

  const std::string text = render_config(a);
  testutil::write_text(dir.path() / "b.ini", text);
  CHECK(render_config(load_config(dir.path() / "b.ini")) == text);

  testutil::write_text(dir.path() / "bad.ini", "[system\nname = x\n");
  CHECK_ERROR_KIND(load_config(dir.path() / "bad.ini"), ErrorKind::Configuration);
}

TEST_CASE("simulate writes the default ensemble deterministically") {
  testutil::TempDir dir("simulate");
  const ExperimentConfig cfg = load_config(std::nullopt, {"output.dir=" + dir.path().string()});
  const auto manifest = cmd_simulate(cfg);
  REQUIRE(manifest.size() == 40);
  int csvs = 0;
  for (const auto& e : fs::directory_iterator(cfg.ensemble_dir()))
    if (e.path().extension() == ".csv" && e.path().filename() != "manifest.csv") ++csvs;
  CHECK(csvs == 40);
  CHECK(fs::exists(cfg.ensemble_dir() / "manifest.csv"));
  CHECK(std::count_if(manifest.begin(), manifest.end(), [](const auto& m) { return m.tipping; }) == 20);

  const auto before = snapshot_dir(cfg.ensemble_dir());
  cmd_simulate(cfg);
  CHECK(snapshot_dir(cfg.ensemble_dir()) == before);
}

TEST_CASE("simulate: hopf columns and the deterministic fixed point") {
  testutil::TempDir dir("simulate2");
  const ExperimentConfig hopf = load_config(
      std::nullopt, {"system.name=hopf", "system.x0=0.1,0", "system.beta0=-1", "ensemble.n_tipping=1",
                     "ensemble.n_null=1", "output.dir=" + (dir.path() / "h").string()});
  const auto h = cmd_simulate(hopf);
  REQUIRE(h.size() == 2);
  const RawSeries hs = load_csv(h[0].path, ColumnSpec{0, {}, std::nullopt});
  CHECK(hs.dims() == 2);

  const ExperimentConfig still = load_config(
      std::nullopt, {"sim.sigma=0", "ensemble.n_tipping=0", "ensemble.n_null=1", "system.x0=1.5",
                     "output.dir=" + (dir.path() / "s").string()});
  const auto s = cmd_simulate(still);
  REQUIRE(s.size() == 1);
  CHECK_FALSE(s[0].tipping);
  const RawSeries ss = load_csv(s[0].path, ColumnSpec{0, {}, std::nullopt});
  CHECK(std::abs(ss.values()(ss.length() - 1, 0) - 2.0) < 1e-8);

  CHECK_ERROR_KIND(cmd_simulate(load_config(std::nullopt, {"output.dir=/proc/reskmd_nowhere"})), ErrorKind::Io);
}

TEST_CASE("analyze equals direct library calls and roc reports every indicator") {
  testutil::TempDir dir("pipeline");
  const ExperimentConfig cfg = small_config(dir.path());
  const auto manifest = cmd_simulate(cfg);
  const auto rows = cmd_analyze(cfg);
  REQUIRE(rows.size() == 12);

  const auto indexed = read_ews_index(cfg.ews_dir() / "index.csv");
  REQUIRE(indexed.size() == rows.size());
  const auto inds = cfg.indicator_set();
  for (size_t i = 0; i < indexed.size(); ++i) {
    const auto& row = indexed[i];
    CHECK(row.status == "ok");
    CHECK(row.label == (manifest[i / 3].tipping ? 1 : 0));
    const RawSeries series = load_csv(manifest[i / 3].path, ColumnSpec{0, {}, std::nullopt});
    PipelineOptions opt;
    opt.delay = cfg.analysis.windows.resolve(series.length());
    opt.rank = cfg.analysis.rank;
    const EwsSeries direct = compute_indicator(series, inds[i % 3], opt);
    const EwsSeries via_cli = read_ews_csv(row.path);
    CHECK(via_cli.indicator == direct.indicator);
    CHECK(via_cli.times == direct.times);
    CHECK(via_cli.values == direct.values);
  }

  const ExperimentReport report = cmd_roc(cfg);
  REQUIRE(report.indicators.size() == 3);
  for (const auto& ind : report.indicators) {
    CHECK(ind.n_pos == 2);
    CHECK(ind.n_neg == 2);
    CHECK(fs::exists(cfg.roc_dir() / ("roc_" + file_stem(ind.indicator) + ".csv")));
    CHECK(fs::exists(cfg.plot_dir() / ("roc_" + file_stem(ind.indicator) + ".svg")));
  }
  CHECK(fs::exists(cfg.plot_dir() / "roc_all.svg"));
  CHECK(fs::exists(cfg.plot_dir() / "ews_run_0000__reskmd_exact.svg"));
  CHECK(testutil::read_text(cfg.plot_dir() / "roc_all.svg").rfind("<svg", 0) == 0);
  const auto summary = nlohmann::json::parse(testutil::read_text(cfg.roc_dir() / "summary.json"));
  CHECK(summary.size() == 3);

  const auto first = snapshot_dir(dir.path());
  cmd_run_all(cfg);
  CHECK(snapshot_dir(dir.path()) == first);
}

TEST_CASE("analyze a single unlabeled series") {
  testutil::TempDir dir("single");
  const ExperimentConfig cfg = small_config(dir.path());
  MatrixXd values(300, 1);
  std::mt19937_64 rng(61);
  std::normal_distribution<double> gauss;
  double x = 0.0;
  for (Index t = 0; t < 300; ++t) values(t, 0) = x = 0.8 * x + gauss(rng);
  write_csv(dir.path() / "series.csv", RawSeries(VectorXd::LinSpaced(300, 0.0, 299.0), values));
  const auto rows = cmd_analyze(cfg, dir.path() / "series.csv");
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) CHECK(r.label == -1);
  // Unlabeled runs are dropped before scoring, leaving both classes empty.
  CHECK_ERROR_KIND(cmd_roc(cfg), ErrorKind::Configuration);
  CHECK_ERROR_KIND(cmd_analyze(cfg, dir.path() / "absent.csv"), ErrorKind::Io);
}

TEST_CASE("null-only ensembles cannot be scored") {
  testutil::TempDir dir("nullonly");
  ExperimentConfig cfg = load_config(std::nullopt, {"ensemble.n_tipping=0", "ensemble.n_null=2",
                                                    "analysis.indicators=variance",
                                                    "analysis.target_windows=5",
                                                    "output.dir=" + dir.path().string()});
  cmd_simulate(cfg);
  cmd_analyze(cfg);
  CHECK_ERROR_KIND(cmd_roc(cfg), ErrorKind::Configuration);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ErrorKind::Configuration) == 2);
  CHECK(exit_code_for(ErrorKind::Io) == 3);
  CHECK(exit_code_for(ErrorKind::Parse) == 4);
  CHECK(exit_code_for(ErrorKind::InsufficientData) == 5);
  std::set<int> codes;
  for (ErrorKind k : {ErrorKind::Configuration, ErrorKind::Io, ErrorKind::Parse, ErrorKind::InsufficientData,
                      ErrorKind::Divergence})
    codes.insert(exit_code_for(k));
  CHECK(codes.count(0) == 0);

  testutil::TempDir dir("exit");
  CHECK(run_cli("config") == 0);
  CHECK(run_cli("config -s sim.bogus=1") == 2);
  CHECK(run_cli("roc -q -o " + dir.path().string()) == 3);
  CHECK(run_cli("frobnicate") != 0);
}

}
