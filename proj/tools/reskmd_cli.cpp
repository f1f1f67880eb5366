// SPDX-License-Identifier: Apache-2.0
//
// reskmd: simulate tipping ensembles, compute early-warning indicators and
// score them with ROC curves.
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "reskmd/error.hpp"
#include "reskmd/experiment.hpp"

namespace {

struct Options {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::optional<std::string> out;
  std::optional<std::string> input;
  bool verbose = false;
  bool quiet = false;
};

reskmd::ExperimentConfig build_config(const Options& opt) {
  std::vector<std::string> overrides = opt.overrides;
  if (opt.out) overrides.push_back("output.dir=" + *opt.out);
  std::optional<std::filesystem::path> path;
  if (opt.config) path = *opt.config;
  return reskmd::load_config(path, overrides);
}

void print_report(const reskmd::ExperimentReport& report) {
  for (const auto& ind : report.indicators)
    std::cout << ind.indicator << " auc=" << ind.curve.auc << " n_pos=" << ind.n_pos
              << " n_neg=" << ind.n_neg << " missing=" << ind.missing << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman residual early-warning signals for tipping points"};
  app.require_subcommand(1, 1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opt.config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", opt.overrides, "Override a key: section.key=value (repeatable)");
    sub->add_option("-o,--out", opt.out, "Output directory (same as output.dir)");
    sub->add_flag("-v,--verbose", opt.verbose, "Debug logging");
    sub->add_flag("-q,--quiet", opt.quiet, "Only log warnings and errors");
  };

  auto* simulate = app.add_subcommand("simulate", "Simulate the tipping / non-tipping ensemble");
  auto* analyze = app.add_subcommand("analyze", "Compute indicator traces for every run");
  auto* roc = app.add_subcommand("roc", "Score traces and write ROC curves and plots");
  auto* run_all = app.add_subcommand("run-all", "simulate, analyze and roc in sequence");
  auto* show = app.add_subcommand("config", "Print the resolved configuration");
  for (auto* sub : {simulate, analyze, roc, run_all, show}) add_common(sub);
  analyze->add_option("-i,--input", opt.input, "Manifest or single series CSV (time in column 0)")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(opt.verbose ? spdlog::level::debug
                                : opt.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    const auto cfg = build_config(opt);
    if (show->parsed()) {
      std::cout << reskmd::render_config(cfg);
    } else if (simulate->parsed()) {
      const auto manifest = reskmd::cmd_simulate(cfg);
      std::cout << manifest.size() << " runs in " << cfg.ensemble_dir().string() << '\n';
    } else if (analyze->parsed()) {
      std::optional<std::filesystem::path> input;
      if (opt.input) input = *opt.input;
      const auto rows = reskmd::cmd_analyze(cfg, input);
      const auto missing = std::count_if(rows.begin(), rows.end(),
                                         [](const auto& r) { return r.status != "ok"; });
      std::cout << rows.size() << " traces in " << cfg.ews_dir().string() << " (" << missing
                << " missing)\n";
    } else if (roc->parsed()) {
      print_report(reskmd::cmd_roc(cfg));
    } else if (run_all->parsed()) {
      print_report(reskmd::cmd_run_all(cfg));
    }
  } catch (const reskmd::Error& e) {
    std::cerr << "error [" << reskmd::to_string(e.kind()) << "]: " << e.what() << '\n';
    return reskmd::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error [internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
