// qmeas: config-driven runner for measurement-model experiments.
//
//   qmeas <simulate|ch-sweep|reliability|approximant|verify> --config FILE
//         [--out DIR] [--seed U64] [--threads K]
//
// Exit codes: 0 success, 1 check or numerical failure, 2 usage/config error.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "qmeas/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config, "experiment config (JSON, schema qmeas-config/1)")
      ->required();
  sub->add_option("--out", opt.out, "output directory (overrides output.dir)");
  sub->add_option("--seed", opt.seed, "random seed (overrides the config seed)");
  sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::Range(1u, 1024u));
}

qmeas::ExperimentConfig load(const Options& opt) {
  qmeas::ExperimentConfig cfg = qmeas::load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  return cfg;
}

int run_experiment(const std::string& command, const Options& opt) {
  const qmeas::ExperimentConfig cfg = load(opt);
  if (qmeas::to_string(cfg.kind) != command) {
    std::cerr << "qmeas: config describes a '" << qmeas::to_string(cfg.kind)
              << "' experiment, not '" << command << "'\n";
    return kUsage;
  }
  const auto start = std::chrono::steady_clock::now();
  const qmeas::SweepResult result = qmeas::run(cfg, opt.threads);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  qmeas::write_outputs(result, cfg, cfg.output_dir, wall);
  std::cout << "wrote " << result.rows().size() << " rows to " << cfg.output_dir << "\n";
  for (const std::string& e : result.errors) std::cerr << "qmeas: error: " << e << "\n";
  return result.errors.empty() ? kOk : kCheckFailed;
}

int run_verify(const Options& opt) {
  const qmeas::ExperimentConfig cfg = load(opt);
  const qmeas::VerifyReport rep = qmeas::verify(cfg, opt.threads);
  for (const qmeas::CheckResult& c : rep.checks)
    std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << " (" << c.detail << ")\n";
  const bool ok = rep.all_passed();
  std::cout << (ok ? "all checks passed" : "some checks failed") << "\n";
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qmeas: quantum measurement model experiments"};
  app.set_version_flag("--version", std::string(QMEAS_VERSION));
  app.require_subcommand(1);

  Options opt;
  std::string command;
  for (const char* name : {"simulate", "ch-sweep", "reliability", "approximant", "verify"}) {
    CLI::App* sub = app.add_subcommand(name, std::string(name) == std::string("verify")
                                                 ? "run the invariant checklist on a config"
                                                 : std::string("run a ") + name + " experiment");
    add_common(sub, opt);
    sub->callback([&command, name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    return command == "verify" ? run_verify(opt) : run_experiment(command, opt);
  } catch (const qmeas::ConfigError& e) {
    std::cerr << "qmeas: config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "qmeas: " << e.what() << "\n";
    return kCheckFailed;
  }
}
