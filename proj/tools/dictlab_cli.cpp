// Command-line driver: dataset generation, theorem auditing, recovery
// probing, and dictionary-learning experiments producing CSV sweeps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dictlab/dictlab.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitInvariant = 3;

struct CommonFlags {
  std::string config_path;
  std::string out_path = "out.csv";
  std::uint64_t seed = 1;
  int threads = 0;
  std::string constants_path;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--out", flags.out_path, "output path");
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--threads", flags.threads, "worker threads (0 = hardware)");
  cmd->add_option("--constants", flags.constants_path,
                  "JSON overrides for the theorem constants c0..c3, c_lambda");
}

dictlab::ExperimentConfig load_config(const CommonFlags& flags,
                                      dictlab::ExperimentKind fallback_kind) {
  dictlab::ExperimentConfig config;
  config.experiment = fallback_kind;
  if (!flags.config_path.empty()) {
    std::ifstream in(flags.config_path);
    if (!in) throw dictlab::invalid_argument("cannot open config " + flags.config_path);
    nlohmann::json j;
    in >> j;
    config = dictlab::ExperimentConfig::from_json(j);
  }
  config.seed = flags.seed;
  return config;
}

dictlab::TheoremConstants load_constants(const CommonFlags& flags) {
  if (flags.constants_path.empty()) return {};
  std::ifstream in(flags.constants_path);
  if (!in) throw dictlab::invalid_argument("cannot open constants " + flags.constants_path);
  nlohmann::json j;
  in >> j;
  return dictlab::TheoremConstants::from_json(j);
}

int guarded(const CommonFlags& flags, int (*body)(const CommonFlags&)) {
  dictlab::thread_count() = flags.threads;
  try {
    return body(flags);
  } catch (const dictlab::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_gen(const CommonFlags& flags) {
  const auto config = load_config(flags, dictlab::ExperimentKind::ErrVsN);
  const dictlab::Dictionary D0 = config.dictionary.build();
  dictlab::CoefficientModel coeff = config.coefficients;
  coeff.k = config.k;
  const auto batch = dictlab::generate_dataset(D0, coeff, dictlab::NoiseModel{config.sigma},
                                               config.n, config.seed);
  dictlab::save_batch(batch, flags.out_path);
  if (batch.size() <= 10000) dictlab::export_batch_csv(batch, flags.out_path + ".csv");
  dictlab::save_dictionary_csv(D0, flags.out_path + ".dict.csv");
  std::cout << "wrote " << batch.size() << " signals (m=" << D0.signal_dim()
            << ", p=" << D0.atom_count() << ", k=" << coeff.k << ", sigma=" << config.sigma
            << ") to " << flags.out_path << "\n";
  return kExitOk;
}

int cmd_experiment_errvsn(const CommonFlags& flags) {
  auto config = load_config(flags, dictlab::ExperimentKind::ErrVsN);
  if (config.sweep.empty()) config.sweep = {1000, 2000, 4000, 8000, 16000};
  if (flags.config_path.empty()) {
    config.experiment = dictlab::ExperimentKind::ErrVsN;
    config.dictionary.type = dictlab::DictionarySpec::Type::HadamardDirac;
  }
  return dictlab::run(config, flags.out_path);
}

int cmd_experiment_errvssigma(const CommonFlags& flags) {
  auto config = load_config(flags, dictlab::ExperimentKind::ErrVsSigma);
  if (config.sweep.empty()) config.sweep = {1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  if (flags.config_path.empty()) config.experiment = dictlab::ExperimentKind::ErrVsSigma;
  return dictlab::run(config, flags.out_path);
}

int cmd_learn(const CommonFlags& flags) {
  auto config = load_config(flags, dictlab::ExperimentKind::ErrVsN);
  const dictlab::Dictionary D0 = config.dictionary.build();
  dictlab::CoefficientModel coeff = config.coefficients;
  coeff.k = config.k;
  const auto batch = dictlab::generate_dataset(D0, coeff, dictlab::NoiseModel{config.sigma},
                                               config.n, config.seed);
  dictlab::LearnConfig learner = config.learner;
  learner.seed = config.seed;
  if (config.lambda_policy.tuned) {
    const auto aux = dictlab::generate_dataset(D0, coeff, dictlab::NoiseModel{config.sigma}, 512,
                                               config.seed + 1);
    learner.lambda =
        dictlab::tune_lambda(aux, D0.atoms(), dictlab::log_grid(1e-4, 10.0, 20), coeff.k).lambda;
  } else {
    learner.lambda = config.lambda_policy.fixed_value;
  }
  const auto fit = dictlab::learn_dictionary(batch, D0.atom_count(), learner);
  const auto match = dictlab::match_atoms(fit.dictionary, D0.atoms());
  dictlab::save_dictionary_csv(dictlab::Dictionary(fit.dictionary), flags.out_path);
  std::cout << "lambda=" << learner.lambda << " matched_error=" << match.matched_error
            << " F_n=" << fit.epoch_objectives.back() << " epochs=" << config.learner.epochs
            << "\n";
  return kExitOk;
}

int cmd_probe(const CommonFlags& flags) {
  auto config = load_config(flags, dictlab::ExperimentKind::Probe);
  if (flags.config_path.empty()) config.experiment = dictlab::ExperimentKind::Probe;
  const int status = dictlab::run(config, flags.out_path);
  if (status == kExitOk) std::cout << "probe records written to " << flags.out_path << "\n";
  return status;
}

int cmd_coincide(const CommonFlags& flags) {
  auto config = load_config(flags, dictlab::ExperimentKind::Coincide);
  if (flags.config_path.empty()) config.experiment = dictlab::ExperimentKind::Coincide;
  return dictlab::run(config, flags.out_path);
}

int cmd_theory_check(const CommonFlags& flags) {
  const auto checks = dictlab::run_theory_checks(flags.seed);
  bool all_pass = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "[pass] " : (c.informational ? "[info] " : "[FAIL] ")) << c.name
              << ": " << c.detail << "\n";
    if (!c.pass && !c.informational) all_pass = false;
  }
  if (!flags.out_path.empty() && flags.out_path != "out.csv") {
    std::ofstream out(flags.out_path);
    out << "check,pass,detail\n";
    for (const auto& c : checks)
      out << c.name << "," << (c.pass ? 1 : 0) << ",\"" << c.detail << "\"\n";
  }
  return all_pass ? kExitOk : kExitInvariant;
}

int cmd_bound(const CommonFlags& flags) {
  const auto config = load_config(flags, dictlab::ExperimentKind::Probe);
  const auto constants = load_constants(flags);
  const dictlab::Dictionary D0 = config.dictionary.build();
  dictlab::CoefficientModel coeff = config.coefficients;
  coeff.k = config.k;
  const double lambda = config.lambda_policy.tuned ? (2.0 / 9.0) * coeff.alpha_lo
                                                   : config.lambda_policy.fixed_value;
  const auto report = dictlab::bound_report(D0, config.k, dictlab::ModelScalars::from(coeff),
                                            config.sigma, lambda, config.t, config.n, constants);
  const std::string text = report.to_json().dump(2);
  if (!flags.out_path.empty() && flags.out_path != "out.csv") {
    std::ofstream out(flags.out_path);
    out << text << "\n";
  }
  std::cout << text << "\n";
  return kExitOk;
}

int cmd_slope(const std::string& summary_path, const std::string& init) {
  const auto fit = dictlab::fit_slope(summary_path, init);
  std::cout << "slope=" << fit.slope << " std_error=" << fit.std_error
            << " points=" << fit.points << " init=" << init << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse dictionary identifiability lab"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string slope_summary, slope_init = "oracle";

  auto* gen = app.add_subcommand("gen", "generate a synthetic signal batch");
  add_common(gen, flags);
  auto* learn = app.add_subcommand("learn", "fit a dictionary to a generated batch");
  add_common(learn, flags);
  auto* probe = app.add_subcommand("probe", "randomized local-minimum probing");
  add_common(probe, flags);
  auto* coincide = app.add_subcommand("coincide", "exact-recovery frequency vs. its floor");
  add_common(coincide, flags);
  auto* expn = app.add_subcommand("exp-n", "normalized error versus sample count");
  add_common(expn, flags);
  auto* expsigma = app.add_subcommand("exp-sigma", "normalized error versus noise level");
  add_common(expsigma, flags);
  auto* theory = app.add_subcommand("theory-check", "run the theory invariant suites");
  add_common(theory, flags);
  auto* bound = app.add_subcommand("bound", "evaluate the theorem-side bound report");
  add_common(bound, flags);
  auto* slope = app.add_subcommand("slope", "log-log slope of a summary CSV");
  slope->add_option("summary", slope_summary, "summary CSV path")->required();
  slope->add_option("--init", slope_init, "curve to fit (oracle|random)");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) return guarded(flags, cmd_gen);
  if (learn->parsed()) return guarded(flags, cmd_learn);
  if (probe->parsed()) return guarded(flags, cmd_probe);
  if (coincide->parsed()) return guarded(flags, cmd_coincide);
  if (expn->parsed()) return guarded(flags, cmd_experiment_errvsn);
  if (expsigma->parsed()) return guarded(flags, cmd_experiment_errvssigma);
  if (theory->parsed()) return guarded(flags, cmd_theory_check);
  if (bound->parsed()) return guarded(flags, cmd_bound);
  if (slope->parsed()) {
    try {
      return cmd_slope(slope_summary, slope_init);
    } catch (const dictlab::invalid_argument& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const std::exception& e) {
      std::cerr << "runtime error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitConfig;
}
