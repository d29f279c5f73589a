#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dictlab/dictionary.hpp"
#include "dictlab/errors.hpp"
#include "dictlab/learn.hpp"
#include "dictlab/model.hpp"
#include "dictlab/theory.hpp"
#include "dictlab/theory_check.hpp"

namespace dictlab {

inline constexpr const char* kRecordCsvHeader =
    "experiment,point,trial,init,lambda,normalized_error,seed,wall_ms";
inline constexpr const char* kSummaryCsvHeader = "experiment,point,init,median,count";

enum class ExperimentKind { ErrVsN, ErrVsSigma, Probe, Coincide, TheoryCheck };

inline std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::ErrVsN: return "ErrVsN";
    case ExperimentKind::ErrVsSigma: return "ErrVsSigma";
    case ExperimentKind::Probe: return "Probe";
    case ExperimentKind::Coincide: return "Coincide";
    case ExperimentKind::TheoryCheck: return "TheoryCheck";
  }
  return "unknown";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "ErrVsN") return ExperimentKind::ErrVsN;
  if (s == "ErrVsSigma") return ExperimentKind::ErrVsSigma;
  if (s == "Probe") return ExperimentKind::Probe;
  if (s == "Coincide") return ExperimentKind::Coincide;
  if (s == "TheoryCheck") return ExperimentKind::TheoryCheck;
  throw invalid_argument("unknown experiment kind: " + s);
}

struct DictionarySpec {
  enum class Type { Hadamard, HadamardDirac, FromFile };
  Type type = Type::Hadamard;
  int m = 16;
  std::string path;

  Dictionary build() const {
    switch (type) {
      case Type::Hadamard: return hadamard(m);
      case Type::HadamardDirac: return hadamard_dirac(m);
      case Type::FromFile: return load_dictionary_csv(path);
    }
    throw invalid_argument("DictionarySpec: unknown type");
  }
};

struct LambdaPolicy {
  bool tuned = true;          ///< tune on an auxiliary batch to the oracle sparsity
  double fixed_value = 0.04;  ///< used when tuned == false
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::ErrVsN;
  DictionarySpec dictionary;
  std::vector<double> sweep;  ///< n values (ErrVsN) or sigma values (ErrVsSigma)
  int trials = 5;
  std::uint64_t seed = 0;
  LambdaPolicy lambda_policy;
  int k = 2;
  double sigma = 1e-3;  ///< fixed noise level (ErrVsN, Probe)
  long n = 10000;       ///< fixed sample count (ErrVsSigma, Probe, Coincide)
  CoefficientModel coefficients{2, 0.1, 10.0};
  // Probe / Coincide specifics.
  double t = 0.1;
  double t_prime = 0.0;
  int n_probe = 256;
  int coincide_trials = 2000;
  LearnConfig learner;

  void validate() const {
    if (experiment == ExperimentKind::ErrVsN || experiment == ExperimentKind::ErrVsSigma) {
      if (sweep.empty()) throw invalid_argument("ExperimentConfig: sweep is empty");
      if (!std::is_sorted(sweep.begin(), sweep.end()) ||
          std::adjacent_find(sweep.begin(), sweep.end()) != sweep.end())
        throw invalid_argument("ExperimentConfig: sweep must be strictly increasing");
    }
    if (trials < 1) throw invalid_argument("ExperimentConfig: trials must be >= 1");
    coefficients.validate();
  }

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.experiment = experiment_kind_from_string(j.at("experiment").get<std::string>());
  if (j.contains("dictionary")) {
    const auto& d = j.at("dictionary");
    const auto type = d.at("type").get<std::string>();
    if (type == "Hadamard") c.dictionary.type = DictionarySpec::Type::Hadamard;
    else if (type == "HadamardDirac") c.dictionary.type = DictionarySpec::Type::HadamardDirac;
    else if (type == "FromFile") c.dictionary.type = DictionarySpec::Type::FromFile;
    else throw invalid_argument("unknown dictionary type: " + type);
    if (d.contains("m")) c.dictionary.m = d.at("m").get<int>();
    if (d.contains("path")) c.dictionary.path = d.at("path").get<std::string>();
  }
  if (j.contains("sweep")) c.sweep = j.at("sweep").get<std::vector<double>>();
  if (j.contains("trials")) c.trials = j.at("trials").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("lambda")) {
    const auto& l = j.at("lambda");
    const auto policy = l.at("policy").get<std::string>();
    if (policy == "TunedToK") {
      c.lambda_policy.tuned = true;
    } else if (policy == "Fixed") {
      c.lambda_policy.tuned = false;
      c.lambda_policy.fixed_value = l.at("value").get<double>();
    } else {
      throw invalid_argument("unknown lambda policy: " + policy);
    }
  }
  if (j.contains("k")) c.k = j.at("k").get<int>();
  if (j.contains("sigma")) c.sigma = j.at("sigma").get<double>();
  if (j.contains("n")) c.n = j.at("n").get<long>();
  if (j.contains("alpha_lo")) c.coefficients.alpha_lo = j.at("alpha_lo").get<double>();
  if (j.contains("alpha_hi")) c.coefficients.alpha_hi = j.at("alpha_hi").get<double>();
  if (j.contains("t")) c.t = j.at("t").get<double>();
  if (j.contains("t_prime")) c.t_prime = j.at("t_prime").get<double>();
  if (j.contains("n_probe")) c.n_probe = j.at("n_probe").get<int>();
  if (j.contains("coincide_trials")) c.coincide_trials = j.at("coincide_trials").get<int>();
  if (j.contains("batch_size")) c.learner.batch_size = j.at("batch_size").get<int>();
  if (j.contains("epochs")) c.learner.epochs = j.at("epochs").get<int>();
  c.coefficients.k = c.k;
  return c;
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json d;
  switch (dictionary.type) {
    case DictionarySpec::Type::Hadamard: d = {{"type", "Hadamard"}, {"m", dictionary.m}}; break;
    case DictionarySpec::Type::HadamardDirac:
      d = {{"type", "HadamardDirac"}, {"m", dictionary.m}};
      break;
    case DictionarySpec::Type::FromFile:
      d = {{"type", "FromFile"}, {"path", dictionary.path}};
      break;
  }
  nlohmann::json l = lambda_policy.tuned
                         ? nlohmann::json{{"policy", "TunedToK"}}
                         : nlohmann::json{{"policy", "Fixed"}, {"value", lambda_policy.fixed_value}};
  return nlohmann::json{{"experiment", to_string(experiment)},
                        {"dictionary", d},
                        {"sweep", sweep},
                        {"trials", trials},
                        {"seed", seed},
                        {"lambda", l},
                        {"k", k},
                        {"sigma", sigma},
                        {"n", n},
                        {"alpha_lo", coefficients.alpha_lo},
                        {"alpha_hi", coefficients.alpha_hi},
                        {"t", t},
                        {"t_prime", t_prime},
                        {"n_probe", n_probe},
                        {"coincide_trials", coincide_trials},
                        {"batch_size", learner.batch_size},
                        {"epochs", learner.epochs}};
}

struct ResultRecord {
  std::string experiment;
  double point = 0.0;
  int trial = 0;
  std::string init;
  double lambda = 0.0;
  double normalized_error = 0.0;
  std::uint64_t seed = 0;
  long wall_ms = 0;
};

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

inline double median_of(std::vector<double> values) {
  if (values.empty()) throw invalid_argument("median_of: empty");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace detail

/// Writes records (already in canonical order) plus the per-point median
/// summary `<out_path>.summary.csv`.
inline void write_records(const std::vector<ResultRecord>& records, const std::string& out_path) {
  std::ofstream out(out_path);
  if (!out) throw invalid_argument("write_records: cannot open " + out_path);
  out << kRecordCsvHeader << "\n";
  for (const auto& r : records) {
    out << r.experiment << "," << detail::format_double(r.point) << "," << r.trial << ","
        << r.init << "," << detail::format_double(r.lambda) << ","
        << detail::format_double(r.normalized_error) << "," << r.seed << "," << r.wall_ms
        << "\n";
  }
  out.flush();

  std::map<std::pair<double, std::string>, std::vector<double>> groups;
  for (const auto& r : records) groups[{r.point, r.init}].push_back(r.normalized_error);
  std::ofstream summary(out_path + ".summary.csv");
  if (!summary) throw invalid_argument("write_records: cannot open summary for " + out_path);
  summary << kSummaryCsvHeader << "\n";
  const std::string experiment = records.empty() ? "" : records.front().experiment;
  for (const auto& [key, values] : groups) {
    summary << experiment << "," << detail::format_double(key.first) << "," << key.second << ","
            << detail::format_double(detail::median_of(values)) << "," << values.size() << "\n";
  }
}

/// One learning run: generate data, pick lambda, fit from the given init,
/// report the equivalence-class-aware normalized error.
inline ResultRecord learning_trial(const ExperimentConfig& config, const Dictionary& D0,
                                   double point, int point_index, int trial, InitKind init,
                                   long n_signals, double sigma) {
  const auto t_start = std::chrono::steady_clock::now();
  CoefficientModel coeff = config.coefficients;
  coeff.k = config.k;
  const NoiseModel noise{sigma};

  const std::uint64_t trial_seed =
      detail::mix64(config.seed ^ detail::mix64(0x9000 + static_cast<std::uint64_t>(point_index) * 64 +
                                                static_cast<std::uint64_t>(trial)));
  const SignalBatch train = generate_dataset(D0, coeff, noise, n_signals, trial_seed);
  const SignalBatch aux =
      generate_dataset(D0, coeff, noise, std::min<long>(512, std::max<long>(n_signals / 4, 64)),
                       detail::mix64(trial_seed + 1));

  double lambda = config.lambda_policy.fixed_value;
  if (config.lambda_policy.tuned)
    lambda = tune_lambda(aux, D0.atoms(), log_grid(1e-4, 10.0, 20), coeff.k).lambda;

  LearnConfig learner = config.learner;
  learner.lambda = lambda;
  learner.seed = detail::mix64(trial_seed + 2);
  learner.init = init;
  if (init == InitKind::Oracle) learner.oracle = D0;
  const LearnResult fit = learn_dictionary(train, D0.atom_count(), learner);

  const MatchResult match = match_atoms(fit.dictionary, D0.atoms());
  const ErrorMode mode = config.experiment == ExperimentKind::ErrVsSigma
                             ? ErrorMode::Orthogonal
                             : ErrorMode::OverComplete;
  ResultRecord record;
  record.experiment = to_string(config.experiment);
  record.point = point;
  record.trial = trial;
  record.init = init == InitKind::Oracle ? "oracle" : "random";
  record.lambda = lambda;
  record.normalized_error = normalized_error(match, mode);
  record.seed = config.seed;
  record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - t_start)
                       .count();
  return record;
}

/// Runs a config end to end and writes record + summary CSVs.  Returns the
/// process exit status (0 ok, 1 config error, 2 runtime error, 3 invariant
/// failure); partial results are flushed before a nonzero return.
inline int run(const ExperimentConfig& config, const std::string& out_path) {
  std::vector<ResultRecord> records;
  try {
    config.validate();
    const Dictionary D0 = config.dictionary.build();
    switch (config.experiment) {
      case ExperimentKind::ErrVsN:
      case ExperimentKind::ErrVsSigma: {
        for (int pi = 0; pi < static_cast<int>(config.sweep.size()); ++pi) {
          const double point = config.sweep[static_cast<std::size_t>(pi)];
          const long n_signals =
              config.experiment == ExperimentKind::ErrVsN ? static_cast<long>(point) : config.n;
          const double sigma =
              config.experiment == ExperimentKind::ErrVsSigma ? point : config.sigma;
          for (int trial = 0; trial < config.trials; ++trial) {
            for (InitKind init : {InitKind::Oracle, InitKind::Random}) {
              records.push_back(learning_trial(config, D0, point, pi, trial, init, n_signals,
                                               sigma));
            }
          }
        }
        break;
      }
      case ExperimentKind::Probe: {
        CoefficientModel coeff = config.coefficients;
        coeff.k = config.k;
        for (int trial = 0; trial < config.trials; ++trial) {
          const auto t_start = std::chrono::steady_clock::now();
          const std::uint64_t trial_seed = detail::mix64(config.seed + 7777 + trial);
          const SignalBatch batch =
              generate_dataset(D0, coeff, NoiseModel{config.sigma}, config.n, trial_seed);
          double lambda = config.lambda_policy.fixed_value;
          if (config.lambda_policy.tuned) {
            const SignalBatch aux = generate_dataset(D0, coeff, NoiseModel{config.sigma}, 512,
                                                     detail::mix64(trial_seed + 1));
            lambda = tune_lambda(aux, D0.atoms(), log_grid(1e-4, 10.0, 20), coeff.k).lambda;
          }
          const ProbeResult probe = probe_infimum(batch, D0, config.t, lambda, config.n_probe,
                                                  detail::mix64(trial_seed + 2));
          ResultRecord record;
          record.experiment = to_string(config.experiment);
          record.point = config.t;
          record.trial = trial;
          record.init = "probe";
          record.lambda = lambda;
          record.normalized_error = probe.min_delta_F;
          record.seed = config.seed;
          record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - t_start)
                               .count();
          records.push_back(record);
        }
        break;
      }
      case ExperimentKind::Coincide: {
        CoefficientModel coeff = config.coefficients;
        coeff.k = config.k;
        for (int trial = 0; trial < config.trials; ++trial) {
          const auto t_start = std::chrono::steady_clock::now();
          const double lambda = config.lambda_policy.tuned
                                    ? (2.0 / 9.0) * coeff.alpha_lo
                                    : config.lambda_policy.fixed_value;
          const auto res = coincide_frequency(
              D0, coeff, NoiseModel{config.sigma}, config.t_prime,
              std::max(config.t, config.t_prime), lambda, config.coincide_trials,
              detail::mix64(config.seed + 131 + trial));
          ResultRecord record;
          record.experiment = to_string(config.experiment);
          record.point = config.t_prime;
          record.trial = trial;
          record.init = "coincide";
          record.lambda = lambda;
          record.normalized_error = res.frequency;
          record.seed = config.seed;
          record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - t_start)
                               .count();
          records.push_back(record);
        }
        break;
      }
      case ExperimentKind::TheoryCheck: {
        const auto checks = run_theory_checks(config.seed);
        std::ofstream out(out_path);
        if (!out) throw invalid_argument("run: cannot open " + out_path);
        out << "check,pass,detail\n";
        bool all_pass = true;
        for (const auto& c : checks) {
          out << c.name << "," << (c.pass ? 1 : 0) << ",\"" << c.detail << "\"\n";
          if (!c.pass && !c.informational) all_pass = false;
        }
        return all_pass ? 0 : 3;
      }
    }
    std::sort(records.begin(), records.end(), [](const ResultRecord& a, const ResultRecord& b) {
      if (a.point != b.point) return a.point < b.point;
      if (a.trial != b.trial) return a.trial < b.trial;
      return a.init < b.init;
    });
    write_records(records, out_path);
    return 0;
  } catch (const invalid_argument&) {
    if (!records.empty()) write_records(records, out_path);
    return 1;
  } catch (const std::exception&) {
    if (!records.empty()) write_records(records, out_path);
    return 2;
  }
}

// --- slope fitting -----------------------------------------------------------------

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;
  double intercept = 0.0;
  int points = 0;
};

/// OLS fit of log(median) against log(point).
inline SlopeFit fit_slope(const std::vector<double>& points, const std::vector<double>& medians) {
  if (points.size() != medians.size()) throw invalid_argument("fit_slope: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i] > 0.0 && medians[i] > 0.0) {
      lx.push_back(std::log(points[i]));
      ly.push_back(std::log(medians[i]));
    }
  }
  const auto n = static_cast<double>(lx.size());
  if (lx.size() < 3) throw invalid_argument("fit_slope: need at least 3 positive points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx <= 0.0) throw invalid_argument("fit_slope: degenerate abscissa");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    rss += r * r;
  }
  fit.std_error = lx.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  fit.points = static_cast<int>(lx.size());
  return fit;
}

/// Reads a summary CSV (see kSummaryCsvHeader) and fits the log-log slope of
/// the rows whose init column matches `init`.
inline SlopeFit fit_slope(const std::string& summary_csv, const std::string& init = "oracle") {
  std::ifstream in(summary_csv);
  if (!in) throw invalid_argument("fit_slope: cannot open " + summary_csv);
  std::string line;
  if (!std::getline(in, line)) throw invalid_argument("fit_slope: empty file");
  std::vector<double> points, medians;
  while (std::getline(in, line)) {
    const auto fields = detail::split_csv_line(line);
    if (fields.size() < 4) continue;
    if (fields[2] != init) continue;
    points.push_back(std::stod(fields[1]));
    medians.push_back(std::stod(fields[3]));
  }
  return fit_slope(points, medians);
}

}  // namespace dictlab
