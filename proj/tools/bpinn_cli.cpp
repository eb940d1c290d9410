// Command-line front end: runs experiment sweeps from declarative configs and
// exports plot-ready tables.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "bpinn/experiment.hpp"

namespace {

int cmd_validate(const std::string& path, bool print_canonical) {
  const bpinn::ParsedConfig parsed = bpinn::validate_config(path);
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors)
      std::cerr << e.path << ": " << e.message << "\n";
    return 1;
  }
  if (print_canonical) {
    std::cout << bpinn::serialize_config(parsed.config);
  } else {
    std::cout << "ok: " << parsed.config.grid.size() << " grid cells, "
              << parsed.config.modes.size() << " modes, "
              << parsed.config.replicates << " replicates\n";
  }
  return 0;
}

int cmd_run(const std::string& path) {
  const bpinn::ParsedConfig parsed = bpinn::validate_config(path);
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors)
      std::cerr << e.path << ": " << e.message << "\n";
    return 1;
  }
  const bpinn::ExperimentResult result = bpinn::run_experiment(parsed.config);
  for (const auto& run : result.runs) {
    std::printf("%-4s n=%-6ld %-8s r%d  %s", run.cell.noise_label.c_str(),
                run.cell.n, run.mode == bpinn::TargetMode::kPinn ? "pinn" : "non_pinn",
                run.replicate, run.completed ? "ok" : "FAILED");
    if (run.completed) {
      std::printf("  rmse=%.4f w2_sq=%.5f mu=%.4f sd=%.4f", run.report.rmse,
                  run.report.w2_sq, run.report.posterior.mean,
                  run.report.posterior.sd);
    } else {
      std::printf("  (%s)", run.error.c_str());
    }
    std::printf("\n");
  }
  std::printf("aggregate table: %s\n",
              (result.output_dir / "aggregate.csv").string().c_str());
  return result.all_completed ? 0 : 2;
}

int cmd_export_boxplots(const std::string& dir, const std::string& out) {
  const bpinn::ExperimentResult result = bpinn::load_experiment(dir);
  if (result.runs.empty()) {
    std::cerr << "no completed runs found under " << dir << "\n";
    return 1;
  }
  if (out.empty() || out == "-") {
    bpinn::export_boxplot_data(result, std::cout);
  } else {
    std::ofstream os(out);
    bpinn::export_boxplot_data(result, os);
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

int cmd_rate_report(const bpinn::RateInputs& inputs) {
  bpinn::RateReport rep;
  try {
    rep = bpinn::rate_report(inputs);
  } catch (const std::exception& e) {
    std::cerr << "invalid inputs: " << e.what() << "\n";
    return 1;
  }
  nlohmann::json j;
  j["feasible"] = rep.feasible;
  if (rep.feasible) {
    j["s0"] = rep.s0;
    j["eps0"] = rep.eps0;
    j["r"] = rep.r;
  }
  j["kappa"] = rep.kappa;
  j["theta_rate"] = rep.theta_rate;
  std::cout << j.dump(2) << "\n";
  return rep.feasible ? 0 : 3;
}

int cmd_erm_baseline(const std::string& path) {
  const bpinn::ParsedConfig parsed = bpinn::validate_config(path);
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors)
      std::cerr << e.path << ": " << e.message << "\n";
    return 1;
  }
  const bpinn::ExperimentConfig& config = parsed.config;
  const bpinn::PdeSpec spec = bpinn::heat_spec();
  const double sigma = config.grid.front().sigma;
  const std::vector<long> ns = {100, 316, 1000, 3162, 10000};
  const int reps = 20;

  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  std::ofstream os(fs::path(config.output_dir) / "erm.csv");
  os << "n,replicate,theta_hat,l2_error\n";
  std::vector<double> log_n, log_mse;
  for (long n : ns) {
    double mse = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      const auto seed = bpinn::derive_seed(config.master_seed,
                                           {9, std::uint64_t(n), std::uint64_t(rep)});
      const bpinn::DataSet data =
          bpinn::generate_data(spec, static_cast<int>(n), sigma, seed);
      const bpinn::ErmFit fit = bpinn::erm_fit(spec, data, 0.0, 2.0);
      os << n << ',' << rep << ',' << fit.theta_hat << ',' << fit.l2_error
         << '\n';
      mse += fit.l2_error * fit.l2_error;
    }
    log_n.push_back(std::log(static_cast<double>(n)));
    log_mse.push_back(std::log(mse / reps));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int m = static_cast<int>(log_n.size());
  for (int i = 0; i < m; ++i) {
    sx += log_n[i]; sy += log_mse[i];
    sxx += log_n[i] * log_n[i]; sxy += log_n[i] * log_mse[i];
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  std::printf("log-log slope of mean squared L2 error vs n: %.4f\n", slope);
  std::printf("wrote %s\n",
              (fs::path(config.output_dir) / "erm.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian PINN inverse-problem laboratory"};
  app.require_subcommand(1);

  std::string config_path, result_dir, out_path;

  auto* run = app.add_subcommand("run", "run an experiment sweep from a config");
  run->add_option("config", config_path, "config file")->required();

  bool print_canonical = false;
  auto* validate = app.add_subcommand("validate", "check a config file");
  validate->add_option("config", config_path, "config file")->required();
  validate->add_flag("--print-canonical", print_canonical,
                     "print the canonical serialization");

  auto* boxplots =
      app.add_subcommand("export-boxplots", "boxplot table from a result dir");
  boxplots->add_option("dir", result_dir, "experiment output directory")
      ->required();
  boxplots->add_option("-o,--out", out_path, "output CSV (default stdout)");

  bpinn::RateInputs rate;
  long rate_n = rate.n, rate_q = rate.q;
  auto* rr = app.add_subcommand("rate-report", "sieve-rate calculators");
  rr->add_option("--beta", rate.beta, "smoothness of the true solution");
  rr->add_option("--m", rate.m, "domain dimension");
  rr->add_option("--tau", rate.tau, "operator order");
  rr->add_option("--n", rate_n, "sample size");
  rr->add_option("--q", rate_q, "model size");
  rr->add_option("--u", rate.sparsity_u, "sparsity exponent");
  rr->add_option("--sigma", rate.sigma, "noise level");
  rr->add_option("--c-approx", rate.c_approx, "approximation prefactor");
  rr->add_option("--b", rate.envelope_b, "envelope bound");
  rr->add_option("--v1", rate.v1, "entropy constant V1 (default s0)");
  rr->add_option("--v2", rate.v2, "entropy constant V2");

  auto* erm = app.add_subcommand("erm-baseline",
                                 "constrained ERM rate study over n");
  erm->add_option("config", config_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path);
  if (validate->parsed()) return cmd_validate(config_path, print_canonical);
  if (boxplots->parsed()) return cmd_export_boxplots(result_dir, out_path);
  if (rr->parsed()) {
    rate.n = rate_n;
    rate.q = rate_q;
    return cmd_rate_report(rate);
  }
  if (erm->parsed()) return cmd_erm_baseline(config_path);
  return 1;
}
