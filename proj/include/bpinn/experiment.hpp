#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "bpinn/config.hpp"
#include "bpinn/diagnostics.hpp"

namespace bpinn {

struct RunRecord {
  int cell_idx = 0;
  int mode_idx = 0;
  int replicate = 0;
  GridCell cell;
  TargetMode mode = TargetMode::kPinn;
  bool completed = false;
  std::string error;
  std::vector<double> theta;      // recorded theta samples (first component)
  std::vector<int> active_counts;
  std::vector<double> log_target;
  double accept_lambda = 0.0;
  DiagnosticsReport report;
};

struct ExperimentResult {
  bool all_completed = false;
  std::filesystem::path output_dir;
  std::vector<RunRecord> runs;  // ordered by (cell, mode, replicate)
};

namespace detail {

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string mode_name(TargetMode m) {
  return m == TargetMode::kPinn ? "pinn" : "non_pinn";
}

inline std::string cell_slug(const GridCell& cell) {
  std::string label = cell.noise_label;
  for (auto& ch : label)
    if (ch == '%') ch = 'p';
  for (auto& ch : label)
    if (ch == '.') ch = '_';
  return label + "_n" + std::to_string(cell.n);
}

// Linear-interpolation quantile on sorted data (the R-7 convention).
inline double quantile_linear(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = (n - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return sorted.back();
  return sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
}

inline int env_worker_count() {
  if (const char* env = std::getenv("BPINN_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace detail

inline std::uint64_t data_seed(const ExperimentConfig& c, int cell, int rep) {
  return derive_seed(c.master_seed, {1, std::uint64_t(cell), std::uint64_t(rep)});
}
inline std::uint64_t colloc_seed(const ExperimentConfig& c, int cell, int rep) {
  return derive_seed(c.master_seed, {2, std::uint64_t(cell), std::uint64_t(rep)});
}
inline std::uint64_t chain_seed(const ExperimentConfig& c, int cell, int rep,
                                int mode) {
  return derive_seed(c.master_seed, {3, std::uint64_t(cell),
                                     std::uint64_t(rep), std::uint64_t(mode)});
}

// Executes one (cell, mode, replicate) chain and computes its diagnostics.
inline RunRecord execute_run(const ExperimentConfig& config, int cell_idx,
                             int mode_idx, int rep) {
  RunRecord rec;
  rec.cell_idx = cell_idx;
  rec.mode_idx = mode_idx;
  rec.replicate = rep;
  rec.cell = config.grid[cell_idx];
  rec.mode = config.modes[mode_idx];
  const PdeSpec spec = heat_spec();
  try {
    const DataSet data = generate_data(spec, static_cast<int>(rec.cell.n),
                                       rec.cell.sigma,
                                       data_seed(config, cell_idx, rep));
    const CollocationSet colloc = sample_collocation(
        spec, static_cast<int>(config.colloc_n), config.colloc_b,
        colloc_seed(config, cell_idx, rep));
    const ChainConfig chain = config.chain_for(
        rec.mode, chain_seed(config, cell_idx, rep, mode_idx));
    const PriorConfig prior = config.prior_for(chain.arch, rec.cell.n);

    ChainOutput out = run_chain(spec, data, colloc, prior, chain);
    rec.accept_lambda = out.acceptance.lambda;
    rec.theta.resize(out.theta_samples.rows());
    for (long k = 0; k < out.theta_samples.rows(); ++k)
      rec.theta[k] = out.theta_samples(k, 0);
    rec.active_counts = out.active_counts;
    rec.log_target.assign(out.log_target_trace.data(),
                          out.log_target_trace.data() +
                              out.log_target_trace.size());
    if (out.diverged) {
      rec.completed = false;
      rec.error = out.divergence_message;
    } else {
      const GaussianSummary target =
          bvm_target(spec, rec.cell.n, SigmaStarMethod::kAnalytic);
      rec.report = make_report(rec.theta, spec.true_theta[0], target);
      rec.completed = true;
    }
  } catch (const std::exception& e) {
    rec.completed = false;
    rec.error = e.what();
  }
  return rec;
}

namespace detail {

inline void write_trace_csv(const std::filesystem::path& path,
                            const ExperimentConfig& config,
                            const RunRecord& rec) {
  std::ofstream os(path);
  os << "iteration,theta,active_count,log_target\n";
  for (std::size_t k = 0; k < rec.theta.size(); ++k) {
    const long it = config.burn_in + (static_cast<long>(k) + 1) * config.thin;
    os << it << ',' << fmt(rec.theta[k]) << ',' << rec.active_counts[k] << ','
       << fmt(rec.log_target[k]) << '\n';
  }
}

inline void write_summary_json(const std::filesystem::path& path,
                               const RunRecord& rec) {
  nlohmann::json j;
  j["noise_level"] = rec.cell.noise_label;
  j["sigma"] = rec.cell.sigma;
  j["n"] = rec.cell.n;
  j["mode"] = mode_name(rec.mode);
  j["replicate"] = rec.replicate;
  j["completed"] = rec.completed;
  if (!rec.error.empty()) j["error"] = rec.error;
  if (rec.completed) {
    j["mu_theta"] = rec.report.posterior.mean;
    j["sd_theta"] = rec.report.posterior.sd;
    j["rmse"] = rec.report.rmse;
    j["w2_sq"] = rec.report.w2_sq;
    j["hellinger_sq"] = rec.report.hellinger_sq;
    j["kl_fwd"] = rec.report.kl_fwd;
    j["kl_rev"] = rec.report.kl_rev;
    j["tvd_lower"] = rec.report.tvd_lower;
    j["tvd_upper"] = rec.report.tvd_upper;
    j["target_mean"] = rec.report.target.mean;
    j["target_sd"] = rec.report.target.sd;
  }
  j["acceptance"] = {{"lambda", rec.accept_lambda}, {"theta", 1.0}, {"w", 1.0}};
  std::ofstream os(path);
  os << j.dump(2) << '\n';
}

// Histogram of the sampled theta plus the fitted normal approximation and
// the BvM target densities at the bin centers.
inline void write_histogram_csv(const std::filesystem::path& path,
                                const RunRecord& rec) {
  if (rec.theta.empty()) return;
  const int bins = 40;
  auto [mn_it, mx_it] = std::minmax_element(rec.theta.begin(), rec.theta.end());
  double lo = *mn_it, hi = *mx_it;
  if (hi <= lo) hi = lo + 1e-12;
  const double w = (hi - lo) / bins;
  std::vector<long> counts(bins, 0);
  for (double v : rec.theta) {
    int b = static_cast<int>((v - lo) / w);
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    ++counts[b];
  }
  const double K = static_cast<double>(rec.theta.size());
  std::ofstream os(path);
  os << "bin_lo,bin_hi,count,density,pdf_tilde,pdf_star\n";
  for (int b = 0; b < bins; ++b) {
    const double blo = lo + b * w, bhi = blo + w, mid = 0.5 * (blo + bhi);
    os << fmt(blo) << ',' << fmt(bhi) << ',' << counts[b] << ','
       << fmt(counts[b] / (K * w)) << ',' << fmt(rec.report.posterior.pdf(mid))
       << ',' << fmt(rec.report.target.pdf(mid)) << '\n';
  }
}

}  // namespace detail

// Runs the full grid x mode x replicate sweep with a worker pool, writes all
// per-run artifacts plus the aggregate table, and returns the records.
// Chain failures are recorded per cell without aborting the sweep.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  ExperimentResult result;
  result.output_dir = config.output_dir;
  fs::create_directories(result.output_dir);
  fs::create_directories(result.output_dir / "runs");
  fs::create_directories(result.output_dir / "data");
  fs::create_directories(result.output_dir / "hist");

  {
    std::ofstream os(result.output_dir / "config.canonical");
    os << serialize_config(config);
  }

  const int cells = static_cast<int>(config.grid.size());
  const int modes = static_cast<int>(config.modes.size());
  const int reps = config.replicates;
  const int total = cells * modes * reps;
  result.runs.resize(total);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int idx = next.fetch_add(1);
      if (idx >= total) return;
      const int cell = idx / (modes * reps);
      const int mode = (idx / reps) % modes;
      const int rep = idx % reps;
      result.runs[idx] = execute_run(config, cell, mode, rep);
    }
  };
  const int workers = std::min(detail::env_worker_count(), total);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // per-run artifacts, serialized through this single writer thread
  const PdeSpec spec = heat_spec();
  for (int cell = 0; cell < cells; ++cell) {
    for (int rep = 0; rep < reps; ++rep) {
      const auto& gc = config.grid[cell];
      const DataSet data = generate_data(spec, static_cast<int>(gc.n),
                                         gc.sigma, data_seed(config, cell, rep));
      std::ofstream os(result.output_dir / "data" /
                       (detail::cell_slug(gc) + "_r" + std::to_string(rep) +
                        ".csv"));
      write_csv(data, os);
    }
  }
  for (const RunRecord& rec : result.runs) {
    const std::string name = detail::cell_slug(rec.cell) + "_" +
                             detail::mode_name(rec.mode) + "_r" +
                             std::to_string(rec.replicate);
    const fs::path dir = result.output_dir / "runs" / name;
    fs::create_directories(dir);
    detail::write_trace_csv(dir / "trace.csv", config, rec);
    detail::write_summary_json(dir / "summary.json", rec);
    if (rec.completed)
      detail::write_histogram_csv(result.output_dir / "hist" / (name + ".csv"),
                                  rec);
  }

  // per-run table
  {
    std::ofstream os(result.output_dir / "runs.csv");
    os << "noise_level,sigma,n,mode,replicate,completed,rmse,w2_sq,tvd_lower,"
          "tvd_upper,mu_theta,sd_theta,accept_lambda\n";
    for (const RunRecord& r : result.runs) {
      os << r.cell.noise_label << ',' << detail::fmt(r.cell.sigma) << ','
         << r.cell.n << ',' << detail::mode_name(r.mode) << ',' << r.replicate
         << ',' << (r.completed ? 1 : 0) << ',';
      if (r.completed) {
        os << detail::fmt(r.report.rmse) << ',' << detail::fmt(r.report.w2_sq)
           << ',' << detail::fmt(r.report.tvd_lower) << ','
           << detail::fmt(r.report.tvd_upper) << ','
           << detail::fmt(r.report.posterior.mean) << ','
           << detail::fmt(r.report.posterior.sd);
      } else {
        os << "nan,nan,nan,nan,nan,nan";
      }
      os << ',' << detail::fmt(r.accept_lambda) << '\n';
    }
  }

  // aggregate table: replicate means per cell x mode
  {
    std::ofstream os(result.output_dir / "aggregate.csv");
    os << "noise_level,sigma,n,mode,rmse,w2_sq,tvd_lower,tvd_upper,mu_theta,"
          "sd_theta\n";
    for (int cell = 0; cell < cells; ++cell) {
      for (int mode = 0; mode < modes; ++mode) {
        double rmse = 0, w2 = 0, tl = 0, tu = 0, mu = 0, sd = 0;
        int done = 0;
        for (int rep = 0; rep < reps; ++rep) {
          const RunRecord& r = result.runs[(cell * modes + mode) * reps + rep];
          if (!r.completed) continue;
          ++done;
          rmse += r.report.rmse;
          w2 += r.report.w2_sq;
          tl += r.report.tvd_lower;
          tu += r.report.tvd_upper;
          mu += r.report.posterior.mean;
          sd += r.report.posterior.sd;
        }
        const auto& gc = config.grid[cell];
        os << gc.noise_label << ',' << detail::fmt(gc.sigma) << ',' << gc.n
           << ',' << detail::mode_name(config.modes[mode]) << ',';
        if (done > 0) {
          os << detail::fmt(rmse / done) << ',' << detail::fmt(w2 / done) << ','
             << detail::fmt(tl / done) << ',' << detail::fmt(tu / done) << ','
             << detail::fmt(mu / done) << ',' << detail::fmt(sd / done);
        } else {
          os << "nan,nan,nan,nan,nan,nan";
        }
        os << '\n';
      }
    }
  }

  result.all_completed = true;
  for (const RunRecord& r : result.runs)
    if (!r.completed) result.all_completed = false;
  return result;
}

// Box-plot statistics (linear-interpolation quartiles, 1.5 IQR whiskers,
// explicit outlier list), one row per cell x mode with replicates pooled.
inline void export_boxplot_data(const ExperimentResult& result,
                                std::ostream& os) {
  os << "noise_level,sigma,n,mode,count,q1,median,q3,whisker_lo,whisker_hi,"
        "outliers\n";
  std::map<std::pair<int, int>, std::vector<double>> pooled;
  std::map<std::pair<int, int>, const RunRecord*> meta;
  for (const RunRecord& r : result.runs) {
    if (!r.completed) continue;
    auto key = std::make_pair(r.cell_idx, r.mode_idx);
    auto& v = pooled[key];
    v.insert(v.end(), r.theta.begin(), r.theta.end());
    meta[key] = &r;
  }
  for (auto& [key, samples] : pooled) {
    std::sort(samples.begin(), samples.end());
    const RunRecord& r = *meta[key];
    const double q1 = detail::quantile_linear(samples, 0.25);
    const double med = detail::quantile_linear(samples, 0.5);
    const double q3 = detail::quantile_linear(samples, 0.75);
    const double iqr = q3 - q1;
    const double fence_lo = q1 - 1.5 * iqr, fence_hi = q3 + 1.5 * iqr;
    double wlo = q1, whi = q3;
    for (double v : samples)
      if (v >= fence_lo) { wlo = v; break; }
    for (auto it = samples.rbegin(); it != samples.rend(); ++it)
      if (*it <= fence_hi) { whi = *it; break; }
    std::string outliers;
    for (double v : samples) {
      if (v < fence_lo || v > fence_hi) {
        if (!outliers.empty()) outliers += ';';
        outliers += detail::fmt(v);
      }
    }
    os << r.cell.noise_label << ',' << detail::fmt(r.cell.sigma) << ','
       << r.cell.n << ',' << detail::mode_name(r.mode) << ',' << samples.size()
       << ',' << detail::fmt(q1) << ',' << detail::fmt(med) << ','
       << detail::fmt(q3) << ',' << detail::fmt(wlo) << ','
       << detail::fmt(whi) << ',' << outliers << '\n';
  }
}

// Rebuilds run records from a result directory (for the boxplot exporter).
inline ExperimentResult load_experiment(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  ExperimentResult result;
  result.output_dir = dir;
  std::map<std::pair<std::string, long>, int> cell_ids;
  for (const auto& entry : fs::directory_iterator(dir / "runs")) {
    if (!entry.is_directory()) continue;
    std::ifstream js(entry.path() / "summary.json");
    if (!js) continue;
    nlohmann::json j;
    js >> j;
    RunRecord rec;
    rec.cell.noise_label = j["noise_level"].get<std::string>();
    rec.cell.sigma = j["sigma"].get<double>();
    rec.cell.n = j["n"].get<long>();
    rec.mode = j["mode"].get<std::string>() == "pinn" ? TargetMode::kPinn
                                                      : TargetMode::kNonPinn;
    rec.replicate = j["replicate"].get<int>();
    rec.completed = j["completed"].get<bool>();
    auto key = std::make_pair(rec.cell.noise_label, rec.cell.n);
    auto [it, inserted] =
        cell_ids.emplace(key, static_cast<int>(cell_ids.size()));
    rec.cell_idx = it->second;
    rec.mode_idx = rec.mode == TargetMode::kPinn ? 0 : 1;
    std::ifstream tr(entry.path() / "trace.csv");
    std::string line;
    std::getline(tr, line);  // header
    while (std::getline(tr, line)) {
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos) continue;
      rec.theta.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    result.runs.push_back(std::move(rec));
  }
  std::sort(result.runs.begin(), result.runs.end(),
            [](const RunRecord& a, const RunRecord& b) {
              return std::tie(a.cell.noise_label, a.cell.n, a.mode_idx,
                              a.replicate) <
                     std::tie(b.cell.noise_label, b.cell.n, b.mode_idx,
                              b.replicate);
            });
  return result;
}

}  // namespace bpinn
