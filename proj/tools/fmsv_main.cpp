// command-line front end: simulate panels, fit the samplers, diagnose runs.
// exit codes: 0 ok, 1 usage, 2 data, 3 numerical.

#include <CLI11.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fmsv/diagnostics.hpp"
#include "fmsv/io/csv.hpp"
#include "fmsv/io/config.hpp"
#include "fmsv/io/manifest.hpp"
#include "fmsv/io/svg.hpp"
#include "fmsv/model.hpp"
#include "fmsv/sampler.hpp"
#include "fmsv/version.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

using namespace fmsv;

std::string join_numbers(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_number(v(i));
  }
  return out;
}

// a scalar broadcasts to all n slots; otherwise the list length must be n.
Eigen::VectorXd parse_number_list(const std::string& text, int n, const std::string& what) {
  std::vector<double> vals;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t pos = text.find(',', start);
    const std::string tok =
        pos == std::string::npos ? text.substr(start) : text.substr(start, pos - start);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size())
      throw UsageError(what + ": '" + tok + "' is not a number");
    vals.push_back(v);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (vals.size() == 1) return Eigen::VectorXd::Constant(n, vals[0]);
  if (static_cast<int>(vals.size()) != n)
    throw UsageError(what + ": expected 1 or " + std::to_string(n) + " values, got " +
                     std::to_string(vals.size()));
  return Eigen::Map<Eigen::VectorXd>(vals.data(), n);
}

ConfigFile sim_config(const ModelDims& dims, const Theta& theta) {
  ConfigFile cfg;
  cfg.set("model", "p", std::to_string(dims.p));
  cfg.set("model", "k", std::to_string(dims.k));
  cfg.set("model", "T", std::to_string(dims.T));
  const auto field = [&](auto get) {
    Eigen::VectorXd v(dims.p);
    for (int s = 0; s < dims.p; ++s) v(s) = get(theta.idio[s]);
    return join_numbers(v);
  };
  cfg.set("idio", "mu", field([](const SvParams& x) { return x.mu; }));
  cfg.set("idio", "phi", field([](const SvParams& x) { return x.phi; }));
  cfg.set("idio", "tau2", field([](const SvParams& x) { return x.tau2; }));
  cfg.set("idio", "rho", field([](const SvParams& x) { return x.rho; }));
  const auto ffield = [&](auto get) {
    Eigen::VectorXd v(dims.k);
    for (int j = 0; j < dims.k; ++j) v(j) = get(theta.fac[j]);
    return join_numbers(v);
  };
  cfg.set("factor", "phi", ffield([](const SvParams& x) { return x.phi; }));
  cfg.set("factor", "tau2", ffield([](const SvParams& x) { return x.tau2; }));
  for (int s = 0; s < dims.p; ++s)
    cfg.set("loadings", "row_" + std::to_string(s + 1),
            join_numbers(theta.B.row(s).transpose()));
  return cfg;
}

std::pair<ModelDims, Theta> sim_from_config(const ConfigFile& cfg) {
  ModelDims dims;
  dims.p = static_cast<int>(cfg.get_int("model", "p"));
  dims.k = static_cast<int>(cfg.get_int("model", "k"));
  dims.T = static_cast<int>(cfg.get_int("model", "T"));
  dims.validate();
  Theta theta;
  const Eigen::VectorXd mu = parse_number_list(cfg.get("idio", "mu"), dims.p, "idio.mu");
  const Eigen::VectorXd phi = parse_number_list(cfg.get("idio", "phi"), dims.p, "idio.phi");
  const Eigen::VectorXd tau2 = parse_number_list(cfg.get("idio", "tau2"), dims.p, "idio.tau2");
  const Eigen::VectorXd rho = parse_number_list(cfg.get("idio", "rho"), dims.p, "idio.rho");
  theta.idio.resize(dims.p);
  for (int s = 0; s < dims.p; ++s) theta.idio[s] = SvParams{mu(s), phi(s), tau2(s), rho(s)};
  const Eigen::VectorXd fphi = parse_number_list(cfg.get("factor", "phi"), dims.k, "factor.phi");
  const Eigen::VectorXd ftau2 =
      parse_number_list(cfg.get("factor", "tau2"), dims.k, "factor.tau2");
  theta.fac.resize(dims.k);
  for (int j = 0; j < dims.k; ++j) theta.fac[j] = SvParams{0.0, fphi(j), ftau2(j), 0.0};
  theta.B.resize(dims.p, dims.k);
  for (int s = 0; s < dims.p; ++s) {
    const std::string key = "row_" + std::to_string(s + 1);
    theta.B.row(s) =
        parse_number_list(cfg.get("loadings", key), dims.k, "loadings." + key).transpose();
  }
  validate_theta(dims, theta);
  return {dims, theta};
}

std::vector<std::string> numbered_header(const std::string& base, int n) {
  std::vector<std::string> h;
  h.reserve(n);
  for (int i = 1; i <= n; ++i) h.push_back(base + std::to_string(i));
  return h;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  std::string preset;
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir;
};

int cmd_simulate(const SimulateArgs& args) {
  ConfigFile cfg;
  if (!args.preset.empty()) {
    const auto [dims, theta] = simulation_preset(args.preset);
    cfg = sim_config(dims, theta);
  } else if (!args.config_path.empty()) {
    cfg = ConfigFile::load(args.config_path);
  } else {
    throw UsageError("simulate needs --preset or --config");
  }
  const auto [dims, theta] = sim_from_config(cfg);

  RunManifest manifest;
  manifest.command = "simulate";
  manifest.seed = args.seed;
  manifest.config = cfg;
  manifest.start();

  const SimOutput sim = simulate(dims, theta, args.seed);
  ensure_dir(args.out_dir);
  const auto path = [&](const std::string& name) { return args.out_dir + "/" + name; };

  write_matrix_csv(path("observations.csv"), numbered_header("y", dims.p), sim.y.transpose());
  write_matrix_csv(path("latents_h1_true.csv"), numbered_header("h1_", dims.p),
                   sim.lat.h1.transpose());
  write_matrix_csv(path("latents_h2_true.csv"), numbered_header("h2_", dims.k),
                   sim.lat.h2.transpose());
  write_matrix_csv(path("factors_true.csv"), numbered_header("f", dims.k),
                   sim.lat.f.transpose());

  Theta truth = theta;
  const std::vector<std::string> names = param_names(dims, PriorType::normal);
  write_matrix_csv(path("truth_params.csv"), names, pack_params(truth).transpose());

  manifest.outputs = {"observations.csv", "latents_h1_true.csv", "latents_h2_true.csv",
                      "factors_true.csv", "truth_params.csv"};
  manifest.finish();
  manifest.write(path("manifest.json"));
  std::cout << "wrote " << dims.p << "-series, " << dims.T << "-period panel to "
            << args.out_dir << "\n";
  return 0;
}

// ----------------------------------------------------------------------- fit

struct FitArgs {
  std::string data_path;
  std::string config_path;
  std::string out_dir;
  std::string scheme = "pg";
  int particles = 100;
  int iters = 1000;
  int burnin = 200;
  int factors = 1;
  std::string prior = "normal";
  double loading_var = 1.0;
  std::string phi_accept = "plus";
  std::uint64_t seed = 1;
  int threads = 0;
  // which flags were given explicitly, to let them override the config file
  std::map<std::string, bool> given;
};

SamplerConfig fit_sampler_config(const FitArgs& args) {
  SamplerConfig cfg;
  cfg.scheme = scheme_from_name(args.scheme);
  cfg.particles = args.particles;
  cfg.iterations = args.iters;
  cfg.burnin = args.burnin;
  cfg.seed = args.seed;
  cfg.threads = args.threads;
  if (args.prior == "normal")
    cfg.prior.type = PriorType::normal;
  else if (args.prior == "ng")
    cfg.prior.type = PriorType::normal_gamma;
  else
    throw UsageError("unknown prior '" + args.prior + "' (expected normal or ng)");
  cfg.prior.loading_var = args.loading_var;
  if (args.phi_accept == "plus")
    cfg.phi_accept = PhiAccept::plus;
  else if (args.phi_accept == "stationary")
    cfg.phi_accept = PhiAccept::stationary;
  else
    throw UsageError("unknown phi acceptance variant '" + args.phi_accept + "'");
  return cfg;
}

void apply_fit_config_file(FitArgs& args) {
  if (args.config_path.empty()) return;
  const ConfigFile file = ConfigFile::load(args.config_path);
  const auto merge_str = [&](const char* flag, const char* key, std::string& slot) {
    if (!args.given[flag] && file.has("fit", key)) slot = file.get("fit", key);
  };
  const auto merge_int = [&](const char* flag, const char* key, int& slot) {
    if (!args.given[flag] && file.has("fit", key))
      slot = static_cast<int>(file.get_int("fit", key));
  };
  merge_str("scheme", "scheme", args.scheme);
  merge_int("particles", "particles", args.particles);
  merge_int("iters", "iters", args.iters);
  merge_int("burnin", "burnin", args.burnin);
  merge_int("factors", "factors", args.factors);
  merge_str("prior", "prior", args.prior);
  merge_str("phi-accept", "phi_accept", args.phi_accept);
  merge_int("threads", "threads", args.threads);
  if (!args.given["seed"] && file.has("fit", "seed"))
    args.seed = file.get_uint64("fit", "seed");
  if (!args.given["loading-var"] && file.has("fit", "loading_var"))
    args.loading_var = file.get_double("fit", "loading_var");
}

ConfigFile fit_config(const FitArgs& args) {
  ConfigFile cfg;
  cfg.set("fit", "data", args.data_path);
  cfg.set("fit", "scheme", args.scheme);
  cfg.set("fit", "particles", std::to_string(args.particles));
  cfg.set("fit", "iters", std::to_string(args.iters));
  cfg.set("fit", "burnin", std::to_string(args.burnin));
  cfg.set("fit", "factors", std::to_string(args.factors));
  cfg.set("fit", "prior", args.prior);
  cfg.set("fit", "loading_var", csv_number(args.loading_var));
  cfg.set("fit", "phi_accept", args.phi_accept);
  cfg.set("fit", "seed", std::to_string(args.seed));
  cfg.set("fit", "threads", std::to_string(args.threads));
  return cfg;
}

ordered_json chainstats_json(const RunOutput& out) {
  ordered_json j;
  j["scheme"] = scheme_name(out.config.scheme);
  j["particles"] = out.config.particles;
  j["iterations"] = out.config.iterations;
  j["burnin"] = out.config.burnin;
  j["seed"] = out.config.seed;
  j["runtime_sec"] = out.runtime_sec;
  j["seconds_per_iteration"] = out.seconds_per_iteration;
  j["iact_mean"] = out.iact_mean;
  j["tnv"] = out.tnv;
  ordered_json iact = ordered_json::object();
  for (std::size_t i = 0; i < out.draws.names.size(); ++i) {
    const double v = out.iact(static_cast<Eigen::Index>(i));
    if (std::isfinite(v))
      iact[out.draws.names[i]] = v;
    else
      iact[out.draws.names[i]] = nullptr;
  }
  j["iact"] = std::move(iact);
  ordered_json acc = ordered_json::object();
  for (const auto& [name, tally] : out.accepts) {
    acc[name] = {{"accepted", tally.accepted},
                 {"attempts", tally.attempts},
                 {"skipped", tally.skipped},
                 {"rate", tally.rate()}};
  }
  j["acceptance"] = std::move(acc);
  j["nuts_divergences"] = out.nuts_divergences;
  j["collapse_rejections"] = out.collapse_rejections;
  j["zero_pivots"] = out.zero_pivots;
  return j;
}

// column layout: per series mean, lo = mean - 2sd, hi = mean + 2sd
void write_latent_summary(const std::string& path, const std::string& base,
                          const Eigen::MatrixXd& mean, const Eigen::MatrixXd& sd) {
  const int n = static_cast<int>(mean.rows());
  const int T = static_cast<int>(mean.cols());
  std::vector<std::string> header;
  Eigen::MatrixXd table(T, 3 * n);
  for (int s = 0; s < n; ++s) {
    const std::string tag = base + std::to_string(s + 1);
    header.push_back(tag + "_mean");
    header.push_back(tag + "_lo");
    header.push_back(tag + "_hi");
    table.col(3 * s + 0) = mean.row(s).transpose();
    table.col(3 * s + 1) = (mean.row(s) - 2.0 * sd.row(s)).transpose();
    table.col(3 * s + 2) = (mean.row(s) + 2.0 * sd.row(s)).transpose();
  }
  write_matrix_csv(path, header, table);
}

int cmd_fit(FitArgs args) {
  apply_fit_config_file(args);
  const CsvTable data = read_numeric_csv(args.data_path);
  const Eigen::MatrixXd y = data.values.transpose();  // file is periods x series

  RunManifest manifest;
  manifest.command = "fit";
  manifest.seed = args.seed;
  manifest.config = fit_config(args);
  manifest.start();

  const SamplerConfig cfg = fit_sampler_config(args);
  const RunOutput out = run_sampler(y, args.factors, cfg);

  ensure_dir(args.out_dir);
  const auto path = [&](const std::string& name) { return args.out_dir + "/" + name; };
  write_matrix_csv(path("draws.csv"), out.draws.names, out.draws.values);
  {
    Eigen::MatrixXd ll(out.draws.cond_loglik.size(), 2);
    ll.col(0) = out.draws.cond_loglik;
    ll.col(1) = out.draws.log_prior;
    write_matrix_csv(path("loglik.csv"), {"cond_loglik", "log_prior"}, ll);
  }
  write_latent_summary(path("latents_h1_summary.csv"), "h1_", out.latents.h1_mean,
                       out.latents.h1_sd);
  write_latent_summary(path("latents_h2_summary.csv"), "h2_", out.latents.h2_mean,
                       out.latents.h2_sd);
  write_latent_summary(path("factors_summary.csv"), "f", out.latents.f_mean, out.latents.f_sd);
  {
    std::ofstream js(path("chainstats.json"), std::ios::binary);
    if (!js) throw DataError("cannot open chainstats.json for writing");
    js << chainstats_json(out).dump(2) << '\n';
  }

  manifest.outputs = {"draws.csv",
                      "loglik.csv",
                      "latents_h1_summary.csv",
                      "latents_h2_summary.csv",
                      "factors_summary.csv",
                      "chainstats.json"};
  manifest.finish();
  manifest.write(path("manifest.json"));
  std::cout << "scheme " << scheme_name(cfg.scheme) << ": " << out.draws.values.rows()
            << " retained draws, mean IACT " << std::setprecision(4) << out.iact_mean
            << ", TNV " << out.tnv << "\n";
  return 0;
}

// ------------------------------------------------------------------ diagnose

struct DiagnoseArgs {
  std::vector<std::string> run_dirs;
  std::string out_dir;
  std::string truth_params_path;
  std::string truth_latents_path;
  std::vector<std::string> trace_params;
};

struct LoadedRun {
  std::string name;
  CsvTable draws;
  std::optional<CsvTable> loglik;
  double seconds_per_iteration = 0.0;
  Eigen::VectorXd iact;
  double iact_mean = 0.0;
  double tnv = 0.0;
};

LoadedRun load_run(const std::string& dir) {
  LoadedRun run;
  run.name = fs::path(dir).filename().string();
  if (run.name.empty()) run.name = dir;
  run.draws = read_numeric_csv(dir + "/draws.csv");
  if (run.draws.values.rows() == 0) throw DataError("'" + dir + "/draws.csv' has no draws");
  if (fs::exists(dir + "/loglik.csv")) run.loglik = read_numeric_csv(dir + "/loglik.csv");

  std::ifstream js(dir + "/chainstats.json", std::ios::binary);
  if (!js) throw DataError("cannot open '" + dir + "/chainstats.json'");
  ordered_json stats = ordered_json::parse(js, nullptr, true);
  run.seconds_per_iteration = stats.at("seconds_per_iteration").get<double>();

  const Eigen::Index n = run.draws.values.cols();
  run.iact.resize(n);
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    run.iact(j) = iact_or_nan(run.draws.values.col(j));
    if (std::isfinite(run.iact(j))) {
      sum += run.iact(j);
      ++count;
    }
  }
  run.iact_mean = count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
  run.tnv = time_normalized_variance(run.iact_mean, run.seconds_per_iteration);
  return run;
}

std::optional<double> lookup_truth(const std::optional<CsvTable>& truth,
                                   const std::string& name) {
  if (!truth) return std::nullopt;
  for (std::size_t j = 0; j < truth->header.size(); ++j)
    if (truth->header[j] == name) return truth->values(0, j);
  return std::nullopt;
}

void print_summary_table(const std::string& run, const std::vector<ParamSummary>& rows) {
  std::cout << "run " << run << "\n";
  std::cout << std::left << std::setw(14) << "param" << std::right << std::setw(11) << "mean"
            << std::setw(11) << "sd" << std::setw(11) << "p5" << std::setw(11) << "p50"
            << std::setw(11) << "p95" << std::setw(9) << "iact" << "\n";
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(14) << r.name << std::right << std::fixed
              << std::setprecision(4) << std::setw(11) << r.mean << std::setw(11) << r.sd
              << std::setw(11) << r.p5 << std::setw(11) << r.p50 << std::setw(11) << r.p95
              << std::setprecision(1) << std::setw(9) << r.iact << "\n";
    std::cout.unsetf(std::ios::fixed);
  }
}

int cmd_diagnose(const DiagnoseArgs& args) {
  if (args.run_dirs.empty()) throw UsageError("diagnose needs at least one run directory");
  std::optional<CsvTable> truth;
  if (!args.truth_params_path.empty()) truth = read_numeric_csv(args.truth_params_path);

  std::vector<LoadedRun> runs;
  runs.reserve(args.run_dirs.size());
  for (const auto& dir : args.run_dirs) runs.push_back(load_run(dir));

  ensure_dir(args.out_dir);
  const auto path = [&](const std::string& name) { return args.out_dir + "/" + name; };

  RunManifest manifest;
  manifest.command = "diagnose";
  manifest.start();
  for (std::size_t i = 0; i < args.run_dirs.size(); ++i)
    manifest.config.set("diagnose", "run_" + std::to_string(i + 1), args.run_dirs[i]);

  // per-parameter posterior summaries, all runs stacked
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& run : runs) {
      std::optional<Eigen::VectorXd> truth_vec;
      if (truth) {
        Eigen::VectorXd tv(run.draws.header.size());
        bool all = true;
        for (std::size_t j = 0; j < run.draws.header.size(); ++j) {
          const auto v = lookup_truth(truth, run.draws.header[j]);
          if (!v) {
            all = false;
            break;
          }
          tv(static_cast<Eigen::Index>(j)) = *v;
        }
        if (all) truth_vec = tv;
      }
      const auto summary =
          summarize_params(run.draws.header, run.draws.values, run.iact, truth_vec);
      print_summary_table(run.name, summary);
      for (const auto& s : summary) {
        std::vector<std::string> row{run.name,
                                     s.name,
                                     csv_number(s.mean),
                                     csv_number(s.sd),
                                     csv_number(s.p5),
                                     csv_number(s.p50),
                                     csv_number(s.p95),
                                     csv_number(s.p0_5),
                                     csv_number(s.p99_5),
                                     csv_number(s.iact)};
        row.push_back(s.truth ? csv_number(*s.truth) : "");
        row.push_back(s.truth ? (s.in_ci99 ? "1" : "0") : "");
        rows.push_back(std::move(row));
      }
    }
    write_csv(path("summary.csv"),
              {"run", "param", "mean", "sd", "p5", "p50", "p95", "p0.5", "p99.5", "iact",
               "truth", "in_ci99"},
              rows);
  }

  // sampler comparison in the style of the timing tables: relative TNV
  // against the best run
  {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& run : runs) best = std::min(best, run.tnv);
    std::vector<std::vector<std::string>> rows;
    for (const auto& run : runs)
      rows.push_back({run.name, csv_number(run.seconds_per_iteration),
                      csv_number(run.iact_mean), csv_number(run.tnv),
                      csv_number(run.tnv / best)});
    write_csv(path("comparison.csv"),
              {"run", "seconds_per_iteration", "iact_mean", "tnv", "rel_tnv"}, rows);
  }

  // DIC for the runs that stored conditional log-likelihood draws
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& run : runs) {
      if (!run.loglik) continue;
      const Eigen::VectorXd ll = run.loglik->values.col(0);
      const Eigen::VectorXd lp = run.loglik->values.col(1);
      const DicResult dic = dic7_from_chain(ll, lp);
      rows.push_back({run.name, csv_number(dic.dic), csv_number(dic.mean_loglik),
                      csv_number(dic.best_loglik)});
    }
    if (!rows.empty())
      write_csv(path("dic.csv"), {"run", "dic", "mean_loglik", "best_loglik"}, rows);
    manifest.outputs = {"summary.csv", "comparison.csv"};
    if (!rows.empty()) manifest.outputs.push_back("dic.csv");
  }

  // trace plots for selected parameters of the first run
  {
    const LoadedRun& run = runs.front();
    std::vector<std::string> params = args.trace_params;
    if (params.empty())
      for (std::size_t j = 0; j < run.draws.header.size() && j < 4; ++j)
        params.push_back(run.draws.header[j]);
    for (const auto& name : params) {
      const auto it = std::find(run.draws.header.begin(), run.draws.header.end(), name);
      if (it == run.draws.header.end())
        throw UsageError("trace parameter '" + name + "' not found in draws of " + run.name);
      const auto col = static_cast<Eigen::Index>(it - run.draws.header.begin());
      std::vector<double> xs(run.draws.values.rows()), ys(run.draws.values.rows());
      for (Eigen::Index i = 0; i < run.draws.values.rows(); ++i) {
        xs[static_cast<std::size_t>(i)] = static_cast<double>(i + 1);
        ys[static_cast<std::size_t>(i)] = run.draws.values(i, col);
      }
      SvgPlot plot("trace: " + name + " (" + run.name + ")");
      plot.add_line("trace", xs, ys, "#1f77b4");
      const std::string file = "trace_" + name + ".svg";
      plot.write(path(file));
      manifest.outputs.push_back(file);
    }
  }

  // volatility band plots from the first run's latent summaries, with the
  // true path overlaid when provided
  {
    const std::string dir = args.run_dirs.front();
    const std::string summary_path = dir + "/latents_h1_summary.csv";
    if (fs::exists(summary_path)) {
      const CsvTable lat = read_numeric_csv(summary_path);
      std::optional<CsvTable> truth_lat;
      if (!args.truth_latents_path.empty())
        truth_lat = read_numeric_csv(args.truth_latents_path);
      const int n_series = static_cast<int>(lat.header.size()) / 3;
      const int T = static_cast<int>(lat.values.rows());
      std::vector<double> xs(T);
      for (int t = 0; t < T; ++t) xs[t] = t + 1;
      for (int s = 0; s < n_series; ++s) {
        std::vector<double> mean(T), lo(T), hi(T);
        for (int t = 0; t < T; ++t) {
          mean[t] = lat.values(t, 3 * s);
          lo[t] = lat.values(t, 3 * s + 1);
          hi[t] = lat.values(t, 3 * s + 2);
        }
        SvgPlot plot("log-volatility h1_" + std::to_string(s + 1) + " (" + runs.front().name +
                     ")");
        plot.add_band("band", xs, lo, hi, "#1f77b4");
        plot.add_line("mean", xs, mean, "#1f77b4");
        if (truth_lat && s < static_cast<int>(truth_lat->header.size()) &&
            truth_lat->values.rows() == T) {
          std::vector<double> tr(T);
          for (int t = 0; t < T; ++t) tr[t] = truth_lat->values(t, s);
          plot.add_line("truth", xs, tr, "#d62728");
        }
        const std::string file = "volatility_h1_" + std::to_string(s + 1) + ".svg";
        plot.write(path(file));
        manifest.outputs.push_back(file);
      }
    }
  }

  manifest.finish();
  manifest.write(path("manifest.json"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bayesian factor stochastic volatility with particle gibbs samplers"};
  app.set_version_flag("--version", fmsv::version_string);
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "draw a synthetic panel");
  simulate->add_option("--preset", sim.preset, "built-in design (paper-sim)");
  simulate->add_option("--config", sim.config_path, "simulation config file");
  simulate->add_option("--seed", sim.seed, "rng seed");
  simulate->add_option("--out", sim.out_dir, "output directory")->required();

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "run a sampler on a panel");
  fit_cmd->add_option("--data", fit.data_path, "observations csv (periods x series)")
      ->required();
  fit_cmd->add_option("--config", fit.config_path, "fit config file ([fit] section)");
  fit_cmd->add_option("--scheme", fit.scheme, "pg, pgas or mixed");
  fit_cmd->add_option("--particles", fit.particles, "particles per series");
  fit_cmd->add_option("--iters", fit.iters, "total sweeps");
  fit_cmd->add_option("--burnin", fit.burnin, "discarded sweeps");
  fit_cmd->add_option("--factors", fit.factors, "number of factors");
  fit_cmd->add_option("--prior", fit.prior, "loading prior: normal or ng");
  fit_cmd->add_option("--loading-var", fit.loading_var, "loading prior variance");
  fit_cmd->add_option("--phi-accept", fit.phi_accept,
                      "stationary-init correction: plus or stationary");
  fit_cmd->add_option("--seed", fit.seed, "rng seed");
  fit_cmd->add_option("--threads", fit.threads, "worker threads (0 = auto)");
  fit_cmd->add_option("--out", fit.out_dir, "output directory")->required();

  DiagnoseArgs diag;
  CLI::App* diagnose = app.add_subcommand("diagnose", "summarize and compare fit runs");
  diagnose->add_option("runs", diag.run_dirs, "fit output directories")->required();
  diagnose->add_option("--out", diag.out_dir, "output directory")->required();
  diagnose->add_option("--truth-params", diag.truth_params_path,
                       "truth_params.csv from simulate");
  diagnose->add_option("--truth-latents", diag.truth_latents_path,
                       "latents_h1_true.csv from simulate");
  diagnose->add_option("--trace", diag.trace_params, "parameters to trace-plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    for (const char* key :
         {"scheme", "particles", "iters", "burnin", "factors", "prior", "loading-var",
          "phi-accept", "seed", "threads"})
      fit.given[key] = fit_cmd->count(std::string("--") + key) > 0;
    if (simulate->parsed()) return cmd_simulate(sim);
    if (fit_cmd->parsed()) return cmd_fit(fit);
    return cmd_diagnose(diag);
  } catch (const fmsv::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fmsv::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {  // numerical failures and anything unforeseen
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
