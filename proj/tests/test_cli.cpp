#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fmsv/io/csv.hpp"
#include "fmsv/sampler.hpp"
#include "fmsv/version.hpp"

using namespace fmsv;
namespace fs = std::filesystem;

namespace {

const char* cli = FMSV_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("fmsv_cli_" + std::to_string(Catch::rngSeed()) +
                                                "_" + std::to_string(counter()++))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string dir(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

// run the binary with output captured, return the exit status
int run_cli(const TempDir& tmp, const std::string& args) {
  const std::string log = tmp.dir("last_output.txt");
  const int rc = std::system((std::string(cli) + " " + args + " > " + log + " 2>&1").c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string last_output(const TempDir& tmp) { return slurp(tmp.dir("last_output.txt")); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// a small two-series design the fit and diagnose tests share
std::string write_sim_config(const TempDir& tmp) {
  const std::string path = tmp.dir("sim.ini");
  write_text(path,
             "[model]\n"
             "p = 2\nk = 1\nT = 25\n"
             "[idio]\n"
             "mu = -0.5\nphi = 0.9\ntau2 = 0.05\nrho = -0.3\n"
             "[factor]\n"
             "phi = 0.95\ntau2 = 0.05\n"
             "[loadings]\n"
             "row_1 = 1\nrow_2 = 0.7\n");
  return path;
}

int simulate_small(const TempDir& tmp, const std::string& out, std::uint64_t seed) {
  return run_cli(tmp, "simulate --config " + write_sim_config(tmp) + " --seed " +
                          std::to_string(seed) + " --out " + tmp.dir(out));
}

int fit_small(const TempDir& tmp, const std::string& sim, const std::string& out,
              const std::string& scheme = "pgas", const std::string& extra = "",
              std::uint64_t seed = 3, int burnin = 10) {
  return run_cli(tmp, "fit --data " + tmp.dir(sim) + "/observations.csv" +
                          " --factors 1 --scheme " + scheme +
                          " --particles 20 --iters 30 --burnin " + std::to_string(burnin) +
                          " --seed " + std::to_string(seed) + " --out " + tmp.dir(out) + " " +
                          extra);
}

}  // namespace

TEST_CASE("help and version requests exit cleanly") {
  TempDir tmp;
  REQUIRE(run_cli(tmp, "--help") == 0);
  REQUIRE(run_cli(tmp, "simulate --help") == 0);
  REQUIRE(run_cli(tmp, "fit --help") == 0);
  REQUIRE(run_cli(tmp, "--version") == 0);
  REQUIRE(last_output(tmp).find(version_string) != std::string::npos);
}

TEST_CASE("usage mistakes exit with code 1") {
  TempDir tmp;
  REQUIRE(run_cli(tmp, "") == 1);
  REQUIRE(run_cli(tmp, "--no-such-flag") == 1);
  REQUIRE(run_cli(tmp, "simulate --out " + tmp.dir("x")) == 1);  // no preset, no config
  REQUIRE(run_cli(tmp, "simulate --preset unknown --out " + tmp.dir("x")) == 1);
  REQUIRE(run_cli(tmp, "fit --data whatever.csv") == 1);  // --out is required

  REQUIRE(simulate_small(tmp, "sim", 1) == 0);
  REQUIRE(fit_small(tmp, "sim", "f", "nope") == 1);
  REQUIRE(last_output(tmp).find("error:") != std::string::npos);
  REQUIRE(fit_small(tmp, "sim", "f", "pgas", "--prior banana") == 1);
  REQUIRE(fit_small(tmp, "sim", "f", "pgas", "", 3, 30) == 1);  // burnin >= iters
}

TEST_CASE("unreadable or malformed data exits with code 2") {
  TempDir tmp;
  REQUIRE(run_cli(tmp, "fit --data " + tmp.dir("missing.csv") + " --out " + tmp.dir("f")) == 2);

  const std::string bad = tmp.dir("bad.csv");
  write_text(bad, "y1,y2\n1,2\n3,metal\n");
  REQUIRE(run_cli(tmp, "fit --data " + bad + " --out " + tmp.dir("f")) == 2);
  REQUIRE(last_output(tmp).find("column 'y2'") != std::string::npos);

  REQUIRE(run_cli(tmp, "simulate --config " + tmp.dir("absent.ini") + " --out " +
                           tmp.dir("s")) == 2);
}

TEST_CASE("numerical breakdown exits with code 3") {
  TempDir tmp;
  // observations this extreme zero out every particle weight in the first sweep
  const std::string path = tmp.dir("silly.csv");
  write_text(path, "y1\n1e200\n-1e200\n1e200\n-1e200\n1e200\n");
  REQUIRE(run_cli(tmp, "fit --data " + path + " --factors 1 --particles 10 --iters 5 "
                       "--burnin 1 --out " +
                           tmp.dir("f")) == 3);
  REQUIRE(last_output(tmp).find("error:") != std::string::npos);
}

TEST_CASE("simulate writes the panel and a re-runnable manifest") {
  TempDir tmp;
  REQUIRE(simulate_small(tmp, "sim", 5) == 0);

  for (const char* name : {"observations.csv", "latents_h1_true.csv", "latents_h2_true.csv",
                           "factors_true.csv", "truth_params.csv", "manifest.json"})
    REQUIRE(fs::exists(tmp.dir("sim") + "/" + std::string(name)));

  const CsvTable obs = read_numeric_csv(tmp.dir("sim") + "/observations.csv");
  REQUIRE(obs.header == std::vector<std::string>{"y1", "y2"});
  REQUIRE(obs.values.rows() == 25);

  const CsvTable truth = read_numeric_csv(tmp.dir("sim") + "/truth_params.csv");
  REQUIRE(truth.header == param_names(ModelDims{2, 1, 25}, PriorType::normal));
  REQUIRE(truth.values.rows() == 1);
  REQUIRE(truth.values(0, 0) == -0.5);  // mu_1 as configured

  std::ifstream mi(tmp.dir("sim") + "/manifest.json");
  const auto manifest = nlohmann::ordered_json::parse(mi);
  REQUIRE(manifest.at("command") == "simulate");
  REQUIRE(manifest.at("seed") == 5);
  REQUIRE(manifest.at("config").at("model").at("T") == "25");
  REQUIRE(manifest.at("outputs").size() == 5);
}

TEST_CASE("simulate is reproducible by seed") {
  TempDir tmp;
  REQUIRE(simulate_small(tmp, "a", 7) == 0);
  REQUIRE(simulate_small(tmp, "b", 7) == 0);
  REQUIRE(simulate_small(tmp, "c", 8) == 0);
  const std::string a = slurp(tmp.dir("a") + "/observations.csv");
  REQUIRE(a == slurp(tmp.dir("b") + "/observations.csv"));
  REQUIRE(a != slurp(tmp.dir("c") + "/observations.csv"));
}

TEST_CASE("the built-in preset draws the documented panel") {
  TempDir tmp;
  REQUIRE(run_cli(tmp, "simulate --preset paper-sim --seed 2 --out " + tmp.dir("p")) == 0);
  const CsvTable obs = read_numeric_csv(tmp.dir("p") + "/observations.csv");
  REQUIRE(obs.values.rows() == 1000);
  REQUIRE(obs.values.cols() == 10);
  const CsvTable truth = read_numeric_csv(tmp.dir("p") + "/truth_params.csv");
  REQUIRE(static_cast<int>(truth.header.size()) ==
          4 * 10 + 2 * 2 + free_loading_count(10, 2));
}

TEST_CASE("fit writes draws, summaries and chain statistics") {
  TempDir tmp;
  REQUIRE(simulate_small(tmp, "sim", 11) == 0);
  REQUIRE(fit_small(tmp, "sim", "fit") == 0);

  const CsvTable draws = read_numeric_csv(tmp.dir("fit") + "/draws.csv");
  REQUIRE(draws.header == param_names(ModelDims{2, 1, 25}, PriorType::normal));
  REQUIRE(draws.values.rows() == 20);  // iters - burnin

  const CsvTable ll = read_numeric_csv(tmp.dir("fit") + "/loglik.csv");
  REQUIRE(ll.header == std::vector<std::string>{"cond_loglik", "log_prior"});
  REQUIRE(ll.values.rows() == 20);

  const CsvTable h1 = read_numeric_csv(tmp.dir("fit") + "/latents_h1_summary.csv");
  REQUIRE(h1.values.rows() == 25);
  REQUIRE(h1.header.size() == 6);  // mean, lo, hi per series
  REQUIRE(h1.header[0] == "h1_1_mean");
  REQUIRE((h1.values.col(1).array() <= h1.values.col(0).array()).all());
  REQUIRE((h1.values.col(2).array() >= h1.values.col(0).array()).all());

  std::ifstream cs(tmp.dir("fit") + "/chainstats.json");
  const auto stats = nlohmann::ordered_json::parse(cs);
  REQUIRE(stats.at("scheme") == "pgas");
  REQUIRE(stats.at("iterations") == 30);
  REQUIRE(stats.at("iact").size() == draws.header.size());
  REQUIRE(stats.at("acceptance").contains("tau2"));
  REQUIRE(stats.at("tnv").is_number());

  std::ifstream mi(tmp.dir("fit") + "/manifest.json");
  const auto manifest = nlohmann::ordered_json::parse(mi);
  REQUIRE(manifest.at("command") == "fit");
  REQUIRE(manifest.at("config").at("fit").at("scheme") == "pgas");
  REQUIRE(manifest.at("outputs").size() == 6);
}

TEST_CASE("fit draws are reproducible by seed") {
  TempDir tmp;
  REQUIRE(simulate_small(tmp, "sim", 13) == 0);
  REQUIRE(fit_small(tmp, "sim", "f1") == 0);
  REQUIRE(fit_small(tmp, "sim", "f2") == 0);
  REQUIRE(fit_small(tmp, "sim", "f3", "pgas", "", 4) == 0);
  const std::string one = slurp(tmp.dir("f1") + "/draws.csv");
  REQUIRE(one == slurp(tmp.dir("f2") + "/draws.csv"));
  REQUIRE(one != slurp(tmp.dir("f3") + "/draws.csv"));
}

TEST_CASE("config file values apply unless a flag overrides them") {
  TempDir tmp;
  REQUIRE(simulate_small(tmp, "sim", 17) == 0);
  const std::string cfg = tmp.dir("fit.ini");
  write_text(cfg,
             "[fit]\n"
             "scheme = pg\n"
             "particles = 20\n"
             "iters = 26\n"
             "burnin = 6\n"
             "seed = 9\n");

  // --scheme on the command line beats the file; iters comes from the file
  REQUIRE(run_cli(tmp, "fit --data " + tmp.dir("sim") + "/observations.csv --config " + cfg +
                           " --scheme pgas --out " + tmp.dir("fit")) == 0);
  std::ifstream mi(tmp.dir("fit") + "/manifest.json");
  const auto manifest = nlohmann::ordered_json::parse(mi);
  REQUIRE(manifest.at("config").at("fit").at("scheme") == "pgas");
  REQUIRE(manifest.at("config").at("fit").at("iters") == "26");
  REQUIRE(manifest.at("seed") == 9);
  const CsvTable draws = read_numeric_csv(tmp.dir("fit") + "/draws.csv");
  REQUIRE(draws.values.rows() == 20);
}

TEST_CASE("diagnose summarizes runs and plots what it is asked to") {
  TempDir tmp;
  REQUIRE(simulate_small(tmp, "sim", 19) == 0);
  REQUIRE(fit_small(tmp, "sim", "fit") == 0);

  REQUIRE(run_cli(tmp, "diagnose " + tmp.dir("fit") + " --truth-params " + tmp.dir("sim") +
                           "/truth_params.csv --trace mu_1 --trace B_2_1 --out " +
                           tmp.dir("diag")) == 0);

  const std::string summary = slurp(tmp.dir("diag") + "/summary.csv");
  REQUIRE(summary.rfind("run,param,mean,sd,p5,p50,p95,p0.5,p99.5,iact,truth,in_ci99", 0) == 0);
  REQUIRE(summary.find("mu_1") != std::string::npos);
  // truth was supplied, so the coverage column is populated with 0/1
  REQUIRE((summary.find(",1\n") != std::string::npos ||
           summary.find(",0\n") != std::string::npos));

  const std::string comparison = slurp(tmp.dir("diag") + "/comparison.csv");
  REQUIRE(comparison.rfind("run,seconds_per_iteration,iact_mean,tnv,rel_tnv", 0) == 0);

  REQUIRE(fs::exists(tmp.dir("diag") + "/dic.csv"));
  REQUIRE(fs::exists(tmp.dir("diag") + "/trace_mu_1.svg"));
  REQUIRE(fs::exists(tmp.dir("diag") + "/trace_B_2_1.svg"));
  REQUIRE(slurp(tmp.dir("diag") + "/trace_mu_1.svg").find("<polyline") != std::string::npos);

  // a run directory without outputs is a data error
  REQUIRE(run_cli(tmp, "diagnose " + tmp.dir("void") + " --out " + tmp.dir("d2")) == 2);
}

TEST_CASE("diagnose compares several runs on one table") {
  TempDir tmp;
  REQUIRE(simulate_small(tmp, "sim", 23) == 0);
  REQUIRE(fit_small(tmp, "sim", "fa") == 0);
  REQUIRE(fit_small(tmp, "sim", "fb", "pg") == 0);
  REQUIRE(run_cli(tmp, "diagnose " + tmp.dir("fa") + " " + tmp.dir("fb") + " --out " +
                           tmp.dir("diag")) == 0);
  const std::string comparison = slurp(tmp.dir("diag") + "/comparison.csv");
  REQUIRE(comparison.find("fa") != std::string::npos);
  REQUIRE(comparison.find("fb") != std::string::npos);
  // one of the runs anchors the relative column at exactly 1
  REQUIRE(comparison.find(",1\n") != std::string::npos);
}
