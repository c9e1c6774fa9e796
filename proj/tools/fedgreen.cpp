#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include "fedgreen/config.hpp"
#include "fedgreen/csv.hpp"
#include "fedgreen/error.hpp"
#include "fedgreen/experiment.hpp"

using namespace fedgreen;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_rates(const std::string &list) {
  std::vector<double> out;
  for (const auto &s : csv::split_line(list, ',')) {
    auto t = s;
    t.erase(0, t.find_first_not_of(' '));
    t.erase(t.find_last_not_of(' ') + 1);
    out.push_back(csv::parse_double(t));
  }
  return out;
}

int cmd_run(const fs::path &cfg_path, const fs::path &out) {
  const auto cfg = config::load_config(cfg_path);
  const auto res = experiment::run_experiment(cfg, out);
  const auto &o = res.outcome;
  std::cout << "rounds " << o.rounds_used << (o.reached_target ? " (target reached)" : " (cap)")
            << "\nfinal accuracy " << csv::fmt(o.final_accuracy) << "\ntotal emissions "
            << csv::fmt(o.total_emissions_g) << " g\nartifacts in " << out.string() << "\n";
  return 0;
}

int cmd_sweep(const fs::path &cfg_path, const std::string &grid, const fs::path &out) {
  const auto cfg = config::load_config(cfg_path);
  const auto rows = experiment::run_sweep(cfg, experiment::parse_grid(grid), out);
  experiment::write_sweep_csv(std::cout, rows);
  return 0;
}

int cmd_optimize(const fs::path &cfg_path, const std::string &candidates, bool measure,
                 const fs::path &out) {
  const auto cfg = config::load_config(cfg_path);
  const auto rates = parse_rates(candidates);
  const auto rep = experiment::pilot_and_optimize(cfg, rates, {}, measure, out);
  std::cout << "chosen p:";
  for (double p : rep.grid.best.rates) std::cout << ' ' << csv::fmt(p);
  std::cout << "\n";
  if (!rep.pilots.empty())
    std::cout << "fit beta " << csv::fmt(rep.fit.beta) << " lambda " << csv::fmt(rep.fit.lambda)
              << " log_c " << csv::fmt(rep.fit.log_c) << " residual "
              << csv::fmt(rep.fit.residual) << "\npredicted rounds "
              << csv::fmt(rep.predicted_rounds) << ", predicted total "
              << csv::fmt(rep.predicted_total_g) << " g\n";
  if (rep.measured)
    std::cout << "measured rounds " << rep.measured->rounds_used << ", measured total "
              << csv::fmt(rep.measured->total_emissions_g) << " g\n";
  return 0;
}

int cmd_inspect(const fs::path &ledger_path) {
  std::ifstream in(ledger_path);
  if (!in) fail(ErrorKind::io, "cannot open " + ledger_path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "round,client_id,cluster,p,t_cmp_s,t_com_s,c_cmp_g,c_com_g,c_total_g")
    fail(ErrorKind::format, ledger_path.string() + ": not a ledger file (unexpected header)");

  std::map<long long, double> per_round, per_client, per_cluster;
  double total = 0.0;
  std::size_t entries = 0, mismatched = 0;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    const auto cols = csv::split_line(line);
    if (cols.size() != 9)
      fail(ErrorKind::format, ledger_path.string() + ":" + std::to_string(line_no) +
                                  ": expected 9 columns");
    const double c_cmp = csv::parse_double(cols[6]);
    const double c_com = csv::parse_double(cols[7]);
    const double c_total = csv::parse_double(cols[8]);
    if (std::abs(c_cmp + c_com - c_total) > 1e-12 * std::max(1.0, std::abs(c_total))) ++mismatched;
    per_round[csv::parse_int(cols[0])] += c_total;
    per_client[csv::parse_int(cols[1])] += c_total;
    per_cluster[csv::parse_int(cols[2])] += c_total;
    total += c_total;
    ++entries;
  }
  std::cout << "entries " << entries << ", rounds " << per_round.size() << ", clients "
            << per_client.size() << "\ntotal " << csv::fmt(total) << " g ("
            << csv::fmt(total / 1000.0) << " kg)\n";
  std::cout << "cluster,total_g\n";
  for (const auto &[c, g] : per_cluster) std::cout << c << ',' << csv::fmt(g) << '\n';
  if (mismatched) {
    std::cout << mismatched << " entries where c_cmp + c_com != c_total\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Carbon-aware federated learning simulator"};
  app.require_subcommand(1);

  std::string cfg_path, grid, candidates, ledger;
  std::string out = "out";
  bool measure = false;

  auto *run = app.add_subcommand("run", "run one experiment to target accuracy or round cap");
  run->add_option("config", cfg_path, "config file")->required();
  run->add_option("--out", out, "output directory");

  auto *sweep = app.add_subcommand("sweep", "run a sensitivity grid");
  sweep->add_option("config", cfg_path, "base config file")->required();
  sweep->add_option("--grid", grid, "mu, sigma, sigma3, cluster or profile")->required();
  sweep->add_option("--out", out, "output directory");

  auto *opt = app.add_subcommand("optimize", "fit the rate law from pilots and pick p");
  opt->add_option("config", cfg_path, "config file")->required();
  opt->add_option("--candidates", candidates, "comma-separated candidate rates")->required();
  opt->add_flag("--measure", measure, "also run the chosen p and report measured cost");
  opt->add_option("--out", out, "output directory");

  auto *inspect = app.add_subcommand("inspect", "summarize a ledger CSV");
  inspect->add_option("ledger", ledger, "ledger.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(cfg_path, out);
    if (*sweep) return cmd_sweep(cfg_path, grid, out);
    if (*opt) return cmd_optimize(cfg_path, candidates, measure, out);
    if (*inspect) return cmd_inspect(ledger);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
