#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedgreen/carbon.hpp"
#include "fedgreen/config.hpp"
#include "fedgreen/fedcore.hpp"
#include "fedgreen/pselect.hpp"

// Orchestration: turns a config into a federated state, runs it, and writes
// the CSV (and optional SVG) artifacts.
namespace fedgreen::experiment {

struct ThetaWeight {
  double theta = 0.0;
  double weight = 1.0;
};

// Country intensities (gCO2/kWh) and the log-spaced simulated set.
std::vector<ThetaWeight> preset_thetas(config::ProfilePreset preset);

// `theta[,weight]` per line, '#' comments, optional header line.
std::vector<ThetaWeight> read_profile_file(const std::filesystem::path &path);

// Per-value client counts by largest remainder, then handed out round-robin
// over values with quota left, so equal weights give client i value i mod k.
std::vector<double> assign_thetas(std::span<const ThetaWeight> values, std::size_t n_clients);

// Profiles with ids 0..N-1; f, U and D are drawn uniformly from the config
// ranges with a stream seeded per client. dataset_size is left at 1 for
// build_state to fill in.
std::vector<carbon::ClientEnergyProfile> build_population(const config::ExperimentConfig &cfg);

carbon::ModelCostParams cost_params(const config::ExperimentConfig &cfg);

// Dataset, Dirichlet split, per-client train/test split with pooled test
// set, population, clustering and initial model. Clients with fewer than two
// rows keep everything for training.
fedcore::FederatedState build_state(const config::ExperimentConfig &cfg);

fedcore::FederatedConfig federated_config(const config::ExperimentConfig &cfg);

struct ExperimentResult {
  fedcore::RunOutcome outcome;
  fedcore::FederatedState state;
};

// Runs to target or cap. When out_dir is set, writes rounds.csv, ledger.csv,
// clusters.csv, summary.csv and, with cfg.plots, two SVG plots.
ExperimentResult run_experiment(const config::ExperimentConfig &cfg,
                                const std::optional<std::filesystem::path> &out_dir = {});

void write_summary_csv(std::ostream &os, const fedcore::RunOutcome &outcome);

// --- sweeps -------------------------------------------------------------

enum class SweepGrid { mu, sigma, sigma3, cluster, profile };

SweepGrid parse_grid(const std::string &name);
std::string to_string(SweepGrid g);

struct SweepCell {
  pselect::PVector p;
  config::ProfilePreset profile = config::ProfilePreset::real6;
};

// The cells of a grid before seeds are applied. mu: single cluster at
// 0.2..1.0; sigma: two clusters around 0.6 with sigma 0.1..0.4; sigma3: three
// clusters 0.6 -+ d for sigma ~0.08..0.33; cluster: M = 1, 2, 3 at mean 0.6;
// profile: the config's p on real6 and simulated6.
std::vector<SweepCell> grid_cells(SweepGrid grid, const config::ExperimentConfig &base);

struct SweepRow {
  std::size_t M = 0;
  pselect::PVector p;
  double mu = 0.0;
  double sigma = 0.0;
  std::size_t E = 1;
  double alpha = 0.0;
  config::ProfilePreset profile = config::ProfilePreset::real6;
  std::uint64_t seed = 0;
  std::size_t rounds = 0;
  bool reached = false;
  double final_accuracy = 0.0;
  double total_g = 0.0;
};

// Config for one cell: base with p, clusters and profile replaced.
config::ExperimentConfig cell_config(const config::ExperimentConfig &base, const SweepCell &cell,
                                     std::uint64_t seed);

// Every cell for seeds global_seed .. global_seed + seeds - 1. Rows come back
// in (cell, seed) order. With out_dir, each cell's run artifacts go to
// out_dir/cell_<k>_seed_<s> and the table to out_dir/sweep.csv.
std::vector<SweepRow> run_sweep(const config::ExperimentConfig &base, SweepGrid grid,
                                const std::optional<std::filesystem::path> &out_dir = {});

void write_sweep_csv(std::ostream &os, std::span<const SweepRow> rows);

// --- pilot fitting and rate choice --------------------------------------

// Stand-in for a pilot run: rounds for a given p vector.
using PilotRounds = std::function<double(const pselect::PVector &)>;

// Pilot p vectors drawn from the candidates: uniform vectors at the low,
// middle and high candidate, plus spread vectors pairing low with high
// halves, so that both mu and sigma vary. Always at least two clusters.
std::vector<pselect::PVector> pilot_design(std::span<const double> candidates, std::size_t M);

// A_m per cluster in rate order: entry 0 is the dirtiest cluster (which gets
// the smallest rate).
std::vector<double> cluster_masses(const config::ExperimentConfig &cfg);

struct OptimizeReport {
  std::vector<pselect::PilotRun> pilots;
  pselect::RateLawFit fit;
  std::vector<double> A;
  pselect::GridResult grid;
  double predicted_rounds = 0.0;
  double predicted_total_g = 0.0;  // scaled by the sampled fraction of clients
  std::optional<fedcore::RunOutcome> measured;
};

// Runs (or injects) pilots, fits the rate law, grid-searches the cfg.clusters
// rate vector and, when `measure` is set, runs the chosen vector. With
// out_dir writes pilot.csv, ranked.csv and optimize.csv.
OptimizeReport pilot_and_optimize(const config::ExperimentConfig &cfg,
                                  std::span<const double> candidates,
                                  const PilotRounds &inject = {}, bool measure = false,
                                  const std::optional<std::filesystem::path> &out_dir = {});

// --- plots ---------------------------------------------------------------

struct Series {
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG line plot.
void write_svg_plot(std::ostream &os, const Series &series, const std::string &x_label,
                    const std::string &y_label);

}  // namespace fedgreen::experiment
