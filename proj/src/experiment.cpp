#include "fedgreen/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fedgreen/clustering.hpp"
#include "fedgreen/csv.hpp"
#include "fedgreen/datagen.hpp"
#include "fedgreen/error.hpp"
#include "fedgreen/rng.hpp"

namespace fedgreen::experiment {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::ProfilePreset;

namespace {

std::ofstream open_out(const fs::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  return out;
}

void ensure_dir(const fs::path &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string join_rates(const std::vector<double> &p) {
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) out += ';';
    out += csv::fmt(p[i]);
  }
  return out;
}

clustering::Method method_of(const ExperimentConfig &cfg) {
  return cfg.cluster_method == "kmeans1d" ? clustering::Method::kmeans1d
                                          : clustering::Method::quantile;
}

LabeledDataset load_dataset(const ExperimentConfig &cfg) {
  if (cfg.dataset == config::DatasetSource::idx)
    return datagen::load_idx(cfg.idx_images, cfg.idx_labels, cfg.idx_limit);
  return datagen::make_blobs(cfg.blob_per_class, cfg.blob_classes, cfg.blob_dim, cfg.blob_spread,
                             cfg.global_seed);
}

}  // namespace

// --- population -----------------------------------------------------------

std::vector<ThetaWeight> preset_thetas(ProfilePreset preset) {
  switch (preset) {
    case ProfilePreset::real6:
      // Poland, Germany, UK, Spain, France, Sweden
      return {{895, 1}, {441, 1}, {236, 1}, {155, 1}, {47, 1}, {15, 1}};
    case ProfilePreset::simulated6:
      return {{0.01, 1}, {0.1, 1}, {1, 1}, {10, 1}, {100, 1}, {1000, 1}};
    case ProfilePreset::file:
      break;
  }
  fail(ErrorKind::invalid_input, "the file preset has no built-in values");
}

std::vector<ThetaWeight> read_profile_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open profile file " + path.string());
  std::vector<ThetaWeight> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cols = csv::split_line(line);
    if (out.empty() && line_no == 1 && cols[0].find("theta") != std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      ThetaWeight tw;
      tw.theta = csv::parse_double(cols.at(0));
      if (cols.size() > 1) tw.weight = csv::parse_double(cols[1]);
      if (!(tw.theta >= 0.0) || !(tw.weight > 0.0))
        fail(ErrorKind::invalid_input, "theta must be >= 0 and weight > 0");
      out.push_back(tw);
    } catch (const Error &e) {
      fail(ErrorKind::format, where + e.what());
    } catch (const std::out_of_range &) {
      fail(ErrorKind::format, where + "missing theta");
    }
  }
  if (out.empty()) fail(ErrorKind::format, path.string() + ": no theta values");
  return out;
}

std::vector<double> assign_thetas(std::span<const ThetaWeight> values, std::size_t n_clients) {
  if (values.empty()) fail(ErrorKind::invalid_input, "no theta values to assign");
  double total = 0.0;
  for (const auto &v : values) total += v.weight;
  const std::size_t k = values.size();
  std::vector<std::size_t> quota(k);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t given = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double exact = static_cast<double>(n_clients) * values[j].weight / total;
    quota[j] = static_cast<std::size_t>(std::floor(exact));
    given += quota[j];
    remainder.emplace_back(exact - std::floor(exact), j);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto &a, const auto &b) { return a.first > b.first; });
  for (std::size_t r = 0; given < n_clients; ++r, ++given) ++quota[remainder[r % k].second];

  std::vector<double> out;
  out.reserve(n_clients);
  for (std::size_t j = 0; out.size() < n_clients; j = (j + 1) % k) {
    if (quota[j] == 0) continue;
    --quota[j];
    out.push_back(values[j].theta);
  }
  return out;
}

std::vector<carbon::ClientEnergyProfile> build_population(const ExperimentConfig &cfg) {
  const auto values = cfg.carbon_profile == ProfilePreset::file
                          ? read_profile_file(cfg.profile_file)
                          : preset_thetas(cfg.carbon_profile);
  const auto thetas = assign_thetas(values, cfg.n_clients);
  std::vector<carbon::ClientEnergyProfile> out(cfg.n_clients);
  for (std::size_t i = 0; i < cfg.n_clients; ++i) {
    Rng rng(derive_seed(cfg.global_seed, {kTagPopulation, i}));
    auto draw = [&](double lo, double hi) {
      return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    auto &p = out[i];
    p.client_id = i;
    p.theta = thetas[i];
    p.f = draw(cfg.f_min, cfg.f_max);
    p.upload_U = draw(cfg.upload_min, cfg.upload_max);
    p.download_D = draw(cfg.download_min, cfg.download_max);
    p.e_cmp = cfg.e_client;
    p.e_idle = cfg.e_idle;
    p.e_r = cfg.e_r;
  }
  return out;
}

carbon::ModelCostParams cost_params(const ExperimentConfig &cfg) {
  return {cfg.model_size_mb, cfg.sample_time_s, cfg.local_epochs};
}

fedcore::FederatedConfig federated_config(const ExperimentConfig &cfg) {
  fedcore::FederatedConfig fc;
  fc.sample_count = cfg.sample_count();
  fc.local = {cfg.local_epochs, cfg.lr, cfg.batch_size};
  fc.global_seed = cfg.global_seed;
  fc.cost = cost_params(cfg);
  fc.parallel_clients = cfg.parallel_clients;
  return fc;
}

fedcore::FederatedState build_state(const ExperimentConfig &cfg) {
  config::validate(cfg);
  const auto data = load_dataset(cfg);
  const auto shards = datagen::dirichlet_partition(data, {cfg.alpha, cfg.n_clients, cfg.global_seed});

  fedcore::FederatedState state;
  std::vector<LabeledDataset> tests;
  for (std::size_t i = 0; i < cfg.n_clients; ++i) {
    const auto &shard = shards.clients[i];
    const auto n = shard.size();
    const auto n_train =
        static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(n) + 1e-9));
    if (n_train == 0 || n_train >= n) {
      state.client_train.push_back(shard);
      continue;
    }
    auto split = datagen::train_test_split(shard, cfg.train_fraction,
                                           derive_seed(cfg.global_seed, {kTagSplit, i}));
    state.client_train.push_back(std::move(split.train));
    tests.push_back(std::move(split.test));
  }
  if (tests.empty()) fail(ErrorKind::invalid_input, "no client has enough data for a test split");
  state.test = concatenate(tests);

  state.profiles = build_population(cfg);
  for (std::size_t i = 0; i < cfg.n_clients; ++i)
    state.profiles[i].dataset_size = state.client_train[i].size();

  const auto clients = clustering::thetas_of(state.profiles);
  const auto partition = clustering::cluster_by_theta(clients, cfg.clusters, method_of(cfg));
  state.plan = clustering::assign_rates(clients, partition, cfg.p_vector);
  state.global = widthnet::init_model(data.dim(), cfg.hidden, data.class_count, cfg.global_seed);
  return state;
}

// --- single run -------------------------------------------------------------

void write_summary_csv(std::ostream &os, const fedcore::RunOutcome &o) {
  os << "rounds,reached,final_accuracy,total_g,total_kg\n"
     << o.rounds_used << ',' << (o.reached_target ? 1 : 0) << ',' << csv::fmt(o.final_accuracy)
     << ',' << csv::fmt(o.total_emissions_g) << ',' << csv::fmt(o.total_emissions_g / 1000.0)
     << '\n';
}

ExperimentResult run_experiment(const ExperimentConfig &cfg, const std::optional<fs::path> &out_dir) {
  ExperimentResult res;
  res.state = build_state(cfg);
  res.outcome = fedcore::run_until(res.state, federated_config(cfg),
                                   {cfg.target_accuracy, cfg.rounds_max});
  if (!out_dir) return res;

  ensure_dir(*out_dir);
  {
    auto os = open_out(*out_dir / "rounds.csv");
    fedcore::write_rounds_csv(os, res.outcome.records);
  }
  {
    auto os = open_out(*out_dir / "ledger.csv");
    res.state.ledger.write_csv(os);
  }
  {
    auto os = open_out(*out_dir / "clusters.csv");
    clustering::write_plan_csv(os, res.state.plan, clustering::thetas_of(res.state.profiles));
  }
  {
    auto os = open_out(*out_dir / "summary.csv");
    write_summary_csv(os, res.outcome);
  }
  if (cfg.plots) {
    Series by_round, by_emission;
    for (const auto &r : res.outcome.records) {
      by_round.x.push_back(static_cast<double>(r.round));
      by_round.y.push_back(r.accuracy);
      by_emission.x.push_back(r.cumulative_emissions_g / 1000.0);
      by_emission.y.push_back(r.accuracy);
    }
    auto a = open_out(*out_dir / "accuracy_vs_rounds.svg");
    write_svg_plot(a, by_round, "communication round", "test accuracy");
    auto b = open_out(*out_dir / "accuracy_vs_emissions.svg");
    write_svg_plot(b, by_emission, "cumulative emissions (kg CO2)", "test accuracy");
  }
  return res;
}

// --- sweeps -------------------------------------------------------------------

SweepGrid parse_grid(const std::string &name) {
  if (name == "mu") return SweepGrid::mu;
  if (name == "sigma") return SweepGrid::sigma;
  if (name == "sigma3") return SweepGrid::sigma3;
  if (name == "cluster") return SweepGrid::cluster;
  if (name == "profile") return SweepGrid::profile;
  fail(ErrorKind::invalid_input,
       "unknown grid '" + name + "' (expected mu, sigma, sigma3, cluster or profile)");
}

std::string to_string(SweepGrid g) {
  switch (g) {
    case SweepGrid::mu: return "mu";
    case SweepGrid::sigma: return "sigma";
    case SweepGrid::sigma3: return "sigma3";
    case SweepGrid::cluster: return "cluster";
    case SweepGrid::profile: return "profile";
  }
  return "?";
}

std::vector<SweepCell> grid_cells(SweepGrid grid, const ExperimentConfig &base) {
  const auto prof = base.carbon_profile;
  auto cells = [prof](std::vector<std::vector<double>> ps) {
    std::vector<SweepCell> out;
    for (auto &p : ps) out.push_back({pselect::PVector{std::move(p)}, prof});
    return out;
  };
  switch (grid) {
    case SweepGrid::mu:
      return cells({{0.2}, {0.4}, {0.6}, {0.8}, {1.0}});
    case SweepGrid::sigma:
      return cells({{0.5, 0.7}, {0.4, 0.8}, {0.3, 0.9}, {0.2, 1.0}});
    case SweepGrid::sigma3:
      return cells({{0.5, 0.6, 0.7}, {0.4, 0.6, 0.8}, {0.3, 0.6, 0.9}, {0.2, 0.6, 1.0}});
    case SweepGrid::cluster:
      return cells({{0.6}, {0.4, 0.8}, {0.2, 0.6, 1.0}});
    case SweepGrid::profile:
      return {{pselect::PVector{base.p_vector}, ProfilePreset::real6},
              {pselect::PVector{base.p_vector}, ProfilePreset::simulated6}};
  }
  return {};
}

ExperimentConfig cell_config(const ExperimentConfig &base, const SweepCell &cell, std::uint64_t seed) {
  auto cfg = base;
  cfg.p_vector = cell.p.rates;
  cfg.clusters = cell.p.rates.size();
  cfg.carbon_profile = cell.profile;
  cfg.global_seed = seed;
  config::validate(cfg);
  return cfg;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig &base, SweepGrid grid,
                                const std::optional<fs::path> &out_dir) {
  const auto cells = grid_cells(grid, base);
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    for (std::size_t s = 0; s < base.seeds; ++s) {
      const auto seed = base.global_seed + s;
      const auto cfg = cell_config(base, cells[k], seed);
      std::optional<fs::path> dir;
      if (out_dir)
        dir = *out_dir / ("cell_" + std::to_string(k) + "_seed_" + std::to_string(seed));
      const auto res = run_experiment(cfg, dir);
      const auto st = pselect::p_stats(cells[k].p);
      SweepRow row;
      row.M = cfg.clusters;
      row.p = cells[k].p;
      row.mu = st.mu;
      row.sigma = st.sigma;
      row.E = cfg.local_epochs;
      row.alpha = cfg.alpha;
      row.profile = cfg.carbon_profile;
      row.seed = seed;
      row.rounds = res.outcome.rounds_used;
      row.reached = res.outcome.reached_target;
      row.final_accuracy = res.outcome.final_accuracy;
      row.total_g = res.outcome.total_emissions_g;
      rows.push_back(std::move(row));
    }
  }
  if (out_dir) {
    ensure_dir(*out_dir);
    auto os = open_out(*out_dir / "sweep.csv");
    write_sweep_csv(os, rows);
  }
  return rows;
}

void write_sweep_csv(std::ostream &os, std::span<const SweepRow> rows) {
  os << "M,p_vector,mu,sigma,E,alpha,profile,seed,rounds,reached,final_accuracy,total_g\n";
  for (const auto &r : rows)
    os << r.M << ',' << join_rates(r.p.rates) << ',' << csv::fmt(r.mu) << ',' << csv::fmt(r.sigma)
       << ',' << r.E << ',' << csv::fmt(r.alpha) << ',' << config::to_string(r.profile) << ','
       << r.seed << ',' << r.rounds << ',' << (r.reached ? 1 : 0) << ','
       << csv::fmt(r.final_accuracy) << ',' << csv::fmt(r.total_g) << '\n';
}

// --- optimize -----------------------------------------------------------------

std::vector<pselect::PVector> pilot_design(std::span<const double> candidates, std::size_t M) {
  std::vector<double> c(candidates.begin(), candidates.end());
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  if (c.empty()) fail(ErrorKind::invalid_input, "no candidate rates");
  const std::size_t width = std::max<std::size_t>(M, 2);
  const std::size_t low_half = width / 2;

  std::set<std::vector<double>> design;
  auto spread = [&](double lo, double hi) {
    std::vector<double> p(width, hi);
    std::fill(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(low_half), lo);
    design.insert(p);
  };
  const double lo = c.front(), mid = c[c.size() / 2], hi = c.back();
  for (double v : {lo, mid, hi}) design.insert(std::vector<double>(width, v));
  spread(lo, hi);
  if (mid != lo && mid != hi) spread(lo, mid);
  if (c.size() >= 4) spread(c[1], c[c.size() - 2]);

  std::vector<pselect::PVector> out;
  for (const auto &p : design) out.push_back({p});
  return out;
}

std::vector<double> cluster_masses(const ExperimentConfig &cfg) {
  const auto state = build_state(cfg);
  const auto params = cost_params(cfg);
  // Rank clusters by the rate they were given, which is dirtiest first.
  std::vector<std::size_t> order(state.plan.M());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return state.plan.mean_theta[a] > state.plan.mean_theta[b];
  });
  std::vector<double> A;
  for (auto m : order)
    A.push_back(carbon::cluster_A(state.profiles, state.plan.members[m], params).value);
  return A;
}

namespace {

void write_pilots_csv(std::ostream &os, std::span<const pselect::PilotRun> pilots) {
  os << "p_vector,mu,sigma,rounds\n";
  for (const auto &p : pilots)
    os << join_rates(p.p.rates) << ',' << csv::fmt(p.mu) << ',' << csv::fmt(p.sigma) << ','
       << csv::fmt(p.rounds) << '\n';
}

void write_optimize_csv(std::ostream &os, const OptimizeReport &r) {
  os << "p_vector,beta,lambda,log_c,residual,predicted_rounds,predicted_total_g,"
        "measured_rounds,measured_total_g,measured_reached\n";
  os << join_rates(r.grid.best.rates) << ',' << csv::fmt(r.fit.beta) << ','
     << csv::fmt(r.fit.lambda) << ',' << csv::fmt(r.fit.log_c) << ',' << csv::fmt(r.fit.residual)
     << ',' << csv::fmt(r.predicted_rounds) << ',' << csv::fmt(r.predicted_total_g) << ',';
  if (r.measured)
    os << r.measured->rounds_used << ',' << csv::fmt(r.measured->total_emissions_g) << ','
       << (r.measured->reached_target ? 1 : 0) << '\n';
  else
    os << ",,\n";
}

}  // namespace

OptimizeReport pilot_and_optimize(const ExperimentConfig &cfg, std::span<const double> candidates,
                                  const PilotRounds &inject, bool measure,
                                  const std::optional<fs::path> &out_dir) {
  config::validate(cfg);
  std::vector<double> cand(candidates.begin(), candidates.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  if (cand.empty()) fail(ErrorKind::invalid_input, "no candidate rates");
  for (double c : cand)
    if (!(c > 0.0 && c <= 1.0)) fail(ErrorKind::invalid_input, "candidate rates must lie in (0, 1]");
  const std::size_t M = cfg.clusters;

  OptimizeReport rep;
  rep.A = cluster_masses(cfg);
  const double sampled = static_cast<double>(cfg.sample_count()) / static_cast<double>(cfg.n_clients);

  if (cand.size() == 1) {
    // Nothing to choose between; no pilots are needed.
    rep.grid.best = pselect::PVector{std::vector<double>(M, cand[0])};
  } else {
    auto pilot_cfg = cfg;
    if (cfg.pilot_rounds_max) pilot_cfg.rounds_max = cfg.pilot_rounds_max;
    for (const auto &p : pilot_design(cand, M)) {
      double rounds;
      if (inject) {
        rounds = inject(p);
      } else {
        const auto run = run_experiment(cell_config(pilot_cfg, {p, cfg.carbon_profile}, cfg.global_seed));
        rounds = static_cast<double>(run.outcome.rounds_used);
      }
      rep.pilots.push_back(pselect::make_pilot(p, rounds));
    }
    try {
      rep.fit = pselect::fit_rate_law(rep.pilots);
    } catch (const Error &e) {
      if (e.kind() != ErrorKind::fit_failure) throw;
      fail(ErrorKind::fit_failure,
           std::string(e.what()) + "; widen the pilot design with more distinct candidate rates");
    }
    rep.grid = pselect::grid_search(cand, M, rep.A, rep.fit);
    rep.predicted_rounds = pselect::predict_rounds(rep.fit, rep.grid.best);
    rep.predicted_total_g = carbon::to_grams(rep.grid.best_objective) * sampled;
  }

  if (measure) {
    auto run_cfg = cell_config(cfg, {rep.grid.best, cfg.carbon_profile}, cfg.global_seed);
    rep.measured = run_experiment(run_cfg).outcome;
  }

  if (out_dir) {
    ensure_dir(*out_dir);
    {
      auto os = open_out(*out_dir / "pilot.csv");
      write_pilots_csv(os, rep.pilots);
    }
    {
      auto os = open_out(*out_dir / "ranked.csv");
      pselect::write_table_csv(os, rep.grid.table);
    }
    auto os = open_out(*out_dir / "optimize.csv");
    write_optimize_csv(os, rep);
  }
  return rep;
}

// --- plots --------------------------------------------------------------------

void write_svg_plot(std::ostream &os, const Series &s, const std::string &x_label,
                    const std::string &y_label) {
  const double W = 640, H = 400, left = 70, right = 20, top = 20, bottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!s.x.empty()) {
    x0 = *std::min_element(s.x.begin(), s.x.end());
    x1 = *std::max_element(s.x.begin(), s.x.end());
    y0 = std::min(0.0, *std::min_element(s.y.begin(), s.y.end()));
    y1 = std::max(1.0, *std::max_element(s.y.begin(), s.y.end()));
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\""
     << H - bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << H - bottom << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left << "\" y=\"" << H - bottom + 16 << "\">" << csv::fmt(x0) << "</text>\n";
  os << "<text x=\"" << W - right << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"end\">"
     << csv::fmt(x1) << "</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << H - bottom << "\" text-anchor=\"end\">"
     << csv::fmt(y0) << "</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">"
     << csv::fmt(y1) << "</text>\n";
  os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text transform=\"translate(16," << (top + H - bottom) / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << y_label << "</text>\n";
  os << "<polyline fill=\"none\" stroke=\"#1b7837\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < s.x.size(); ++i)
    os << (i ? " " : "") << csv::fmt(px(s.x[i])) << ',' << csv::fmt(py(s.y[i]));
  os << "\"/>\n</svg>\n";
}

}  // namespace fedgreen::experiment
