#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "fedgreen/config.hpp"
#include "fedgreen/csv.hpp"
#include "fedgreen/error.hpp"
#include "fedgreen/experiment.hpp"

using namespace fedgreen;
using namespace fedgreen::experiment;
using config::ExperimentConfig;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  return config::parse_config(R"(
n_clients = 6
sample_fraction = 0.5
rounds_max = 12
target_accuracy = 0.99
lr = 0.1
alpha = 1
hidden = 8, 8
blob_per_class = 30
blob_classes = 4
blob_dim = 5
blob_spread = 0.3
global_seed = 3
)");
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("fedgreen_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string error_text(const std::string &cfg) {
  try {
    (void)config::parse_config(cfg);
  } catch (const Error &e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("empty config gives the defaults") {
  const auto c = config::parse_config("");
  CHECK(c.n_clients == 80);
  CHECK(c.sample_count() == 8);
  CHECK(c.batch_size == 16);
  CHECK(c.lr == 0.01);
  CHECK(c.e_idle == 10.0);
  CHECK(c.e_r == 4.0);
  CHECK(c.e_client == 40.0);
  CHECK(c == ExperimentConfig{});
  CHECK(config::parse_config("# only a comment\n\n   \n") == ExperimentConfig{});
}

TEST_CASE("config errors name the key and line") {
  const auto neg = error_text("\nn_clients = -1\n");
  CHECK(neg.find("n_clients") != std::string::npos);
  CHECK(neg.find("line 2") != std::string::npos);
  CHECK(error_text("n_client = 5").find("unknown key 'n_client'") != std::string::npos);
  CHECK(error_text("lr = fast").find("lr") != std::string::npos);
  CHECK(error_text("no equals sign").find("line 1") != std::string::npos);
  CHECK(error_text("lr = 0.1\nlr = 0.2").find("duplicate") != std::string::npos);
  CHECK(error_text("clusters = 2\np_vector = 0.5").find("p_vector") != std::string::npos);
  CHECK(error_text("p_vector = 1, 0.5").find("ascending") != std::string::npos);
  CHECK(error_text("p_vector = 1.5").find("(0, 1]") != std::string::npos);
  CHECK(error_text("carbon_profile = file").find("profile_file") != std::string::npos);
  CHECK_THROWS_AS(config::load_config("/nonexistent/file.conf"), Error);
}

TEST_CASE("serialize round trip") {
  auto c = small_config();
  CHECK(config::parse_config(config::serialize(c)) == c);
  c.p_vector = {0.1, 0.30000000000000004, 1.0};
  c.clusters = 3;
  c.carbon_profile = config::ProfilePreset::simulated6;
  c.cluster_method = "kmeans1d";
  c.global_seed = std::numeric_limits<std::uint64_t>::max();
  c.plots = true;
  CHECK(config::parse_config(config::serialize(c)) == c);
  CHECK(config::parse_config(config::serialize(ExperimentConfig{})) == ExperimentConfig{});
}

TEST_CASE("population presets") {
  auto c = small_config();
  c.carbon_profile = config::ProfilePreset::real6;
  c.n_clients = 6;
  auto pop = build_population(c);
  std::multiset<double> got;
  for (const auto &p : pop) got.insert(p.theta);
  CHECK(got == std::multiset<double>{895, 441, 236, 155, 47, 15});

  c.carbon_profile = config::ProfilePreset::simulated6;
  c.n_clients = 12;
  pop = build_population(c);
  std::map<double, int> hist;
  for (const auto &p : pop) ++hist[p.theta];
  CHECK(hist.size() == 6);
  for (const auto &[t, n] : hist) CHECK(n == 2);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    CHECK(pop[i].client_id == i);
    CHECK(pop[i].f >= c.f_min);
    CHECK(pop[i].f <= c.f_max);
    CHECK(pop[i].e_cmp == 40.0);
  }
  CHECK(build_population(c) == pop);
  c.global_seed += 1;
  CHECK_FALSE(build_population(c) == pop);
}

TEST_CASE("weighted theta assignment and profile files") {
  const std::vector<ThetaWeight> vals{{10, 3}, {20, 1}};
  const auto t = assign_thetas(vals, 8);
  CHECK(std::count(t.begin(), t.end(), 10.0) == 6);
  CHECK(std::count(t.begin(), t.end(), 20.0) == 2);

  const auto dir = scratch("profile");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "p.csv");
    f << "theta,weight\n# comment\n100,1\n5,2\n";
  }
  auto c = small_config();
  c.carbon_profile = config::ProfilePreset::file;
  c.profile_file = (dir / "p.csv").string();
  const auto pop = build_population(c);
  CHECK(std::count_if(pop.begin(), pop.end(), [](auto &p) { return p.theta == 5.0; }) == 4);
  {
    std::ofstream f(dir / "bad.csv");
    f << "100\nabc\n";
  }
  c.profile_file = (dir / "bad.csv").string();
  try {
    (void)build_population(c);
    FAIL("expected format error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::format);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("state construction") {
  const auto c = small_config();
  const auto s = build_state(c);
  CHECK(s.client_train.size() == 6);
  CHECK(s.profiles.size() == 6);
  std::size_t rows = s.test.size();
  for (std::size_t i = 0; i < 6; ++i) {
    rows += s.client_train[i].size();
    CHECK(s.profiles[i].dataset_size == s.client_train[i].size());
  }
  CHECK(rows == 120);
  CHECK(s.global.input_dim == 5);
  CHECK(s.global.class_count == 4);
  CHECK(s.global.hidden_widths() == std::vector<std::size_t>{8, 8});
  CHECK(build_state(c).global == s.global);
}

TEST_CASE("run artifacts are reproducible and consistent") {
  auto c = small_config();
  c.clusters = 2;
  c.p_vector = {0.5, 1.0};
  c.plots = true;
  const auto a = scratch("run_a"), b = scratch("run_b");
  const auto res = run_experiment(c, a);
  (void)run_experiment(c, b);
  for (const char *f : {"rounds.csv", "ledger.csv", "clusters.csv", "summary.csv",
                        "accuracy_vs_rounds.svg", "accuracy_vs_emissions.svg"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto &o = res.outcome;
  CHECK(o.total_emissions_g == o.records.back().cumulative_emissions_g);
  CHECK(o.total_emissions_g == res.state.ledger.total_g());
  CHECK(res.state.ledger.consistent());

  std::istringstream summary(slurp(a / "summary.csv"));
  std::string header, row;
  std::getline(summary, header);
  std::getline(summary, row);
  CHECK(header == "rounds,reached,final_accuracy,total_g,total_kg");
  CHECK(std::stod(row.substr(row.find_last_of(',') + 1)) * 1000.0 ==
        doctest::Approx(o.total_emissions_g).epsilon(1e-12));
}

TEST_CASE("sweep grids") {
  auto base = small_config();
  base.rounds_max = 3;
  base.seeds = 2;

  const auto mu = run_sweep(base, SweepGrid::mu);
  REQUIRE(mu.size() == 10);
  std::set<double> mus;
  for (const auto &r : mu) {
    CHECK(r.sigma == 0.0);
    CHECK(r.M == 1);
    mus.insert(r.mu);
  }
  CHECK(mus.size() == 5);

  for (auto g : {SweepGrid::sigma, SweepGrid::sigma3}) {
    const auto rows = run_sweep(base, g);
    CHECK(rows.size() == 8);
    for (const auto &r : rows) CHECK(std::abs(r.mu - 0.6) <= 1e-12);
  }
  const auto s2 = grid_cells(SweepGrid::sigma, base);
  const double want2[] = {0.1, 0.2, 0.3, 0.4};
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(pselect::p_stats(s2[k].p).sigma == doctest::Approx(want2[k]).epsilon(1e-12));
  const auto s3 = grid_cells(SweepGrid::sigma3, base);
  const double want3[] = {0.08, 0.16, 0.24, 0.32};
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(std::abs(pselect::p_stats(s3[k].p).sigma - want3[k]) < 0.01);

  const auto prof = grid_cells(SweepGrid::profile, base);
  REQUIRE(prof.size() == 2);
  CHECK(prof[0].profile == config::ProfilePreset::real6);
  CHECK(prof[1].profile == config::ProfilePreset::simulated6);
  CHECK_THROWS_AS(parse_grid("nope"), Error);

  SUBCASE("the full-width single-cluster cell is a plain run") {
    auto fedavg = base;
    fedavg.global_seed = base.global_seed + 1;
    const auto direct = run_experiment(fedavg).outcome;
    const auto &cell = mu[9];
    REQUIRE(cell.mu == 1.0);
    CHECK(cell.rounds == direct.rounds_used);
    CHECK(cell.total_g == direct.total_emissions_g);
    CHECK(cell.final_accuracy == direct.final_accuracy);
  }
  SUBCASE("sweep files are reproducible") {
    base.seeds = 1;
    const auto a = scratch("sweep_a"), b = scratch("sweep_b");
    (void)run_sweep(base, SweepGrid::cluster, a);
    (void)run_sweep(base, SweepGrid::cluster, b);
    CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
    CHECK(slurp(a / "cell_2_seed_3" / "ledger.csv") == slurp(b / "cell_2_seed_3" / "ledger.csv"));
  }
}

TEST_CASE("pilot design varies both statistics") {
  const std::vector<double> cand{0.2, 0.4, 0.6, 0.8, 1.0};
  for (std::size_t M : {1u, 2u, 3u}) {
    const auto d = pilot_design(cand, M);
    std::set<double> mus, sigmas;
    for (const auto &p : d) {
      CHECK(p.rates.size() == std::max<std::size_t>(M, 2));
      const auto s = pselect::p_stats(p);
      mus.insert(s.mu);
      sigmas.insert(s.sigma);
    }
    CHECK(d.size() >= 3);
    CHECK(mus.size() >= 2);
    CHECK(sigmas.size() >= 2);
  }
  CHECK(pilot_design(std::vector<double>{0.3, 0.9}, 2).size() == 3);
}

TEST_CASE("optimizer with a planted law") {
  auto c = small_config();
  c.clusters = 2;
  c.p_vector = {0.5, 1.0};
  const std::vector<double> cand{0.2, 0.4, 0.6, 0.8, 1.0};
  const double beta = 0.4, lambda = 1.5, scale = 30.0;
  auto law = [&](const pselect::PVector &p) {
    const auto s = pselect::p_stats(p);
    return scale * std::pow(s.sigma + pselect::kSigmaEpsilon, beta) / std::pow(s.mu, lambda);
  };
  const auto dir = scratch("opt");
  const auto rep = pilot_and_optimize(c, cand, law, false, dir);
  CHECK(std::abs(rep.fit.beta - beta) < 1e-6);
  CHECK(std::abs(rep.fit.lambda - lambda) < 1e-6);

  // Brute force over every non-decreasing pair with the planted law.
  const auto A = cluster_masses(c);
  REQUIRE(A.size() == 2);
  CHECK(A[0] > A[1]);  // the dirtier cluster comes first
  double best = std::numeric_limits<double>::infinity();
  pselect::PVector arg;
  for (std::size_t i = 0; i < cand.size(); ++i)
    for (std::size_t j = i; j < cand.size(); ++j) {
      const pselect::PVector p{{cand[i], cand[j]}};
      const double o = law(p) * (cand[i] * cand[i] * A[0] + cand[j] * cand[j] * A[1]);
      if (o < best) best = o, arg = p;
    }
  CHECK(rep.grid.best == arg);
  CHECK(rep.grid.best_objective == doctest::Approx(best).epsilon(1e-9));

  // The ranked table reports the library's own predictions, digit for digit.
  std::istringstream ranked(slurp(dir / "ranked.csv"));
  std::string line;
  std::getline(ranked, line);
  for (const auto &e : rep.grid.table) {
    REQUIRE(std::getline(ranked, line));
    const auto cols = csv::split_line(line);
    CHECK(csv::parse_double(cols[3]) == pselect::predict_rounds(rep.fit, e.p));
  }
  CHECK(fs::exists(dir / "pilot.csv"));
  CHECK(fs::exists(dir / "optimize.csv"));
}

TEST_CASE("single candidate is chosen without pilots") {
  auto c = small_config();
  c.clusters = 2;
  c.p_vector = {0.5, 1.0};
  const std::vector<double> one{0.7};
  const auto rep = pilot_and_optimize(c, one, [](const pselect::PVector &) -> double {
    FAIL("no pilots expected");
    return 1.0;
  });
  CHECK(rep.grid.best == pselect::PVector{{0.7, 0.7}});
  CHECK(rep.pilots.empty());
}
