#include "fedgreen/pselect.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>
#include <string>

#include "fedgreen/csv.hpp"
#include "fedgreen/error.hpp"

namespace fedgreen::pselect {

void validate(const PVector &p) {
  if (p.rates.empty()) fail(ErrorKind::invalid_input, "p vector is empty");
  for (std::size_t m = 0; m < p.rates.size(); ++m) {
    if (!(p.rates[m] > 0.0 && p.rates[m] <= 1.0))
      fail(ErrorKind::invalid_input, "rates must lie in (0, 1]");
    if (m > 0 && p.rates[m] < p.rates[m - 1])
      fail(ErrorKind::invalid_input, "rates must be ascending");
  }
}

PStats p_stats(const PVector &p) {
  validate(p);
  const double n = static_cast<double>(p.rates.size());
  double mu = 0.0;
  for (double r : p.rates) mu += r;
  mu /= n;
  double var = 0.0;
  for (double r : p.rates) var += (r - mu) * (r - mu);
  return {mu, std::sqrt(var / n)};
}

PilotRun make_pilot(const PVector &p, double rounds) {
  const auto s = p_stats(p);
  return {p, rounds, s.mu, s.sigma};
}

double predict_rounds(const RateLawFit &fit, const PVector &p) {
  const auto s = p_stats(p);
  return std::exp(fit.log_c) * std::pow(s.sigma + kSigmaEpsilon, fit.beta) /
         std::pow(s.mu, fit.lambda);
}

RateLawFit fit_rate_law(std::span<const PilotRun> pilots) {
  if (pilots.size() < 3)
    fail(ErrorKind::fit_failure, "rate-law fit needs at least 3 pilot runs, got " +
                                     std::to_string(pilots.size()));
  std::set<double> mus, sigmas;
  for (const auto &pr : pilots) {
    if (!(pr.rounds > 0.0)) fail(ErrorKind::fit_failure, "pilot rounds must be positive");
    if (!(pr.mu > 0.0)) fail(ErrorKind::fit_failure, "pilot mu must be positive");
    mus.insert(pr.mu);
    sigmas.insert(pr.sigma);
  }
  if (mus.size() < 2)
    fail(ErrorKind::fit_failure, "pilots do not vary mu(p); add runs with a different mean rate");
  if (sigmas.size() < 2)
    fail(ErrorKind::fit_failure,
         "pilots do not vary sigma(p); add runs with a different rate spread");

  const auto n = static_cast<Eigen::Index>(pilots.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto &pr = pilots[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    X(i, 1) = std::log(pr.sigma + kSigmaEpsilon);
    X(i, 2) = -std::log(pr.mu);
    y(i) = std::log(pr.rounds);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 3)
    fail(ErrorKind::fit_failure,
         "mu(p) and sigma(p) vary together across pilots; add runs that change one but not the "
         "other");
  const Eigen::VectorXd coef = qr.solve(y);
  const Eigen::VectorXd resid = X * coef - y;

  RateLawFit fit;
  fit.log_c = coef(0);
  fit.beta = coef(1);
  fit.lambda = coef(2);
  fit.residual = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
  return fit;
}

double objective(const PVector &p, std::span<const double> A, const RateLawFit &fit) {
  if (A.size() != p.rates.size())
    fail(ErrorKind::invalid_input, "objective: " + std::to_string(p.rates.size()) +
                                       " rates but " + std::to_string(A.size()) + " cluster masses");
  double mass = 0.0;
  for (std::size_t m = 0; m < A.size(); ++m) mass += p.rates[m] * p.rates[m] * A[m];
  return predict_rounds(fit, p) * mass;
}

std::size_t count_tuples(std::size_t k, std::size_t M) {
  // C(k + M - 1, M), built incrementally to stay exact while small.
  constexpr auto cap = std::numeric_limits<std::size_t>::max();
  if (k == 0) return 0;
  unsigned __int128 c = 1;
  for (std::size_t i = 1; i <= M; ++i) {
    c = c * (k - 1 + i) / i;
    if (c > cap) return cap;
  }
  return static_cast<std::size_t>(c);
}

GridResult grid_search(std::span<const double> candidate_rates, std::size_t M,
                       std::span<const double> A, const RateLawFit &fit) {
  if (candidate_rates.empty()) fail(ErrorKind::invalid_input, "candidate set is empty");
  if (M < 1) fail(ErrorKind::invalid_input, "M must be >= 1");
  if (A.size() != M)
    fail(ErrorKind::invalid_input, "need one cluster mass per cluster: M=" + std::to_string(M) +
                                       ", |A|=" + std::to_string(A.size()));
  std::vector<double> cand(candidate_rates.begin(), candidate_rates.end());
  for (double c : cand)
    if (!(c > 0.0 && c <= 1.0)) fail(ErrorKind::invalid_input, "candidate rates must lie in (0, 1]");
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

  const std::size_t total = count_tuples(cand.size(), M);
  if (total > kMaxGridTuples)
    fail(ErrorKind::invalid_input, "grid of " + std::to_string(total) +
                                       " tuples exceeds the limit of " +
                                       std::to_string(kMaxGridTuples));

  GridResult res;
  res.table.reserve(total);
  std::vector<std::size_t> idx(M, 0);
  while (true) {
    PVector p;
    for (auto i : idx) p.rates.push_back(cand[i]);
    const auto s = p_stats(p);
    RankedEntry e{p, s.mu, s.sigma, predict_rounds(fit, p), 0.0};
    e.objective = objective(p, A, fit);
    res.table.push_back(std::move(e));

    // Next non-decreasing tuple in lexicographic order.
    std::size_t pos = M;
    while (pos > 0 && idx[pos - 1] == cand.size() - 1) --pos;
    if (pos == 0) break;
    const std::size_t v = idx[pos - 1] + 1;
    for (std::size_t j = pos - 1; j < M; ++j) idx[j] = v;
  }
  std::stable_sort(res.table.begin(), res.table.end(),
                   [](const RankedEntry &a, const RankedEntry &b) {
                     if (a.objective != b.objective) return a.objective < b.objective;
                     return a.p < b.p;
                   });
  res.best = res.table.front().p;
  res.best_objective = res.table.front().objective;
  return res;
}

void write_table_csv(std::ostream &os, std::span<const RankedEntry> table) {
  os << "p_vector,mu,sigma,predicted_rounds,objective\n";
  for (const auto &e : table) {
    std::string pv;
    for (std::size_t m = 0; m < e.p.rates.size(); ++m) {
      if (m) pv += ';';
      pv += csv::fmt(e.p.rates[m]);
    }
    os << pv << ',' << csv::fmt(e.mu) << ',' << csv::fmt(e.sigma) << ','
       << csv::fmt(e.predicted_rounds) << ',' << csv::fmt(e.objective) << '\n';
  }
}

}  // namespace fedgreen::pselect
