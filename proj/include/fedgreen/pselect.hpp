#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

// Choosing the per-cluster scaling-rate vector p.
//
// Rounds-to-target follow the empirical law R = c * (sigma + eps)^beta / mu^lambda
// where mu and sigma are the mean and population standard deviation of p.
// The eps = 1e-3 offset keeps single-cluster vectors (sigma = 0) at a finite,
// nonzero prediction. Total emission is then R * sum_m p_m^2 A_m.
namespace fedgreen::pselect {

inline constexpr double kSigmaEpsilon = 1e-3;

// Rates in ascending order, each in (0, 1].
struct PVector {
  std::vector<double> rates;

  bool operator==(const PVector &) const = default;
  auto operator<=>(const PVector &) const = default;
};

void validate(const PVector &p);

struct PStats {
  double mu = 0.0;
  double sigma = 0.0;
};

PStats p_stats(const PVector &p);

struct RateLawFit {
  double beta = 0.0;
  double lambda = 0.0;
  double log_c = 0.0;
  double residual = 0.0;  // RMSE of log R
};

struct PilotRun {
  PVector p;
  double rounds = 1.0;
  double mu = 0.0;
  double sigma = 0.0;
};

PilotRun make_pilot(const PVector &p, double rounds);

double predict_rounds(const RateLawFit &fit, const PVector &p);

// Least squares on log R = log c + beta log(sigma + eps) - lambda log mu.
// Throws fit_failure naming the missing variation when the design is
// rank-deficient.
RateLawFit fit_rate_law(std::span<const PilotRun> pilots);

// predict_rounds(fit, p) * sum_m p_m^2 A_m. A[m] pairs with p.rates[m], i.e.
// A[0] belongs to the cluster that receives the smallest rate.
double objective(const PVector &p, std::span<const double> A, const RateLawFit &fit);

struct RankedEntry {
  PVector p;
  double mu = 0.0;
  double sigma = 0.0;
  double predicted_rounds = 0.0;
  double objective = 0.0;
};

struct GridResult {
  PVector best;
  double best_objective = 0.0;
  std::vector<RankedEntry> table;  // ascending objective, then lexicographic p
};

inline constexpr std::size_t kMaxGridTuples = 1'000'000;

// Number of non-decreasing M-tuples over k distinct candidates: C(k+M-1, M).
// Saturates at SIZE_MAX.
std::size_t count_tuples(std::size_t k, std::size_t M);

// Exhaustive search over every non-decreasing M-tuple of the (deduplicated)
// candidate rates. Refuses grids above kMaxGridTuples.
GridResult grid_search(std::span<const double> candidate_rates, std::size_t M,
                       std::span<const double> A, const RateLawFit &fit);

void write_table_csv(std::ostream &os, std::span<const RankedEntry> table);

}  // namespace fedgreen::pselect
