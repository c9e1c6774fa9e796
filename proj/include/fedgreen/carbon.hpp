#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

// Closed-form emission accounting for one federated client and round.
//
// Units: power in watts, time in seconds, carbon intensity in gCO2/kWh.
// Energy converts as kWh = W*s / 3.6e6, so carbon grams = W*s * theta / 3.6e6.
// Every cost is quadratic in the scaling rate p.
namespace fedgreen::carbon {

inline constexpr double kWattSecondsPerKwh = 3.6e6;

struct ClientEnergyProfile {
  std::size_t client_id = 0;
  double theta = 0.0;         // gCO2 per kWh
  double f = 1.0;             // sample-steps per second
  double e_cmp = 40.0;        // W
  double e_idle = 10.0;       // W
  double e_r = 4.0;           // W, router
  double upload_U = 1.0;      // MB/s
  double download_D = 1.0;    // MB/s
  std::size_t dataset_size = 1;

  bool operator==(const ClientEnergyProfile &) const = default;
};

struct ModelCostParams {
  double S = 1.0;          // full model size, MB
  double W = 1.0;          // per-sample training time at unit frequency, s
  std::size_t E = 1;       // local epochs

  bool operator==(const ModelCostParams &) const = default;
};

void validate(const ClientEnergyProfile &prof);
void validate(const ModelCostParams &params);

double t_cmp(double p, const ModelCostParams &params, const ClientEnergyProfile &prof);
double c_cmp(double p, const ModelCostParams &params, const ClientEnergyProfile &prof);
double t_com(double p, const ModelCostParams &params, const ClientEnergyProfile &prof);
double c_com(double p, const ModelCostParams &params, const ClientEnergyProfile &prof);

// Per-p^2 energy of one client round, in watt-seconds:
// S (1/D + 1/U)(e_r + e_idle) + E W |D| e_cmp / f.
double a_const(const ModelCostParams &params, const ClientEnergyProfile &prof);

// theta-weighted watt-seconds to grams.
inline double to_grams(double theta_watt_seconds) {
  return theta_watt_seconds / kWattSecondsPerKwh;
}

struct RoundCost {
  std::size_t round_index = 0;
  std::size_t client_id = 0;
  std::size_t cluster = 0;
  double p_used = 1.0;
  double t_cmp = 0.0;
  double t_com = 0.0;
  double c_cmp = 0.0;
  double c_com = 0.0;
  double c_total = 0.0;

  bool operator==(const RoundCost &) const = default;
};

RoundCost c_fl_round(double p, const ModelCostParams &params, const ClientEnergyProfile &prof);

struct ClusterMass {
  double value = 0.0;
  bool empty_cluster = false;  // warning flag: no members contributed
};

// Cluster cost mass from per-round contributions: theta_a[j] lists
// theta_{i,j} * a_{i,j} for every member i in round j. Result is the sum over
// rounds and members divided by the number of rounds.
ClusterMass cluster_A(std::span<const std::vector<double>> theta_a_per_round);

// Static-profile form: sum over members of theta_i * a_i.
ClusterMass cluster_A(std::span<const ClientEnergyProfile> profiles,
                      std::span<const std::size_t> members, const ModelCostParams &params);

// R * sum_m p_m^2 A_m, in theta*W*s units (apply to_grams for grams).
double total_c_fl(std::span<const double> p, std::span<const double> A, std::size_t rounds);

// Append-only record of every client-round cost with running totals.
class CarbonLedger {
 public:
  void append(const RoundCost &cost);

  const std::vector<RoundCost> &entries() const noexcept { return entries_; }
  double total_g() const noexcept { return total_g_; }
  double client_total_g(std::size_t client_id) const;
  const std::vector<double> &client_totals_g() const noexcept { return client_totals_; }

  // Recomputes the global total from the entries in append order.
  double recomputed_total_g() const;
  bool consistent() const;

  void write_csv(std::ostream &os) const;

 private:
  std::vector<RoundCost> entries_;
  std::vector<double> client_totals_;
  double total_g_ = 0.0;
};

}  // namespace fedgreen::carbon
