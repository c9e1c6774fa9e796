#include "fedgreen/carbon.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "fedgreen/csv.hpp"
#include "fedgreen/error.hpp"

namespace fedgreen::carbon {

namespace {

void require(bool ok, const char *what) {
  if (!ok) fail(ErrorKind::invalid_input, what);
}

void check_p(double p) {
  require(p > 0.0 && p <= 1.0, "scaling rate must lie in (0, 1]");
}

double comm_time_per_p2(const ModelCostParams &params, const ClientEnergyProfile &prof) {
  return params.S * (1.0 / prof.download_D + 1.0 / prof.upload_U);
}

double cmp_time_per_p2(const ModelCostParams &params, const ClientEnergyProfile &prof) {
  return static_cast<double>(params.E) * params.W * static_cast<double>(prof.dataset_size) /
         prof.f;
}

}  // namespace

void validate(const ClientEnergyProfile &prof) {
  require(std::isfinite(prof.theta) && prof.theta >= 0.0, "theta must be finite and >= 0");
  require(prof.f > 0.0 && std::isfinite(prof.f), "f must be > 0");
  require(prof.e_cmp >= 0.0 && prof.e_idle >= 0.0 && prof.e_r >= 0.0,
          "power draws must be >= 0");
  require(prof.upload_U > 0.0 && prof.download_D > 0.0, "link speeds must be > 0");
  require(prof.dataset_size >= 1, "dataset_size must be >= 1");
}

void validate(const ModelCostParams &params) {
  require(params.S > 0.0 && std::isfinite(params.S), "S must be > 0");
  require(params.W > 0.0 && std::isfinite(params.W), "W must be > 0");
  require(params.E >= 1, "E must be >= 1");
}

double t_cmp(double p, const ModelCostParams &params, const ClientEnergyProfile &prof) {
  check_p(p);
  return p * p * cmp_time_per_p2(params, prof);
}

double c_cmp(double p, const ModelCostParams &params, const ClientEnergyProfile &prof) {
  return t_cmp(p, params, prof) * prof.e_cmp * prof.theta / kWattSecondsPerKwh;
}

double t_com(double p, const ModelCostParams &params, const ClientEnergyProfile &prof) {
  check_p(p);
  return p * p * comm_time_per_p2(params, prof);
}

double c_com(double p, const ModelCostParams &params, const ClientEnergyProfile &prof) {
  return t_com(p, params, prof) * (prof.e_r + prof.e_idle) * prof.theta / kWattSecondsPerKwh;
}

double a_const(const ModelCostParams &params, const ClientEnergyProfile &prof) {
  return comm_time_per_p2(params, prof) * (prof.e_r + prof.e_idle) +
         cmp_time_per_p2(params, prof) * prof.e_cmp;
}

RoundCost c_fl_round(double p, const ModelCostParams &params, const ClientEnergyProfile &prof) {
  RoundCost rc;
  rc.client_id = prof.client_id;
  rc.p_used = p;
  rc.t_cmp = t_cmp(p, params, prof);
  rc.t_com = t_com(p, params, prof);
  rc.c_cmp = rc.t_cmp * prof.e_cmp * prof.theta / kWattSecondsPerKwh;
  rc.c_com = rc.t_com * (prof.e_r + prof.e_idle) * prof.theta / kWattSecondsPerKwh;
  rc.c_total = rc.c_cmp + rc.c_com;
  return rc;
}

ClusterMass cluster_A(std::span<const std::vector<double>> theta_a_per_round) {
  require(!theta_a_per_round.empty(), "cluster_A needs at least one round");
  double sum = 0.0;
  bool any = false;
  for (const auto &round : theta_a_per_round) {
    for (double v : round) {
      sum += v;
      any = true;
    }
  }
  if (!any) return {0.0, true};
  return {sum / static_cast<double>(theta_a_per_round.size()), false};
}

ClusterMass cluster_A(std::span<const ClientEnergyProfile> profiles,
                      std::span<const std::size_t> members, const ModelCostParams &params) {
  if (members.empty()) return {0.0, true};
  double sum = 0.0;
  for (auto id : members) {
    require(id < profiles.size(), "cluster member id out of range");
    const auto &prof = profiles[id];
    sum += prof.theta * a_const(params, prof);
  }
  return {sum, false};
}

double total_c_fl(std::span<const double> p, std::span<const double> A, std::size_t rounds) {
  if (p.size() != A.size())
    fail(ErrorKind::invalid_input, "total_c_fl: p has " + std::to_string(p.size()) +
                                       " entries but A has " + std::to_string(A.size()));
  require(rounds >= 1, "total_c_fl: rounds must be >= 1");
  double s = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) s += p[m] * p[m] * A[m];
  return static_cast<double>(rounds) * s;
}

void CarbonLedger::append(const RoundCost &cost) {
  require(cost.t_cmp >= 0.0 && cost.t_com >= 0.0 && cost.c_cmp >= 0.0 && cost.c_com >= 0.0 &&
              cost.c_total >= 0.0,
          "ledger entries must be non-negative");
  entries_.push_back(cost);
  if (client_totals_.size() <= cost.client_id) client_totals_.resize(cost.client_id + 1, 0.0);
  client_totals_[cost.client_id] += cost.c_total;
  total_g_ += cost.c_total;
}

double CarbonLedger::client_total_g(std::size_t client_id) const {
  return client_id < client_totals_.size() ? client_totals_[client_id] : 0.0;
}

double CarbonLedger::recomputed_total_g() const {
  double s = 0.0;
  for (const auto &e : entries_) s += e.c_total;
  return s;
}

bool CarbonLedger::consistent() const { return recomputed_total_g() == total_g_; }

void CarbonLedger::write_csv(std::ostream &os) const {
  os << "round,client_id,cluster,p,t_cmp_s,t_com_s,c_cmp_g,c_com_g,c_total_g\n";
  for (const auto &e : entries_) {
    os << e.round_index << ',' << e.client_id << ',' << e.cluster + 1 << ','
       << csv::fmt(e.p_used) << ',' << csv::fmt(e.t_cmp) << ',' << csv::fmt(e.t_com) << ','
       << csv::fmt(e.c_cmp) << ',' << csv::fmt(e.c_com) << ',' << csv::fmt(e.c_total) << '\n';
  }
}

}  // namespace fedgreen::carbon
