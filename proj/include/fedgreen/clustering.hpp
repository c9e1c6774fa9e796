#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedgreen/carbon.hpp"

namespace fedgreen::clustering {

enum class Method { quantile, kmeans1d };

struct ClientTheta {
  std::size_t client_id = 0;
  double theta = 0.0;
};

// Groups of client ids. Groups are ordered by ascending theta (group 0 is
// the greenest); ids inside a group are sorted ascending.
using Partition = std::vector<std::vector<std::size_t>>;

// Clients are ordered by (theta, client_id) so the outcome never depends on
// input order. quantile: M contiguous groups, sizes differ by at most one,
// the extra members go to the greenest groups. kmeans1d: exact minimum
// within-cluster sum of squares over contiguous groups (dynamic programming);
// falls back to quantile when M exceeds the number of distinct theta values.
Partition cluster_by_theta(std::span<const ClientTheta> clients, std::size_t M, Method method);
Partition cluster_by_theta(std::span<const carbon::ClientEnergyProfile> profiles, std::size_t M,
                           Method method);

// Within-cluster sum of squared deviations from the cluster means.
double within_cluster_sse(std::span<const ClientTheta> clients, const Partition &partition);

struct ClusterPlan {
  std::vector<std::size_t> assignments;        // client_id -> cluster index
  std::vector<double> rates;                   // cluster index -> p
  std::vector<std::vector<std::size_t>> members;
  std::vector<double> mean_theta;

  std::size_t M() const noexcept { return rates.size(); }
  double rate_of(std::size_t client_id) const { return rates.at(assignments.at(client_id)); }
  std::size_t cluster_of(std::size_t client_id) const { return assignments.at(client_id); }

  // Distinct rates in ascending order.
  std::vector<double> distinct_rates() const;
};

// Pairs clusters with rates so that the highest mean theta gets the smallest
// p. Ties in mean theta are ordered by cluster index (lower index treated as
// greener). p_ascending must have one entry per cluster.
ClusterPlan assign_rates(std::span<const ClientTheta> clients, const Partition &partition,
                         std::span<const double> p_ascending);

// Writes client_id,theta,cluster,p with 1-based cluster numbers.
void write_plan_csv(std::ostream &os, const ClusterPlan &plan,
                    std::span<const ClientTheta> clients);

std::vector<ClientTheta> thetas_of(std::span<const carbon::ClientEnergyProfile> profiles);

}  // namespace fedgreen::clustering
