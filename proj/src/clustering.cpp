#include "fedgreen/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "fedgreen/csv.hpp"
#include "fedgreen/error.hpp"

namespace fedgreen::clustering {

namespace {

std::vector<ClientTheta> sorted_by_theta(std::span<const ClientTheta> clients) {
  std::vector<ClientTheta> s(clients.begin(), clients.end());
  std::sort(s.begin(), s.end(), [](const ClientTheta &a, const ClientTheta &b) {
    return a.theta != b.theta ? a.theta < b.theta : a.client_id < b.client_id;
  });
  std::vector<std::size_t> ids;
  for (const auto &c : s) ids.push_back(c.client_id);
  std::sort(ids.begin(), ids.end());
  if (auto it = std::adjacent_find(ids.begin(), ids.end()); it != ids.end())
    fail(ErrorKind::invalid_input, "duplicate client id " + std::to_string(*it));
  return s;
}

Partition from_cuts(const std::vector<ClientTheta> &sorted, const std::vector<std::size_t> &cuts) {
  // cuts holds M+1 boundaries into sorted.
  Partition out;
  for (std::size_t m = 0; m + 1 < cuts.size(); ++m) {
    std::vector<std::size_t> ids;
    for (std::size_t i = cuts[m]; i < cuts[m + 1]; ++i) ids.push_back(sorted[i].client_id);
    std::sort(ids.begin(), ids.end());
    out.push_back(std::move(ids));
  }
  return out;
}

std::vector<std::size_t> quantile_cuts(std::size_t n, std::size_t M) {
  std::vector<std::size_t> cuts{0};
  const std::size_t base = n / M;
  const std::size_t extra = n % M;
  for (std::size_t m = 0; m < M; ++m) cuts.push_back(cuts.back() + base + (m < extra ? 1 : 0));
  return cuts;
}

std::vector<std::size_t> kmeans_cuts(const std::vector<ClientTheta> &sorted, std::size_t M) {
  const std::size_t n = sorted.size();
  // Shift by the mean before building prefix sums to limit cancellation.
  double shift = 0.0;
  for (const auto &c : sorted) shift += c.theta;
  shift /= static_cast<double>(n);
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sorted[i].theta - shift;
    s1[i + 1] = s1[i] + x;
    s2[i + 1] = s2[i] + x * x;
  }
  auto cost = [&](std::size_t i, std::size_t j) {  // SSE of [i, j)
    const double cnt = static_cast<double>(j - i);
    const double sum = s1[j] - s1[i];
    return std::max(0.0, (s2[j] - s2[i]) - sum * sum / cnt);
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  // best[m][j]: minimum cost of splitting the first j items into m+1 groups.
  std::vector<std::vector<double>> best(M, std::vector<double>(n + 1, inf));
  std::vector<std::vector<std::size_t>> arg(M, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t j = 1; j <= n; ++j) best[0][j] = cost(0, j);
  for (std::size_t m = 1; m < M; ++m) {
    for (std::size_t j = m + 1; j <= n; ++j) {
      for (std::size_t i = m; i < j; ++i) {
        const double c = best[m - 1][i] + cost(i, j);
        if (c < best[m][j]) {
          best[m][j] = c;
          arg[m][j] = i;
        }
      }
    }
  }
  std::vector<std::size_t> cuts(M + 1, 0);
  cuts[M] = n;
  for (std::size_t m = M - 1; m > 0; --m) cuts[m] = arg[m][cuts[m + 1]];
  return cuts;
}

}  // namespace

std::vector<ClientTheta> thetas_of(std::span<const carbon::ClientEnergyProfile> profiles) {
  std::vector<ClientTheta> out;
  out.reserve(profiles.size());
  for (const auto &p : profiles) out.push_back({p.client_id, p.theta});
  return out;
}

Partition cluster_by_theta(std::span<const ClientTheta> clients, std::size_t M, Method method) {
  const std::size_t n = clients.size();
  if (M < 1 || M > n)
    fail(ErrorKind::invalid_input, "cluster count M=" + std::to_string(M) + " must lie in [1, " +
                                       std::to_string(n) + "]");
  const auto sorted = sorted_by_theta(clients);
  std::size_t distinct = 1;
  for (std::size_t i = 1; i < n; ++i)
    if (sorted[i].theta != sorted[i - 1].theta) ++distinct;
  if (method == Method::kmeans1d && M <= distinct) return from_cuts(sorted, kmeans_cuts(sorted, M));
  return from_cuts(sorted, quantile_cuts(n, M));
}

Partition cluster_by_theta(std::span<const carbon::ClientEnergyProfile> profiles, std::size_t M,
                           Method method) {
  const auto t = thetas_of(profiles);
  return cluster_by_theta(std::span<const ClientTheta>(t), M, method);
}

double within_cluster_sse(std::span<const ClientTheta> clients, const Partition &partition) {
  double total = 0.0;
  for (const auto &group : partition) {
    std::vector<double> xs;
    for (auto id : group) {
      auto it = std::find_if(clients.begin(), clients.end(),
                             [id](const ClientTheta &c) { return c.client_id == id; });
      if (it == clients.end()) fail(ErrorKind::invalid_input, "unknown client id in partition");
      xs.push_back(it->theta);
    }
    if (xs.empty()) continue;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    for (double x : xs) total += (x - mean) * (x - mean);
  }
  return total;
}

std::vector<double> ClusterPlan::distinct_rates() const {
  std::vector<double> r = rates;
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

ClusterPlan assign_rates(std::span<const ClientTheta> clients, const Partition &partition,
                         std::span<const double> p_ascending) {
  const std::size_t M = partition.size();
  if (p_ascending.size() != M)
    fail(ErrorKind::invalid_input, "need one rate per cluster: " + std::to_string(M) +
                                       " clusters, " + std::to_string(p_ascending.size()) +
                                       " rates");
  for (std::size_t m = 0; m < M; ++m) {
    if (!(p_ascending[m] > 0.0 && p_ascending[m] <= 1.0))
      fail(ErrorKind::invalid_input, "scaling rates must lie in (0, 1]");
    if (m > 0 && p_ascending[m] < p_ascending[m - 1])
      fail(ErrorKind::invalid_input, "rates must be sorted ascending");
  }

  std::size_t max_id = 0;
  for (const auto &c : clients) max_id = std::max(max_id, c.client_id);
  constexpr auto unassigned = std::numeric_limits<std::size_t>::max();

  ClusterPlan plan;
  plan.assignments.assign(clients.empty() ? 0 : max_id + 1, unassigned);
  plan.members = partition;
  plan.mean_theta.assign(M, 0.0);
  plan.rates.assign(M, 0.0);

  std::vector<double> theta_of(plan.assignments.size(), 0.0);
  std::vector<bool> known(plan.assignments.size(), false);
  for (const auto &c : clients) {
    theta_of[c.client_id] = c.theta;
    known[c.client_id] = true;
  }

  for (std::size_t m = 0; m < M; ++m) {
    if (partition[m].empty()) fail(ErrorKind::invalid_input, "empty cluster in partition");
    double sum = 0.0;
    for (auto id : partition[m]) {
      if (id >= plan.assignments.size() || !known[id])
        fail(ErrorKind::invalid_input, "partition names unknown client " + std::to_string(id));
      if (plan.assignments[id] != unassigned)
        fail(ErrorKind::invalid_input, "client " + std::to_string(id) + " covered twice");
      plan.assignments[id] = m;
      sum += theta_of[id];
    }
    plan.mean_theta[m] = sum / static_cast<double>(partition[m].size());
  }
  for (const auto &c : clients)
    if (plan.assignments[c.client_id] == unassigned)
      fail(ErrorKind::invalid_input, "client " + std::to_string(c.client_id) + " not covered");

  // Dirtiest cluster first; it receives the smallest rate.
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (plan.mean_theta[a] != plan.mean_theta[b]) return plan.mean_theta[a] > plan.mean_theta[b];
    return a > b;
  });
  for (std::size_t k = 0; k < M; ++k) plan.rates[order[k]] = p_ascending[k];
  return plan;
}

void write_plan_csv(std::ostream &os, const ClusterPlan &plan,
                    std::span<const ClientTheta> clients) {
  std::vector<ClientTheta> sorted(clients.begin(), clients.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientTheta &a, const ClientTheta &b) { return a.client_id < b.client_id; });
  os << "client_id,theta,cluster,p\n";
  for (const auto &c : sorted) {
    const auto m = plan.cluster_of(c.client_id);
    os << c.client_id << ',' << csv::fmt(c.theta) << ',' << m + 1 << ','
       << csv::fmt(plan.rates[m]) << '\n';
  }
}

}  // namespace fedgreen::clustering
