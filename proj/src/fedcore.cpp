#include "fedgreen/fedcore.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>

#include "fedgreen/csv.hpp"
#include "fedgreen/error.hpp"
#include "fedgreen/rng.hpp"

namespace fedgreen::fedcore {

using widthnet::LayerKind;
using widthnet::Model;
using widthnet::ScalingRate;

std::vector<std::size_t> sample_clients(std::size_t n_clients, std::size_t count,
                                        std::uint64_t global_seed, std::size_t round_index) {
  if (count < 1 || count > n_clients)
    fail(ErrorKind::invalid_input, "sample count " + std::to_string(count) + " must lie in [1, " +
                                       std::to_string(n_clients) + "]");
  std::vector<std::size_t> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(global_seed, {kTagSample, round_index}));
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_clients - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ClientUpdate local_train(const Model &global, double p, const LabeledDataset &data,
                         const LocalTrainConfig &cfg, std::uint64_t client_round_seed,
                         std::size_t client_id) {
  if (data.empty()) fail(ErrorKind::invalid_input, "client " + std::to_string(client_id) +
                                                       " has no training data");
  if (cfg.batch_size == 0) fail(ErrorKind::invalid_input, "batch_size must be >= 1");

  ClientUpdate up;
  up.client_id = client_id;
  up.p = p;
  up.sample_count = data.size();
  up.submodel = widthnet::extract_submodel(global, ScalingRate(p));

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  Rng rng(client_round_seed);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::sort(rows.begin(), rows.end());
      const LabeledDataset batch = subset(data, rows);
      auto step = widthnet::sgd_step(up.submodel.model, batch.features, batch.labels, cfg.lr);
      up.submodel.model = std::move(step.model);
    }
  }
  return up;
}

namespace {

// Shell of each channel of a hidden layer of width `full`.
std::vector<std::size_t> channel_shells(std::size_t full, std::span<const double> rates) {
  std::vector<std::size_t> shells(full, kOutsideShells);
  std::size_t lo = 0;
  for (std::size_t m = 0; m < rates.size(); ++m) {
    const std::size_t hi = widthnet::kept_width(ScalingRate(rates[m]), full);
    for (std::size_t c = lo; c < hi; ++c) shells[c] = m;
    lo = std::max(lo, hi);
  }
  return shells;
}

void check_rates(std::span<const double> rates) {
  if (rates.empty()) fail(ErrorKind::invalid_input, "at least one scaling rate is required");
  for (std::size_t m = 0; m < rates.size(); ++m) {
    ScalingRate{rates[m]};
    if (m > 0 && !(rates[m] > rates[m - 1]))
      fail(ErrorKind::invalid_input, "shell rates must be strictly ascending");
  }
}

}  // namespace

std::vector<ShellIndex> build_shells(const Model &model, std::span<const double> rates_ascending) {
  check_rates(rates_ascending);
  std::vector<ShellIndex> shells;
  std::vector<std::size_t> prev(model.hidden_widths().size(), 0);
  for (std::size_t m = 0; m < rates_ascending.size(); ++m) {
    ShellIndex s{m, rates_ascending[m], {}};
    std::size_t h = 0;
    for (auto full : model.hidden_widths()) {
      const std::size_t hi = widthnet::kept_width(ScalingRate(rates_ascending[m]), full);
      s.channels.push_back({prev[h], std::max(prev[h], hi)});
      prev[h] = std::max(prev[h], hi);
      ++h;
    }
    shells.push_back(std::move(s));
  }
  return shells;
}

ShellMap map_shells(const Model &model, std::span<const double> rates_ascending) {
  check_rates(rates_ascending);
  ShellMap map;
  std::vector<std::size_t> cols(model.input_dim, 0);
  for (const auto &l : model.layers) {
    ShellMap::LayerShells ls;
    ls.col = cols;
    ls.row = l.shape.kind == LayerKind::hidden ? channel_shells(l.shape.out_dim, rates_ascending)
                                               : std::vector<std::size_t>(l.shape.out_dim, 0);
    cols = ls.row;
    map.layers.push_back(std::move(ls));
  }
  return map;
}

std::vector<std::vector<double>> shell_coefficients(std::span<const ClientUpdate> updates,
                                                    std::span<const double> rates_ascending) {
  check_rates(rates_ascending);
  std::vector<std::vector<double>> coef(rates_ascending.size(),
                                        std::vector<double>(updates.size(), 0.0));
  for (std::size_t m = 0; m < rates_ascending.size(); ++m) {
    double total = 0.0;
    for (const auto &u : updates)
      if (u.p >= rates_ascending[m]) total += static_cast<double>(u.sample_count);
    if (total == 0.0) continue;
    for (std::size_t i = 0; i < updates.size(); ++i)
      if (updates[i].p >= rates_ascending[m])
        coef[m][i] = static_cast<double>(updates[i].sample_count) / total;
  }
  return coef;
}

Model aggregate(const Model &global, std::span<const ClientUpdate> updates,
                std::span<const double> rates_ascending) {
  widthnet::validate(global);
  if (updates.empty()) fail(ErrorKind::invalid_update, "aggregate needs at least one update");
  check_rates(rates_ascending);
  for (const auto &u : updates) {
    if (u.sample_count == 0)
      fail(ErrorKind::invalid_update, "update from client " + std::to_string(u.client_id) +
                                          " has zero samples");
    if (std::find(rates_ascending.begin(), rates_ascending.end(), u.p) == rates_ascending.end())
      fail(ErrorKind::invalid_update, "update rate " + std::to_string(u.p) +
                                          " is not one of the plan's rates");
    if (u.submodel.origin_p.value() != u.p)
      fail(ErrorKind::invalid_update, "update rate disagrees with its submodel");
    // Reuse the embedding shape checks.
    try {
      (void)widthnet::embed_submodel(global, u.submodel);
    } catch (const Error &e) {
      fail(ErrorKind::invalid_update, std::string("update from client ") +
                                          std::to_string(u.client_id) + ": " + e.what());
    }
  }

  const ShellMap shells = map_shells(global, rates_ascending);
  const auto coef = shell_coefficients(updates, rates_ascending);
  std::vector<bool> covered(coef.size());
  for (std::size_t m = 0; m < coef.size(); ++m)
    covered[m] = std::any_of(coef[m].begin(), coef[m].end(), [](double c) { return c > 0.0; });

  Model out = global;
  for (std::size_t k = 0; k < global.layers.size(); ++k) {
    const auto &ls = shells.layers[k];
    auto &layer = out.layers[k];
    auto blend = [&](std::size_t m, auto &&value_of) -> std::optional<double> {
      if (m == kOutsideShells || !covered[m]) return std::nullopt;
      double s = 0.0;
      for (std::size_t i = 0; i < updates.size(); ++i)
        if (coef[m][i] > 0.0) s += coef[m][i] * value_of(updates[i].submodel.model.layers[k]);
      return s;
    };
    for (std::size_t r = 0; r < layer.shape.out_dim; ++r) {
      for (std::size_t c = 0; c < layer.shape.in_dim; ++c) {
        if (auto v = blend(ls.weight(r, c),
                           [&](const widthnet::Layer &l) { return l.weight(r, c); }))
          layer.weight(r, c) = *v;
      }
      if (auto v = blend(ls.row[r], [&](const widthnet::Layer &l) { return l.bias[r]; }))
        layer.bias[r] = *v;
    }
  }
  return out;
}

Model aggregate(const Model &global, std::span<const ClientUpdate> updates,
                const clustering::ClusterPlan &plan) {
  const auto rates = plan.distinct_rates();
  return aggregate(global, updates, std::span<const double>(rates));
}

void validate(const FederatedState &state, const FederatedConfig &cfg) {
  widthnet::validate(state.global);
  const std::size_t n = state.client_train.size();
  if (n == 0) fail(ErrorKind::invalid_input, "no clients");
  if (state.profiles.size() != n)
    fail(ErrorKind::invalid_input, "one energy profile per client is required");
  if (state.plan.assignments.size() != n)
    fail(ErrorKind::invalid_input, "cluster plan does not cover every client");
  if (state.test.empty()) fail(ErrorKind::invalid_input, "held-out test set is empty");
  if (cfg.sample_count < 1 || cfg.sample_count > n)
    fail(ErrorKind::invalid_input, "sample_count must lie in [1, n_clients]");
  carbon::validate(cfg.cost);
  for (std::size_t i = 0; i < n; ++i) {
    if (state.profiles[i].client_id != i)
      fail(ErrorKind::invalid_input, "profile " + std::to_string(i) + " has a mismatched id");
    carbon::validate(state.profiles[i]);
  }
}

RoundRecord run_round(FederatedState &state, const FederatedConfig &cfg) {
  validate(state, cfg);
  const std::size_t round = state.rounds_done + 1;
  const auto selected =
      sample_clients(state.client_train.size(), cfg.sample_count, cfg.global_seed, round);

  std::vector<ClientUpdate> updates(selected.size());
  auto train_one = [&](std::size_t k) {
    const std::size_t id = selected[k];
    const auto seed = derive_seed(cfg.global_seed, {kTagLocalTrain, id, round});
    return local_train(state.global, state.plan.rate_of(id), state.client_train[id], cfg.local,
                       seed, id);
  };
  if (cfg.parallel_clients && selected.size() > 1) {
    std::vector<std::future<ClientUpdate>> jobs;
    for (std::size_t k = 0; k < selected.size(); ++k)
      jobs.push_back(std::async(std::launch::async, train_one, k));
    for (std::size_t k = 0; k < selected.size(); ++k) updates[k] = jobs[k].get();
  } else {
    for (std::size_t k = 0; k < selected.size(); ++k) updates[k] = train_one(k);
  }

  state.global = aggregate(state.global, updates, state.plan);

  RoundRecord rec;
  rec.round = round;
  rec.selected = selected;
  for (auto id : selected) {
    auto cost = carbon::c_fl_round(state.plan.rate_of(id), cfg.cost, state.profiles[id]);
    cost.round_index = round;
    cost.cluster = state.plan.cluster_of(id);
    state.ledger.append(cost);
    rec.round_emissions_g += cost.c_total;
  }
  rec.cumulative_emissions_g = state.ledger.total_g();
  rec.accuracy = widthnet::evaluate(state.global, state.test);
  state.rounds_done = round;
  return rec;
}

RunOutcome run_until(FederatedState &state, const FederatedConfig &cfg, const StopRule &stop) {
  if (stop.max_rounds < 1) fail(ErrorKind::invalid_input, "max_rounds must be >= 1");
  RunOutcome out;
  while (out.records.size() < stop.max_rounds) {
    out.records.push_back(run_round(state, cfg));
    if (out.records.back().accuracy >= stop.target_accuracy) {
      out.reached_target = true;
      break;
    }
  }
  out.rounds_used = out.records.size();
  out.final_accuracy = out.records.back().accuracy;
  out.total_emissions_g = state.ledger.total_g();
  return out;
}

void write_rounds_csv(std::ostream &os, std::span<const RoundRecord> records) {
  os << "round,accuracy,round_emissions_g,cumulative_emissions_g,n_selected\n";
  for (const auto &r : records) {
    os << r.round << ',' << csv::fmt(r.accuracy) << ',' << csv::fmt(r.round_emissions_g) << ','
       << csv::fmt(r.cumulative_emissions_g) << ',' << r.selected.size() << '\n';
  }
}

}  // namespace fedgreen::fedcore
