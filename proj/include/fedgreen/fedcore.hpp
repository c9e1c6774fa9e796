#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "fedgreen/carbon.hpp"
#include "fedgreen/clustering.hpp"
#include "fedgreen/dataset.hpp"
#include "fedgreen/widthnet.hpp"

// Synchronous carbon-aware federated rounds: sampling, submodel dispatch,
// local SGD and nested shell-wise aggregation.
namespace fedgreen::fedcore {

// Uniform sample of `count` distinct ids from [0, n_clients), returned in
// ascending order. Depends only on (global_seed, round_index).
std::vector<std::size_t> sample_clients(std::size_t n_clients, std::size_t count,
                                        std::uint64_t global_seed, std::size_t round_index);

struct LocalTrainConfig {
  std::size_t epochs = 1;
  double lr = 0.01;
  std::size_t batch_size = 16;
};

struct ClientUpdate {
  std::size_t client_id = 0;
  widthnet::Submodel submodel;
  std::size_t sample_count = 0;
  double p = 1.0;
};

// Extracts the submodel at p and runs `epochs` passes of mini-batch SGD over
// `data`. Each epoch visits rows in a fresh seeded order; the final partial
// batch is kept. Rows inside a batch are processed in ascending row order.
ClientUpdate local_train(const widthnet::Model &global, double p, const LabeledDataset &data,
                         const LocalTrainConfig &cfg, std::uint64_t client_round_seed,
                         std::size_t client_id = 0);

inline constexpr std::size_t kOutsideShells = std::numeric_limits<std::size_t>::max();

struct ChannelRange {
  std::size_t lo = 0;
  std::size_t hi = 0;  // exclusive

  bool operator==(const ChannelRange &) const = default;
};

// Hidden channels covered by rate m but not by rate m-1, per hidden layer.
struct ShellIndex {
  std::size_t m = 0;
  double p = 1.0;
  std::vector<ChannelRange> channels;
};

std::vector<ShellIndex> build_shells(const widthnet::Model &model,
                                     std::span<const double> rates_ascending);

// Shell number of every parameter entry, laid out like the model: weight
// (r, c) of layer k lives in shell max(shell(row r), shell(col c)); a bias
// follows its row. Input columns and output rows belong to shell 0. Entries
// beyond the largest rate get kOutsideShells.
struct ShellMap {
  struct LayerShells {
    std::vector<std::size_t> row;
    std::vector<std::size_t> col;
    std::size_t weight(std::size_t r, std::size_t c) const { return std::max(row[r], col[c]); }
  };
  std::vector<LayerShells> layers;
};

ShellMap map_shells(const widthnet::Model &model, std::span<const double> rates_ascending);

// coefficients[m][i] = n_i / sum of n over updates with p_i >= rate m, or 0
// when update i does not cover shell m. A shell nobody covers has all zeros.
std::vector<std::vector<double>> shell_coefficients(std::span<const ClientUpdate> updates,
                                                    std::span<const double> rates_ascending);

// Shell-wise sample-weighted average. Shells without a covering update and
// channels beyond every rate keep the values of `global`.
widthnet::Model aggregate(const widthnet::Model &global, std::span<const ClientUpdate> updates,
                          std::span<const double> rates_ascending);
widthnet::Model aggregate(const widthnet::Model &global, std::span<const ClientUpdate> updates,
                          const clustering::ClusterPlan &plan);

struct FederatedConfig {
  std::size_t sample_count = 1;
  LocalTrainConfig local;
  std::uint64_t global_seed = 0;
  carbon::ModelCostParams cost;
  bool parallel_clients = false;
};

struct FederatedState {
  widthnet::Model global;
  clustering::ClusterPlan plan;
  std::vector<LabeledDataset> client_train;
  LabeledDataset test;
  std::vector<carbon::ClientEnergyProfile> profiles;
  carbon::CarbonLedger ledger;
  std::size_t rounds_done = 0;
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  double accuracy = 0.0;
  double round_emissions_g = 0.0;
  double cumulative_emissions_g = 0.0;
  std::vector<std::size_t> selected;

  bool operator==(const RoundRecord &) const = default;
};

void validate(const FederatedState &state, const FederatedConfig &cfg);

RoundRecord run_round(FederatedState &state, const FederatedConfig &cfg);

struct StopRule {
  double target_accuracy = 1.0;
  std::size_t max_rounds = 1;
};

struct RunOutcome {
  std::size_t rounds_used = 0;
  double final_accuracy = 0.0;
  double total_emissions_g = 0.0;
  bool reached_target = false;
  std::vector<RoundRecord> records;
};

RunOutcome run_until(FederatedState &state, const FederatedConfig &cfg, const StopRule &stop);

void write_rounds_csv(std::ostream &os, std::span<const RoundRecord> records);

}  // namespace fedgreen::fedcore
