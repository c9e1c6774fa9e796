#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedgreen/dataset.hpp"

namespace fedgreen::datagen {

// Gaussian blobs: class centers are seeded points on the unit sphere in R^dim,
// samples are center + N(0, spread^2) per coordinate. Rows are class-major.
LabeledDataset make_blobs(std::size_t n_per_class, std::size_t n_classes, std::size_t dim,
                          double spread, std::uint64_t seed);

struct PartitionSpec {
  double alpha = 1.0;
  std::size_t n_clients = 1;
  std::uint64_t seed = 0;
};

struct ClientShards {
  std::vector<LabeledDataset> clients;
  std::vector<std::vector<std::size_t>> indices;  // rows of the source, ascending
};

// Label-skewed split. For every class c a proportion vector q_c ~ Dir(alpha)
// over clients is drawn and the class's (shuffled) rows are dealt by q_c with
// largest-remainder rounding. Any client left empty then takes one row from
// the currently largest client.
ClientShards dirichlet_partition(const LabeledDataset &data, const PartitionSpec &spec);

// One draw from Dir(alpha * 1_k) computed in log space so that tiny alpha
// does not underflow to an all-zero vector.
std::vector<double> sample_dirichlet(double alpha, std::size_t k, std::uint64_t seed);

// Reads an IDX3 image file and IDX1 label file. Pixels are scaled to [0, 1].
// At most `limit` items are read; limit == 0 is rejected.
LabeledDataset load_idx(const std::filesystem::path &images, const std::filesystem::path &labels,
                        std::size_t limit);

struct Split {
  LabeledDataset train;
  LabeledDataset test;
};

// Seeded shuffle, then floor(train_fraction * n) rows go to train. Both parts
// keep source row order.
Split train_test_split(const LabeledDataset &data, double train_fraction, std::uint64_t seed);

// Empirical label distribution (length class_count).
std::vector<double> label_distribution(const LabeledDataset &data);

double total_variation(std::span<const double> a, std::span<const double> b);

// Mean total-variation distance over all unordered client pairs.
double mean_pairwise_tv(std::span<const LabeledDataset> clients);

}  // namespace fedgreen::datagen
