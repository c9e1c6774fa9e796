#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

// Flat `key = value` experiment configuration. Missing keys keep the
// defaults below; unknown keys and out-of-range values are errors that name
// the offending line and key.
namespace fedgreen::config {

enum class ProfilePreset { real6, simulated6, file };
enum class DatasetSource { blobs, idx };

struct ExperimentConfig {
  // Federation
  std::size_t n_clients = 80;
  double sample_fraction = 0.1;
  std::size_t rounds_max = 200;
  double target_accuracy = 0.73;
  std::size_t local_epochs = 1;
  double lr = 0.01;
  std::size_t batch_size = 16;
  double alpha = 0.01;
  bool parallel_clients = false;

  // Clusters and rates
  std::size_t clusters = 1;
  std::vector<double> p_vector{1.0};
  std::string cluster_method = "quantile";

  // Carbon
  ProfilePreset carbon_profile = ProfilePreset::real6;
  std::string profile_file;
  double e_idle = 10.0;
  double e_r = 4.0;
  double e_client = 40.0;
  double model_size_mb = 1.0;
  double sample_time_s = 0.002;
  double f_min = 1.0, f_max = 2.0;
  double upload_min = 5.0, upload_max = 10.0;
  double download_min = 10.0, download_max = 20.0;

  // Model and data
  std::vector<std::size_t> hidden{32, 32};
  DatasetSource dataset = DatasetSource::blobs;
  std::size_t blob_per_class = 200;
  std::size_t blob_classes = 10;
  std::size_t blob_dim = 16;
  double blob_spread = 1.0;
  std::string idx_images;
  std::string idx_labels;
  std::size_t idx_limit = 10000;
  double train_fraction = 0.8;

  // Seeding and outputs
  std::uint64_t global_seed = 0;
  std::size_t seeds = 1;
  std::size_t pilot_rounds_max = 0;  // 0: use rounds_max
  bool plots = false;

  bool operator==(const ExperimentConfig &) const = default;

  // ceil(sample_fraction * n_clients), at least 1.
  std::size_t sample_count() const;
};

ExperimentConfig parse_config(const std::string &text);
ExperimentConfig load_config(const std::filesystem::path &path);

// Cross-field checks (rate count vs clusters, file-backed sources present).
void validate(const ExperimentConfig &cfg);

// Every key, one per line, in a form parse_config reads back to an equal
// config.
std::string serialize(const ExperimentConfig &cfg);

std::string to_string(ProfilePreset p);
std::string to_string(DatasetSource d);

}  // namespace fedgreen::config
