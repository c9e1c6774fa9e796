#include "fedgreen/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "fedgreen/csv.hpp"
#include "fedgreen/error.hpp"

namespace fedgreen::config {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Thrown by value parsers and checks; the caller adds line and key.
struct BadValue {
  std::string why;
};

double to_real(const std::string &v) {
  try {
    const double d = csv::parse_double(v);
    if (!std::isfinite(d)) throw BadValue{"must be finite"};
    return d;
  } catch (const Error &) {
    throw BadValue{"not a number: '" + v + "'"};
  }
}

long long to_integer(const std::string &v) {
  try {
    return csv::parse_int(v);
  } catch (const Error &) {
    throw BadValue{"not an integer: '" + v + "'"};
  }
}

std::uint64_t to_u64(const std::string &v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size())
    throw BadValue{"not an unsigned integer: '" + v + "'"};
  return out;
}

std::size_t to_count(const std::string &v, long long min) {
  const long long n = to_integer(v);
  if (n < min) throw BadValue{"must be >= " + std::to_string(min)};
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string &v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw BadValue{"expected true or false, got '" + v + "'"};
}

std::vector<std::string> items(const std::string &v) {
  std::vector<std::string> out;
  for (const auto &part : csv::split_line(v, ',')) {
    const auto t = trim(part);
    if (t.empty()) throw BadValue{"empty list item"};
    out.push_back(t);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T> &xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) out += csv::fmt(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

struct Key {
  const char *name;
  std::function<void(ExperimentConfig &, const std::string &)> set;
  std::function<std::string(const ExperimentConfig &)> get;
};

Key count_key(const char *name, std::size_t ExperimentConfig::*m, long long min) {
  return {name, [m, min](ExperimentConfig &c, const std::string &v) { c.*m = to_count(v, min); },
          [m](const ExperimentConfig &c) { return std::to_string(c.*m); }};
}

// Real in [lo, hi]; open ends are expressed by the flags.
Key real_key(const char *name, double ExperimentConfig::*m, double lo, double hi,
             bool lo_open = false, bool hi_open = false) {
  return {name,
          [=](ExperimentConfig &c, const std::string &v) {
            const double d = to_real(v);
            const bool ok = (lo_open ? d > lo : d >= lo) && (hi_open ? d < hi : d <= hi);
            if (!ok)
              throw BadValue{"must lie in " + std::string(lo_open ? "(" : "[") + csv::fmt(lo) +
                             ", " + csv::fmt(hi) + (hi_open ? ")" : "]") + ", got " + v};
            c.*m = d;
          },
          [m](const ExperimentConfig &c) { return csv::fmt(c.*m); }};
}

Key positive_key(const char *name, double ExperimentConfig::*m) {
  return real_key(name, m, 0.0, HUGE_VAL, true, true);
}

Key nonneg_key(const char *name, double ExperimentConfig::*m) {
  return real_key(name, m, 0.0, HUGE_VAL, false, true);
}

Key bool_key(const char *name, bool ExperimentConfig::*m) {
  return {name, [m](ExperimentConfig &c, const std::string &v) { c.*m = to_bool(v); },
          [m](const ExperimentConfig &c) { return std::string(c.*m ? "true" : "false"); }};
}

Key string_key(const char *name, std::string ExperimentConfig::*m) {
  return {name, [m](ExperimentConfig &c, const std::string &v) { c.*m = v; },
          [m](const ExperimentConfig &c) { return c.*m; }};
}

const std::vector<Key> &keys() {
  using C = ExperimentConfig;
  static const std::vector<Key> table = {
      count_key("n_clients", &C::n_clients, 1),
      real_key("sample_fraction", &C::sample_fraction, 0.0, 1.0, true),
      count_key("rounds_max", &C::rounds_max, 1),
      real_key("target_accuracy", &C::target_accuracy, 0.0, 1.0),
      count_key("local_epochs", &C::local_epochs, 1),
      nonneg_key("lr", &C::lr),
      count_key("batch_size", &C::batch_size, 1),
      positive_key("alpha", &C::alpha),
      bool_key("parallel_clients", &C::parallel_clients),
      count_key("clusters", &C::clusters, 1),
      {"p_vector",
       [](C &c, const std::string &v) {
         std::vector<double> p;
         for (const auto &s : items(v)) {
           const double d = to_real(s);
           if (!(d > 0.0 && d <= 1.0)) throw BadValue{"rates must lie in (0, 1], got " + s};
           if (!p.empty() && d < p.back()) throw BadValue{"rates must be ascending"};
           p.push_back(d);
         }
         c.p_vector = std::move(p);
       },
       [](const C &c) { return join(c.p_vector); }},
      {"cluster_method",
       [](C &c, const std::string &v) {
         if (v != "quantile" && v != "kmeans1d") throw BadValue{"expected quantile or kmeans1d"};
         c.cluster_method = v;
       },
       [](const C &c) { return c.cluster_method; }},
      {"carbon_profile",
       [](C &c, const std::string &v) {
         if (v == "real6") c.carbon_profile = ProfilePreset::real6;
         else if (v == "simulated6") c.carbon_profile = ProfilePreset::simulated6;
         else if (v == "file") c.carbon_profile = ProfilePreset::file;
         else throw BadValue{"expected real6, simulated6 or file"};
       },
       [](const C &c) { return to_string(c.carbon_profile); }},
      string_key("profile_file", &C::profile_file),
      nonneg_key("e_idle", &C::e_idle),
      nonneg_key("e_r", &C::e_r),
      nonneg_key("e_client", &C::e_client),
      positive_key("model_size_mb", &C::model_size_mb),
      positive_key("sample_time_s", &C::sample_time_s),
      positive_key("f_min", &C::f_min),
      positive_key("f_max", &C::f_max),
      positive_key("upload_min", &C::upload_min),
      positive_key("upload_max", &C::upload_max),
      positive_key("download_min", &C::download_min),
      positive_key("download_max", &C::download_max),
      {"hidden",
       [](C &c, const std::string &v) {
         std::vector<std::size_t> h;
         for (const auto &s : items(v)) h.push_back(to_count(s, 1));
         c.hidden = std::move(h);
       },
       [](const C &c) { return join(c.hidden); }},
      {"dataset",
       [](C &c, const std::string &v) {
         if (v == "blobs") c.dataset = DatasetSource::blobs;
         else if (v == "idx") c.dataset = DatasetSource::idx;
         else throw BadValue{"expected blobs or idx"};
       },
       [](const C &c) { return to_string(c.dataset); }},
      count_key("blob_per_class", &C::blob_per_class, 1),
      count_key("blob_classes", &C::blob_classes, 2),
      count_key("blob_dim", &C::blob_dim, 1),
      nonneg_key("blob_spread", &C::blob_spread),
      string_key("idx_images", &C::idx_images),
      string_key("idx_labels", &C::idx_labels),
      count_key("idx_limit", &C::idx_limit, 1),
      real_key("train_fraction", &C::train_fraction, 0.0, 1.0, true, true),
      {"global_seed", [](C &c, const std::string &v) { c.global_seed = to_u64(v); },
       [](const C &c) { return std::to_string(c.global_seed); }},
      count_key("seeds", &C::seeds, 1),
      count_key("pilot_rounds_max", &C::pilot_rounds_max, 0),
      bool_key("plots", &C::plots),
  };
  return table;
}

const Key *find_key(const std::string &name) {
  for (const auto &k : keys())
    if (name == k.name) return &k;
  return nullptr;
}

}  // namespace

std::size_t ExperimentConfig::sample_count() const {
  const double want = std::ceil(sample_fraction * static_cast<double>(n_clients) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(want, 1.0)), 1, n_clients);
}

std::string to_string(ProfilePreset p) {
  switch (p) {
    case ProfilePreset::real6: return "real6";
    case ProfilePreset::simulated6: return "simulated6";
    case ProfilePreset::file: return "file";
  }
  return "?";
}

std::string to_string(DatasetSource d) { return d == DatasetSource::blobs ? "blobs" : "idx"; }

void validate(const ExperimentConfig &c) {
  auto bad = [](const std::string &key, const std::string &why) {
    fail(ErrorKind::invalid_input, "config: " + key + ": " + why);
  };
  if (c.clusters > c.n_clients) bad("clusters", "more clusters than clients");
  if (c.p_vector.size() != c.clusters)
    bad("p_vector", "has " + std::to_string(c.p_vector.size()) + " rates but clusters = " +
                        std::to_string(c.clusters));
  for (std::size_t i = 0; i < c.p_vector.size(); ++i) {
    if (!(c.p_vector[i] > 0.0 && c.p_vector[i] <= 1.0)) bad("p_vector", "rates must lie in (0, 1]");
    if (i && c.p_vector[i] < c.p_vector[i - 1]) bad("p_vector", "rates must be ascending");
  }
  if (c.hidden.empty()) bad("hidden", "at least one hidden layer is required");
  if (c.f_min > c.f_max) bad("f_min", "exceeds f_max");
  if (c.upload_min > c.upload_max) bad("upload_min", "exceeds upload_max");
  if (c.download_min > c.download_max) bad("download_min", "exceeds download_max");
  if (c.carbon_profile == ProfilePreset::file && c.profile_file.empty())
    bad("profile_file", "required when carbon_profile = file");
  if (c.dataset == DatasetSource::idx && (c.idx_images.empty() || c.idx_labels.empty()))
    bad("idx_images", "idx_images and idx_labels are required when dataset = idx");
}

ExperimentConfig parse_config(const std::string &text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "config line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::invalid_input, where + "expected key = value");
    const auto name = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const Key *key = find_key(name);
    if (!key) fail(ErrorKind::invalid_input, where + "unknown key '" + name + "'");
    if (!seen.insert(name).second) fail(ErrorKind::invalid_input, where + "duplicate key '" + name + "'");
    try {
      key->set(cfg, value);
    } catch (const BadValue &e) {
      fail(ErrorKind::invalid_input, where + name + ": " + e.why);
    }
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const ExperimentConfig &cfg) {
  std::string out;
  for (const auto &k : keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace fedgreen::config
