#include "fedgreen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "fedgreen/error.hpp"
#include "fedgreen/rng.hpp"

namespace fedgreen::datagen {

LabeledDataset make_blobs(std::size_t n_per_class, std::size_t n_classes, std::size_t dim,
                          double spread, std::uint64_t seed) {
  if (n_per_class == 0 || n_classes == 0 || dim == 0)
    fail(ErrorKind::invalid_input, "make_blobs: sizes must be positive");
  if (!(spread >= 0.0) || !std::isfinite(spread))
    fail(ErrorKind::invalid_input, "make_blobs: spread must be finite and >= 0");

  Rng center_rng(derive_seed(seed, {kTagBlobs, 0}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix centers(n_classes, dim);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto &v : centers.row(c)) {
        v = gauss(center_rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto &v : centers.row(c)) v /= norm;
  }

  LabeledDataset ds;
  ds.class_count = static_cast<int>(n_classes);
  ds.features = Matrix(n_per_class * n_classes, dim);
  ds.labels.reserve(n_per_class * n_classes);
  Rng noise_rng(derive_seed(seed, {kTagBlobs, 1}));
  std::size_t r = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t k = 0; k < n_per_class; ++k, ++r) {
      auto row = ds.features.row(r);
      const auto center = centers.row(c);
      for (std::size_t d = 0; d < dim; ++d) row[d] = center[d] + spread * gauss(noise_rng);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

std::vector<double> sample_dirichlet(double alpha, std::size_t k, std::uint64_t seed) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    fail(ErrorKind::invalid_input, "Dirichlet alpha must be > 0");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Gamma(a) for a < 1 is Gamma(a + 1) * U^(1/a); keep everything as logs.
  const double shape = alpha < 1.0 ? alpha + 1.0 : alpha;
  std::gamma_distribution<double> gamma(shape, 1.0);
  std::vector<double> logs(k);
  for (auto &l : logs) {
    double g = 0.0;
    do {
      g = gamma(rng);
    } while (!(g > 0.0));
    l = std::log(g);
    if (alpha < 1.0) l += std::log(1.0 - unit(rng)) / alpha;
  }
  const double mx = *std::max_element(logs.begin(), logs.end());
  double z = 0.0;
  std::vector<double> q(k);
  for (std::size_t i = 0; i < k; ++i) {
    q[i] = std::exp(logs[i] - mx);
    z += q[i];
  }
  for (auto &v : q) v /= z;
  return q;
}

ClientShards dirichlet_partition(const LabeledDataset &data, const PartitionSpec &spec) {
  validate(data);
  if (spec.n_clients == 0) fail(ErrorKind::invalid_input, "n_clients must be >= 1");
  if (!(spec.alpha > 0.0)) fail(ErrorKind::invalid_input, "alpha must be > 0");
  if (data.size() < spec.n_clients)
    fail(ErrorKind::invalid_input, "dataset has fewer rows (" + std::to_string(data.size()) +
                                       ") than clients (" + std::to_string(spec.n_clients) + ")");

  const std::size_t n_clients = spec.n_clients;
  std::vector<std::vector<std::size_t>> rows_of_class(static_cast<std::size_t>(data.class_count));
  for (std::size_t i = 0; i < data.size(); ++i)
    rows_of_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  std::vector<std::vector<std::size_t>> assigned(n_clients);
  for (std::size_t c = 0; c < rows_of_class.size(); ++c) {
    auto &rows = rows_of_class[c];
    if (rows.empty()) continue;
    Rng rng(derive_seed(spec.seed, {kTagPartition, c}));
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto q = sample_dirichlet(spec.alpha, n_clients, rng());

    // Largest-remainder rounding of q * |rows|.
    const double n = static_cast<double>(rows.size());
    std::vector<std::size_t> counts(n_clients);
    std::vector<double> frac(n_clients);
    std::size_t dealt = 0;
    for (std::size_t k = 0; k < n_clients; ++k) {
      const double exact = q[k] * n;
      counts[k] = static_cast<std::size_t>(std::floor(exact));
      frac[k] = exact - std::floor(exact);
      dealt += counts[k];
    }
    std::vector<std::size_t> order(n_clients);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; dealt < rows.size(); k = (k + 1) % n_clients, ++dealt)
      ++counts[order[k]];

    std::size_t pos = 0;
    for (std::size_t k = 0; k < n_clients; ++k)
      for (std::size_t t = 0; t < counts[k]; ++t) assigned[k].push_back(rows[pos++]);
  }

  for (std::size_t k = 0; k < n_clients; ++k) {
    if (!assigned[k].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t d = 1; d < n_clients; ++d)
      if (assigned[d].size() > assigned[donor].size()) donor = d;
    assigned[k].push_back(assigned[donor].back());
    assigned[donor].pop_back();
  }

  ClientShards out;
  for (auto &idx : assigned) {
    std::sort(idx.begin(), idx.end());
    out.clients.push_back(subset(data, idx));
  }
  out.indices = std::move(assigned);
  return out;
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char> &bytes, std::size_t offset,
                   const std::filesystem::path &path) {
  if (offset + 4 > bytes.size())
    fail(ErrorKind::format, path.string() + ": truncated header at byte offset " +
                                std::to_string(offset));
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path &images, const std::filesystem::path &labels,
                        std::size_t limit) {
  if (limit == 0) fail(ErrorKind::format, "IDX load with limit 0 yields an empty dataset");
  const auto img = read_all(images);
  const auto lab = read_all(labels);

  if (auto magic = be32(img, 0, images); magic != 0x00000803)
    fail(ErrorKind::format, images.string() + ": bad image magic at byte offset 0");
  if (auto magic = be32(lab, 0, labels); magic != 0x00000801)
    fail(ErrorKind::format, labels.string() + ": bad label magic at byte offset 0");

  const std::size_t n_img = be32(img, 4, images);
  const std::size_t rows = be32(img, 8, images);
  const std::size_t cols = be32(img, 12, images);
  const std::size_t n_lab = be32(lab, 4, labels);
  if (n_img != n_lab)
    fail(ErrorKind::format, "image count " + std::to_string(n_img) + " (byte offset 4 of " +
                                images.string() + ") differs from label count " +
                                std::to_string(n_lab));
  if (rows == 0 || cols == 0)
    fail(ErrorKind::format, images.string() + ": zero image dimension at byte offset 8");
  const std::size_t pixels = rows * cols;
  const std::size_t expected_img = 16 + n_img * pixels;
  if (img.size() != expected_img)
    fail(ErrorKind::format, images.string() + ": expected " + std::to_string(expected_img) +
                                " bytes, data ends at byte offset " + std::to_string(img.size()));
  if (lab.size() != 8 + n_lab)
    fail(ErrorKind::format, labels.string() + ": expected " + std::to_string(8 + n_lab) +
                                " bytes, data ends at byte offset " + std::to_string(lab.size()));

  const std::size_t n = std::min(n_img, limit);
  if (n == 0) fail(ErrorKind::format, "IDX files contain no items");
  LabeledDataset ds;
  ds.features = Matrix(n, pixels);
  ds.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.features.row(i);
    for (std::size_t p = 0; p < pixels; ++p) row[p] = img[16 + i * pixels + p] / 255.0;
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

Split train_test_split(const LabeledDataset &data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    fail(ErrorKind::invalid_input, "train_fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_train >= n)
    fail(ErrorKind::invalid_input, "split of " + std::to_string(n) + " rows at fraction " +
                                       std::to_string(train_fraction) + " leaves a part empty");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {kTagSplit}));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> te(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  return {subset(data, tr), subset(data, te)};
}

std::vector<double> label_distribution(const LabeledDataset &data) {
  std::vector<double> d(static_cast<std::size_t>(data.class_count), 0.0);
  if (data.empty()) return d;
  for (int y : data.labels) d[static_cast<std::size_t>(y)] += 1.0;
  for (auto &v : d) v /= static_cast<double>(data.size());
  return d;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::invalid_input, "distribution length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

double mean_pairwise_tv(std::span<const LabeledDataset> clients) {
  std::vector<std::vector<double>> dist;
  for (const auto &c : clients) dist.push_back(label_distribution(c));
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < dist.size(); ++i)
    for (std::size_t j = i + 1; j < dist.size(); ++j, ++pairs) s += total_variation(dist[i], dist[j]);
  return pairs == 0 ? 0.0 : s / static_cast<double>(pairs);
}

}  // namespace fedgreen::datagen
