#include "fedgreen/dataset.hpp"

#include <cmath>
#include <string>

#include "fedgreen/error.hpp"

namespace fedgreen {

void validate(const LabeledDataset &ds) {
  if (ds.features.rows() != ds.labels.size()) {
    fail(ErrorKind::invalid_input,
         "dataset has " + std::to_string(ds.features.rows()) + " feature rows but " +
             std::to_string(ds.labels.size()) + " labels");
  }
  if (ds.class_count < 1) fail(ErrorKind::invalid_input, "dataset class_count must be >= 1");
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.class_count) {
      fail(ErrorKind::invalid_input, "label " + std::to_string(ds.labels[i]) + " at row " +
                                         std::to_string(i) + " outside [0, " +
                                         std::to_string(ds.class_count) + ")");
    }
  }
  for (double v : ds.features.data()) {
    if (!std::isfinite(v)) fail(ErrorKind::invalid_input, "non-finite feature value");
  }
}

LabeledDataset subset(const LabeledDataset &ds, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.class_count = ds.class_count;
  out.features = Matrix(indices.size(), ds.dim());
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = ds.features.row(indices[k]);
    auto dst = out.features.row(k);
    std::copy(src.begin(), src.end(), dst.begin());
    out.labels.push_back(ds.labels[indices[k]]);
  }
  return out;
}

LabeledDataset concatenate(std::span<const LabeledDataset> parts) {
  LabeledDataset out;
  if (parts.empty()) return out;
  std::size_t n = 0;
  const std::size_t dim = parts.front().dim();
  out.class_count = parts.front().class_count;
  for (const auto &p : parts) {
    if (p.dim() != dim && !p.empty()) fail(ErrorKind::invalid_input, "concatenate: dim mismatch");
    if (p.class_count != out.class_count)
      fail(ErrorKind::invalid_input, "concatenate: class_count mismatch");
    n += p.size();
  }
  out.features = Matrix(n, dim);
  out.labels.reserve(n);
  std::size_t r = 0;
  for (const auto &p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i, ++r) {
      const auto src = p.features.row(i);
      std::copy(src.begin(), src.end(), out.features.row(r).begin());
      out.labels.push_back(p.labels[i]);
    }
  }
  return out;
}

}  // namespace fedgreen
