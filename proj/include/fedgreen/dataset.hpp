#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedgreen/tensor.hpp"

namespace fedgreen {

// Feature matrix [n x d] with integer labels in [0, class_count).
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool empty() const noexcept { return labels.empty(); }

  bool operator==(const LabeledDataset &) const = default;
};

// Throws invalid_input if features/labels disagree, labels are out of range,
// or any feature is non-finite. Empty datasets are allowed here.
void validate(const LabeledDataset &ds);

// Rows at the given indices, in index order.
LabeledDataset subset(const LabeledDataset &ds, std::span<const std::size_t> indices);

// Rows of `parts` stacked in order. All parts must share dim and class count.
LabeledDataset concatenate(std::span<const LabeledDataset> parts);

}  // namespace fedgreen
