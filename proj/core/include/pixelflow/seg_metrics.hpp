// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "pixelflow/fixed_point.hpp"

namespace pixelflow::metrics {

struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;  // row-major class indices

  LabelMap() = default;
  LabelMap(int h, int w) : height(h), width(w), labels(std::size_t(h) * w, 0) {}
  std::uint8_t& at(int y, int x) { return labels[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[std::size_t(y) * width + x]; }

  bool operator==(const LabelMap&) const = default;
};

/// Rows index ground truth, columns index prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes);

  int n_classes() const { return n_; }
  std::int64_t& at(int truth, int pred) { return counts_[std::size_t(truth) * n_ + pred]; }
  std::int64_t at(int truth, int pred) const {
    return counts_[std::size_t(truth) * n_ + pred];
  }
  std::int64_t total() const;
  std::int64_t row_sum(int truth) const;
  std::int64_t col_sum(int pred) const;

  /// Accumulates one image pair; shapes must match and labels be < n_classes.
  void accumulate(const LabelMap& truth, const LabelMap& prediction);
  /// Confusion matrices merge by addition (parallel per-image evaluation).
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

 private:
  int n_;
  std::vector<std::int64_t> counts_;
};

/// Per-pixel argmax over the channel dimension; ties break toward the
/// lowest class index.
LabelMap decode(const fx::FxTensor& logits);

/// Pixel accuracy: trace / total.
double accuracy(const ConfusionMatrix& cm);

struct IouReport {
  std::vector<double> per_class;  // NaN for classes absent from truth and prediction
  double mean = 0.0;
  int classes_counted = 0;
};

/// Mean intersection-over-union: mean over classes of TP / (TP + FP + FN).
/// Classes absent from both truth and prediction are excluded from the mean
/// unless strict is set (then they count as 0).
/// Throws std::domain_error when every class is absent.
IouReport iou_report(const ConfusionMatrix& cm, bool strict = false);
double miou(const ConfusionMatrix& cm, bool strict = false);

}  // namespace pixelflow::metrics
