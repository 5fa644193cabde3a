// SPDX-License-Identifier: Apache-2.0
#include "pixelflow/seg_metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pixelflow::metrics {

ConfusionMatrix::ConfusionMatrix(int n_classes) : n_(n_classes) {
  if (n_classes < 1) throw std::invalid_argument("ConfusionMatrix: n_classes must be >= 1");
  counts_.assign(std::size_t(n_) * n_, 0);
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
  std::int64_t t = 0;
  for (int p = 0; p < n_; ++p) t += at(truth, p);
  return t;
}

std::int64_t ConfusionMatrix::col_sum(int pred) const {
  std::int64_t t = 0;
  for (int r = 0; r < n_; ++r) t += at(r, pred);
  return t;
}

void ConfusionMatrix::accumulate(const LabelMap& truth, const LabelMap& prediction) {
  if (truth.height != prediction.height || truth.width != prediction.width) {
    throw std::invalid_argument("ConfusionMatrix: label map shapes differ");
  }
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const int t = truth.labels[i];
    const int p = prediction.labels[i];
    if (t >= n_ || p >= n_) {
      throw std::invalid_argument("ConfusionMatrix: label out of range");
    }
    ++at(t, p);
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw std::invalid_argument("ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

LabelMap decode(const fx::FxTensor& logits) {
  LabelMap map(logits.height, logits.width);
  for (int y = 0; y < logits.height; ++y) {
    for (int x = 0; x < logits.width; ++x) {
      int best = 0;
      std::int32_t best_m = logits.at(0, y, x);
      for (int c = 1; c < logits.channels; ++c) {
        const std::int32_t m = logits.at(c, y, x);
        if (m > best_m) {  // strict: ties keep the lower class index
          best_m = m;
          best = c;
        }
      }
      map.at(y, x) = std::uint8_t(best);
    }
  }
  return map;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw std::domain_error("accuracy: empty confusion matrix");
  std::int64_t diag = 0;
  for (int c = 0; c < cm.n_classes(); ++c) diag += cm.at(c, c);
  return double(diag) / double(total);
}

IouReport iou_report(const ConfusionMatrix& cm, bool strict) {
  IouReport report;
  report.per_class.assign(cm.n_classes(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  for (int c = 0; c < cm.n_classes(); ++c) {
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t denom = cm.row_sum(c) + cm.col_sum(c) - tp;  // TP + FP + FN
    if (denom == 0) {
      if (strict) {
        report.per_class[c] = 0.0;
        ++report.classes_counted;
      }
      continue;
    }
    report.per_class[c] = double(tp) / double(denom);
    sum += report.per_class[c];
    ++report.classes_counted;
  }
  if (report.classes_counted == 0) {
    throw std::domain_error("miou: no class present in truth or prediction");
  }
  report.mean = sum / double(report.classes_counted);
  return report;
}

double miou(const ConfusionMatrix& cm, bool strict) { return iou_report(cm, strict).mean; }

}  // namespace pixelflow::metrics
