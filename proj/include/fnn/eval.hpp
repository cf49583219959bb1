// Classification metrics: confusion matrices, accuracy, macro recall and
// macro precision, per-timepoint accuracy of functional predictions.
#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fnn/error.hpp"
#include "fnn/funcore.hpp"

namespace fnn {

/// Rows are true classes, columns predicted classes; classes are 1-based.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes)
      : classes_(classes), counts_(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0) {
    if (classes < 1) throw Error("confusion matrix needs at least one class");
  }

  int classes() const noexcept { return classes_; }

  void add(int truth, int predicted, std::size_t n = 1) {
    check(truth);
    check(predicted);
    counts_[index(truth, predicted)] += n;
  }

  std::size_t at(int truth, int predicted) const { return counts_[index(truth, predicted)]; }

  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }
  std::size_t row_sum(int truth) const {
    std::size_t s = 0;
    for (int p = 1; p <= classes_; ++p) s += at(truth, p);
    return s;
  }
  std::size_t col_sum(int predicted) const {
    std::size_t s = 0;
    for (int t = 1; t <= classes_; ++t) s += at(t, predicted);
    return s;
  }
  std::size_t trace() const {
    std::size_t s = 0;
    for (int c = 1; c <= classes_; ++c) s += at(c, c);
    return s;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.classes_ != classes_) throw ShapeMismatchError("confusion matrices differ in size");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  void check(int c) const {
    if (c < 1 || c > classes_) {
      throw LabelOutOfRangeError("label " + std::to_string(c) + " outside 1.." + std::to_string(classes_));
    }
  }
  std::size_t index(int t, int p) const {
    return static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(classes_) + static_cast<std::size_t>(p - 1);
  }

  int classes_;
  std::vector<std::size_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int classes) {
  if (truth.size() != predicted.size()) throw ShapeMismatchError("label sequences differ in length");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

struct Metrics {
  double accuracy = 0.0;
  double macro_recall = 0.0;
  double macro_precision = 0.0;
  std::vector<double> recall;     // per class
  std::vector<double> precision;  // per class
  /// Classes whose recall (no true samples) or precision (never predicted)
  /// has a zero denominator; they contribute 0 to the macro averages.
  std::vector<int> recall_undefined;
  std::vector<int> precision_undefined;
};

inline Metrics metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw Error("metrics of an empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (int c = 1; c <= cm.classes(); ++c) {
    const std::size_t rs = cm.row_sum(c), cs = cm.col_sum(c), tp = cm.at(c, c);
    double r = 0.0, p = 0.0;
    if (rs == 0) m.recall_undefined.push_back(c);
    else r = static_cast<double>(tp) / static_cast<double>(rs);
    if (cs == 0) m.precision_undefined.push_back(c);
    else p = static_cast<double>(tp) / static_cast<double>(cs);
    m.recall.push_back(r);
    m.precision.push_back(p);
    m.macro_recall += r;
    m.macro_precision += p;
  }
  m.macro_recall /= cm.classes();
  m.macro_precision /= cm.classes();
  return m;
}

namespace detail {

inline std::size_t argmax_at(const MultiCurve& m, std::size_t t) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < m.channels(); ++c)
    if (m.channel(c)[t] > m.channel(best)[t]) best = c;
  return best;
}

}  // namespace detail

/// Fraction of grid points where the argmax of the predicted probability
/// curves equals the argmax of the true label curves.
inline double per_timepoint_metrics(const MultiCurve& truth, const MultiCurve& predicted) {
  detail::require_same_grid(truth.grid(), predicted.grid());
  if (truth.channels() != predicted.channels()) throw ShapeMismatchError("class count mismatch");
  std::size_t hit = 0;
  for (std::size_t t = 0; t < truth.length(); ++t) {
    hit += detail::argmax_at(truth, t) == detail::argmax_at(predicted, t);
  }
  return static_cast<double>(hit) / static_cast<double>(truth.length());
}

/// Per-timepoint decisions accumulated into `cm`.
inline void add_per_timepoint(ConfusionMatrix& cm, const MultiCurve& truth, const MultiCurve& predicted) {
  detail::require_same_grid(truth.grid(), predicted.grid());
  for (std::size_t t = 0; t < truth.length(); ++t) {
    cm.add(static_cast<int>(detail::argmax_at(truth, t)) + 1,
           static_cast<int>(detail::argmax_at(predicted, t)) + 1);
  }
}

}  // namespace fnn
