// Functional k-nearest-neighbours classifier on smoothed curves.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fnn/error.hpp"
#include "fnn/funcore.hpp"
#include "fnn/smoothing.hpp"

namespace fnn {

/// Training curves smoothed with the order-0 estimator, plus their labels.
struct KnnModel {
  std::vector<MultiCurve> curves;
  std::vector<int> labels;
  std::size_t k = 1;
  int n_classes = 0;
  LLEConfig smoother;
};

namespace detail {

inline LLEConfig order0(const LLEConfig& lle) {
  LLEConfig c = lle;
  c.derivative_orders = 0;
  c.bandwidths.resize(1);
  return c;
}

inline MultiCurve knn_smooth(const MultiCurve& x, const LLEConfig& order0_config) {
  return lle_smooth(x, order0_config);
}

struct Neighbour {
  double distance;
  std::size_t index;
};

/// Neighbours sorted by distance; equal distances keep training order.
inline std::vector<Neighbour> ranked_neighbours(const KnnModel& model, const MultiCurve& smoothed) {
  std::vector<Neighbour> out;
  out.reserve(model.curves.size());
  for (std::size_t i = 0; i < model.curves.size(); ++i) {
    const MultiCurve& y = model.curves[i];
    if (y.channels() != smoothed.channels() || y.length() != smoothed.length()) {
      throw ShapeMismatchError("query shape differs from the training curves");
    }
    const auto a = smoothed.data();
    const auto b = y.data();
    double d2 = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
      const double e = a[q] - b[q];
      d2 += e * e;
    }
    out.push_back({std::sqrt(d2 / static_cast<double>(smoothed.length())), i});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Neighbour& l, const Neighbour& r) { return l.distance < r.distance; });
  return out;
}

/// Majority vote among the first k neighbours. Ties go to the class with the
/// smaller mean neighbour distance, then to the lower class index.
inline int vote(const std::vector<Neighbour>& ranked, const std::vector<int>& labels,
                std::size_t k, int n_classes) {
  std::vector<std::size_t> count(static_cast<std::size_t>(n_classes) + 1, 0);
  std::vector<double> dist(static_cast<std::size_t>(n_classes) + 1, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto c = static_cast<std::size_t>(labels[ranked[i].index]);
    ++count[c];
    dist[c] += ranked[i].distance;
  }
  int best = 0;
  for (int c = 1; c <= n_classes; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (count[ci] == 0) continue;
    if (best == 0) {
      best = c;
      continue;
    }
    const auto bi = static_cast<std::size_t>(best);
    if (count[ci] > count[bi]) {
      best = c;
    } else if (count[ci] == count[bi] &&
               dist[ci] / static_cast<double>(count[ci]) < dist[bi] / static_cast<double>(count[bi])) {
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// Distance between two (already smoothed) observations:
/// d(X, Y)^2 = sum over channels of <X_i - Y_i, X_i - Y_i>.
inline double curve_distance(const MultiCurve& x, const MultiCurve& y) {
  if (x.channels() != y.channels()) throw ShapeMismatchError("channel count mismatch");
  detail::require_same_grid(x.grid(), y.grid());
  double d2 = 0.0;
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto a = x.channel(c), b = y.channel(c);
    std::vector<double> diff(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) diff[t] = a[t] - b[t];
    d2 += inner_product(diff, diff);
  }
  return std::sqrt(d2);
}

inline KnnModel knn_fit(const std::vector<LabeledSample>& train, const LLEConfig& lle, std::size_t k) {
  if (train.empty()) throw Error("knn needs at least one training sample");
  if (k == 0 || k > train.size()) {
    throw Error("k = " + std::to_string(k) + " must be in 1.." + std::to_string(train.size()));
  }
  KnnModel m;
  m.k = k;
  m.smoother = detail::order0(lle);
  for (const auto& s : train) {
    const int label = s.class_index();
    if (label < 1) throw LabelOutOfRangeError("knn labels must be positive");
    m.n_classes = std::max(m.n_classes, label);
    m.curves.push_back(detail::knn_smooth(s.data, m.smoother));
    m.labels.push_back(label);
  }
  return m;
}

inline int knn_predict(const KnnModel& model, const MultiCurve& query) {
  const auto ranked = detail::ranked_neighbours(model, detail::knn_smooth(query, model.smoother));
  return detail::vote(ranked, model.labels, model.k, model.n_classes);
}

/// Test accuracy for every k in `k_values`; neighbours are ranked once per query.
inline std::vector<double> knn_sweep(const std::vector<LabeledSample>& train,
                                     const std::vector<LabeledSample>& test,
                                     const std::vector<std::size_t>& k_values, const LLEConfig& lle) {
  const std::size_t kmax = k_values.empty() ? 1 : *std::max_element(k_values.begin(), k_values.end());
  const KnnModel model = knn_fit(train, lle, kmax);
  std::vector<std::size_t> hits(k_values.size(), 0);
  for (const auto& s : test) {
    const auto ranked = detail::ranked_neighbours(model, detail::knn_smooth(s.data, model.smoother));
    for (std::size_t i = 0; i < k_values.size(); ++i) {
      if (k_values[i] == 0) throw Error("k must be positive");
      hits[i] += detail::vote(ranked, model.labels, k_values[i], model.n_classes) == s.class_index();
    }
  }
  std::vector<double> acc(k_values.size(), 0.0);
  if (test.empty()) return acc;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    acc[i] = static_cast<double>(hits[i]) / static_cast<double>(test.size());
  }
  return acc;
}

}  // namespace fnn
