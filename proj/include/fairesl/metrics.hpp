// Copyright 2026 fairesl contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "fairesl/coalition.hpp"
#include "fairesl/error.hpp"
#include "fairesl/model.hpp"

namespace fairesl {

enum class MetricKind { SelectionRate, Tpr, Fpr, Ppv, Npv };

inline std::string metric_name(MetricKind k) {
  switch (k) {
    case MetricKind::SelectionRate: return "sr";
    case MetricKind::Tpr: return "tpr";
    case MetricKind::Fpr: return "fpr";
    case MetricKind::Ppv: return "ppv";
    case MetricKind::Npv: return "npv";
  }
  throw DomainError("unknown metric");
}

inline MetricKind parse_metric(const std::string& s) {
  if (s == "sr") return MetricKind::SelectionRate;
  if (s == "tpr") return MetricKind::Tpr;
  if (s == "fpr") return MetricKind::Fpr;
  if (s == "ppv") return MetricKind::Ppv;
  if (s == "npv") return MetricKind::Npv;
  throw DomainError("unknown metric: " + s);
}

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

/// Confusion counts over the rows selected by `mask` (empty mask = all rows).
inline ConfusionCounts confusion(const std::vector<std::uint8_t>& y_true,
                                 const std::vector<std::uint8_t>& y_hat,
                                 const std::vector<std::uint8_t>& mask = {}) {
  if (y_true.size() != y_hat.size()) throw ShapeError("confusion: length mismatch");
  if (!mask.empty() && mask.size() != y_true.size()) {
    throw ShapeError("confusion: mask length mismatch");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (y_true[i]) {
      (y_hat[i] ? c.tp : c.fn)++;
    } else {
      (y_hat[i] ? c.fp : c.tn)++;
    }
  }
  return c;
}

/// Number of instances in the metric's denominator.
inline std::size_t metric_denominator(MetricKind kind, const ConfusionCounts& c) {
  switch (kind) {
    case MetricKind::SelectionRate: return c.total();
    case MetricKind::Tpr: return c.tp + c.fn;
    case MetricKind::Fpr: return c.fp + c.tn;
    case MetricKind::Ppv: return c.tp + c.fp;
    case MetricKind::Npv: return c.fn + c.tn;
  }
  throw DomainError("unknown metric");
}

/// Plain conditional rates. Note the deliberate orientation of `npv`:
/// the share of actual positives among predicted negatives, P(Y=1 | Yhat=0),
/// so that for every metric "larger" means "more of the positive outcome".
inline double metric_value(MetricKind kind, const ConfusionCounts& c) {
  const std::size_t den = metric_denominator(kind, c);
  if (den == 0) {
    throw UndefinedMetricError("metric " + metric_name(kind) +
                               " has an empty denominator");
  }
  std::size_t num = 0;
  switch (kind) {
    case MetricKind::SelectionRate: num = c.tp + c.fp; break;
    case MetricKind::Tpr: num = c.tp; break;
    case MetricKind::Fpr: num = c.fp; break;
    case MetricKind::Ppv: num = c.tp; break;
    case MetricKind::Npv: num = c.fn; break;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

/// Normalization constant for characteristic values: one half, the observed
/// positive share, or a fixed positive number.
struct Baseline {
  enum class Mode { Half, Prevalence, Fixed };
  Mode mode = Mode::Half;
  double fixed = 0.5;
};

inline double resolve_baseline(const Baseline& b, const std::vector<std::uint8_t>& y) {
  switch (b.mode) {
    case Baseline::Mode::Half:
      return 0.5;
    case Baseline::Mode::Prevalence: {
      if (y.empty()) throw DomainError("prevalence baseline on empty labels");
      std::size_t pos = 0;
      for (auto v : y) pos += v;
      if (pos == 0) throw DomainError("prevalence baseline is zero");
      return static_cast<double>(pos) / static_cast<double>(y.size());
    }
    case Baseline::Mode::Fixed:
      if (!(b.fixed > 0.0)) throw DomainError("baseline must be positive");
      return b.fixed;
  }
  throw DomainError("unknown baseline mode");
}

/// Memoized characteristic evaluator over a prediction table:
///
///   value(S_groups, S_features) = metric(rows with group in S_groups,
///                                        predictions of S_features) / baseline
///
/// with the empty group coalition pinned to 0. One instance serves both
/// allocation stages; `evaluations()` counts distinct metric computations.
class CharacteristicCache {
 public:
  CharacteristicCache(const CoalitionPredictionTable& table, MetricKind kind,
                      double baseline, std::vector<std::uint8_t> y_true,
                      std::vector<std::uint8_t> group)
      : table_(&table),
        kind_(kind),
        baseline_(baseline),
        y_(std::move(y_true)),
        group_(std::move(group)) {
    if (!(baseline_ > 0.0)) throw DomainError("baseline must be positive");
    if (y_.size() != table.row_ids.size() || group_.size() != y_.size()) {
      throw ShapeError("characteristic: label/group/table length mismatch");
    }
    for (auto g : group_) {
      if (g != 1 && g != 2) throw CardinalityError("group labels must be 1 or 2");
    }
  }

  const CoalitionPredictionTable& table() const { return *table_; }
  MetricKind kind() const { return kind_; }
  double baseline() const { return baseline_; }
  const std::vector<std::uint8_t>& y_true() const { return y_; }
  const std::vector<std::uint8_t>& group() const { return group_; }

  /// group_mask: bit 0 = group 1, bit 1 = group 2.
  double value(Coalition group_mask, Coalition feature_mask) const {
    if (group_mask == 0) return 0.0;
    const std::uint64_t key =
        (std::uint64_t(group_mask) << 32) | std::uint64_t(feature_mask);
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = memo_.find(key);
      if (it != memo_.end()) return it->second;
    }
    const auto& y_hat = table_->column(feature_mask);
    std::vector<std::uint8_t> mask(y_.size());
    for (std::size_t i = 0; i < y_.size(); ++i) {
      mask[i] = coalition_contains(group_mask, group_[i] - 1) ? 1 : 0;
    }
    double v = metric_value(kind_, confusion(y_, y_hat, mask)) / baseline_;
    std::lock_guard<std::mutex> lk(mu_);
    auto [it, fresh] = memo_.emplace(key, v);
    if (fresh) ++evals_;
    return it->second;
  }

  /// Distinct group-restricted metric computations so far.
  std::size_t evaluations() const {
    std::lock_guard<std::mutex> lk(mu_);
    return evals_;
  }

 private:
  const CoalitionPredictionTable* table_;
  MetricKind kind_;
  double baseline_;
  std::vector<std::uint8_t> y_;
  std::vector<std::uint8_t> group_;
  mutable std::unordered_map<std::uint64_t, double> memo_;
  mutable std::size_t evals_ = 0;
  mutable std::mutex mu_;
};

}  // namespace fairesl
