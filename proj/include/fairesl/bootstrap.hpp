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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "fairesl/dataset.hpp"
#include "fairesl/detail/parallel.hpp"
#include "fairesl/error.hpp"

namespace fairesl {

struct BootstrapConfig {
  std::size_t replicates = 1000;
  double alpha = 0.05;
  std::uint64_t master_seed = 0;
};

struct BootstrapResult {
  /// One entry per replicate, in replicate order; NaN marks a failure.
  std::vector<double> values;
  std::array<double, 2> ci{0.0, 0.0};
  double mean = 0.0;
  std::size_t failures = 0;
};

/// Draws, for every stratum, exactly its own size with replacement from
/// within it. Models stay fixed; only the evaluation rows move.
inline std::vector<std::size_t> stratified_resample(
    const std::vector<std::vector<std::size_t>>& strata, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  std::size_t total = 0;
  for (const auto& s : strata) total += s.size();
  out.reserve(total);
  for (const auto& s : strata) {
    if (s.empty()) throw DomainError("stratified_resample: empty stratum");
    for (std::size_t k = 0; k < s.size(); ++k) {
      out.push_back(s[detail::draw_index(rng, s.size())]);
    }
  }
  return out;
}

/// Groups row positions by (group, true label), in deterministic key order.
inline std::vector<std::vector<std::size_t>> group_label_strata(
    const std::vector<std::uint8_t>& group, const std::vector<std::uint8_t>& y) {
  if (group.size() != y.size()) throw ShapeError("strata: length mismatch");
  std::vector<std::vector<std::size_t>> strata(4);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (group[i] != 1 && group[i] != 2) throw CardinalityError("group must be 1 or 2");
    strata[static_cast<std::size_t>(group[i] - 1) * 2 + y[i]].push_back(i);
  }
  strata.erase(std::remove_if(strata.begin(), strata.end(),
                              [](const auto& s) { return s.empty(); }),
               strata.end());
  return strata;
}

namespace detail {

/// Nearest-rank percentile over sorted values.
inline double percentile(const std::vector<double>& sorted, double q) {
  const std::size_t m = sorted.size();
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(m)));
  rank = std::clamp<std::size_t>(rank, 1, m);
  return sorted[rank - 1];
}

}  // namespace detail

struct MultiBootstrapResult {
  std::vector<BootstrapResult> per_statistic;
  std::size_t failures = 0;
};

/// Runs B replicates of a vector-valued statistic over stratified resamples.
/// Replicate seeds are master_seed + replicate index, so the result is
/// bit-identical no matter how many workers execute it. A replicate whose
/// statistic throws is dropped and counted; more than B/10 such failures
/// raise UnstableResultError.
inline MultiBootstrapResult bootstrap_ci_multi(
    const std::function<std::vector<double>(const std::vector<std::size_t>&)>& statistic,
    const std::vector<std::vector<std::size_t>>& strata, std::size_t n_stats,
    const BootstrapConfig& cfg) {
  if (cfg.replicates == 0) throw DomainError("bootstrap: zero replicates");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw DomainError("alpha outside (0,1)");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> slots(cfg.replicates);
  detail::parallel_for(cfg.replicates, [&](std::size_t b) {
    std::mt19937_64 rng(cfg.master_seed + b);
    auto idx = stratified_resample(strata, rng);
    try {
      slots[b] = statistic(idx);
      if (slots[b].size() != n_stats) {
        throw ShapeError("bootstrap statistic returned the wrong arity");
      }
    } catch (const Error&) {
      slots[b].assign(n_stats, nan);
    }
  });

  MultiBootstrapResult out;
  out.per_statistic.resize(n_stats);
  for (auto& r : out.per_statistic) r.values.reserve(cfg.replicates);
  for (std::size_t b = 0; b < cfg.replicates; ++b) {
    bool failed = std::isnan(slots[b].empty() ? nan : slots[b][0]);
    if (failed) ++out.failures;
    for (std::size_t s = 0; s < n_stats; ++s) {
      out.per_statistic[s].values.push_back(failed ? nan : slots[b][s]);
    }
  }
  if (out.failures * 10 > cfg.replicates) {
    throw UnstableResultError("more than one tenth of bootstrap replicates failed");
  }

  for (auto& r : out.per_statistic) {
    r.failures = out.failures;
    std::vector<double> valid;
    valid.reserve(cfg.replicates);
    for (double v : r.values) {
      if (!std::isnan(v)) valid.push_back(v);
    }
    if (valid.empty()) throw UnstableResultError("no valid bootstrap replicates");
    std::sort(valid.begin(), valid.end());
    r.ci = {detail::percentile(valid, cfg.alpha / 2.0),
            detail::percentile(valid, 1.0 - cfg.alpha / 2.0)};
    double sum = 0.0;
    for (double v : valid) sum += v;
    r.mean = sum / static_cast<double>(valid.size());
  }
  return out;
}

/// Scalar-statistic convenience wrapper.
inline BootstrapResult bootstrap_ci(
    const std::function<double(const std::vector<std::size_t>&)>& statistic,
    const std::vector<std::vector<std::size_t>>& strata, const BootstrapConfig& cfg) {
  auto multi = bootstrap_ci_multi(
      [&](const std::vector<std::size_t>& idx) {
        return std::vector<double>{statistic(idx)};
      },
      strata, 1, cfg);
  return std::move(multi.per_statistic[0]);
}

}  // namespace fairesl
