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

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairesl/coalition.hpp"
#include "fairesl/error.hpp"
#include "fairesl/metrics.hpp"

namespace fairesl {

/// The efficient, symmetric, linear solution concepts supported by the
/// engine. Each is a weighting sequence b_1..b_a over coalition sizes with
/// b_a = 1 pinned; b_0 = 0 by convention.
enum class Family { Shapley, Solidarity, EqualSurplus, Consensus, Lsp };

inline constexpr std::array<Family, 5> kAllFamilies = {
    Family::Shapley, Family::Solidarity, Family::EqualSurplus, Family::Consensus,
    Family::Lsp};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::Shapley: return "shapley";
    case Family::Solidarity: return "solidarity";
    case Family::EqualSurplus: return "equal_surplus";
    case Family::Consensus: return "consensus";
    case Family::Lsp: return "lsp";
  }
  throw DomainError("unknown family");
}

inline Family parse_family(const std::string& s) {
  if (s == "shapley") return Family::Shapley;
  if (s == "solidarity") return Family::Solidarity;
  if (s == "equal_surplus") return Family::EqualSurplus;
  if (s == "consensus") return Family::Consensus;
  if (s == "lsp") return Family::Lsp;
  throw DomainError("unknown family: " + s);
}

/// Weighting sequence (b_0, ..., b_a) of a family for an a-player game.
///
///   shapley        b_s = 1
///   solidarity     b_s = 1/(s+1)
///   equal_surplus  b_1 = a-1, b_s = 0 for 1 < s < a
///   consensus      b_1 = a/2, b_s = 1/2 for 1 < s < a
///   lsp            b_s = C(a-1, s) * s / 2^(a-2)   (least squares prenucleolus)
///
/// b_0 = 0 and b_a = 1 always.
inline std::vector<double> esl_coefficients(Family f, int a) {
  if (a < 1 || a > kMaxPlayers) throw DomainError("player count outside [1, 20]");
  std::vector<double> b(static_cast<std::size_t>(a) + 1, 0.0);
  for (int s = 1; s < a; ++s) {
    switch (f) {
      case Family::Shapley:
        b[s] = 1.0;
        break;
      case Family::Solidarity:
        b[s] = 1.0 / (s + 1.0);
        break;
      case Family::EqualSurplus:
        b[s] = s == 1 ? a - 1.0 : 0.0;
        break;
      case Family::Consensus:
        b[s] = s == 1 ? a / 2.0 : 0.5;
        break;
      case Family::Lsp:
        b[s] = static_cast<double>(detail::binomial(a - 1, s)) * s /
               std::exp2(a - 2);
        break;
    }
  }
  b[static_cast<std::size_t>(a)] = 1.0;
  return b;
}

/// A transferable-utility game: a player count plus a characteristic
/// function. Values are memoized; the empty coalition is 0 by definition and
/// never reaches the evaluator.
class Game {
 public:
  Game(int players, std::function<double(Coalition)> evaluator)
      : players_(players), eval_(std::move(evaluator)) {
    if (players_ < 1 || players_ > kMaxPlayers) {
      throw DomainError("player count outside [1, 20]");
    }
  }

  int players() const { return players_; }

  double value(Coalition c) const {
    if (c == 0) return 0.0;
    if (c > full_coalition(players_)) throw DomainError("coalition out of range");
    std::lock_guard<std::mutex> lk(mu_);
    auto it = memo_.find(c);
    if (it != memo_.end()) return it->second;
    double v = eval_(c);
    ++evals_;
    return memo_.emplace(c, v).first->second;
  }

  /// Number of evaluator calls (memoization hits do not count).
  std::size_t evaluations() const {
    std::lock_guard<std::mutex> lk(mu_);
    return evals_;
  }

 private:
  int players_;
  std::function<double(Coalition)> eval_;
  mutable std::unordered_map<Coalition, double> memo_;
  mutable std::size_t evals_ = 0;
  mutable std::mutex mu_;
};

struct Allocation {
  Family family;
  std::vector<double> values;
  double grand = 0.0;  // v of the grand coalition; allocations sum to it
};

/// Allocation of family `f`:
///
///   phi_g = sum over S not containing g of
///           w(|S|) * (b_{|S|+1} v(S + g)  -  b_{|S|} v(S)),
///   w(s) = (a-s-1)! s! / a!
///
/// Terms with a zero b coefficient are skipped before touching the game, so
/// the Equal Surplus family only ever evaluates singletons and the grand
/// coalition.
inline Allocation esl_value(const Game& game, Family f) {
  const int a = game.players();
  const auto b = esl_coefficients(f, a);
  const Coalition full = full_coalition(a);

  Allocation alloc;
  alloc.family = f;
  alloc.values.assign(static_cast<std::size_t>(a), 0.0);
  for (int g = 0; g < a; ++g) {
    double phi = 0.0;
    for_each_subset(coalition_without(full, g), [&](Coalition s_mask) {
      const int s = coalition_size(s_mask);
      double term = 0.0;
      if (b[static_cast<std::size_t>(s) + 1] != 0.0) {
        term += b[static_cast<std::size_t>(s) + 1] *
                game.value(coalition_with(s_mask, g));
      }
      if (s > 0 && b[static_cast<std::size_t>(s)] != 0.0) {
        term -= b[static_cast<std::size_t>(s)] * game.value(s_mask);
      }
      if (term != 0.0) phi += coalition_weight(s, a) * term;
    });
    alloc.values[static_cast<std::size_t>(g)] = phi;
  }
  alloc.grand = game.value(full);
  return alloc;
}

/// First-stage decomposition: splits the full-model characteristic between
/// the two groups. values[0] belongs to group 1, values[1] to group 2.
inline Allocation group_values(const CharacteristicCache& cache, Family f) {
  const Coalition full_features = full_coalition(cache.table().players());
  Game game(2, [&](Coalition s_groups) {
    return cache.value(s_groups, full_features);
  });
  return esl_value(game, f);
}

/// Per-group, per-feature contributions of the two-stage decomposition.
struct FeatureContributionMatrix {
  Family family;
  std::vector<std::string> feature_names;
  std::array<std::vector<double>, 2> contrib;  // [group][feature]
  std::array<double, 2> group_totals{};        // first-stage group values
  double grand = 0.0;
};

/// Second stage: treats each group's first-stage value as a game over
/// features (retrained per coalition) and allocates it with the same family.
/// The feature game is pinned to 0 at the empty coalition.
inline FeatureContributionMatrix two_stage(const CharacteristicCache& cache,
                                           Family f) {
  const int n = cache.table().players();
  FeatureContributionMatrix m;
  m.family = f;
  m.feature_names = cache.table().feature_names;

  for (int g = 0; g < 2; ++g) {
    Game feature_game(n, [&](Coalition s_features) {
      Game group_game(2, [&](Coalition s_groups) {
        return cache.value(s_groups, s_features);
      });
      return esl_value(group_game, f).values[static_cast<std::size_t>(g)];
    });
    Allocation alloc = esl_value(feature_game, f);
    m.contrib[static_cast<std::size_t>(g)] = alloc.values;
    m.group_totals[static_cast<std::size_t>(g)] = alloc.grand;
  }
  m.grand = cache.value(full_coalition(2), full_coalition(n));
  return m;
}

struct GapAttribution {
  std::vector<std::string> feature_names;
  std::vector<double> delta;  // per-feature group-1 minus group-2 contribution
  double delta_total = 0.0;   // first-stage gap; equals the sum of delta
};

inline GapAttribution gap_attribution(const FeatureContributionMatrix& m) {
  GapAttribution g;
  g.feature_names = m.feature_names;
  g.delta.resize(m.feature_names.size());
  for (std::size_t k = 0; k < g.delta.size(); ++k) {
    g.delta[k] = m.contrib[0][k] - m.contrib[1][k];
  }
  g.delta_total = m.group_totals[0] - m.group_totals[1];
  return g;
}

/// Nested decomposition across several binary sensitive attributes.
/// levels[j] holds the 2^(j+1) cells at depth j+1; a cell's path lists the
/// chosen level (1 or 2) of each attribute from the outermost inward.
struct MultiStageResult {
  struct Cell {
    std::vector<std::uint8_t> path;
    double value = 0.0;
    bool defined = true;
  };
  std::vector<std::string> attribute_names;
  std::vector<std::vector<Cell>> levels;
};

/// Composed allocation: the value of a cell (g_1, ..., g_j) is the family's
/// allocation to g_1 of the game over attribute-1 coalitions whose
/// characteristic is, recursively, the allocation to g_2 within the
/// restricted data, and so on; the innermost characteristic is the metric
/// ratio over the rows matching every attribute restriction. With a single
/// attribute this is exactly the first-stage decomposition.
inline MultiStageResult multi_stage(const CoalitionPredictionTable& table,
                                    MetricKind kind, Family f, double baseline,
                                    const std::vector<std::uint8_t>& y_true,
                                    const std::vector<std::vector<std::uint8_t>>& attrs,
                                    const std::vector<std::string>& attr_names) {
  const std::size_t s = attrs.size();
  if (s == 0 || s != attr_names.size()) throw ShapeError("multi_stage: bad attributes");
  if (s > 10) throw DomainError("multi_stage: more than 10 attributes");
  if (!(baseline > 0.0)) throw DomainError("baseline must be positive");
  for (const auto& col : attrs) {
    if (col.size() != y_true.size()) throw ShapeError("multi_stage: length mismatch");
    for (auto v : col) {
      if (v != 1 && v != 2) throw CardinalityError("attribute levels must be 1 or 2");
    }
  }

  const auto& y_hat = table.column(full_coalition(table.players()));

  // Memoized restricted characteristic over a prefix of attribute coalitions.
  std::map<std::vector<Coalition>, double> memo;
  auto restricted_value = [&](const std::vector<Coalition>& masks) -> double {
    for (Coalition c : masks) {
      if (c == 0) return 0.0;
    }
    auto it = memo.find(masks);
    if (it != memo.end()) return it->second;
    std::vector<std::uint8_t> row_mask(y_true.size(), 1);
    for (std::size_t a = 0; a < masks.size(); ++a) {
      for (std::size_t i = 0; i < row_mask.size(); ++i) {
        if (!coalition_contains(masks[a], attrs[a][i] - 1)) row_mask[i] = 0;
      }
    }
    double v = metric_value(kind, confusion(y_true, y_hat, row_mask)) / baseline;
    memo.emplace(masks, v);
    return v;
  };

  // Allocation component for path[depth..] given the outer restrictions.
  std::function<double(std::vector<Coalition>&, const std::vector<std::uint8_t>&,
                       std::size_t)>
      component = [&](std::vector<Coalition>& outer, const std::vector<std::uint8_t>& path,
                      std::size_t depth) -> double {
    Game game(2, [&](Coalition s_attr) {
      outer.push_back(s_attr);
      double v = depth + 1 == path.size() ? restricted_value(outer)
                                          : component(outer, path, depth + 1);
      outer.pop_back();
      return v;
    });
    return esl_value(game, f).values[static_cast<std::size_t>(path[depth] - 1)];
  };

  MultiStageResult result;
  result.attribute_names = attr_names;
  result.levels.resize(s);
  for (std::size_t depth = 1; depth <= s; ++depth) {
    const std::size_t cells = std::size_t{1} << depth;
    for (std::size_t code = 0; code < cells; ++code) {
      MultiStageResult::Cell cell;
      cell.path.resize(depth);
      for (std::size_t a = 0; a < depth; ++a) {
        cell.path[a] = static_cast<std::uint8_t>(((code >> a) & 1) + 1);
      }
      std::vector<Coalition> outer;
      try {
        cell.value = component(outer, cell.path, 0);
      } catch (const UndefinedMetricError&) {
        cell.defined = false;
      }
      result.levels[depth - 1].push_back(std::move(cell));
    }
  }
  return result;
}

}  // namespace fairesl
