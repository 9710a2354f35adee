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
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "fairesl/esl.hpp"
#include "fairesl/model.hpp"

namespace testutil {

/// Random characteristic values indexed by coalition mask; entry 0 stays 0.
inline std::vector<double> random_game_values(int players, std::mt19937_64& rng) {
  std::vector<double> v(std::size_t{1} << players, 0.0);
  for (std::size_t c = 1; c < v.size(); ++c) {
    v[c] = static_cast<double>(rng() >> 11) / 9007199254740992.0 * 4.0 - 1.0;
  }
  return v;
}

inline fairesl::Game game_from_values(const std::vector<double>& values, int players) {
  return fairesl::Game(players, [&values](fairesl::Coalition c) { return values[c]; });
}

/// Independent reference implementation: the permutation average of marginal
/// contributions, which the Shapley family must reproduce.
inline std::vector<double> shapley_permutation_oracle(const std::vector<double>& v,
                                                      int players) {
  std::vector<int> order(static_cast<std::size_t>(players));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(static_cast<std::size_t>(players), 0.0);
  std::size_t perms = 0;
  do {
    fairesl::Coalition seen = 0;
    for (int g : order) {
      fairesl::Coalition with = fairesl::coalition_with(seen, g);
      phi[static_cast<std::size_t>(g)] += v[with] - v[seen];
      seen = with;
    }
    ++perms;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& x : phi) x /= static_cast<double>(perms);
  return phi;
}

/// Synthetic prediction table with balanced groups and labels and random
/// hard predictions for every requested coalition.
struct MockData {
  fairesl::CoalitionPredictionTable table;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> group;
};

inline MockData make_mock_table(int players, std::size_t rows, std::uint64_t seed,
                                bool singletons_and_grand_only = false) {
  MockData d;
  d.table.feature_names.clear();
  for (int i = 0; i < players; ++i) {
    d.table.feature_names.push_back(std::string(1, static_cast<char>('a' + i)));
  }
  d.table.row_ids.resize(rows);
  std::iota(d.table.row_ids.begin(), d.table.row_ids.end(), 0);
  d.y.resize(rows);
  d.group.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    d.group[i] = i % 2 ? 2 : 1;
    d.y[i] = (i / 2) % 2;
  }
  std::mt19937_64 rng(seed);
  for (fairesl::Coalition c :
       fairesl::required_coalitions(singletons_and_grand_only, players)) {
    std::vector<std::uint8_t> col(rows);
    for (auto& b : col) b = rng() & 1;
    d.table.columns[c] = std::move(col);
  }
  return d;
}

}  // namespace testutil
