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
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "fairesl/error.hpp"

namespace fairesl {

/// A coalition of players encoded as a bitmask: bit i set <=> player i is in.
/// Player counts are capped at 20, so 32 bits are plenty.
using Coalition = std::uint32_t;

inline constexpr int kMaxPlayers = 20;

constexpr Coalition empty_coalition() { return 0u; }

constexpr Coalition full_coalition(int players) {
  return players == 0 ? 0u : ((1u << players) - 1u);
}

constexpr int coalition_size(Coalition c) { return std::popcount(c); }

constexpr bool coalition_contains(Coalition c, int player) {
  return (c >> player) & 1u;
}

constexpr Coalition coalition_with(Coalition c, int player) {
  return c | (1u << player);
}

constexpr Coalition coalition_without(Coalition c, int player) {
  return c & ~(1u << player);
}

/// Enumerates every subset of `mask` (including the empty set and `mask`
/// itself) in decreasing numeric order and feeds it to `fn`.
template <typename Fn>
void for_each_subset(Coalition mask, Fn&& fn) {
  Coalition sub = mask;
  while (true) {
    fn(sub);
    if (sub == 0) break;
    sub = (sub - 1) & mask;
  }
}

/// All subsets of `mask`, largest bit pattern first.
inline std::vector<Coalition> subsets_of(Coalition mask) {
  std::vector<Coalition> out;
  out.reserve(std::size_t{1} << coalition_size(mask));
  for_each_subset(mask, [&](Coalition s) { out.push_back(s); });
  return out;
}

namespace detail {

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  }
  return r;
}

}  // namespace detail

/// Weight of a coalition of size s in an a-player allocation sum:
///   (a - s - 1)! s! / a!  ==  1 / (a * C(a-1, s)).
inline double coalition_weight(int s, int a) {
  if (a < 1 || s < 0 || s > a - 1) throw DomainError("coalition_weight: bad size");
  return 1.0 / (static_cast<double>(a) * static_cast<double>(detail::binomial(a - 1, s)));
}

/// Renders a coalition as the sorted, semicolon-joined member names.
inline std::string coalition_label(Coalition c, const std::vector<std::string>& names) {
  std::vector<std::string> members;
  for (int i = 0; i < static_cast<int>(names.size()); ++i) {
    if (coalition_contains(c, i)) members.push_back(names[i]);
  }
  std::sort(members.begin(), members.end());
  std::string out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i) out += ';';
    out += members[i];
  }
  return out;
}

/// Inverse of coalition_label. Unknown names raise CompletenessError.
inline Coalition parse_coalition_label(const std::string& label,
                                       const std::vector<std::string>& names) {
  Coalition c = 0;
  if (label.empty()) return c;
  std::size_t start = 0;
  while (start <= label.size()) {
    std::size_t end = label.find(';', start);
    if (end == std::string::npos) end = label.size();
    std::string name = label.substr(start, end - start);
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      throw CompletenessError("unknown feature in coalition label: " + name);
    }
    c = coalition_with(c, static_cast<int>(it - names.begin()));
    start = end + 1;
    if (end == label.size()) break;
  }
  return c;
}

}  // namespace fairesl
