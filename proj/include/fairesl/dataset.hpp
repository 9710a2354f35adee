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
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fairesl/error.hpp"

namespace fairesl {

/// Machine-readable warning; the CLI serializes these one JSON object per line.
struct Warning {
  std::string type;
  std::string detail;
  std::size_t count = 1;
};

/// Column-role declaration for a raw CSV table.
struct Schema {
  std::string label_col;
  std::vector<std::string> group_cols;    // one or more binary sensitive attributes
  std::vector<std::string> feature_cols;  // model features, in player order
  /// Label level mapped to 1 when the label column is not already 0/1.
  std::optional<std::string> positive_label;
  /// Optional per-column override of the group-level order (level->1, level->2).
  std::map<std::string, std::array<std::string, 2>> group_level_order;
};

/// Validated dataset. Group levels are remapped to {1, 2}; the label to {0, 1}.
/// Feature cells stay raw strings until encoding ("" means missing).
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::string> group_names;
  std::vector<std::array<std::string, 2>> group_levels;  // names of levels 1 and 2
  std::vector<std::uint8_t> y;
  std::vector<std::vector<std::uint8_t>> groups;   // [group_col][row] in {1,2}
  std::vector<std::vector<std::string>> features;  // [feature_col][row]
  std::vector<std::size_t> row_ids;                // original file row index

  std::size_t n() const { return y.size(); }
};

/// Row index sets of a train/test split, positions into the Dataset arrays.
struct SplitPair {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Dense numeric design matrix, column-major.
struct EncodedMatrix {
  std::vector<std::string> col_names;
  std::vector<int> col_source;  // index into Dataset::feature_names
  std::vector<std::vector<double>> cols;
  std::vector<std::size_t> row_ids;  // original file row ids
  std::vector<std::size_t> rows;     // positions into the Dataset arrays

  std::size_t n() const { return row_ids.size(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Splits one CSV record. Handles double-quoted fields with doubled quotes;
/// no embedded newlines.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    out += ch;
  }
  out += '"';
  return out;
}

inline bool is_missing_cell(const std::string& s) { return s.empty() || s == "?"; }

inline std::optional<double> parse_double(const std::string& s) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

inline void add_warning(std::vector<Warning>& ws, const std::string& type,
                        const std::string& detail) {
  for (auto& w : ws) {
    if (w.type == type && w.detail == detail) {
      ++w.count;
      return;
    }
  }
  ws.push_back({type, detail, 1});
}

/// Deterministic bounded draw from a raw 64-bit engine output. The engine
/// sequence is pinned by the standard, so results are portable; the modulo
/// bias at these range sizes is far below anything the tests can see.
inline std::size_t draw_index(std::mt19937_64& rng, std::size_t bound) {
  return static_cast<std::size_t>(rng() % bound);
}

template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[draw_index(rng, i)]);
  }
}

}  // namespace detail

/// Parses already-split CSV records (header + data rows) against a schema.
inline Dataset validate_rows(const std::vector<std::vector<std::string>>& records,
                             const Schema& schema, std::vector<Warning>& warnings) {
  if (records.empty()) throw SchemaError("empty table: no header row");
  const auto& header = records.front();

  auto col_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column not found: " + name);
    return static_cast<std::size_t>(it - header.begin());
  };

  if (schema.group_cols.empty()) throw SchemaError("no group column declared");
  std::size_t label_idx = col_of(schema.label_col);
  std::vector<std::size_t> group_idx;
  for (const auto& g : schema.group_cols) group_idx.push_back(col_of(g));
  std::vector<std::size_t> feat_idx;
  for (const auto& f : schema.feature_cols) feat_idx.push_back(col_of(f));

  Dataset ds;
  ds.feature_names = schema.feature_cols;
  ds.group_names = schema.group_cols;
  ds.groups.resize(schema.group_cols.size());
  ds.features.resize(schema.feature_cols.size());
  ds.group_levels.resize(schema.group_cols.size());

  // Level -> {1,2} mapping per group column, seeded from the schema override.
  std::vector<std::map<std::string, std::uint8_t>> level_of(schema.group_cols.size());
  for (std::size_t gi = 0; gi < schema.group_cols.size(); ++gi) {
    auto it = schema.group_level_order.find(schema.group_cols[gi]);
    if (it != schema.group_level_order.end()) {
      level_of[gi][it->second[0]] = 1;
      level_of[gi][it->second[1]] = 2;
      ds.group_levels[gi] = it->second;
    }
  }

  // Label mapping. Accept literal 0/1; otherwise require positive_label.
  std::map<std::string, std::uint8_t> label_map;
  bool label_is_01 = true;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      std::ostringstream os;
      os << "row " << r - 1 << " has " << records[r].size() << " cells, expected "
         << header.size();
      throw SchemaError(os.str());
    }
    const std::string v = detail::trim(records[r][label_idx]);
    if (!detail::is_missing_cell(v) && v != "0" && v != "1") label_is_01 = false;
  }
  if (!label_is_01 && !schema.positive_label) {
    throw LabelError("label column '" + schema.label_col +
                     "' is not 0/1 and no positive label was declared");
  }

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string label_raw = detail::trim(rec[label_idx]);
    if (detail::is_missing_cell(label_raw)) {
      detail::add_warning(warnings, "dropped_row", "missing label");
      continue;
    }
    bool group_missing = false;
    for (std::size_t gi = 0; gi < group_idx.size(); ++gi) {
      if (detail::is_missing_cell(detail::trim(rec[group_idx[gi]]))) group_missing = true;
    }
    if (group_missing) {
      detail::add_warning(warnings, "dropped_row", "missing group value");
      continue;
    }

    std::uint8_t yv;
    if (label_is_01) {
      yv = label_raw == "1" ? 1 : 0;
    } else {
      auto it = label_map.find(label_raw);
      if (it == label_map.end()) {
        if (label_map.size() == 2) {
          throw LabelError("label column has more than two levels: '" + label_raw + "'");
        }
        std::uint8_t mapped = (label_raw == *schema.positive_label) ? 1 : 0;
        it = label_map.emplace(label_raw, mapped).first;
      }
      yv = it->second;
    }

    std::vector<std::uint8_t> gvals(group_idx.size());
    for (std::size_t gi = 0; gi < group_idx.size(); ++gi) {
      const std::string gv = detail::trim(rec[group_idx[gi]]);
      auto it = level_of[gi].find(gv);
      if (it == level_of[gi].end()) {
        if (level_of[gi].size() == 2) {
          throw CardinalityError("group column '" + schema.group_cols[gi] +
                                 "' has a third level: '" + gv + "'");
        }
        std::uint8_t next = static_cast<std::uint8_t>(level_of[gi].size() + 1);
        it = level_of[gi].emplace(gv, next).first;
        ds.group_levels[gi][next - 1] = gv;
      }
      gvals[gi] = it->second;
    }

    ds.y.push_back(yv);
    for (std::size_t gi = 0; gi < group_idx.size(); ++gi) {
      ds.groups[gi].push_back(gvals[gi]);
    }
    for (std::size_t fi = 0; fi < feat_idx.size(); ++fi) {
      std::string cell = detail::trim(rec[feat_idx[fi]]);
      if (detail::is_missing_cell(cell)) cell.clear();
      ds.features[fi].push_back(cell);
    }
    ds.row_ids.push_back(r - 1);
  }

  if (!label_is_01 && label_map.size() < 2) {
    throw LabelError("label column has fewer than two observed levels");
  }
  for (std::size_t gi = 0; gi < group_idx.size(); ++gi) {
    std::size_t seen = 0;
    for (std::size_t lv = 0; lv < 2; ++lv) {
      for (std::uint8_t g : ds.groups[gi]) {
        if (g == lv + 1) {
          ++seen;
          break;
        }
      }
    }
    if (seen != 2) {
      throw CardinalityError("group column '" + schema.group_cols[gi] +
                             "' does not have exactly two observed levels");
    }
  }
  if (ds.n() == 0) throw SchemaError("no usable data rows");
  return ds;
}

inline Dataset load_csv_string(const std::string& text, const Schema& schema,
                               std::vector<Warning>& warnings) {
  std::vector<std::vector<std::string>> records;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    records.push_back(detail::split_csv_line(line));
  }
  return validate_rows(records, schema, warnings);
}

inline Dataset load_csv(const std::string& path, const Schema& schema,
                        std::vector<Warning>& warnings) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_csv_string(buf.str(), schema, warnings);
}

/// Writes the validated dataset back out as CSV (label as 0/1, groups by
/// level name, features raw).
inline void write_csv(const Dataset& ds, const Schema& schema, std::ostream& out) {
  for (std::size_t fi = 0; fi < ds.feature_names.size(); ++fi) {
    out << detail::csv_quote(ds.feature_names[fi]) << ',';
  }
  for (std::size_t gi = 0; gi < ds.group_names.size(); ++gi) {
    out << detail::csv_quote(ds.group_names[gi]) << ',';
  }
  out << detail::csv_quote(schema.label_col) << '\n';
  for (std::size_t r = 0; r < ds.n(); ++r) {
    for (std::size_t fi = 0; fi < ds.features.size(); ++fi) {
      out << detail::csv_quote(ds.features[fi][r]) << ',';
    }
    for (std::size_t gi = 0; gi < ds.groups.size(); ++gi) {
      out << detail::csv_quote(ds.group_levels[gi][ds.groups[gi][r] - 1]) << ',';
    }
    out << int(ds.y[r]) << '\n';
  }
}

/// Deterministic stratified split on (label, first group column).
/// Singleton strata go to train with a warning; every stratum with >= 2 rows
/// contributes at least one row to each side.
inline SplitPair split_dataset(const Dataset& ds, double test_fraction,
                               std::uint64_t seed, std::vector<Warning>& warnings) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DomainError("test_fraction outside (0,1)");
  }
  std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    strata[{ds.y[i], ds.groups[0][i]}].push_back(i);
  }

  SplitPair split;
  std::mt19937_64 rng(seed);
  for (auto& [key, idx] : strata) {
    if (idx.size() == 1) {
      detail::add_warning(warnings, "singleton_stratum",
                          "label=" + std::to_string(key.first) +
                              " group=" + std::to_string(key.second));
      split.train.push_back(idx[0]);
      continue;
    }
    detail::fisher_yates(idx, rng);
    auto want = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(idx.size())));
    want = std::clamp<std::size_t>(want, 1, idx.size() - 1);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      (k < want ? split.test : split.train).push_back(idx[k]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

namespace detail {

enum class ColKind { Numeric, Categorical };

/// A feature column is numeric when every non-missing cell parses as a double.
inline ColKind probe_kind(const std::vector<std::string>& col) {
  bool any = false;
  for (const auto& cell : col) {
    if (cell.empty()) continue;
    any = true;
    if (!parse_double(cell)) return ColKind::Categorical;
  }
  return any ? ColKind::Numeric : ColKind::Categorical;
}

}  // namespace detail

/// One-hot encodes categoricals and standardizes numerics with train-split
/// statistics. Missing numerics take the train median; missing categoricals
/// become a dedicated level when the train split has any.
inline std::pair<EncodedMatrix, EncodedMatrix> encode(const Dataset& ds,
                                                      const SplitPair& split,
                                                      std::vector<Warning>& warnings) {
  EncodedMatrix train, test;
  train.rows = split.train;
  test.rows = split.test;
  for (std::size_t i : split.train) train.row_ids.push_back(ds.row_ids[i]);
  for (std::size_t i : split.test) test.row_ids.push_back(ds.row_ids[i]);

  for (std::size_t fi = 0; fi < ds.features.size(); ++fi) {
    const auto& raw = ds.features[fi];
    const auto kind = detail::probe_kind(raw);

    if (kind == detail::ColKind::Numeric) {
      std::vector<double> train_vals;
      for (std::size_t i : split.train) {
        if (!raw[i].empty()) train_vals.push_back(*detail::parse_double(raw[i]));
      }
      if (train_vals.empty()) {
        detail::add_warning(warnings, "column_dropped",
                            ds.feature_names[fi] + ": all train values missing");
        continue;
      }
      std::sort(train_vals.begin(), train_vals.end());
      double median = train_vals.size() % 2
                          ? train_vals[train_vals.size() / 2]
                          : 0.5 * (train_vals[train_vals.size() / 2 - 1] +
                                   train_vals[train_vals.size() / 2]);
      double mean = 0.0;
      for (std::size_t i : split.train) {
        mean += raw[i].empty() ? median : *detail::parse_double(raw[i]);
      }
      mean /= static_cast<double>(split.train.size());
      double var = 0.0;
      for (std::size_t i : split.train) {
        double v = raw[i].empty() ? median : *detail::parse_double(raw[i]);
        var += (v - mean) * (v - mean);
      }
      var /= static_cast<double>(split.train.size());
      if (var == 0.0) {
        detail::add_warning(warnings, "column_dropped",
                            ds.feature_names[fi] + ": zero variance on train split");
        continue;
      }
      double sd = std::sqrt(var);

      auto emit = [&](EncodedMatrix& m, const std::vector<std::size_t>& idx) {
        std::vector<double> col;
        col.reserve(idx.size());
        for (std::size_t i : idx) {
          double v = raw[i].empty() ? median : *detail::parse_double(raw[i]);
          col.push_back((v - mean) / sd);
        }
        m.cols.push_back(std::move(col));
        m.col_names.push_back(ds.feature_names[fi]);
        m.col_source.push_back(static_cast<int>(fi));
      };
      emit(train, split.train);
      emit(test, split.test);
    } else {
      // Categorical: levels in train-split first-appearance order.
      std::vector<std::string> levels;
      bool train_missing = false;
      for (std::size_t i : split.train) {
        if (raw[i].empty()) {
          train_missing = true;
          continue;
        }
        if (std::find(levels.begin(), levels.end(), raw[i]) == levels.end()) {
          levels.push_back(raw[i]);
        }
      }
      if (train_missing) levels.push_back("__missing__");
      if (levels.empty()) {
        detail::add_warning(warnings, "column_dropped",
                            ds.feature_names[fi] + ": no usable train values");
        continue;
      }

      auto emit = [&](EncodedMatrix& m, const std::vector<std::size_t>& idx,
                      bool is_test) {
        std::vector<std::vector<double>> onehot(levels.size(),
                                                std::vector<double>(idx.size(), 0.0));
        for (std::size_t k = 0; k < idx.size(); ++k) {
          std::string cell = raw[idx[k]];
          if (cell.empty()) cell = "__missing__";
          auto it = std::find(levels.begin(), levels.end(), cell);
          if (it == levels.end()) {
            if (is_test) {
              detail::add_warning(warnings, "unseen_category",
                                  ds.feature_names[fi] + "=" + cell);
              continue;  // all-zero row for this feature
            }
            continue;
          }
          onehot[static_cast<std::size_t>(it - levels.begin())][k] = 1.0;
        }
        for (std::size_t lv = 0; lv < levels.size(); ++lv) {
          m.cols.push_back(std::move(onehot[lv]));
          m.col_names.push_back(ds.feature_names[fi] + "=" + levels[lv]);
          m.col_source.push_back(static_cast<int>(fi));
        }
      };
      emit(train, split.train, false);
      emit(test, split.test, true);
    }
  }
  return {std::move(train), std::move(test)};
}

}  // namespace fairesl
