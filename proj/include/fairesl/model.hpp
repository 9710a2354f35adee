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

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fairesl/coalition.hpp"
#include "fairesl/dataset.hpp"
#include "fairesl/detail/parallel.hpp"
#include "fairesl/error.hpp"

namespace fairesl {

struct ClassifierConfig {
  double learning_rate = 0.5;
  int epochs = 500;
  double l2 = 0.0;
  bool class_weighted = true;
  double threshold = 0.5;
};

/// Logistic scorer over a fixed set of encoded columns.
struct TrainedModel {
  std::vector<int> cols;  // encoded column indices the model was fit on
  std::vector<double> weights;
  double intercept = 0.0;
  double threshold = 0.5;
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Full-batch gradient descent on the (optionally class-weighted) logistic
/// loss. Deterministic: zero initialization, fixed epoch count.
inline TrainedModel train_logistic(const EncodedMatrix& train,
                                   const std::vector<std::uint8_t>& y,
                                   const std::vector<int>& cols,
                                   const ClassifierConfig& cfg) {
  const std::size_t n = train.n();
  if (y.size() != n) throw ShapeError("train_logistic: label/matrix row mismatch");
  std::size_t n1 = 0;
  for (auto v : y) n1 += v;
  if (n1 == 0 || n1 == n) {
    throw DegenerateModelError("training labels contain a single class");
  }

  double w_pos = 1.0, w_neg = 1.0;
  if (cfg.class_weighted) {
    w_pos = static_cast<double>(n) / (2.0 * static_cast<double>(n1));
    w_neg = static_cast<double>(n) / (2.0 * static_cast<double>(n - n1));
  }
  const double w_total = w_pos * static_cast<double>(n1) +
                         w_neg * static_cast<double>(n - n1);

  TrainedModel model;
  model.cols = cols;
  model.weights.assign(cols.size(), 0.0);
  model.threshold = cfg.threshold;

  std::vector<double> grad(cols.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = model.intercept;
      for (std::size_t j = 0; j < cols.size(); ++j) {
        z += model.weights[j] * train.cols[static_cast<std::size_t>(cols[j])][i];
      }
      double resid = (y[i] ? w_pos : w_neg) * (detail::sigmoid(z) - double(y[i]));
      for (std::size_t j = 0; j < cols.size(); ++j) {
        grad[j] += resid * train.cols[static_cast<std::size_t>(cols[j])][i];
      }
      grad_b += resid;
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
      model.weights[j] -= cfg.learning_rate * (grad[j] / w_total + cfg.l2 * model.weights[j]);
    }
    model.intercept -= cfg.learning_rate * grad_b / w_total;
  }
  return model;
}

inline std::vector<double> predict_scores(const TrainedModel& model,
                                          const EncodedMatrix& m) {
  std::vector<double> out(m.n());
  for (std::size_t i = 0; i < m.n(); ++i) {
    double z = model.intercept;
    for (std::size_t j = 0; j < model.cols.size(); ++j) {
      z += model.weights[j] * m.cols[static_cast<std::size_t>(model.cols[j])][i];
    }
    out[i] = detail::sigmoid(z);
  }
  return out;
}

/// Hard labels: 1 exactly when the score reaches the threshold.
inline std::vector<std::uint8_t> predict_labels(const TrainedModel& model,
                                                const EncodedMatrix& m) {
  auto scores = predict_scores(model, m);
  std::vector<std::uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = scores[i] >= model.threshold ? 1 : 0;
  }
  return out;
}

/// Hard test-split predictions of the models retrained on each requested
/// feature coalition. The bit order of `feature_names` fixes coalition masks.
struct CoalitionPredictionTable {
  std::vector<std::string> feature_names;
  std::vector<std::size_t> row_ids;
  std::map<Coalition, std::vector<std::uint8_t>> columns;

  int players() const { return static_cast<int>(feature_names.size()); }

  bool has(Coalition c) const { return columns.find(c) != columns.end(); }

  const std::vector<std::uint8_t>& column(Coalition c) const {
    auto it = columns.find(c);
    if (it == columns.end()) {
      throw CompletenessError("prediction table has no column for coalition '" +
                              coalition_label(c, feature_names) + "'");
    }
    return it->second;
  }
};

/// The feature coalitions an allocation pass will touch. The Equal Surplus
/// path only ever queries singletons and the grand coalition; every other
/// family needs all non-empty subsets.
inline std::vector<Coalition> required_coalitions(bool singletons_and_grand_only,
                                                  int players) {
  if (players < 1 || players > kMaxPlayers) {
    throw DomainError("player count outside [1, 20]");
  }
  std::vector<Coalition> out;
  Coalition full = full_coalition(players);
  if (singletons_and_grand_only) {
    for (int k = 0; k < players; ++k) out.push_back(coalition_with(0, k));
    if (players > 1) out.push_back(full);
  } else {
    for (Coalition c = 1; c <= full; ++c) out.push_back(c);
  }
  return out;
}

/// Retrains one model per coalition on the column subset belonging to its
/// features and stores hard test-split predictions. Trainings are
/// independent and run concurrently.
inline CoalitionPredictionTable build_coalition_table(
    const EncodedMatrix& train, const std::vector<std::uint8_t>& y_train,
    const EncodedMatrix& test, const std::vector<std::string>& feature_names,
    const std::vector<Coalition>& coalitions, const ClassifierConfig& cfg) {
  if (feature_names.size() > kMaxPlayers) {
    throw DomainError("feature universe larger than 20 players");
  }
  CoalitionPredictionTable table;
  table.feature_names = feature_names;
  table.row_ids = test.row_ids;

  std::vector<std::vector<std::uint8_t>> slots(coalitions.size());
  detail::parallel_for(coalitions.size(), [&](std::size_t i) {
    std::vector<int> cols;
    for (std::size_t c = 0; c < train.cols.size(); ++c) {
      if (coalition_contains(coalitions[i], train.col_source[c])) {
        cols.push_back(static_cast<int>(c));
      }
    }
    TrainedModel m = train_logistic(train, y_train, cols, cfg);
    slots[i] = predict_labels(m, test);
  });
  for (std::size_t i = 0; i < coalitions.size(); ++i) {
    table.columns[coalitions[i]] = std::move(slots[i]);
  }
  return table;
}

/// Serializes a prediction table: one row per (coalition, instance), with the
/// coalition spelled out as sorted semicolon-joined feature names.
inline void write_prediction_table(const CoalitionPredictionTable& table,
                                   std::ostream& out) {
  out << "coalition,row_id,y_hat\n";
  for (const auto& [c, col] : table.columns) {
    const std::string label = coalition_label(c, table.feature_names);
    for (std::size_t i = 0; i < col.size(); ++i) {
      out << detail::csv_quote(label) << ',' << table.row_ids[i] << ','
          << int(col[i]) << '\n';
    }
  }
}

/// Parses an externally produced prediction table. The feature universe is
/// the union of all names mentioned; bits follow sorted name order. Every
/// coalition must cover the same instances, the grand coalition must be
/// present, and y_hat must be literally 0 or 1.
inline CoalitionPredictionTable import_prediction_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty prediction table");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  auto col_at = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaError("prediction table is missing column: " + name);
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_coal = col_at("coalition");
  const std::size_t c_row = col_at("row_id");
  const std::size_t c_yhat = col_at("y_hat");

  struct RawRow {
    std::string coalition;
    std::size_t row_id;
    std::uint8_t y_hat;
  };
  std::vector<RawRow> rows;
  std::set<std::string> names;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw SchemaError("prediction table row has wrong cell count");
    }
    RawRow r;
    r.coalition = detail::trim(cells[c_coal]);
    if (r.coalition.empty()) throw ValueError("empty coalition label");
    const std::string rid = detail::trim(cells[c_row]);
    try {
      r.row_id = std::stoull(rid);
    } catch (const std::exception&) {
      throw ValueError("row_id is not a non-negative integer: '" + rid + "'");
    }
    const std::string yh = detail::trim(cells[c_yhat]);
    if (yh != "0" && yh != "1") {
      throw ValueError("y_hat must be 0 or 1, got '" + yh + "'");
    }
    r.y_hat = yh == "1" ? 1 : 0;
    rows.push_back(std::move(r));
    std::size_t start = 0;
    const std::string& lbl = rows.back().coalition;
    while (start <= lbl.size()) {
      std::size_t end = lbl.find(';', start);
      if (end == std::string::npos) end = lbl.size();
      names.insert(lbl.substr(start, end - start));
      start = end + 1;
      if (end == lbl.size()) break;
    }
  }
  if (rows.empty()) throw SchemaError("prediction table has no data rows");

  CoalitionPredictionTable table;
  table.feature_names.assign(names.begin(), names.end());
  if (table.feature_names.size() > kMaxPlayers) {
    throw DomainError("feature universe larger than 20 players");
  }

  std::map<Coalition, std::map<std::size_t, std::uint8_t>> by_coalition;
  for (const auto& r : rows) {
    Coalition c = parse_coalition_label(r.coalition, table.feature_names);
    auto [it, fresh] = by_coalition[c].emplace(r.row_id, r.y_hat);
    if (!fresh) {
      throw ValueError("duplicate (coalition, row_id) pair in prediction table");
    }
  }

  const auto& ref = by_coalition.begin()->second;
  for (const auto& [rid, _] : ref) table.row_ids.push_back(rid);
  for (const auto& [c, cells] : by_coalition) {
    if (cells.size() != ref.size()) {
      throw ShapeError("coalitions cover different numbers of instances");
    }
    std::vector<std::uint8_t> col;
    col.reserve(cells.size());
    std::size_t k = 0;
    for (const auto& [rid, yh] : cells) {
      if (rid != table.row_ids[k++]) {
        throw ShapeError("coalitions cover different instance ids");
      }
      col.push_back(yh);
    }
    table.columns[c] = std::move(col);
  }

  if (!table.has(full_coalition(table.players()))) {
    throw CompletenessError("prediction table is missing the full-universe coalition");
  }
  return table;
}

inline CoalitionPredictionTable import_prediction_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open prediction table: " + path);
  return import_prediction_table(in);
}

}  // namespace fairesl
