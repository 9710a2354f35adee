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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "fairesl/model.hpp"

using namespace fairesl;

namespace {

EncodedMatrix matrix_from_cols(std::vector<std::vector<double>> cols,
                               std::vector<int> source) {
  EncodedMatrix m;
  m.cols = std::move(cols);
  m.col_source = std::move(source);
  for (std::size_t c = 0; c < m.cols.size(); ++c) {
    m.col_names.push_back("c" + std::to_string(c));
  }
  for (std::size_t i = 0; i < m.cols[0].size(); ++i) {
    m.row_ids.push_back(i);
    m.rows.push_back(i);
  }
  return m;
}

}  // namespace

TEST_CASE("separable data is fit exactly", "[model]") {
  std::mt19937_64 rng(7);
  std::vector<std::vector<double>> cols(1);
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 60; ++i) {
    bool pos = i % 2 == 0;
    std::uniform_real_distribution<double> u(pos ? 0.5 : -2.0, pos ? 2.0 : -0.5);
    cols[0].push_back(u(rng));
    y.push_back(pos);
  }
  auto m = matrix_from_cols(cols, {0});
  ClassifierConfig cfg;
  auto model = train_logistic(m, y, {0}, cfg);
  CHECK(model.weights[0] > 0.0);
  CHECK(predict_labels(model, m) == y);
}

TEST_CASE("zero model scores exactly one half and predicts positive", "[model]") {
  auto m = matrix_from_cols({{1.0, -1.0, 2.0}}, {0});
  ClassifierConfig cfg;
  cfg.epochs = 0;  // leave the zero initialization untouched
  auto model = train_logistic(m, {0, 1, 0}, {0}, cfg);
  auto scores = predict_scores(model, m);
  for (double s : scores) CHECK(s == 0.5);
  // The decision rule is score >= threshold.
  CHECK(predict_labels(model, m) == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("class weighting balances an intercept-only model", "[model]") {
  // 1 positive in 4: the weighted problem has its optimum at score 1/2,
  // the unweighted one at the prevalence.
  std::vector<std::vector<double>> cols(1, std::vector<double>(16, 0.0));
  auto m = matrix_from_cols(cols, {0});
  std::vector<std::uint8_t> y(16, 0);
  for (int i = 0; i < 4; ++i) y[static_cast<std::size_t>(i) * 4] = 1;

  ClassifierConfig cfg;
  cfg.epochs = 4000;
  auto weighted = train_logistic(m, y, {}, cfg);
  CHECK(weighted.intercept == Catch::Approx(0.0).margin(1e-6));

  cfg.class_weighted = false;
  auto plain = train_logistic(m, y, {}, cfg);
  CHECK(plain.intercept == Catch::Approx(std::log(0.25 / 0.75)).margin(1e-6));
}

TEST_CASE("training is deterministic", "[model]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> cols(3, std::vector<double>(40));
  std::vector<std::uint8_t> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    for (auto& c : cols) c[i] = u(rng);
    y[i] = cols[0][i] + 0.3 * cols[2][i] > 0.0;
  }
  auto m = matrix_from_cols(cols, {0, 1, 2});
  ClassifierConfig cfg;
  auto a = train_logistic(m, y, {0, 1, 2}, cfg);
  auto b = train_logistic(m, y, {0, 1, 2}, cfg);
  CHECK(a.weights == b.weights);
  CHECK(a.intercept == b.intercept);
}

TEST_CASE("single-class labels are rejected", "[model]") {
  auto m = matrix_from_cols({{1.0, 2.0}}, {0});
  ClassifierConfig cfg;
  CHECK_THROWS_AS(train_logistic(m, {1, 1}, {0}, cfg), DegenerateModelError);
  CHECK_THROWS_AS(train_logistic(m, {0, 0}, {0}, cfg), DegenerateModelError);
}

TEST_CASE("coalition plans", "[model]") {
  SECTION("surplus-style plan touches singletons and the grand coalition") {
    auto plan = required_coalitions(true, 3);
    CHECK(plan == std::vector<Coalition>{1, 2, 4, 7});
  }
  SECTION("general plan touches every non-empty subset") {
    auto plan = required_coalitions(false, 3);
    CHECK(plan.size() == 7);
    CHECK(plan.front() == 1);
    CHECK(plan.back() == 7);
  }
  SECTION("one player needs exactly one model either way") {
    CHECK(required_coalitions(true, 1) == std::vector<Coalition>{1});
    CHECK(required_coalitions(false, 1) == std::vector<Coalition>{1});
  }
  SECTION("player counts outside [1, 20]") {
    CHECK_THROWS_AS(required_coalitions(true, 0), DomainError);
    CHECK_THROWS_AS(required_coalitions(false, 21), DomainError);
  }
}

TEST_CASE("coalition models only see their own columns", "[model]") {
  // Feature 0 determines the label, feature 1 is a constant. The model for
  // {f1} collapses to an intercept and predicts everything positive; the
  // model for {f0} recovers the labels.
  std::vector<std::vector<double>> cols(2);
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 40; ++i) {
    bool pos = i % 2 == 0;
    cols[0].push_back(pos ? 1.0 : -1.0);
    cols[1].push_back(0.0);
    y.push_back(pos);
  }
  auto m = matrix_from_cols(cols, {0, 1});
  ClassifierConfig cfg;
  auto table = build_coalition_table(m, y, m, {"f0", "f1"},
                                     required_coalitions(false, 2), cfg);
  REQUIRE(table.players() == 2);
  CHECK(table.column(0b01) == y);
  CHECK(table.column(0b11) == y);
  CHECK(table.column(0b10) == std::vector<std::uint8_t>(40, 1));
  CHECK_THROWS_AS(table.column(0b100), CompletenessError);
}

TEST_CASE("prediction tables round trip through CSV", "[model]") {
  CoalitionPredictionTable table;
  table.feature_names = {"age", "hours"};
  table.row_ids = {3, 7, 9};
  table.columns[0b01] = {1, 0, 1};
  table.columns[0b10] = {0, 0, 1};
  table.columns[0b11] = {1, 1, 1};

  std::ostringstream out;
  write_prediction_table(table, out);
  std::istringstream in(out.str());
  auto back = import_prediction_table(in);
  CHECK(back.feature_names == table.feature_names);
  CHECK(back.row_ids == table.row_ids);
  CHECK(back.columns == table.columns);
}

TEST_CASE("imported tables use sorted name order and sorted ids", "[model]") {
  // Rows arrive shuffled; names are not alphabetical in the file.
  const std::string csv =
      "coalition,row_id,y_hat\n"
      "zeta,5,1\n"
      "alpha,5,0\n"
      "alpha;zeta,2,1\n"
      "alpha;zeta,5,0\n"
      "zeta,2,0\n"
      "alpha,2,1\n";
  std::istringstream in(csv);
  auto table = import_prediction_table(in);
  CHECK(table.feature_names == std::vector<std::string>{"alpha", "zeta"});
  CHECK(table.row_ids == std::vector<std::size_t>{2, 5});
  CHECK(table.column(0b01) == std::vector<std::uint8_t>{1, 0});  // alpha
  CHECK(table.column(0b10) == std::vector<std::uint8_t>{0, 1});  // zeta
  CHECK(table.column(0b11) == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("prediction table import rejects malformed input", "[model]") {
  auto parse = [](const std::string& csv) {
    std::istringstream in(csv);
    return import_prediction_table(in);
  };
  SECTION("missing header column") {
    CHECK_THROWS_AS(parse("coalition,row\n"), SchemaError);
  }
  SECTION("no data rows") {
    CHECK_THROWS_AS(parse("coalition,row_id,y_hat\n"), SchemaError);
  }
  SECTION("y_hat outside {0,1}") {
    CHECK_THROWS_AS(parse("coalition,row_id,y_hat\na,0,2\n"), ValueError);
  }
  SECTION("duplicate instance within a coalition") {
    CHECK_THROWS_AS(parse("coalition,row_id,y_hat\na,0,1\na,0,1\n"), ValueError);
  }
  SECTION("coalitions with different coverage") {
    CHECK_THROWS_AS(
        parse("coalition,row_id,y_hat\na,0,1\na;b,0,1\na;b,1,0\nb,0,1\nb,1,0\n"),
        ShapeError);
  }
  SECTION("grand coalition absent") {
    CHECK_THROWS_AS(parse("coalition,row_id,y_hat\na,0,1\nb,0,0\n"),
                    CompletenessError);
  }
}
