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

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fairesl/audit.hpp"

using namespace fairesl;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("fairesl_audit_" + std::to_string(counter.fetch_add(1)) + "_" +
            std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

/// x1 tracks the label perfectly for M and not at all for F; x2 is noise.
std::string write_biased_csv(const TempDir& dir, int per_group = 300) {
  const std::string path = dir.file("biased.csv");
  std::ofstream f(path);
  f << "x1,x2,sex,y\n";
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < per_group; ++i) {
    int y = i % 2;
    f << (y ? 2 : -2) << ',' << u(rng) << ",M," << y << '\n';
  }
  for (int i = 0; i < per_group; ++i) {
    int y = i % 2;
    f << ((i / 2) % 2 ? 2 : -2) << ',' << u(rng) << ",F," << y << '\n';
  }
  return path;
}

/// Both groups share the same 80-percent-consistent mechanism.
std::string write_fair_csv(const TempDir& dir) {
  const std::string path = dir.file("fair.csv");
  std::ofstream f(path);
  f << "x1,x2,sex,y\n";
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const char* sex : {"M", "F"}) {
    auto emit = [&](int n, int x1, int y) {
      for (int i = 0; i < n; ++i) {
        f << x1 << ',' << u(rng) << ',' << sex << ',' << y << '\n';
      }
    };
    emit(60, 2, 1);
    emit(60, -2, 0);
    emit(15, 2, 0);
    emit(15, -2, 1);
  }
  return path;
}

AuditConfig base_config(const std::string& data, const std::string& out) {
  AuditConfig cfg;
  cfg.data_path = data;
  cfg.schema.label_col = "y";
  cfg.schema.group_cols = {"sex"};
  cfg.schema.feature_cols = {"x1", "x2"};
  cfg.criterion = Criterion::Eod;
  cfg.seed = 5;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("biased data violates equalized odds end to end", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_biased_csv(dir), dir.file("out"));
  cfg.families.assign(kAllFamilies.begin(), kAllFamilies.end());
  auto report = run_audit(cfg);

  CHECK(report.feature_names == std::vector<std::string>{"x1", "x2"});
  CHECK(report.coalitions_requested == 3);  // all non-empty subsets of 2
  CHECK(report.baseline_value == 0.5);
  CHECK(report.config_hash.size() == 16);

  REQUIRE(report.metrics.size() == 1);
  const auto& mr = report.metrics[0];
  REQUIRE_FALSE(mr.failed);
  CHECK(mr.kind == MetricKind::Tpr);
  // ~150 positives per group, of which the 30% evaluation split keeps ~45.
  CHECK(mr.denominators[0] > 30);
  CHECK(mr.denominators[1] > 30);
  CHECK(mr.group_rates[0] > mr.group_rates[1] + 0.3);

  REQUIRE(mr.families.size() == 5);
  for (const auto& fr : mr.families) {
    CHECK(fr.first_stage.reject);
    CHECK(fr.first_stage.estimate > 0.0);
    REQUIRE(fr.has_second_stage);
    // The per-feature gaps explain the whole first-stage gap.
    CHECK(fr.gaps.delta_total ==
          Catch::Approx(fr.first_stage.estimate).margin(1e-9));
    double sum = 0.0;
    for (double d : fr.gaps.delta) sum += d;
    CHECK(sum == Catch::Approx(fr.gaps.delta_total).margin(1e-9));
  }

  // All five families ran, so majority votes exist; the planted feature is
  // convicted by a clear margin.
  REQUIRE(mr.votes.size() == 2);
  REQUIRE(mr.votes.count("x1") == 1);
  CHECK(mr.votes.at("x1").unfair);
  CHECK(mr.votes.at("x1").rejecting >= 3);

  REQUIRE(report.verdict_formed);
  CHECK_FALSE(report.verdict.satisfied);
  CHECK(report.characteristic_evaluations > 0);
  CHECK(report.timings_ms.count("total") == 1);
}

TEST_CASE("fair data passes the audit", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_fair_csv(dir), dir.file("out"));
  auto report = run_audit(cfg);
  REQUIRE(report.verdict_formed);
  CHECK(report.verdict.satisfied);
  REQUIRE(report.metrics.size() == 1);
  CHECK_FALSE(report.metrics[0].families[0].first_stage.reject);
  // Equal Surplus touches singletons and the grand coalition only.
  CHECK(report.coalitions_requested == 3);
}

TEST_CASE("reports are deterministic outside the timing block", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_biased_csv(dir, 100), dir.file("out"));
  auto j1 = report_to_json(run_audit(cfg));
  auto j2 = report_to_json(run_audit(cfg));
  j1.erase("timings_ms");
  j2.erase("timings_ms");
  CHECK(j1.dump() == j2.dump());

  SECTION("the seed changes the split and with it the numbers") {
    cfg.seed = 6;
    auto j3 = report_to_json(run_audit(cfg));
    j3.erase("timings_ms");
    CHECK(j1.dump() != j3.dump());
    CHECK(j1["config_hash"] != j3["config_hash"]);
  }
}

TEST_CASE("group-only audit stops after the first stage", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_biased_csv(dir, 100), dir.file("out"));
  cfg.stages = 1;
  auto report = run_audit(cfg);
  CHECK(report.coalitions_requested == 1);
  REQUIRE(report.metrics.size() == 1);
  REQUIRE(report.metrics[0].families.size() == 1);
  CHECK_FALSE(report.metrics[0].families[0].has_second_stage);
  CHECK(report.metrics[0].votes.empty());
  CHECK(report.verdict_formed);
}

TEST_CASE("explicit metric override can leave the criterion unformed", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_biased_csv(dir, 100), dir.file("out"));
  cfg.metric = "fpr";  // eod needs the TPR test
  auto report = run_audit(cfg);
  REQUIRE(report.metrics.size() == 1);
  CHECK(report.metrics[0].kind == MetricKind::Fpr);
  CHECK_FALSE(report.verdict_formed);
  CHECK_FALSE(report.verdict_note.empty());
}

TEST_CASE("a group without positives fails the metric, not the audit", "[audit]") {
  TempDir dir;
  const std::string path = dir.file("nopos.csv");
  {
    std::ofstream f(path);
    f << "x1,x2,sex,y\n";
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 80; ++i) {
      int y = i % 2;
      f << (y ? 2 : -2) << ',' << u(rng) << ",M," << y << '\n';
    }
    for (int i = 0; i < 80; ++i) {
      f << ((i % 4 < 2) ? 2 : -2) << ',' << u(rng) << ",F,0\n";
    }
  }
  auto cfg = base_config(path, dir.file("out"));
  auto report = run_audit(cfg);
  REQUIRE(report.metrics.size() == 1);
  CHECK(report.metrics[0].failed);
  CHECK_FALSE(report.metrics[0].error.empty());
  CHECK_FALSE(report.verdict_formed);
}

TEST_CASE("bootstrap attaches percentile intervals", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_biased_csv(dir), dir.file("out"));
  cfg.families = {Family::Shapley};
  cfg.bootstrap = 80;
  auto report = run_audit(cfg);
  const auto& fr = report.metrics[0].families[0];
  REQUIRE(fr.bootstrapped);
  CHECK(fr.boot_gap.values.size() == 80);
  CHECK(fr.boot_gap.ci[0] <= fr.boot_gap.ci[1]);
  // The planted gap is far from zero; the resampled interval stays there.
  CHECK(fr.boot_gap.ci[0] > 0.0);
  REQUIRE(fr.boot_features.size() == 2);

  SECTION("per-replicate dump") {
    const std::string path = dir.file("reps.csv");
    write_bootstrap_replicates(report, path);
    std::ifstream f(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(f, line)) ++lines;
    CHECK(lines == 1 + 3 * 80);  // header + (gap + two features) per replicate
  }
}

TEST_CASE("csv bundle carries every table", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_biased_csv(dir, 100), dir.file("out"));
  cfg.families.assign(kAllFamilies.begin(), kAllFamilies.end());
  auto report = run_audit(cfg);
  auto files = write_csv_bundle(report, dir.file("bundle"));
  REQUIRE(files.size() >= 6);
  for (const auto& f : files) {
    CHECK(std::filesystem::exists(f));
  }
  std::ifstream gv(dir.file("bundle") + "/group_values.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(gv, line)) ++rows;
  CHECK(rows == 1 + 5);  // header + one row per family for the single metric

  std::ifstream votes(dir.file("bundle") + "/votes.csv");
  rows = 0;
  while (std::getline(votes, line)) ++rows;
  CHECK(rows == 1 + 2);  // header + one row per feature
}

TEST_CASE("imported predictions drive the same pipeline", "[audit]") {
  TempDir dir;
  // One feature "a": TPR 8/10 for the first group vs 5/10 for the second.
  {
    std::ofstream f(dir.file("pred.csv"));
    f << "coalition,row_id,y_hat\n";
    for (int i = 0; i < 20; ++i) {
      int yhat = i < 10 ? (i < 8 ? 1 : 0) : (i < 15 ? 1 : 0);
      f << "a," << i << ',' << yhat << '\n';
    }
  }
  {
    std::ofstream f(dir.file("labels.csv"));
    f << "row_id,y,sex\n";
    for (int i = 0; i < 20; ++i) {
      f << i << ",1," << (i < 10 ? "M" : "F") << '\n';
    }
  }
  AuditConfig cfg;
  cfg.predictions_path = dir.file("pred.csv");
  cfg.labels_path = dir.file("labels.csv");
  cfg.schema.label_col = "y";
  cfg.schema.group_cols = {"sex"};
  cfg.criterion = Criterion::Eod;
  cfg.families = {Family::Shapley};
  auto report = run_audit(cfg);

  REQUIRE(report.metrics.size() == 1);
  const auto& mr = report.metrics[0];
  REQUIRE_FALSE(mr.failed);
  CHECK(mr.denominators[0] == 10);
  CHECK(mr.denominators[1] == 10);
  CHECK(mr.group_rates[0] == Catch::Approx(0.8));
  CHECK(mr.group_rates[1] == Catch::Approx(0.5));
  // gap = b1 (v1 - v2) = (0.8 - 0.5) / 0.5 for Shapley.
  CHECK(mr.families[0].first_stage.estimate == Catch::Approx(0.6).margin(1e-12));

  SECTION("labels must cover every prediction row") {
    std::ofstream f(dir.file("short.csv"));
    f << "row_id,y,sex\n0,1,M\n";
    f.close();
    cfg.labels_path = dir.file("short.csv");
    CHECK_THROWS_AS(run_audit(cfg), ShapeError);
  }
  SECTION("a labels file is required") {
    cfg.labels_path.clear();
    CHECK_THROWS_AS(run_audit(cfg), DomainError);
  }
  SECTION("dataset and predictions are mutually exclusive") {
    cfg.data_path = dir.file("pred.csv");
    CHECK_THROWS_AS(run_audit(cfg), DomainError);
  }
}

TEST_CASE("emitted prediction bundles reproduce the audit", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_biased_csv(dir, 100), dir.file("out"));
  cfg.families = {Family::Shapley};
  auto first = run_audit(cfg);
  auto files = write_prediction_bundle(first, dir.file("emitted"));
  REQUIRE(files.size() == 2);

  AuditConfig cfg2;
  cfg2.predictions_path = files[0];
  cfg2.labels_path = files[1];
  cfg2.schema.label_col = "y";
  cfg2.schema.group_cols = {"sex"};
  // Pin the level order from the first run; first-appearance order in the
  // emitted file need not match the original dataset's.
  cfg2.schema.group_level_order["sex"] = first.group_levels_eval[0];
  cfg2.criterion = Criterion::Eod;
  cfg2.families = {Family::Shapley};
  auto second = run_audit(cfg2);
  CHECK(second.group_levels_eval[0] == first.group_levels_eval[0]);

  const auto& a = first.metrics[0].families[0];
  const auto& b = second.metrics[0].families[0];
  CHECK(b.first_stage.estimate == a.first_stage.estimate);
  CHECK(b.first_stage.se == a.first_stage.se);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(b.matrix.contrib[0][k] == a.matrix.contrib[0][k]);
    CHECK(b.matrix.contrib[1][k] == a.matrix.contrib[1][k]);
  }
}

TEST_CASE("two sensitive attributes produce the nested decomposition", "[audit]") {
  TempDir dir;
  const std::string path = dir.file("two_attr.csv");
  {
    std::ofstream f(path);
    f << "x1,x2,sex,eth,y\n";
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 240; ++i) {
      int y = i % 2;
      const char* sex = (i / 2) % 2 ? "F" : "M";
      const char* eth = (i / 4) % 2 ? "B" : "A";
      int x1 = y ? 2 : -2;
      if (std::string(sex) == "F" && std::string(eth) == "B" && (i / 8) % 2 == 0) {
        x1 = -x1;  // plant a sub-group disadvantage in half the (F,B) rows
      }
      f << x1 << ',' << u(rng) << ',' << sex << ',' << eth << ',' << y << '\n';
    }
  }
  auto cfg = base_config(path, dir.file("out"));
  cfg.schema.group_cols = {"sex", "eth"};
  auto report = run_audit(cfg);
  REQUIRE(report.metrics.size() == 1);
  CHECK_FALSE(report.metrics[0].failed);  // planted noise keeps TPR off 1.0
  REQUIRE(report.has_multi_stage);
  REQUIRE(report.multi_stage_results.size() == 1);
  const auto& result = report.multi_stage_results[0].second;
  CHECK(result.attribute_names == std::vector<std::string>{"sex", "eth"});
  REQUIRE(result.levels.size() == 2);
  CHECK(result.levels[0].size() == 2);
  CHECK(result.levels[1].size() == 4);
  // The disadvantaged intersection gets the smallest depth-2 share.
  double fb = 0.0, best = -1e9;
  for (const auto& cell : result.levels[1]) {
    REQUIRE(cell.defined);
    if (cell.path == std::vector<std::uint8_t>{2, 2}) fb = cell.value;
    best = std::max(best, cell.value);
  }
  CHECK(fb < best);

  auto j = report_to_json(report);
  REQUIRE(j.contains("multi_stage"));
  auto files = write_csv_bundle(report, dir.file("bundle"));
  bool has_ms = false;
  for (const auto& f : files) {
    if (f.find("multi_stage.csv") != std::string::npos) has_ms = true;
  }
  CHECK(has_ms);
}

TEST_CASE("audit configuration is validated up front", "[audit]") {
  TempDir dir;
  auto cfg = base_config(write_biased_csv(dir, 60), dir.file("out"));
  SECTION("alpha") {
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(run_audit(cfg), DomainError);
  }
  SECTION("stages") {
    cfg.stages = 3;
    CHECK_THROWS_AS(run_audit(cfg), DomainError);
  }
  SECTION("families") {
    cfg.families.clear();
    CHECK_THROWS_AS(run_audit(cfg), DomainError);
  }
  SECTION("no data source") {
    cfg.data_path.clear();
    CHECK_THROWS_AS(run_audit(cfg), DomainError);
  }
}
