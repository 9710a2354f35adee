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

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairesl/bootstrap.hpp"
#include "fairesl/coalition.hpp"
#include "fairesl/dataset.hpp"
#include "fairesl/error.hpp"
#include "fairesl/esl.hpp"
#include "fairesl/inference.hpp"
#include "fairesl/metrics.hpp"
#include "fairesl/model.hpp"

namespace fairesl {

struct AuditConfig {
  std::string data_path;         // raw CSV; empty when predictions are imported
  std::string predictions_path;  // coalition prediction table
  std::string labels_path;       // row_id/label/group file for imported predictions
  Schema schema;
  Criterion criterion = Criterion::Eod;
  std::string metric = "auto";  // sr|tpr|fpr|ppv|npv|auto
  std::vector<Family> families = {Family::EqualSurplus};
  Baseline baseline;
  double threshold = 0.5;
  double alpha = 0.05;
  std::size_t bootstrap = 0;  // replicate count; 0 disables the bootstrap
  bool dump_replicates = false;
  std::uint64_t seed = 0;
  double test_fraction = 0.3;
  int stages = 2;  // 1 = group decomposition only
  ClassifierConfig classifier;
  std::string out_dir;
  std::string format = "json";  // json | csv
};

struct FamilyResults {
  Family family = Family::Shapley;
  Allocation first_stage_alloc;
  TestResult first_stage;
  bool has_second_stage = false;
  FeatureContributionMatrix matrix;
  GapAttribution gaps;
  SecondStageResult second_stage;
  bool bootstrapped = false;
  BootstrapResult boot_gap;
  std::vector<BootstrapResult> boot_features;
  double bootstrap_ms = 0.0;
};

struct MetricResults {
  MetricKind kind = MetricKind::Tpr;
  bool failed = false;
  std::string error;
  double pooled_rate = 0.0;
  std::array<std::size_t, 2> denominators{0, 0};
  std::array<double, 2> group_rates{0.0, 0.0};
  std::vector<FamilyResults> families;
  std::map<std::string, MajorityVote> votes;  // per feature, all-families runs
  std::size_t characteristic_evaluations = 0;
};

struct AuditReport {
  AuditConfig config;
  double baseline_value = 0.5;
  std::vector<Warning> warnings;
  std::vector<std::string> feature_names;  // prediction-table player order
  CoalitionPredictionTable table;          // evaluation-split predictions
  std::vector<std::uint8_t> y_eval;        // labels aligned to table rows
  std::vector<std::vector<std::uint8_t>> groups_eval;
  std::vector<std::array<std::string, 2>> group_levels_eval;
  std::vector<MetricResults> metrics;
  bool verdict_formed = false;
  std::string verdict_note;
  CriterionVerdict verdict;
  bool has_multi_stage = false;
  std::vector<std::pair<Family, MultiStageResult>> multi_stage_results;
  std::size_t coalitions_requested = 0;
  std::size_t characteristic_evaluations = 0;
  std::map<std::string, double> timings_ms;
  std::string config_hash;
};

namespace detail {

/// Characteristic over a resampled multiset of test rows; same contract as
/// CharacteristicCache but weighted by how often each row was drawn.
class ResampledCharacteristic {
 public:
  ResampledCharacteristic(const CoalitionPredictionTable& table, MetricKind kind,
                          double baseline, const std::vector<std::uint8_t>& y,
                          const std::vector<std::uint8_t>& group,
                          const std::vector<std::size_t>& idx)
      : table_(&table), kind_(kind), baseline_(baseline), y_(&y), group_(&group),
        idx_(&idx) {}

  double value(Coalition group_mask, Coalition feature_mask) const {
    if (group_mask == 0) return 0.0;
    const std::uint64_t key =
        (std::uint64_t(group_mask) << 32) | std::uint64_t(feature_mask);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const auto& y_hat = table_->column(feature_mask);
    ConfusionCounts c;
    for (std::size_t i : *idx_) {
      if (!coalition_contains(group_mask, (*group_)[i] - 1)) continue;
      if ((*y_)[i]) {
        (y_hat[i] ? c.tp : c.fn)++;
      } else {
        (y_hat[i] ? c.fp : c.tn)++;
      }
    }
    double v = metric_value(kind_, c) / baseline_;
    memo_.emplace(key, v);
    return v;
  }

 private:
  const CoalitionPredictionTable* table_;
  MetricKind kind_;
  double baseline_;
  const std::vector<std::uint8_t>* y_;
  const std::vector<std::uint8_t>* group_;
  const std::vector<std::size_t>* idx_;
  mutable std::unordered_map<std::uint64_t, double> memo_;
};

template <typename ValueFn>
Allocation group_values_fn(const ValueFn& v, int players, Family f) {
  Game game(2, [&](Coalition s_groups) {
    return v.value(s_groups, full_coalition(players));
  });
  return esl_value(game, f);
}

template <typename ValueFn>
FeatureContributionMatrix two_stage_fn(const ValueFn& v, int players,
                                       const std::vector<std::string>& names,
                                       Family f) {
  FeatureContributionMatrix m;
  m.family = f;
  m.feature_names = names;
  for (int g = 0; g < 2; ++g) {
    Game feature_game(players, [&](Coalition s_features) {
      Game group_game(2, [&](Coalition s_groups) {
        return v.value(s_groups, s_features);
      });
      return esl_value(group_game, f).values[static_cast<std::size_t>(g)];
    });
    Allocation alloc = esl_value(feature_game, f);
    m.contrib[static_cast<std::size_t>(g)] = alloc.values;
    m.group_totals[static_cast<std::size_t>(g)] = alloc.grand;
  }
  m.grand = v.value(full_coalition(2), full_coalition(players));
  return m;
}

struct StageTimer {
  std::map<std::string, double>* sink;
  std::string key;
  std::chrono::steady_clock::time_point start;
  StageTimer(std::map<std::string, double>* s, std::string k)
      : sink(s), key(std::move(k)), start(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    auto end = std::chrono::steady_clock::now();
    (*sink)[key] += std::chrono::duration<double, std::milli>(end - start).count();
  }
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Rounds to 12 significant digits so serialized reports are short and
/// byte-stable.
inline double round12(double x) {
  if (!std::isfinite(x)) return x;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::strtod(buf, nullptr);
}

inline std::string fmt12(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

inline std::string stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

}  // namespace detail

/// Labels/groups sidecar for imported prediction tables:
/// a CSV with a row_id column, the label column (0/1) and the group columns.
struct LabelFile {
  std::vector<std::size_t> row_ids;
  std::vector<std::uint8_t> y;
  std::vector<std::vector<std::uint8_t>> groups;
  std::vector<std::array<std::string, 2>> group_levels;
};

inline LabelFile load_label_file(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open labels file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty labels file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  auto col_at = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("labels file missing column: " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_rid = col_at("row_id");
  const std::size_t c_y = col_at(schema.label_col);
  std::vector<std::size_t> c_groups;
  for (const auto& g : schema.group_cols) c_groups.push_back(col_at(g));

  LabelFile lf;
  lf.groups.resize(c_groups.size());
  lf.group_levels.resize(c_groups.size());
  std::vector<std::map<std::string, std::uint8_t>> level_of(c_groups.size());
  // Pinned level order wins; otherwise levels are numbered by first appearance.
  for (std::size_t gi = 0; gi < c_groups.size(); ++gi) {
    auto it = schema.group_level_order.find(schema.group_cols[gi]);
    if (it != schema.group_level_order.end()) {
      level_of[gi][it->second[0]] = 1;
      level_of[gi][it->second[1]] = 2;
      lf.group_levels[gi] = it->second;
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw SchemaError("labels file: ragged row");
    lf.row_ids.push_back(std::stoull(detail::trim(cells[c_rid])));
    const std::string yv = detail::trim(cells[c_y]);
    if (yv != "0" && yv != "1") {
      throw LabelError("labels file: label must be 0 or 1, got '" + yv + "'");
    }
    lf.y.push_back(yv == "1" ? 1 : 0);
    for (std::size_t gi = 0; gi < c_groups.size(); ++gi) {
      const std::string gv = detail::trim(cells[c_groups[gi]]);
      auto it = level_of[gi].find(gv);
      if (it == level_of[gi].end()) {
        if (level_of[gi].size() == 2) {
          throw CardinalityError("labels file: group column '" +
                                 schema.group_cols[gi] + "' has a third level");
        }
        std::uint8_t next = static_cast<std::uint8_t>(level_of[gi].size() + 1);
        it = level_of[gi].emplace(gv, next).first;
        lf.group_levels[gi][next - 1] = gv;
      }
      lf.groups[gi].push_back(it->second);
    }
  }
  if (lf.row_ids.empty()) throw SchemaError("labels file has no rows");
  return lf;
}

/// Full pipeline: data -> split -> per-coalition models -> decompositions ->
/// tests -> (optional) bootstrap. With an imported prediction table the
/// dataset/model stages are replaced by the table plus a labels file.
inline AuditReport run_audit(const AuditConfig& cfg) {
  AuditReport report;
  report.config = cfg;
  auto t_total = std::chrono::steady_clock::now();

  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw DomainError("alpha outside (0,1)");
  if (cfg.stages != 1 && cfg.stages != 2) throw DomainError("stages must be 1 or 2");
  if (cfg.families.empty()) throw DomainError("no solution family requested");
  if (!cfg.predictions_path.empty() && !cfg.data_path.empty()) {
    throw DomainError("provide either a dataset or an imported prediction table");
  }

  // Which feature coalitions the requested families will touch.
  bool only_equal_surplus = true;
  for (Family f : cfg.families) {
    if (f != Family::EqualSurplus) only_equal_surplus = false;
  }

  CoalitionPredictionTable table;
  std::vector<std::uint8_t> y_test;
  std::vector<std::vector<std::uint8_t>> group_test;  // one per group column

  if (!cfg.predictions_path.empty()) {
    {
      detail::StageTimer timer(&report.timings_ms, "load");
      table = import_prediction_table_file(cfg.predictions_path);
      if (cfg.labels_path.empty()) {
        throw DomainError("imported predictions need a labels file");
      }
      LabelFile lf = load_label_file(cfg.labels_path, cfg.schema);
      report.group_levels_eval = lf.group_levels;
      std::map<std::size_t, std::size_t> pos;
      for (std::size_t i = 0; i < lf.row_ids.size(); ++i) pos[lf.row_ids[i]] = i;
      y_test.reserve(table.row_ids.size());
      group_test.resize(lf.groups.size());
      for (std::size_t rid : table.row_ids) {
        auto it = pos.find(rid);
        if (it == pos.end()) {
          throw ShapeError("labels file does not cover prediction row_id " +
                           std::to_string(rid));
        }
        y_test.push_back(lf.y[it->second]);
        for (std::size_t gi = 0; gi < lf.groups.size(); ++gi) {
          group_test[gi].push_back(lf.groups[gi][it->second]);
        }
      }
    }
    report.coalitions_requested = table.columns.size();
  } else {
    if (cfg.data_path.empty()) throw DomainError("no data source given");
    Dataset ds;
    {
      detail::StageTimer timer(&report.timings_ms, "load");
      ds = load_csv(cfg.data_path, cfg.schema, report.warnings);
    }
    SplitPair split;
    EncodedMatrix train, test;
    {
      detail::StageTimer timer(&report.timings_ms, "split_encode");
      split = split_dataset(ds, cfg.test_fraction, cfg.seed, report.warnings);
      std::tie(train, test) = encode(ds, split, report.warnings);
    }
    {
      detail::StageTimer timer(&report.timings_ms, "train_table");
      const int players = static_cast<int>(ds.feature_names.size());
      std::vector<Coalition> coalitions =
          cfg.stages == 1 ? std::vector<Coalition>{full_coalition(players)}
                          : required_coalitions(only_equal_surplus, players);
      report.coalitions_requested = coalitions.size();
      std::vector<std::uint8_t> y_train;
      y_train.reserve(split.train.size());
      for (std::size_t i : split.train) y_train.push_back(ds.y[i]);
      ClassifierConfig ccfg = cfg.classifier;
      ccfg.threshold = cfg.threshold;
      table = build_coalition_table(train, y_train, test, ds.feature_names,
                                    coalitions, ccfg);
    }
    y_test.reserve(split.test.size());
    group_test.resize(ds.groups.size());
    for (std::size_t i : split.test) {
      y_test.push_back(ds.y[i]);
      for (std::size_t gi = 0; gi < ds.groups.size(); ++gi) {
        group_test[gi].push_back(ds.groups[gi][i]);
      }
    }
    report.group_levels_eval = ds.group_levels;
  }

  report.feature_names = table.feature_names;
  report.baseline_value = resolve_baseline(cfg.baseline, y_test);
  const int players = table.players();
  const auto& group1 = group_test.at(0);

  std::vector<MetricKind> kinds;
  if (cfg.metric == "auto") {
    kinds = criterion_metrics(cfg.criterion);
  } else {
    kinds = {parse_metric(cfg.metric)};
  }

  const bool vote_eligible = cfg.families.size() == kAllFamilies.size();
  auto strata = group_label_strata(group1, y_test);

  for (MetricKind kind : kinds) {
    MetricResults mr;
    mr.kind = kind;
    CharacteristicCache cache(table, kind, report.baseline_value, y_test, group1);
    try {
      // Pooled and per-group rates at the full model, for the first stage.
      const auto& y_hat_full = table.column(full_coalition(players));
      std::array<ConfusionCounts, 2> conf;
      for (int g = 0; g < 2; ++g) {
        std::vector<std::uint8_t> mask(y_test.size());
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = group1[i] == g + 1;
        conf[g] = confusion(y_test, y_hat_full, mask);
        mr.denominators[g] = metric_denominator(kind, conf[g]);
      }
      mr.pooled_rate = metric_value(kind, confusion(y_test, y_hat_full));
      for (int g = 0; g < 2; ++g) {
        if (mr.denominators[g] > 0) {
          mr.group_rates[g] = metric_value(kind, conf[g]);
        }
      }

      std::optional<CovarianceEstimates> cov;  // shared by all families
      for (Family family : cfg.families) {
        FamilyResults fr;
        fr.family = family;
        {
          detail::StageTimer timer(&report.timings_ms, "allocation");
          fr.first_stage_alloc = group_values(cache, family);
        }
        {
          detail::StageTimer timer(&report.timings_ms, "inference_asymptotic");
          FirstStageInput in;
          in.gap = fr.first_stage_alloc.values[0] - fr.first_stage_alloc.values[1];
          in.pooled_rate = mr.pooled_rate;
          in.n1 = mr.denominators[0];
          in.n2 = mr.denominators[1];
          in.b1 = esl_coefficients(family, 2)[1];
          in.alpha = cfg.alpha;
          in.baseline = report.baseline_value;
          if (mr.denominators[0] > 0) in.rate1 = mr.group_rates[0];
          if (mr.denominators[1] > 0) in.rate2 = mr.group_rates[1];
          fr.first_stage = first_stage_test(in);
        }

        if (cfg.stages == 2) {
          fr.has_second_stage = true;
          {
            detail::StageTimer timer(&report.timings_ms, "allocation");
            fr.matrix = two_stage(cache, family);
            fr.gaps = gap_attribution(fr.matrix);
          }
          {
            detail::StageTimer timer(&report.timings_ms, "inference_asymptotic");
            if (!cov) {
              std::vector<Coalition> needed;
              for (const auto& [c, _] : table.columns) needed.push_back(c);
              cov = estimate_second_stage_covariances(table, kind, y_test, group1,
                                                      needed);
            }
            fr.second_stage =
                second_stage_test(fr.matrix, *cov, cfg.alpha, report.baseline_value);
          }
        }

        if (cfg.bootstrap > 0) {
          detail::StageTimer timer(&report.timings_ms, "bootstrap");
          auto t0 = std::chrono::steady_clock::now();
          const std::size_t n_stats =
              1 + (cfg.stages == 2 ? static_cast<std::size_t>(players) : 0);
          BootstrapConfig bcfg;
          bcfg.replicates = cfg.bootstrap;
          bcfg.alpha = cfg.alpha;
          bcfg.master_seed = cfg.seed;
          auto stat = [&](const std::vector<std::size_t>& idx) {
            detail::ResampledCharacteristic rc(table, kind, report.baseline_value,
                                               y_test, group1, idx);
            std::vector<double> out;
            out.reserve(n_stats);
            if (cfg.stages == 2) {
              auto m = detail::two_stage_fn(rc, players, table.feature_names, family);
              out.push_back(m.group_totals[0] - m.group_totals[1]);
              for (int k = 0; k < players; ++k) {
                out.push_back(m.contrib[0][static_cast<std::size_t>(k)] -
                              m.contrib[1][static_cast<std::size_t>(k)]);
              }
            } else {
              auto alloc = detail::group_values_fn(rc, players, family);
              out.push_back(alloc.values[0] - alloc.values[1]);
            }
            return out;
          };
          auto multi = bootstrap_ci_multi(stat, strata, n_stats, bcfg);
          fr.bootstrapped = true;
          fr.boot_gap = std::move(multi.per_statistic[0]);
          for (std::size_t s = 1; s < multi.per_statistic.size(); ++s) {
            fr.boot_features.push_back(std::move(multi.per_statistic[s]));
          }
          auto t1 = std::chrono::steady_clock::now();
          fr.bootstrap_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }

        mr.families.push_back(std::move(fr));
      }

      if (vote_eligible && cfg.stages == 2) {
        for (int k = 0; k < players; ++k) {
          std::map<Family, bool> votes;
          for (const auto& fr : mr.families) {
            votes[fr.family] =
                fr.second_stage.per_feature[static_cast<std::size_t>(k)].reject;
          }
          mr.votes[table.feature_names[static_cast<std::size_t>(k)]] =
              majority_vote(votes);
        }
      }
    } catch (const UndefinedMetricError& e) {
      mr.failed = true;
      mr.error = e.what();
    } catch (const UndefinedTestError& e) {
      mr.failed = true;
      mr.error = e.what();
    } catch (const DegenerateVarianceError& e) {
      mr.failed = true;
      mr.error = e.what();
    }
    mr.characteristic_evaluations = cache.evaluations();
    report.characteristic_evaluations += mr.characteristic_evaluations;
    report.metrics.push_back(std::move(mr));
  }

  // Criterion verdict from the first-stage rejections. The first-stage z is
  // family-independent (the b1 scaling cancels), so any family's vote works.
  {
    std::map<MetricKind, bool> rejected;
    for (const auto& mr : report.metrics) {
      if (!mr.failed && !mr.families.empty()) {
        rejected[mr.kind] = mr.families.front().first_stage.reject;
      }
    }
    try {
      report.verdict = criterion_verdict(cfg.criterion, rejected);
      report.verdict_formed = true;
    } catch (const IncompleteCriterionError& e) {
      report.verdict_formed = false;
      report.verdict_note = e.what();
    }
  }

  // Nested decomposition over two or more sensitive attributes.
  if (group_test.size() >= 2) {
    detail::StageTimer timer(&report.timings_ms, "allocation");
    report.has_multi_stage = true;
    std::vector<std::string> attr_names = cfg.schema.group_cols;
    for (Family family : cfg.families) {
      report.multi_stage_results.emplace_back(
          family, multi_stage(table, kinds.front(), family, report.baseline_value,
                              y_test, group_test, attr_names));
    }
  }

  auto t_end = std::chrono::steady_clock::now();
  report.timings_ms["total"] =
      std::chrono::duration<double, std::milli>(t_end - t_total).count();

  // Hash of the resolved configuration (reports embed it for provenance).
  {
    nlohmann::json j;
    j["data"] = cfg.data_path;
    j["predictions"] = cfg.predictions_path;
    j["labels"] = cfg.labels_path;
    j["label_col"] = cfg.schema.label_col;
    j["group_cols"] = cfg.schema.group_cols;
    j["features"] = cfg.schema.feature_cols;
    j["criterion"] = criterion_name(cfg.criterion);
    j["metric"] = cfg.metric;
    std::vector<std::string> fams;
    for (Family f : cfg.families) fams.push_back(family_name(f));
    j["families"] = fams;
    j["baseline"] = report.baseline_value;
    j["threshold"] = cfg.threshold;
    j["alpha"] = cfg.alpha;
    j["bootstrap"] = cfg.bootstrap;
    j["seed"] = cfg.seed;
    j["test_fraction"] = cfg.test_fraction;
    j["stages"] = cfg.stages;
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(j.dump())));
    report.config_hash = buf;
  }

  report.table = std::move(table);
  report.y_eval = std::move(y_test);
  report.groups_eval = std::move(group_test);
  return report;
}

namespace detail {

inline nlohmann::json test_to_json(const TestResult& t) {
  nlohmann::json j;
  j["name"] = t.name;
  j["estimate"] = round12(t.estimate);
  j["se"] = round12(t.se);
  j["z"] = round12(t.z);
  j["p_value"] = round12(t.p_value);
  j["ci"] = {round12(t.ci[0]), round12(t.ci[1])};
  j["alpha"] = round12(t.alpha);
  j["reject"] = t.reject;
  j["stars"] = stars(t.p_value);
  if (t.se_unpooled) j["se_unpooled"] = round12(*t.se_unpooled);
  if (t.ci_unpooled) {
    j["ci_unpooled"] = {round12((*t.ci_unpooled)[0]), round12((*t.ci_unpooled)[1])};
  }
  if (!t.note.empty()) j["note"] = t.note;
  return j;
}

inline nlohmann::json boot_to_json(const BootstrapResult& b) {
  nlohmann::json j;
  j["ci"] = {round12(b.ci[0]), round12(b.ci[1])};
  j["mean"] = round12(b.mean);
  j["failures"] = b.failures;
  j["replicates"] = b.values.size();
  return j;
}

}  // namespace detail

/// Single-document JSON report. Timings live under their own key so the
/// remainder is byte-identical across reruns of the same configuration.
inline nlohmann::json report_to_json(const AuditReport& r) {
  using detail::round12;
  nlohmann::json j;
  j["schema_version"] = 1;

  nlohmann::json cfg;
  cfg["data"] = r.config.data_path;
  cfg["predictions"] = r.config.predictions_path;
  cfg["labels"] = r.config.labels_path;
  cfg["label_col"] = r.config.schema.label_col;
  cfg["group_cols"] = r.config.schema.group_cols;
  cfg["features"] = r.config.schema.feature_cols;
  cfg["criterion"] = criterion_name(r.config.criterion);
  cfg["metric"] = r.config.metric;
  std::vector<std::string> fams;
  for (Family f : r.config.families) fams.push_back(family_name(f));
  cfg["families"] = fams;
  cfg["threshold"] = round12(r.config.threshold);
  cfg["alpha"] = round12(r.config.alpha);
  cfg["bootstrap"] = r.config.bootstrap;
  cfg["seed"] = r.config.seed;
  cfg["test_fraction"] = round12(r.config.test_fraction);
  cfg["stages"] = r.config.stages;
  j["config"] = cfg;
  j["config_hash"] = r.config_hash;

  nlohmann::json conv;
  conv["baseline"] = round12(r.baseline_value);
  conv["npv_orientation"] = "share of actual positives among predicted negatives";
  conv["characteristic"] = "metric over the coalition's rows divided by the baseline;"
                           " empty group coalition is 0";
  conv["coalition_semantics"] = "model retrained per feature coalition";
  j["conventions"] = conv;

  j["feature_names"] = r.feature_names;
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t gi = 0; gi < r.group_levels_eval.size(); ++gi) {
    groups.push_back({{"column", gi < r.config.schema.group_cols.size()
                                     ? r.config.schema.group_cols[gi]
                                     : std::string()},
                      {"level1", r.group_levels_eval[gi][0]},
                      {"level2", r.group_levels_eval[gi][1]}});
  }
  j["groups"] = groups;
  nlohmann::json warns = nlohmann::json::array();
  for (const auto& w : r.warnings) {
    warns.push_back({{"type", w.type}, {"detail", w.detail}, {"count", w.count}});
  }
  j["warnings"] = warns;

  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& mr : r.metrics) {
    nlohmann::json m;
    m["metric"] = metric_name(mr.kind);
    m["failed"] = mr.failed;
    if (mr.failed) {
      m["error"] = mr.error;
      metrics.push_back(m);
      continue;
    }
    m["pooled_rate"] = round12(mr.pooled_rate);
    m["denominators"] = {mr.denominators[0], mr.denominators[1]};
    m["group_rates"] = {round12(mr.group_rates[0]), round12(mr.group_rates[1])};
    m["characteristic_evaluations"] = mr.characteristic_evaluations;

    nlohmann::json fams_j = nlohmann::json::array();
    for (const auto& fr : mr.families) {
      nlohmann::json f;
      f["family"] = family_name(fr.family);
      f["group_values"] = {round12(fr.first_stage_alloc.values[0]),
                           round12(fr.first_stage_alloc.values[1])};
      f["grand_value"] = round12(fr.first_stage_alloc.grand);
      if (fr.first_stage_alloc.grand != 0.0) {
        f["group_shares_pct"] = {
            round12(100.0 * fr.first_stage_alloc.values[0] / fr.first_stage_alloc.grand),
            round12(100.0 * fr.first_stage_alloc.values[1] / fr.first_stage_alloc.grand)};
      }
      f["first_stage"] = detail::test_to_json(fr.first_stage);
      if (fr.has_second_stage) {
        nlohmann::json contribs = nlohmann::json::array();
        for (std::size_t k = 0; k < fr.matrix.feature_names.size(); ++k) {
          nlohmann::json c;
          c["feature"] = fr.matrix.feature_names[k];
          c["group1"] = round12(fr.matrix.contrib[0][k]);
          c["group2"] = round12(fr.matrix.contrib[1][k]);
          c["group1_se"] = round12(fr.second_stage.group_se[0][k]);
          c["group2_se"] = round12(fr.second_stage.group_se[1][k]);
          c["delta"] = round12(fr.gaps.delta[k]);
          c["test"] = detail::test_to_json(fr.second_stage.per_feature[k]);
          if (fr.bootstrapped) {
            c["bootstrap"] = detail::boot_to_json(fr.boot_features[k]);
          }
          contribs.push_back(c);
        }
        f["contributions"] = contribs;
        f["gap_total"] = round12(fr.gaps.delta_total);
      }
      if (fr.bootstrapped) f["bootstrap_gap"] = detail::boot_to_json(fr.boot_gap);
      fams_j.push_back(f);
    }
    m["families"] = fams_j;

    if (!mr.votes.empty()) {
      nlohmann::json votes;
      for (const auto& [feat, v] : mr.votes) {
        votes[feat] = {{"rejecting", v.rejecting}, {"unfair", v.unfair}};
      }
      m["majority_votes"] = votes;
    }
    metrics.push_back(m);
  }
  j["metrics"] = metrics;

  nlohmann::json verdict;
  verdict["criterion"] = criterion_name(r.config.criterion);
  verdict["formed"] = r.verdict_formed;
  if (r.verdict_formed) {
    verdict["satisfied"] = r.verdict.satisfied;
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& [k, rej] : r.verdict.rejected_by_metric) {
      parts.push_back({{"metric", metric_name(k)}, {"rejected", rej}});
    }
    verdict["constituents"] = parts;
  } else {
    verdict["note"] = r.verdict_note;
  }
  j["verdict"] = verdict;

  if (r.has_multi_stage) {
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& [family, result] : r.multi_stage_results) {
      nlohmann::json one;
      one["family"] = family_name(family);
      one["attributes"] = result.attribute_names;
      nlohmann::json levels = nlohmann::json::array();
      for (const auto& level : result.levels) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& cell : level) {
          nlohmann::json c;
          c["path"] = cell.path;
          c["defined"] = cell.defined;
          if (cell.defined) c["value"] = round12(cell.value);
          cells.push_back(c);
        }
        levels.push_back(cells);
      }
      one["levels"] = levels;
      ms.push_back(one);
    }
    j["multi_stage"] = ms;
  }

  j["counters"] = {{"coalitions_requested", r.coalitions_requested},
                   {"characteristic_evaluations", r.characteristic_evaluations}};

  nlohmann::json t;
  for (const auto& [k, v] : r.timings_ms) t[k] = v;
  j["timings_ms"] = t;
  return j;
}

/// csv-bundle emission: one file per table, 12 significant digits.
inline std::vector<std::string> write_csv_bundle(const AuditReport& r,
                                                 const std::string& dir) {
  using detail::fmt12;
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;

  auto open = [&](const std::string& name) {
    std::string path = (fs::path(dir) / name).string();
    written.push_back(path);
    return std::ofstream(path);
  };

  {
    auto f = open("group_values.csv");
    f << "metric,family,group1,group2,grand,share1_pct,share2_pct\n";
    for (const auto& mr : r.metrics) {
      if (mr.failed) continue;
      for (const auto& fr : mr.families) {
        const auto& a = fr.first_stage_alloc;
        f << metric_name(mr.kind) << ',' << family_name(fr.family) << ','
          << fmt12(a.values[0]) << ',' << fmt12(a.values[1]) << ','
          << fmt12(a.grand) << ',' << fmt12(100.0 * a.values[0] / a.grand) << ','
          << fmt12(100.0 * a.values[1] / a.grand) << '\n';
      }
    }
  }
  {
    auto f = open("first_stage_tests.csv");
    f << "metric,family,gap,se,z,p_value,ci_lo,ci_hi,stars,reject,"
         "se_unpooled,ci_unpooled_lo,ci_unpooled_hi\n";
    for (const auto& mr : r.metrics) {
      if (mr.failed) continue;
      for (const auto& fr : mr.families) {
        const auto& t = fr.first_stage;
        f << metric_name(mr.kind) << ',' << family_name(fr.family) << ','
          << fmt12(t.estimate) << ',' << fmt12(t.se) << ',' << fmt12(t.z) << ','
          << fmt12(t.p_value) << ',' << fmt12(t.ci[0]) << ',' << fmt12(t.ci[1])
          << ',' << detail::stars(t.p_value) << ',' << (t.reject ? 1 : 0) << ','
          << (t.se_unpooled ? fmt12(*t.se_unpooled) : "") << ','
          << (t.ci_unpooled ? fmt12((*t.ci_unpooled)[0]) : "") << ','
          << (t.ci_unpooled ? fmt12((*t.ci_unpooled)[1]) : "") << '\n';
      }
    }
  }
  {
    auto f = open("contributions.csv");
    f << "metric,family,feature,group1,group1_se,group2,group2_se,delta,"
         "delta_se,z,p_value,ci_lo,ci_hi,stars,reject\n";
    for (const auto& mr : r.metrics) {
      if (mr.failed) continue;
      for (const auto& fr : mr.families) {
        if (!fr.has_second_stage) continue;
        for (std::size_t k = 0; k < fr.matrix.feature_names.size(); ++k) {
          const auto& t = fr.second_stage.per_feature[k];
          f << metric_name(mr.kind) << ',' << family_name(fr.family) << ','
            << detail::csv_quote(fr.matrix.feature_names[k]) << ','
            << fmt12(fr.matrix.contrib[0][k]) << ','
            << fmt12(fr.second_stage.group_se[0][k]) << ','
            << fmt12(fr.matrix.contrib[1][k]) << ','
            << fmt12(fr.second_stage.group_se[1][k]) << ','
            << fmt12(t.estimate) << ',' << fmt12(t.se) << ',' << fmt12(t.z) << ','
            << fmt12(t.p_value) << ',' << fmt12(t.ci[0]) << ',' << fmt12(t.ci[1])
            << ',' << detail::stars(t.p_value) << ',' << (t.reject ? 1 : 0) << '\n';
        }
      }
    }
  }
  {
    auto f = open("bootstrap.csv");
    f << "metric,family,statistic,ci_lo,ci_hi,mean,failures\n";
    for (const auto& mr : r.metrics) {
      if (mr.failed) continue;
      for (const auto& fr : mr.families) {
        if (!fr.bootstrapped) continue;
        f << metric_name(mr.kind) << ',' << family_name(fr.family) << ",gap,"
          << fmt12(fr.boot_gap.ci[0]) << ',' << fmt12(fr.boot_gap.ci[1]) << ','
          << fmt12(fr.boot_gap.mean) << ',' << fr.boot_gap.failures << '\n';
        for (std::size_t k = 0; k < fr.boot_features.size(); ++k) {
          const auto& b = fr.boot_features[k];
          f << metric_name(mr.kind) << ',' << family_name(fr.family) << ','
            << detail::csv_quote("delta:" + r.feature_names[k]) << ','
            << fmt12(b.ci[0]) << ',' << fmt12(b.ci[1]) << ',' << fmt12(b.mean)
            << ',' << b.failures << '\n';
        }
      }
    }
  }
  {
    auto f = open("votes.csv");
    f << "metric,feature,rejecting,unfair\n";
    for (const auto& mr : r.metrics) {
      for (const auto& [feat, v] : mr.votes) {
        f << metric_name(mr.kind) << ',' << detail::csv_quote(feat) << ','
          << v.rejecting << ',' << (v.unfair ? 1 : 0) << '\n';
      }
    }
  }
  if (r.has_multi_stage) {
    auto f = open("multi_stage.csv");
    f << "family,depth,path,defined,value\n";
    for (const auto& [family, result] : r.multi_stage_results) {
      for (std::size_t d = 0; d < result.levels.size(); ++d) {
        for (const auto& cell : result.levels[d]) {
          std::string path;
          for (std::size_t i = 0; i < cell.path.size(); ++i) {
            if (i) path += '>';
            path += std::to_string(int(cell.path[i]));
          }
          f << family_name(family) << ',' << d + 1 << ',' << path << ','
            << (cell.defined ? 1 : 0) << ','
            << (cell.defined ? fmt12(cell.value) : "") << '\n';
        }
      }
    }
  }
  {
    auto f = open("groups.csv");
    f << "column,level1,level2\n";
    for (std::size_t gi = 0; gi < r.group_levels_eval.size(); ++gi) {
      f << detail::csv_quote(gi < r.config.schema.group_cols.size()
                                 ? r.config.schema.group_cols[gi]
                                 : std::string())
        << ',' << detail::csv_quote(r.group_levels_eval[gi][0]) << ','
        << detail::csv_quote(r.group_levels_eval[gi][1]) << '\n';
    }
  }
  {
    auto f = open("timings.csv");
    f << "stage,milliseconds\n";
    for (const auto& [k, v] : r.timings_ms) f << k << ',' << fmt12(v) << '\n';
  }
  return written;
}

/// Prediction table plus labels sidecar, in exactly the shape the
/// --predictions/--labels import path consumes.
inline std::vector<std::string> write_prediction_bundle(const AuditReport& r,
                                                        const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  {
    std::string path = (fs::path(dir) / "predictions.csv").string();
    std::ofstream f(path);
    write_prediction_table(r.table, f);
    written.push_back(path);
  }
  {
    std::string path = (fs::path(dir) / "labels.csv").string();
    std::ofstream f(path);
    f << "row_id," << detail::csv_quote(r.config.schema.label_col);
    for (const auto& g : r.config.schema.group_cols) f << ',' << detail::csv_quote(g);
    f << '\n';
    for (std::size_t i = 0; i < r.table.row_ids.size(); ++i) {
      f << r.table.row_ids[i] << ',' << int(r.y_eval[i]);
      for (std::size_t gi = 0; gi < r.groups_eval.size(); ++gi) {
        f << ','
          << detail::csv_quote(r.group_levels_eval[gi][r.groups_eval[gi][i] - 1]);
      }
      f << '\n';
    }
    written.push_back(path);
  }
  return written;
}

/// Per-replicate bootstrap dump for external analysis.
inline void write_bootstrap_replicates(const AuditReport& r, const std::string& path) {
  std::ofstream f(path);
  f << "metric,family,statistic,replicate,value\n";
  for (const auto& mr : r.metrics) {
    if (mr.failed) continue;
    for (const auto& fr : mr.families) {
      if (!fr.bootstrapped) continue;
      auto dump = [&](const std::string& stat, const BootstrapResult& b) {
        for (std::size_t i = 0; i < b.values.size(); ++i) {
          f << metric_name(mr.kind) << ',' << family_name(fr.family) << ','
            << detail::csv_quote(stat) << ',' << i << ','
            << detail::fmt12(b.values[i]) << '\n';
        }
      };
      dump("gap", fr.boot_gap);
      for (std::size_t k = 0; k < fr.boot_features.size(); ++k) {
        dump("delta:" + r.feature_names[k], fr.boot_features[k]);
      }
    }
  }
}

inline void write_audit_log(const AuditReport& r, const std::string& path) {
  std::ofstream f(path);
  for (const auto& w : r.warnings) {
    nlohmann::json j = {{"type", w.type}, {"detail", w.detail}, {"count", w.count}};
    f << j.dump() << '\n';
  }
}

}  // namespace fairesl
