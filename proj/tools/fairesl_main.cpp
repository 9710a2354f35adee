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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fairesl/audit.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = fairesl::detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-fairness audits of binary classifiers via efficient, "
               "symmetric, linear game values"};
  app.require_subcommand(1);

  auto* audit = app.add_subcommand("audit", "Run a fairness audit");

  std::string data, predictions, labels, label_col, group_col, group_cols;
  std::string features, criterion = "eod", metric = "auto", esl = "equal_surplus";
  std::string baseline = "half", out_dir, format = "json", positive_label;
  std::vector<std::string> group_level_flags;
  double threshold = 0.5, alpha = 0.05, test_fraction = 0.3;
  double learning_rate = 0.5, l2 = 0.0;
  int epochs = 500, stages = 2;
  bool no_class_weight = false, dump_replicates = false, emit_predictions = false;
  std::size_t bootstrap = 0;
  std::uint64_t seed = 0;

  audit->add_option("--data", data, "Raw CSV dataset");
  audit->add_option("--predictions", predictions,
                    "Imported coalition prediction table (skips training)");
  audit->add_option("--labels", labels,
                    "Labels/groups file for imported predictions");
  audit->add_option("--label-col", label_col, "Binary outcome column")->required();
  audit->add_option("--group-col", group_col, "Sensitive attribute column");
  audit->add_option("--group-cols", group_cols,
                    "Comma-separated sensitive attributes (nested decomposition)");
  audit->add_option("--features", features, "Comma-separated model features");
  audit->add_option("--criterion", criterion,
                    "independence | separation | sufficiency | eod");
  audit->add_option("--metric", metric, "sr | tpr | fpr | ppv | npv | auto");
  audit->add_option("--esl", esl,
                    "shapley | solidarity | consensus | equal_surplus | lsp | all");
  audit->add_option("--baseline", baseline, "half | prevalence | <positive float>");
  audit->add_option("--threshold", threshold, "Classification threshold");
  audit->add_option("--alpha", alpha, "Test level");
  audit->add_option("--bootstrap", bootstrap, "Bootstrap replicates (0 = off)");
  audit->add_option("--seed", seed, "Master seed (split + bootstrap)");
  audit->add_option("--out", out_dir, "Output directory")->required();
  audit->add_option("--format", format, "json | csv");
  audit->add_option("--test-fraction", test_fraction, "Held-out share");
  audit->add_option("--stages", stages, "1 = group stage only, 2 = per-feature");
  audit->add_option("--positive-label", positive_label,
                    "Label level mapped to 1 when the column is not 0/1");
  audit->add_option("--group-levels", group_level_flags,
                    "COL=LEVEL1,LEVEL2 group-level order override (repeatable)");
  audit->add_option("--epochs", epochs, "Training epochs");
  audit->add_option("--learning-rate", learning_rate, "Training step size");
  audit->add_option("--l2", l2, "L2 penalty");
  audit->add_flag("--no-class-weight", no_class_weight,
                  "Disable inverse-frequency class weights");
  audit->add_flag("--dump-replicates", dump_replicates,
                  "Write per-replicate bootstrap statistics");
  audit->add_flag("--emit-predictions", emit_predictions,
                  "Write the coalition prediction table");

  CLI11_PARSE(app, argc, argv);

  try {
    fairesl::AuditConfig cfg;
    cfg.data_path = data;
    cfg.predictions_path = predictions;
    cfg.labels_path = labels;
    cfg.schema.label_col = label_col;
    if (!group_cols.empty()) {
      cfg.schema.group_cols = split_list(group_cols);
    } else if (!group_col.empty()) {
      cfg.schema.group_cols = {group_col};
    } else {
      throw fairesl::SchemaError("need --group-col or --group-cols");
    }
    cfg.schema.feature_cols = split_list(features);
    if (!positive_label.empty()) cfg.schema.positive_label = positive_label;
    for (const auto& flag : group_level_flags) {
      auto eq = flag.find('=');
      if (eq == std::string::npos) {
        throw fairesl::DomainError("--group-levels expects COL=LEVEL1,LEVEL2");
      }
      auto levels = split_list(flag.substr(eq + 1));
      if (levels.size() != 2) {
        throw fairesl::DomainError("--group-levels expects exactly two levels");
      }
      cfg.schema.group_level_order[flag.substr(0, eq)] = {levels[0], levels[1]};
    }
    cfg.criterion = fairesl::parse_criterion(criterion);
    cfg.metric = metric;
    if (esl == "all") {
      cfg.families.assign(fairesl::kAllFamilies.begin(), fairesl::kAllFamilies.end());
    } else {
      cfg.families = {fairesl::parse_family(esl)};
    }
    if (baseline == "half") {
      cfg.baseline.mode = fairesl::Baseline::Mode::Half;
    } else if (baseline == "prevalence") {
      cfg.baseline.mode = fairesl::Baseline::Mode::Prevalence;
    } else {
      cfg.baseline.mode = fairesl::Baseline::Mode::Fixed;
      cfg.baseline.fixed = std::stod(baseline);
    }
    cfg.threshold = threshold;
    cfg.alpha = alpha;
    cfg.bootstrap = bootstrap;
    cfg.dump_replicates = dump_replicates;
    cfg.seed = seed;
    cfg.test_fraction = test_fraction;
    cfg.stages = stages;
    cfg.classifier.learning_rate = learning_rate;
    cfg.classifier.epochs = epochs;
    cfg.classifier.l2 = l2;
    cfg.classifier.class_weighted = !no_class_weight;
    cfg.out_dir = out_dir;
    cfg.format = format;

    fairesl::AuditReport report = fairesl::run_audit(cfg);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    if (format == "csv") {
      fairesl::write_csv_bundle(report, out_dir);
    } else if (format == "json") {
      std::ofstream f(fs::path(out_dir) / "report.json");
      f << fairesl::report_to_json(report).dump(2) << '\n';
    } else {
      throw fairesl::DomainError("unknown format: " + format);
    }
    fairesl::write_audit_log(report, (fs::path(out_dir) / "audit_log.jsonl").string());
    if (emit_predictions) {
      fairesl::write_prediction_bundle(report, out_dir);
    }
    if (dump_replicates && bootstrap > 0) {
      fairesl::write_bootstrap_replicates(
          report, (fs::path(out_dir) / "bootstrap_replicates.csv").string());
    }

    for (const auto& mr : report.metrics) {
      if (mr.failed) {
        std::cout << mr.error << " [" << fairesl::metric_name(mr.kind)
                  << ": skipped]\n";
        continue;
      }
      for (const auto& fr : mr.families) {
        std::cout << fairesl::metric_name(mr.kind) << " / "
                  << fairesl::family_name(fr.family) << ": gap "
                  << fr.first_stage.estimate << " (p "
                  << fr.first_stage.p_value << ")"
                  << fairesl::detail::stars(fr.first_stage.p_value) << '\n';
      }
    }
    if (report.verdict_formed) {
      std::cout << fairesl::criterion_name(report.config.criterion) << ": "
                << (report.verdict.satisfied ? "satisfied" : "violated") << '\n';
      return report.verdict.satisfied ? 0 : 2;
    }
    std::cout << "criterion verdict not formed: " << report.verdict_note << '\n';
    return 0;
  } catch (const fairesl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
