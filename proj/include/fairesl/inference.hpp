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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairesl/coalition.hpp"
#include "fairesl/error.hpp"
#include "fairesl/esl.hpp"
#include "fairesl/metrics.hpp"
#include "fairesl/stats.hpp"

namespace fairesl {

struct TestResult {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  std::array<double, 2> ci{0.0, 0.0};
  double alpha = 0.05;
  bool reject = false;
  /// First stage only: the variant built from per-group variances.
  std::optional<double> se_unpooled;
  std::optional<std::array<double, 2>> ci_unpooled;
  std::string note;
};

struct FirstStageInput {
  double gap = 0.0;          // group-1 minus group-2 first-stage value
  double pooled_rate = 0.0;  // metric over both groups at the full model
  std::size_t n1 = 0;        // group-1 denominator count
  std::size_t n2 = 0;        // group-2 denominator count
  double b1 = 1.0;           // two-player b_1 of the family
  double alpha = 0.05;
  double baseline = 0.5;
  std::optional<double> rate1;  // per-group metric values, for the unpooled se
  std::optional<double> rate2;
};

/// Z test of "no first-stage gap". Under the null the two group rates share
/// the pooled value, so
///
///   se = (b1 / baseline) * sqrt( p(1-p) (1/n1 + 1/n2) ),
///
/// which at the default baseline of one half is sqrt(4 b1^2 p(1-p)(1/n1+1/n2)).
/// The reported interval uses this pooled se; when per-group rates are
/// supplied the unpooled variant is attached as a secondary field.
inline TestResult first_stage_test(const FirstStageInput& in) {
  if (!(in.alpha > 0.0 && in.alpha < 1.0)) throw DomainError("alpha outside (0,1)");
  if (!(in.baseline > 0.0)) throw DomainError("baseline must be positive");
  if (!(in.b1 > 0.0)) throw DomainError("b1 must be positive");
  if (in.n1 == 0 || in.n2 == 0) {
    throw UndefinedTestError("first-stage test: a group has an empty denominator");
  }
  const double p = in.pooled_rate;
  if (!(p > 0.0 && p < 1.0)) {
    throw DegenerateVarianceError("pooled rate is degenerate (0 or 1)");
  }

  const double scale = in.b1 / in.baseline;
  const double inv_n = 1.0 / static_cast<double>(in.n1) + 1.0 / static_cast<double>(in.n2);
  const double se = scale * std::sqrt(p * (1.0 - p) * inv_n);
  const double zc = two_sided_critical(in.alpha);

  TestResult r;
  r.name = "first_stage";
  r.estimate = in.gap;
  r.se = se;
  r.z = in.gap / se;
  r.p_value = two_sided_p(r.z);
  r.alpha = in.alpha;
  r.ci = {in.gap - zc * se, in.gap + zc * se};
  r.reject = r.p_value < in.alpha;

  if (in.rate1 && in.rate2) {
    const double v1 = *in.rate1 * (1.0 - *in.rate1) / static_cast<double>(in.n1);
    const double v2 = *in.rate2 * (1.0 - *in.rate2) / static_cast<double>(in.n2);
    if (v1 + v2 > 0.0) {
      const double seu = scale * std::sqrt(v1 + v2);
      r.se_unpooled = seu;
      r.ci_unpooled = {{in.gap - zc * seu, in.gap + zc * seu}};
    }
  }
  return r;
}

/// Plug-in second moments of the per-group success indicators across
/// coalitions, the raw material of every second-stage variance:
///
///   cross[g][V][W] = sum over instances i of group g that lie in the
///                    metric's denominator for both V and W of
///                    (u_i(V) - rate_g(V)) (u_i(W) - rate_g(W))
///
/// For selection rate, TPR and FPR the denominator set does not depend on
/// the coalition; for PPV/NPV it is the coalition's own predicted-positive
/// (resp. -negative) set, a direct extension of the same recipe.
struct CovarianceEstimates {
  MetricKind kind = MetricKind::Tpr;
  std::vector<Coalition> coalitions;
  std::array<std::vector<double>, 2> m;     // [group][coalition] denominator size
  std::array<std::vector<double>, 2> rate;  // [group][coalition] success share
  std::array<std::vector<std::vector<double>>, 2> cross;
  std::string note;

  std::size_t index_of(Coalition c) const {
    for (std::size_t i = 0; i < coalitions.size(); ++i) {
      if (coalitions[i] == c) return i;
    }
    throw CompletenessError("covariance estimates missing coalition");
  }
};

inline CovarianceEstimates estimate_second_stage_covariances(
    const CoalitionPredictionTable& table, MetricKind kind,
    const std::vector<std::uint8_t>& y_true, const std::vector<std::uint8_t>& group,
    std::vector<Coalition> coalitions) {
  const std::size_t n = y_true.size();
  if (group.size() != n || table.row_ids.size() != n) {
    throw ShapeError("covariances: length mismatch");
  }
  std::sort(coalitions.begin(), coalitions.end());
  coalitions.erase(std::unique(coalitions.begin(), coalitions.end()), coalitions.end());

  CovarianceEstimates cov;
  cov.kind = kind;
  cov.coalitions = coalitions;
  if (kind == MetricKind::Ppv || kind == MetricKind::Npv) {
    cov.note = "coalition-dependent denominator; variance recipe extrapolated "
               "from the fixed-denominator case";
  }
  const std::size_t k = coalitions.size();

  for (int g = 0; g < 2; ++g) {
    // Per coalition: denominator membership and success indicator per row.
    std::vector<std::vector<std::uint8_t>> den(k), u(k);
    for (std::size_t c = 0; c < k; ++c) {
      const auto& y_hat = table.column(coalitions[c]);
      den[c].assign(n, 0);
      u[c].assign(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (group[i] != g + 1) continue;
        bool in_den = false;
        std::uint8_t ui = 0;
        switch (kind) {
          case MetricKind::SelectionRate: in_den = true; ui = y_hat[i]; break;
          case MetricKind::Tpr: in_den = y_true[i] == 1; ui = y_hat[i]; break;
          case MetricKind::Fpr: in_den = y_true[i] == 0; ui = y_hat[i]; break;
          case MetricKind::Ppv: in_den = y_hat[i] == 1; ui = y_true[i]; break;
          case MetricKind::Npv: in_den = y_hat[i] == 0; ui = y_true[i]; break;
        }
        if (in_den) {
          den[c][i] = 1;
          u[c][i] = ui;
        }
      }
    }

    auto& mg = cov.m[static_cast<std::size_t>(g)];
    auto& rg = cov.rate[static_cast<std::size_t>(g)];
    auto& xg = cov.cross[static_cast<std::size_t>(g)];
    mg.assign(k, 0.0);
    rg.assign(k, 0.0);
    xg.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t c = 0; c < k; ++c) {
      double cnt = 0.0, sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cnt += den[c][i];
        sum += u[c][i];
      }
      mg[c] = cnt;
      rg[c] = cnt > 0.0 ? sum / cnt : std::nan("");
    }
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a; b < k; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (den[a][i] && den[b][i]) {
            acc += (u[a][i] - rg[a]) * (u[b][i] - rg[b]);
          }
        }
        xg[a][b] = acc;
        xg[b][a] = acc;
      }
    }
  }
  return cov;
}

struct SecondStageResult {
  Family family;
  std::vector<TestResult> per_feature;          // tests of the per-feature gap
  std::array<std::vector<double>, 2> group_se;  // se of each group contribution
};

/// Z tests of the per-feature contribution gaps. Each contribution is a
/// fixed linear combination of the per-group success rates across
/// coalitions, so its variance assembles from the plug-in second moments;
/// the gap's variance is var1 + var2 - 2 cov. A materially negative
/// assembled variance (< -1e-9 before clamping) raises
/// NumericalConsistencyError; tiny negatives clamp to zero.
inline SecondStageResult second_stage_test(const FeatureContributionMatrix& matrix,
                                           const CovarianceEstimates& cov,
                                           double alpha, double baseline) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha outside (0,1)");
  if (!(baseline > 0.0)) throw DomainError("baseline must be positive");
  const int n_feat = static_cast<int>(matrix.feature_names.size());
  const auto bg = esl_coefficients(matrix.family, 2);
  const auto bf = esl_coefficients(matrix.family, n_feat);
  const double zc = two_sided_critical(alpha);
  const std::size_t k = cov.coalitions.size();

  SecondStageResult out;
  out.family = matrix.family;
  out.group_se[0].assign(static_cast<std::size_t>(n_feat), 0.0);
  out.group_se[1].assign(static_cast<std::size_t>(n_feat), 0.0);

  // Group-composition weights: contribution of pooled / own / other success
  // rates to a group's two-player allocation, divided by the baseline.
  const double beta_pool = bg[2] / (2.0 * baseline);
  const double beta_own = bg[1] / (2.0 * baseline);

  for (int feat = 0; feat < n_feat; ++feat) {
    // alpha_k(V): weight of coalition V's group-stage value in the feature
    // allocation. Zero-b terms are dropped, mirroring the allocation path.
    std::vector<double> a_of(k, 0.0);
    bool usable = true;
    for_each_subset(coalition_without(full_coalition(n_feat), feat),
                    [&](Coalition s) {
                      const int s_sz = coalition_size(s);
                      const Coalition with = coalition_with(s, feat);
                      const double w = coalition_weight(s_sz, n_feat);
                      if (bf[static_cast<std::size_t>(s_sz) + 1] != 0.0) {
                        a_of[cov.index_of(with)] +=
                            w * bf[static_cast<std::size_t>(s_sz) + 1];
                      }
                      if (s_sz > 0 && bf[static_cast<std::size_t>(s_sz)] != 0.0) {
                        a_of[cov.index_of(s)] -= w * bf[static_cast<std::size_t>(s_sz)];
                      }
                    });

    // kappa[g][V][g']: weight of group g' success counts in group g's
    // feature contribution.
    std::array<std::array<std::vector<double>, 2>, 2> kappa;
    for (int g = 0; g < 2; ++g) {
      kappa[g][0].assign(k, 0.0);
      kappa[g][1].assign(k, 0.0);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (a_of[c] == 0.0) continue;
      const double m1 = cov.m[0][c], m2 = cov.m[1][c];
      if (m1 <= 0.0 || m2 <= 0.0 || std::isnan(cov.rate[0][c]) ||
          std::isnan(cov.rate[1][c])) {
        usable = false;
        break;
      }
      const double ma = m1 + m2;
      kappa[0][0][c] = a_of[c] * (beta_pool / ma + beta_own / m1);
      kappa[0][1][c] = a_of[c] * (beta_pool / ma - beta_own / m2);
      kappa[1][0][c] = a_of[c] * (beta_pool / ma - beta_own / m1);
      kappa[1][1][c] = a_of[c] * (beta_pool / ma + beta_own / m2);
    }

    TestResult r;
    r.name = matrix.feature_names[static_cast<std::size_t>(feat)];
    r.alpha = alpha;
    r.note = cov.note;
    if (!usable) {
      throw UndefinedTestError("feature '" + r.name +
                               "': a needed coalition has an empty denominator");
    }

    auto bilinear = [&](const std::array<std::vector<double>, 2>& x,
                        const std::array<std::vector<double>, 2>& y) {
      double acc = 0.0;
      for (int gp = 0; gp < 2; ++gp) {
        for (std::size_t a = 0; a < k; ++a) {
          if (x[gp][a] == 0.0) continue;
          for (std::size_t b = 0; b < k; ++b) {
            if (y[gp][b] == 0.0) continue;
            acc += x[gp][a] * y[gp][b] * cov.cross[gp][a][b];
          }
        }
      }
      return acc;
    };

    const double var1 = bilinear(kappa[0], kappa[0]);
    const double var2 = bilinear(kappa[1], kappa[1]);
    const double cov12 = bilinear(kappa[0], kappa[1]);
    auto settle = [&](double v, const std::string& what) {
      if (v < -1e-9) {
        throw NumericalConsistencyError("negative assembled variance for " + what);
      }
      return v < 0.0 ? 0.0 : v;
    };
    const double v1 = settle(var1, r.name);
    const double v2 = settle(var2, r.name);
    const double vd = settle(var1 + var2 - 2.0 * cov12, r.name);
    out.group_se[0][static_cast<std::size_t>(feat)] = std::sqrt(v1);
    out.group_se[1][static_cast<std::size_t>(feat)] = std::sqrt(v2);

    r.estimate = matrix.contrib[0][static_cast<std::size_t>(feat)] -
                 matrix.contrib[1][static_cast<std::size_t>(feat)];
    r.se = std::sqrt(vd);
    if (r.se == 0.0) {
      if (std::fabs(r.estimate) > 1e-12) {
        throw DegenerateVarianceError("feature '" + r.name +
                                      "': zero variance with a nonzero gap");
      }
      r.z = 0.0;
      r.p_value = 1.0;
      r.ci = {r.estimate, r.estimate};
      r.reject = false;
    } else {
      r.z = r.estimate / r.se;
      r.p_value = two_sided_p(r.z);
      r.ci = {r.estimate - zc * r.se, r.estimate + zc * r.se};
      r.reject = r.p_value < alpha;
    }
    out.per_feature.push_back(std::move(r));
  }
  return out;
}

enum class Criterion { Independence, Separation, Sufficiency, Eod };

inline std::string criterion_name(Criterion c) {
  switch (c) {
    case Criterion::Independence: return "independence";
    case Criterion::Separation: return "separation";
    case Criterion::Sufficiency: return "sufficiency";
    case Criterion::Eod: return "eod";
  }
  throw DomainError("unknown criterion");
}

inline Criterion parse_criterion(const std::string& s) {
  if (s == "independence") return Criterion::Independence;
  if (s == "separation") return Criterion::Separation;
  if (s == "sufficiency") return Criterion::Sufficiency;
  if (s == "eod") return Criterion::Eod;
  throw DomainError("unknown criterion: " + s);
}

/// The metrics whose group gaps a criterion constrains.
inline std::vector<MetricKind> criterion_metrics(Criterion c) {
  switch (c) {
    case Criterion::Independence: return {MetricKind::SelectionRate};
    case Criterion::Separation: return {MetricKind::Tpr, MetricKind::Fpr};
    case Criterion::Sufficiency: return {MetricKind::Ppv, MetricKind::Npv};
    case Criterion::Eod: return {MetricKind::Tpr};
  }
  throw DomainError("unknown criterion");
}

struct CriterionVerdict {
  Criterion criterion;
  bool satisfied = true;
  std::vector<std::pair<MetricKind, bool>> rejected_by_metric;
};

/// Satisfied exactly when no constituent first-stage test rejects.
inline CriterionVerdict criterion_verdict(Criterion c,
                                          const std::map<MetricKind, bool>& rejected) {
  CriterionVerdict v;
  v.criterion = c;
  for (MetricKind k : criterion_metrics(c)) {
    auto it = rejected.find(k);
    if (it == rejected.end()) {
      throw IncompleteCriterionError("criterion " + criterion_name(c) +
                                     " is missing the " + metric_name(k) + " test");
    }
    v.rejected_by_metric.emplace_back(k, it->second);
    if (it->second) v.satisfied = false;
  }
  return v;
}

struct MajorityVote {
  std::size_t rejecting = 0;
  bool unfair = false;
};

/// A feature is voted unfair when at least 3 of the 5 family tests reject.
inline MajorityVote majority_vote(const std::map<Family, bool>& rejects) {
  if (rejects.size() != kAllFamilies.size()) {
    throw DomainError("majority vote needs exactly one vote per family");
  }
  MajorityVote v;
  for (const auto& [f, rej] : rejects) {
    if (rej) ++v.rejecting;
  }
  v.unfair = v.rejecting >= 3;
  return v;
}

}  // namespace fairesl
