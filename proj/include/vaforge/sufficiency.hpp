#pragma once

// Information-sufficiency analysis: score grouping, per-modality
// prediction, modality contributions and Shapley feature importance.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vaforge/core_data.hpp"
#include "vaforge/csv.hpp"
#include "vaforge/errors.hpp"
#include "vaforge/fusion.hpp"
#include "vaforge/learners.hpp"
#include "vaforge/matrix.hpp"
#include "vaforge/parallel.hpp"
#include "vaforge/rng.hpp"
#include "vaforge/text_features.hpp"

namespace vaforge {

enum class SufficiencyLevel { Low, Medium, High };

inline SufficiencyLevel group_sufficiency(int score) {
  if (score < 1 || score > 5) throw RangeError("sufficiency score must be in 1..5, got " + std::to_string(score));
  if (score <= 2) return SufficiencyLevel::Low;
  if (score == 3) return SufficiencyLevel::Medium;
  return SufficiencyLevel::High;
}

inline std::string_view sufficiency_level_name(SufficiencyLevel l) {
  switch (l) {
    case SufficiencyLevel::Low: return "Low";
    case SufficiencyLevel::Medium: return "Medium";
    case SufficiencyLevel::High: return "High";
  }
  return "Low";
}

struct ContributionReport {
  double acc_narrative = 0.0;
  double acc_question = 0.0;
  double acc_multimodal = 0.0;
  double total_gain = 0.0;
  double contrib_narrative_pct = 0.0;
  double contrib_question_pct = 0.0;
};

// Gain of the combined model over the mean of the two single-modality
// models, split between the modalities by their average marginal gain.
inline ContributionReport marginal_contribution(double acc_n, double acc_q, double acc_both) {
  for (double a : {acc_n, acc_q, acc_both}) {
    if (!(a >= 0.0 && a <= 1.0)) throw RangeError("accuracies must lie in [0,1]");
  }
  ContributionReport r{acc_n, acc_q, acc_both, acc_both - 0.5 * (acc_n + acc_q), 0.0, 0.0};
  if (r.total_gain == 0.0) throw DegenerateGainError("total gain is zero; contributions are undefined");
  r.contrib_narrative_pct = 0.5 * (acc_both - acc_q) / r.total_gain * 100.0;
  r.contrib_question_pct = 0.5 * (acc_both - acc_n) / r.total_gain * 100.0;
  return r;
}

// ---- Shapley values ------------------------------------------------------

// Evaluates a model on every row of a matrix.
using BatchFn = std::function<Vector(const Matrix&)>;

inline constexpr int kExactShapleyMaxFeatures = 8;

namespace detail {

inline Vector exact_shapley(const BatchFn& f, const Vector& x, const Vector& baseline) {
  const auto d = static_cast<int>(x.size());
  const std::size_t n_sub = std::size_t{1} << d;
  Matrix rows(static_cast<Eigen::Index>(n_sub), d);
  for (std::size_t mask = 0; mask < n_sub; ++mask) {
    for (int j = 0; j < d; ++j) rows(static_cast<Eigen::Index>(mask), j) = (mask >> j) & 1U ? x(j) : baseline(j);
  }
  const Vector v = f(rows);
  // weight[s] = s! (d - s - 1)! / d!
  std::vector<double> weight(static_cast<std::size_t>(d), 0.0);
  for (int s = 0; s < d; ++s) {
    double w = 1.0 / d;
    // 1/d * 1/C(d-1, s)
    for (int i = 1; i <= s; ++i) w *= static_cast<double>(i) / static_cast<double>(d - i);
    weight[static_cast<std::size_t>(s)] = w;
  }
  Vector phi = Vector::Zero(d);
  for (int i = 0; i < d; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t mask = 0; mask < n_sub; ++mask) {
      if (mask & bit) continue;
      const int s = std::popcount(mask);
      phi(i) += weight[static_cast<std::size_t>(s)] *
                (v(static_cast<Eigen::Index>(mask | bit)) - v(static_cast<Eigen::Index>(mask)));
    }
  }
  return phi;
}

}  // namespace detail

// Shapley values of f at x relative to baseline. Exact subset enumeration
// for at most 8 features; otherwise the mean over n_samples random feature
// orderings, each drawn from its own seed.
inline Vector shapley_values(const BatchFn& f, const Vector& x, const Vector& baseline, int n_samples,
                             std::uint64_t seed, int workers = 1) {
  if (x.size() != baseline.size()) throw DimensionError("baseline length differs from the input row");
  const auto d = x.size();
  if (d == 0) return Vector();
  if (d <= kExactShapleyMaxFeatures) return detail::exact_shapley(f, x, baseline);
  if (n_samples < 1) throw RangeError("n_samples must be at least 1");
  std::vector<Vector> per_perm(static_cast<std::size_t>(n_samples));
  parallel_for(per_perm.size(), workers, [&](std::size_t p) {
    Engine gen = make_engine(derive_seed(seed, p));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) order[static_cast<std::size_t>(j)] = j;
    shuffle(std::span<Eigen::Index>(order), gen);
    Matrix rows(d + 1, d);
    rows.row(0) = baseline.transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      rows.row(j + 1) = rows.row(j);
      rows(j + 1, order[static_cast<std::size_t>(j)]) = x(order[static_cast<std::size_t>(j)]);
    }
    const Vector v = f(rows);
    Vector phi = Vector::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j) phi(order[static_cast<std::size_t>(j)]) = v(j + 1) - v(j);
    per_perm[p] = std::move(phi);
  });
  Vector sum = Vector::Zero(d);
  for (const auto& v : per_perm) sum += v;
  return sum / static_cast<double>(n_samples);
}

inline Vector feature_means(const FeatureMatrix& x) {
  if (x.rows() == 0) return Vector::Zero(static_cast<Eigen::Index>(x.cols()));
  return x.values.colwise().mean().transpose();
}

struct FeatureImportance {
  std::string feature;
  double importance = 0.0;  // mean |Shapley value|
  int rank = 0;             // 1 = most important
};

// Shapley values of the probability of each row's predicted class, averaged
// in absolute value over the rows of X.
inline std::vector<FeatureImportance> shapley_importance(const FittedModel& model, const FeatureMatrix& x,
                                                         const Vector& baseline, int n_samples, std::uint64_t seed,
                                                         int workers = 1) {
  const auto d = static_cast<Eigen::Index>(x.cols());
  Vector total = Vector::Zero(d);
  const ProbMatrix pred = predict_proba(model, x);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const int cls = argmax_row(pred.values, static_cast<Eigen::Index>(r));
    const BatchFn f = [&](const Matrix& rows) {
      std::vector<std::string> ids(static_cast<std::size_t>(rows.rows()));
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = std::to_string(i);
      return Vector(predict_proba(model, FeatureMatrix(std::move(ids), x.columns, rows)).values.col(cls));
    };
    const Vector phi = shapley_values(f, x.values.row(static_cast<Eigen::Index>(r)).transpose(), baseline, n_samples,
                                      derive_seed(seed, r), workers);
    total += phi.cwiseAbs();
  }
  if (x.rows() > 0) total /= static_cast<double>(x.rows());
  std::vector<FeatureImportance> out;
  for (Eigen::Index j = 0; j < d; ++j) out.push_back({x.columns[static_cast<std::size_t>(j)], total(j), 0});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.importance > b.importance; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i + 1);
  return out;
}

inline void write_importance_csv(std::ostream& out, const std::vector<FeatureImportance>& rows) {
  csv::write_row(out, {"feature", "mean_abs_shapley", "rank"});
  for (const auto& r : rows) csv::write_row(out, {r.feature, csv::format_double(r.importance), std::to_string(r.rank)});
}

// ---- sufficiency prediction ----------------------------------------------

struct SufficiencyConfig {
  text::TextPipelineConfig text = [] {
    text::TextPipelineConfig c;
    c.svd_k = 450;
    return c;
  }();
  LearnerSpec narrative_spec{LearnerKind::Logreg, {}, 0, nullptr};
  LearnerSpec question_spec{LearnerKind::Logreg, {}, 0, nullptr};
  LearnerSpec fused_spec{LearnerKind::Logreg, {}, 0, nullptr};
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SufficiencyReport {
  std::vector<std::string> classes;  // levels present in the data, in Low..High order
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  int svd_k_used = 0;
  double acc_narrative = 0.0;
  double acc_question = 0.0;
  double acc_multimodal = 0.0;
  std::optional<ContributionReport> contribution;  // absent when the total gain is zero
};

// Narrative-only (TF-IDF -> SVD), question-only (encoded indicators) and
// feature-fused classification of sufficiency level on one stratified
// holdout split. Records without a score are ignored.
inline SufficiencyReport predict_sufficiency_pipeline(std::span<const VARecord> all_records,
                                                      const SufficiencyConfig& cfg) {
  std::vector<VARecord> records;
  std::vector<SufficiencyLevel> levels;
  for (const auto& r : all_records) {
    if (!r.sufficiency_score) continue;
    records.push_back(r);
    levels.push_back(group_sufficiency(*r.sufficiency_score));
  }
  SufficiencyReport rep;
  std::vector<int> class_of_level(3, -1);
  for (auto l : {SufficiencyLevel::Low, SufficiencyLevel::Medium, SufficiencyLevel::High}) {
    if (std::find(levels.begin(), levels.end(), l) != levels.end()) {
      class_of_level[static_cast<std::size_t>(l)] = static_cast<int>(rep.classes.size());
      rep.classes.emplace_back(sufficiency_level_name(l));
    }
  }
  if (rep.classes.size() < 2) throw DegenerateDataError("sufficiency prediction needs at least two levels");
  std::vector<int> y;
  for (auto l : levels) y.push_back(class_of_level[static_cast<std::size_t>(l)]);
  const auto [train, test] = stratified_split_indices(y, rep.classes.size(), cfg.test_fraction, cfg.seed);
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<VARecord> out;
    for (auto i : idx) out.push_back(records[i]);
    return out;
  };
  const auto train_recs = pick(train), test_recs = pick(test);
  std::vector<int> y_train, y_test;
  for (auto i : train) y_train.push_back(y[i]);
  for (auto i : test) y_test.push_back(y[i]);
  auto ids_of = [](const std::vector<VARecord>& rs) {
    std::vector<std::string> ids;
    for (const auto& r : rs) ids.push_back(r.id);
    return ids;
  };
  auto texts_of = [](const std::vector<VARecord>& rs) {
    std::vector<std::string> t;
    for (const auto& r : rs) t.push_back(r.narrative);
    return t;
  };
  rep.train_ids = ids_of(train_recs);
  rep.test_ids = ids_of(test_recs);

  const auto featurizer = text::fit_text_featurizer(texts_of(train_recs), cfg.text);
  rep.svd_k_used = featurizer.svd ? featurizer.svd->k : 0;
  const FeatureMatrix text_train = featurizer.transform(texts_of(train_recs), rep.train_ids);
  const FeatureMatrix text_test = featurizer.transform(texts_of(test_recs), rep.test_ids);
  const TabularEncoder enc = TabularEncoder::fit(train_recs);
  const FeatureMatrix tab_train = enc.transform(train_recs);
  const FeatureMatrix tab_test = enc.transform(test_recs);

  auto acc = [&](const LearnerSpec& spec, const FeatureMatrix& tr, const FeatureMatrix& te) {
    const FittedModel m = fit(spec, tr, y_train, rep.classes);
    const auto pred = argmax_labels(predict_proba(m, te));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == y_test[i] ? 1 : 0;
    return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
  };
  rep.acc_narrative = acc(cfg.narrative_spec, text_train, text_test);
  rep.acc_question = acc(cfg.question_spec, tab_train, tab_test);
  rep.acc_multimodal =
      acc(cfg.fused_spec, fuse_features(text_train, tab_train), fuse_features(text_test, tab_test));
  try {
    rep.contribution = marginal_contribution(rep.acc_narrative, rep.acc_question, rep.acc_multimodal);
  } catch (const DegenerateGainError&) {
  }
  return rep;
}

}  // namespace vaforge
