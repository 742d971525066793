#pragma once

// Feature-level concatenation, soft-voting ensembles and stacked
// generalization over out-of-fold base-model predictions.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vaforge/core_data.hpp"
#include "vaforge/errors.hpp"
#include "vaforge/learners.hpp"
#include "vaforge/matrix.hpp"
#include "vaforge/parallel.hpp"

namespace vaforge {

// Text block first; every column gets a "text:" or "tab:" prefix. Rows of
// the tabular block are matched to the text block by id.
inline FeatureMatrix fuse_features(const FeatureMatrix& text, const FeatureMatrix& tab) {
  if (text.rows() != tab.rows()) throw AlignmentError("feature blocks have different row counts");
  const FeatureMatrix tab_aligned = text.ids == tab.ids ? tab : tab.select_ids(text.ids);
  Matrix m(static_cast<Eigen::Index>(text.rows()), static_cast<Eigen::Index>(text.cols() + tab.cols()));
  m << text.values, tab_aligned.values;
  std::vector<std::string> cols;
  cols.reserve(text.cols() + tab.cols());
  for (const auto& c : text.columns) cols.push_back("text:" + c);
  for (const auto& c : tab.columns) cols.push_back("tab:" + c);
  return FeatureMatrix(text.ids, std::move(cols), std::move(m));
}

struct VoteResult {
  ProbMatrix probs;
  std::vector<int> labels;
};

// Mean of the member matrices after aligning ids and classes to the first
// one by name. Each entry is summed in ascending value order, so the result
// does not depend on the order of `mats`.
inline VoteResult soft_vote(const std::vector<ProbMatrix>& mats) {
  if (mats.empty()) throw EmptyEnsembleError("soft vote needs at least one probability matrix");
  const auto& ref = mats.front();
  std::vector<ProbMatrix> aligned;
  aligned.reserve(mats.size());
  for (const auto& m : mats) {
    if (m.rows() != ref.rows()) throw AlignmentError("ensemble members cover different ids");
    aligned.push_back(m.ids == ref.ids && m.classes == ref.classes ? m : m.aligned(ref.ids, ref.classes));
  }
  Matrix mean(ref.values.rows(), ref.values.cols());
  std::vector<double> terms(mats.size());
  const double inv = static_cast<double>(mats.size());
  for (Eigen::Index r = 0; r < mean.rows(); ++r) {
    for (Eigen::Index c = 0; c < mean.cols(); ++c) {
      for (std::size_t m = 0; m < aligned.size(); ++m) terms[m] = aligned[m].values(r, c);
      std::sort(terms.begin(), terms.end());
      double s = 0.0;
      for (double t : terms) s += t;
      mean(r, c) = s / inv;
    }
  }
  VoteResult out{ProbMatrix(ref.ids, ref.classes, std::move(mean)), {}};
  out.labels = argmax_labels(out.probs);
  return out;
}

struct NamedProbs {
  std::string name;
  ProbMatrix probs;
};

struct AblationRow {
  std::string label;  // "all" or "all_but_<name>"
  std::vector<std::string> members;
  VoteResult vote;
};

// Soft vote of all sources, then of every leave-one-out subset.
inline std::vector<AblationRow> leave_one_out_votes(const std::vector<NamedProbs>& sources) {
  if (sources.size() < 2) throw EmptyEnsembleError("ablation needs at least two prediction sources");
  std::vector<AblationRow> rows;
  auto run = [&](const std::string& label, std::optional<std::size_t> skip) {
    std::vector<ProbMatrix> mats;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (skip && *skip == i) continue;
      mats.push_back(sources[i].probs);
      names.push_back(sources[i].name);
    }
    rows.push_back({label, std::move(names), soft_vote(mats)});
  };
  run("all", std::nullopt);
  for (std::size_t i = 0; i < sources.size(); ++i) run("all_but_" + sources[i].name, i);
  return rows;
}

// ---- out-of-fold predictions ---------------------------------------------

struct OofPrediction {
  std::string model_name;
  ProbMatrix probs;                          // one row per training id, in training order
  std::map<std::string, int> fold_of;        // id -> fold that predicted it
  std::vector<std::vector<std::string>> fold_train_ids;  // ids each fold's model was trained on
  bool static_adapter = false;               // external source reused across folds
};

// Per-fold model seed is spec.seed + fold. External specs slice the fixed
// matrix instead of training (flagged static_adapter).
inline OofPrediction generate_oof(const std::string& name, const LearnerSpec& spec, const FeatureMatrix& x,
                                  std::span<const int> y, const std::vector<std::string>& classes, int k,
                                  std::uint64_t seed, int workers = 1) {
  if (x.rows() != y.size()) throw DimensionError("feature rows and label count differ");
  const auto folds = stratified_kfold_indices(y, classes.size(), k, seed);
  OofPrediction oof;
  oof.model_name = name;
  oof.fold_train_ids.resize(folds.size());
  Matrix values(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(classes.size()));
  std::vector<ProbMatrix> fold_preds(folds.size());
  if (spec.kind == LearnerKind::External) {
    if (!spec.external) throw HyperparamError("external learner requires a probability source");
    oof.static_adapter = true;
  }
  parallel_for(folds.size(), workers, [&](std::size_t f) {
    const auto& fold = folds[f];
    const FeatureMatrix val = x.select_rows(fold.val);
    if (spec.kind == LearnerKind::External) {
      fold_preds[f] = spec.external->aligned(val.ids, classes);
      return;
    }
    std::vector<int> y_train;
    y_train.reserve(fold.train.size());
    for (auto i : fold.train) y_train.push_back(y[i]);
    LearnerSpec fold_spec = spec;
    fold_spec.seed = spec.seed + f;
    const FittedModel model = fit(fold_spec, x.select_rows(fold.train), y_train, classes);
    fold_preds[f] = predict_proba(model, val);
  });
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (std::size_t j = 0; j < folds[f].val.size(); ++j) {
      const auto row = folds[f].val[j];
      values.row(static_cast<Eigen::Index>(row)) = fold_preds[f].values.row(static_cast<Eigen::Index>(j));
      oof.fold_of[x.ids[row]] = static_cast<int>(f);
    }
    for (auto i : folds[f].train) oof.fold_train_ids[f].push_back(x.ids[i]);
  }
  oof.probs = ProbMatrix(x.ids, classes, std::move(values));
  return oof;
}

// Dataset form: features are looked up by id for the labeled records in
// `indices` (e.g. the training split).
inline OofPrediction generate_oof(const std::string& name, const LearnerSpec& spec, const Dataset& ds,
                                  const std::vector<std::size_t>& indices, const FeatureMatrix& features, int k,
                                  std::uint64_t seed, int workers = 1) {
  const auto ids = ds.ids(indices);
  const auto y = ds.labels_at(indices);
  return generate_oof(name, spec, features.select_ids(ids), y, ds.classes(), k, seed, workers);
}

// Structural leakage check: every id is predicted exactly once, by a fold
// whose training ids exclude it. Returns a description of the first
// violation, or nullopt.
inline std::optional<std::string> find_oof_leak(const OofPrediction& oof) {
  std::vector<std::unordered_set<std::string>> train_sets;
  for (const auto& ids : oof.fold_train_ids) train_sets.emplace_back(ids.begin(), ids.end());
  if (oof.fold_of.size() != oof.probs.rows()) return "fold assignment does not cover every row exactly once";
  for (const auto& id : oof.probs.ids) {
    const auto it = oof.fold_of.find(id);
    if (it == oof.fold_of.end()) return "id '" + id + "' has no fold";
    const auto f = static_cast<std::size_t>(it->second);
    if (f >= train_sets.size()) return "id '" + id + "' has an unknown fold";
    if (train_sets[f].contains(id)) return "id '" + id + "' was in the training set of the fold that predicted it";
  }
  return std::nullopt;
}

// ---- stacking ------------------------------------------------------------

// Columns "<model>:<class>", base models in the given order.
inline FeatureMatrix stack_features(const std::vector<NamedProbs>& bases, const std::vector<std::string>& ids,
                                    const std::vector<std::string>& classes) {
  if (bases.empty()) throw EmptyEnsembleError("stacking needs at least one base model");
  Matrix m(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(bases.size() * classes.size()));
  std::vector<std::string> cols;
  for (std::size_t b = 0; b < bases.size(); ++b) {
    const ProbMatrix a = bases[b].probs.aligned(ids, classes);
    m.middleCols(static_cast<Eigen::Index>(b * classes.size()), static_cast<Eigen::Index>(classes.size())) = a.values;
    for (const auto& c : classes) cols.push_back(bases[b].name + ":" + c);
  }
  return FeatureMatrix(ids, std::move(cols), std::move(m));
}

struct StackedModel {
  std::vector<std::string> base_names;
  std::vector<std::string> classes;
  FittedModel meta;
};

// y is aligned with oofs[0].probs.ids; other OOF matrices are reordered by
// id to match.
inline StackedModel stack_train(const std::vector<OofPrediction>& oofs, std::span<const int> y,
                                const LearnerSpec& meta_spec) {
  if (oofs.empty()) throw EmptyEnsembleError("stacking needs at least one base model");
  if (meta_spec.kind == LearnerKind::External) throw HyperparamError("meta learner must be a native learner");
  const auto& ids = oofs.front().probs.ids;
  const auto& classes = oofs.front().probs.classes;
  if (y.size() != ids.size()) throw AlignmentError("label count differs from OOF rows");
  const std::set<std::string> id_set(ids.begin(), ids.end());
  std::vector<NamedProbs> bases;
  std::set<std::string> names;
  for (const auto& o : oofs) {
    if (o.probs.rows() != ids.size() || std::set<std::string>(o.probs.ids.begin(), o.probs.ids.end()) != id_set) {
      throw AlignmentError("OOF prediction '" + o.model_name + "' covers different ids");
    }
    if (!names.insert(o.model_name).second) throw AlignmentError("duplicate base model name '" + o.model_name + "'");
    bases.push_back({o.model_name, o.probs});
  }
  StackedModel sm;
  for (const auto& b : bases) sm.base_names.push_back(b.name);
  sm.classes = classes;
  sm.meta = fit(meta_spec, stack_features(bases, ids, classes), y, classes);
  return sm;
}

// Base test probabilities (from models refit on the full training set) are
// stacked in the order given; the column names must match those seen in
// training.
inline VoteResult stack_predict(const StackedModel& sm, const std::vector<NamedProbs>& base_test) {
  if (base_test.empty()) throw EmptyEnsembleError("stacking needs at least one base model");
  const auto& ids = base_test.front().probs.ids;
  const FeatureMatrix x = stack_features(base_test, ids, sm.classes);
  if (x.columns != sm.meta.feature_columns) {
    throw DimensionError("stacked input columns do not match the meta learner's training columns");
  }
  VoteResult out{predict_proba(sm.meta, x), {}};
  out.labels = argmax_labels(out.probs);
  return out;
}

}  // namespace vaforge
