#pragma once

// Individual-level (confusion, precision/recall/F1) and population-level
// (CSMF accuracy) evaluation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "vaforge/csv.hpp"
#include "vaforge/errors.hpp"
#include "vaforge/matrix.hpp"
#include "vaforge/parallel.hpp"
#include "vaforge/rng.hpp"

namespace vaforge {

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::int64_t>> counts;  // [true][predicted]

  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& row : counts) {
      for (auto v : row) t += v;
    }
    return t;
  }
};

inline ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred,
                                 const std::vector<std::string>& classes) {
  if (truth.size() != pred.size()) throw LabelError("true and predicted label counts differ");
  ConfusionMatrix cm{classes, std::vector<std::vector<std::int64_t>>(classes.size(),
                                                                      std::vector<std::int64_t>(classes.size(), 0))};
  const auto n = static_cast<int>(classes.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n || pred[i] < 0 || pred[i] >= n) throw LabelError("label index out of range");
    ++cm.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  }
  return cm;
}

inline ConfusionMatrix confusion(const std::vector<std::string>& truth, const std::vector<std::string>& pred,
                                 const std::vector<std::string>& classes) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index.emplace(classes[i], static_cast<int>(i));
  auto encode = [&](const std::vector<std::string>& labels) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
      const auto it = index.find(l);
      if (it == index.end()) throw LabelError("label '" + l + "' is not in the class list");
      out.push_back(it->second);
    }
    return out;
  };
  const auto t = encode(truth);
  const auto p = encode(pred);
  return confusion(std::span<const int>(t), std::span<const int>(p), classes);
}

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

inline double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

// 0/0 is reported as 0.
inline std::vector<ClassScores> per_class_prf(const ConfusionMatrix& cm) {
  const std::size_t c = cm.classes.size();
  std::vector<ClassScores> out(c);
  for (std::size_t i = 0; i < c; ++i) {
    auto& s = out[i];
    s.tp = cm.counts[i][i];
    for (std::size_t j = 0; j < c; ++j) {
      if (j == i) continue;
      s.fn += cm.counts[i][j];
      s.fp += cm.counts[j][i];
    }
    s.support = s.tp + s.fn;
    s.precision = safe_div(static_cast<double>(s.tp), static_cast<double>(s.tp + s.fp));
    s.recall = safe_div(static_cast<double>(s.tp), static_cast<double>(s.tp + s.fn));
    s.f1 = safe_div(2.0 * s.precision * s.recall, s.precision + s.recall);
  }
  return out;
}

enum class Averaging { Weighted, Macro, Micro };

struct AggregateScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline AggregateScores aggregate(const std::vector<ClassScores>& per_class, Averaging mode) {
  AggregateScores a;
  if (per_class.empty()) return a;
  if (mode == Averaging::Micro) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& s : per_class) {
      tp += static_cast<double>(s.tp);
      fp += static_cast<double>(s.fp);
      fn += static_cast<double>(s.fn);
    }
    a.precision = safe_div(tp, tp + fp);
    a.recall = safe_div(tp, tp + fn);
    a.f1 = safe_div(2.0 * tp, 2.0 * tp + fp + fn);
    return a;
  }
  double total = 0.0;
  for (const auto& s : per_class) total += static_cast<double>(s.support);
  for (const auto& s : per_class) {
    const double w = mode == Averaging::Macro ? 1.0 / static_cast<double>(per_class.size())
                                              : safe_div(static_cast<double>(s.support), total);
    a.precision += w * s.precision;
    a.recall += w * s.recall;
    a.f1 += w * s.f1;
  }
  return a;
}

inline double accuracy(const ConfusionMatrix& cm) {
  std::int64_t diag = 0;
  for (std::size_t i = 0; i < cm.classes.size(); ++i) diag += cm.counts[i][i];
  return safe_div(static_cast<double>(diag), static_cast<double>(cm.total()));
}

inline double weighted_f1(std::span<const int> truth, std::span<const int> pred, const std::vector<std::string>& classes) {
  return aggregate(per_class_prf(confusion(truth, pred, classes)), Averaging::Weighted).f1;
}

// ---- CSMF ----------------------------------------------------------------

struct CsmfVector {
  std::vector<std::string> classes;
  std::vector<double> fractions;
};

enum class CsmfMode { MeanProb, TopCause };

inline CsmfVector csmf(const ProbMatrix& pred, CsmfMode mode = CsmfMode::MeanProb) {
  CsmfVector out{pred.classes, std::vector<double>(pred.classes.size(), 0.0)};
  const auto n = static_cast<double>(pred.rows());
  if (pred.rows() == 0) return out;
  for (Eigen::Index r = 0; r < pred.values.rows(); ++r) {
    if (mode == CsmfMode::MeanProb) {
      for (Eigen::Index c = 0; c < pred.values.cols(); ++c) out.fractions[static_cast<std::size_t>(c)] += pred.values(r, c);
    } else {
      out.fractions[static_cast<std::size_t>(argmax_row(pred.values, r))] += 1.0;
    }
  }
  for (auto& f : out.fractions) f /= n;
  return out;
}

// Fractions of each class among the given labels.
inline CsmfVector csmf_from_labels(std::span<const int> labels, const std::vector<std::string>& classes) {
  CsmfVector out{classes, std::vector<double>(classes.size(), 0.0)};
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes.size()) throw LabelError("label index out of range");
    out.fractions[static_cast<std::size_t>(l)] += 1.0;
  }
  if (!labels.empty()) {
    for (auto& f : out.fractions) f /= static_cast<double>(labels.size());
  }
  return out;
}

// 1 - sum|t - p| / (2 (1 - min t)).
inline double csmf_accuracy(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() != pred.size() || truth.empty()) throw AlignmentError("CSMF vectors differ in length");
  double abs_err = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) abs_err += std::abs(truth[i] - pred[i]);
  const double min_true = *std::min_element(truth.begin(), truth.end());
  const double denom = 2.0 * (1.0 - min_true);
  if (denom <= 0.0) throw DegenerateError("CSMF accuracy undefined for a single-cause population");
  return 1.0 - abs_err / denom;
}

// Aligns classes by name before comparing.
inline double csmf_accuracy(const CsmfVector& truth, const CsmfVector& pred) {
  if (truth.classes == pred.classes) return csmf_accuracy(truth.fractions, pred.fractions);
  std::unordered_map<std::string, double> by_name;
  for (std::size_t i = 0; i < pred.classes.size(); ++i) by_name.emplace(pred.classes[i], pred.fractions[i]);
  if (by_name.size() != truth.classes.size()) throw AlignmentError("CSMF class lists differ");
  std::vector<double> p;
  for (const auto& c : truth.classes) {
    const auto it = by_name.find(c);
    if (it == by_name.end()) throw AlignmentError("class '" + c + "' missing from predicted CSMF");
    p.push_back(it->second);
  }
  return csmf_accuracy(truth.fractions, p);
}

inline constexpr double kCsmfChance = 0.632;

inline double cccsmf_accuracy(double csmf_acc, double chance = kCsmfChance) {
  return (csmf_acc - chance) / (1.0 - chance);
}

// ---- reports -------------------------------------------------------------

struct MetricReport {
  std::vector<std::string> classes;
  std::size_t n = 0;
  double accuracy = 0.0;
  std::map<std::string, AggregateScores> averaged;  // "weighted", "macro", "micro"
  std::vector<ClassScores> per_class;
  ConfusionMatrix confusion;
  CsmfVector true_csmf;
  std::map<std::string, CsmfVector> pred_csmf;              // "mean_prob", "top_cause"
  std::map<std::string, std::optional<double>> csmf_acc;    // empty when undefined
  std::map<std::string, std::optional<double>> cccsmf_acc;
};

inline MetricReport evaluate(std::span<const int> truth, const ProbMatrix& pred) {
  if (truth.size() != pred.rows()) throw AlignmentError("label count differs from prediction rows");
  MetricReport r;
  r.classes = pred.classes;
  r.n = truth.size();
  const auto labels = argmax_labels(pred);
  r.confusion = confusion(truth, std::span<const int>(labels), pred.classes);
  r.accuracy = accuracy(r.confusion);
  r.per_class = per_class_prf(r.confusion);
  r.averaged["weighted"] = aggregate(r.per_class, Averaging::Weighted);
  r.averaged["macro"] = aggregate(r.per_class, Averaging::Macro);
  r.averaged["micro"] = aggregate(r.per_class, Averaging::Micro);
  r.true_csmf = csmf_from_labels(truth, pred.classes);
  for (auto [name, mode] : {std::pair{"mean_prob", CsmfMode::MeanProb}, std::pair{"top_cause", CsmfMode::TopCause}}) {
    r.pred_csmf[name] = csmf(pred, mode);
    std::optional<double> acc;
    try {
      acc = csmf_accuracy(r.true_csmf, r.pred_csmf[name]);
    } catch (const DegenerateError&) {
    }
    r.csmf_acc[name] = acc;
    r.cccsmf_acc[name] = acc ? std::optional<double>(cccsmf_accuracy(*acc)) : std::nullopt;
  }
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["n"] = r.n;
  j["accuracy"] = r.accuracy;
  for (const auto& [mode, a] : r.averaged) {
    j["precision_" + mode] = a.precision;
    j["recall_" + mode] = a.recall;
    j["f1_" + mode] = a.f1;
  }
  for (const auto& [mode, v] : r.csmf_acc) j["csmf_accuracy_" + mode] = opt(v);
  for (const auto& [mode, v] : r.cccsmf_acc) j["cccsmf_accuracy_" + mode] = opt(v);
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    const auto& s = r.per_class[i];
    per_class.push_back({{"class", r.classes[i]},
                         {"precision", s.precision},
                         {"recall", s.recall},
                         {"f1", s.f1},
                         {"support", s.support}});
  }
  j["per_class"] = std::move(per_class);
  return j;
}

inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
  std::vector<std::string> header = {"true\\predicted"};
  header.insert(header.end(), cm.classes.begin(), cm.classes.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < cm.classes.size(); ++i) {
    std::vector<std::string> row = {cm.classes[i]};
    for (auto v : cm.counts[i]) row.push_back(std::to_string(v));
    csv::write_row(out, row);
  }
}

inline void write_csmf_csv(std::ostream& out, const MetricReport& r) {
  csv::write_row(out, {"class", "true", "pred_mean_prob", "pred_top_cause"});
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    csv::write_row(out, {r.classes[i], csv::format_double(r.true_csmf.fractions[i]),
                         csv::format_double(r.pred_csmf.at("mean_prob").fractions[i]),
                         csv::format_double(r.pred_csmf.at("top_cause").fractions[i])});
  }
}

// ---- bootstrap -----------------------------------------------------------

struct BootstrapSummary {
  std::vector<double> replicates;
  double lower = 0.0;  // percentile interval
  double upper = 0.0;
};

// Percentile bootstrap of statistic(resampled row indices). Replicate r
// draws with its own seed, so results do not depend on worker count.
inline BootstrapSummary bootstrap(std::size_t n, int replicates, std::uint64_t seed,
                                  const std::function<double(const std::vector<std::size_t>&)>& statistic,
                                  double level = 0.95, int workers = 1) {
  if (n == 0 || replicates < 1) throw RangeError("bootstrap needs rows and at least one replicate");
  BootstrapSummary s;
  s.replicates.resize(static_cast<std::size_t>(replicates));
  parallel_for(static_cast<std::size_t>(replicates), workers, [&](std::size_t r) {
    Engine gen = make_engine(derive_seed(seed, r));
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = uniform_index(gen, n);
    s.replicates[r] = statistic(idx);
  });
  std::vector<double> sorted = s.replicates;
  std::sort(sorted.begin(), sorted.end());
  const double alpha = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const auto pos = static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size() - 1) + 0.5));
    return sorted[std::min(pos, sorted.size() - 1)];
  };
  s.lower = at(alpha);
  s.upper = at(1.0 - alpha);
  return s;
}

}  // namespace vaforge
