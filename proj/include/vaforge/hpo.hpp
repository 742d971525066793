#pragma once

// Trial-based hyperparameter search: Parzen-estimator sampling, median
// pruning and a stratified cross-validation objective.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vaforge/core_data.hpp"
#include "vaforge/errors.hpp"
#include "vaforge/learners.hpp"
#include "vaforge/metrics.hpp"
#include "vaforge/parallel.hpp"
#include "vaforge/params.hpp"
#include "vaforge/rng.hpp"

namespace vaforge {

enum class ParamKind { LogUniform, Uniform, Categorical, Integer };

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::Uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::int64_t step = 1;            // Integer only
  std::vector<ParamValue> choices;  // Categorical only

  static ParamSpec log_uniform(std::string n, double lo, double hi) {
    ParamSpec s{std::move(n), ParamKind::LogUniform, lo, hi, 1, {}};
    s.validate();
    return s;
  }
  static ParamSpec uniform(std::string n, double lo, double hi) {
    ParamSpec s{std::move(n), ParamKind::Uniform, lo, hi, 1, {}};
    s.validate();
    return s;
  }
  static ParamSpec integer(std::string n, std::int64_t lo, std::int64_t hi, std::int64_t step = 1) {
    ParamSpec s{std::move(n), ParamKind::Integer, static_cast<double>(lo), static_cast<double>(hi), step, {}};
    s.validate();
    return s;
  }
  static ParamSpec categorical(std::string n, std::vector<ParamValue> values) {
    ParamSpec s{std::move(n), ParamKind::Categorical, 0.0, 0.0, 1, std::move(values)};
    s.validate();
    return s;
  }

  void validate() const {
    if (name.empty()) throw ConfigError("search-space parameter without a name");
    if (kind == ParamKind::Categorical) {
      if (choices.empty()) throw ConfigError("categorical parameter '" + name + "' has no choices");
      return;
    }
    if (!(lo < hi)) throw ConfigError("parameter '" + name + "' needs lo < hi");
    if (kind == ParamKind::LogUniform && !(lo > 0.0)) throw ConfigError("log-uniform parameter '" + name + "' needs lo > 0");
    if (kind == ParamKind::Integer && (step < 1 || std::floor(lo) != lo || std::floor(hi) != hi)) {
      throw ConfigError("integer parameter '" + name + "' needs integral bounds and step >= 1");
    }
  }

  // Largest grid value lo + j*step that does not exceed hi.
  std::int64_t integer_max() const {
    const auto l = static_cast<std::int64_t>(lo), h = static_cast<std::int64_t>(hi);
    return l + ((h - l) / step) * step;
  }

  bool contains(const ParamValue& v) const {
    switch (kind) {
      case ParamKind::Categorical: return std::find(choices.begin(), choices.end(), v) != choices.end();
      case ParamKind::Integer: {
        const auto* i = std::get_if<std::int64_t>(&v);
        return i && *i >= static_cast<std::int64_t>(lo) && *i <= integer_max() &&
               (*i - static_cast<std::int64_t>(lo)) % step == 0;
      }
      default: {
        const auto* d = std::get_if<double>(&v);
        return d && *d >= lo && *d <= hi;
      }
    }
  }
};

using SearchSpace = std::vector<ParamSpec>;

enum class TrialState { Running, Complete, Pruned, Failed };

inline std::string_view trial_state_name(TrialState s) {
  switch (s) {
    case TrialState::Running: return "running";
    case TrialState::Complete: return "complete";
    case TrialState::Pruned: return "pruned";
    case TrialState::Failed: return "failed";
  }
  return "running";
}

struct TrialRecord {
  int trial_id = 0;
  std::uint64_t seed = 0;
  ParamMap config;
  std::vector<double> interim_scores;  // one per reported step, step = index + 1
  std::optional<double> final_score;   // set iff complete
  TrialState state = TrialState::Running;
  std::string error;                   // failed trials only
};

enum class Direction { Maximize, Minimize };

struct MedianPruner {
  int warmup_steps = 1;
  int startup_trials = 5;
};

// Custom pruning rule; replaces the median rule when set.
using PrunerFn = std::function<bool(const TrialRecord& trial, const std::vector<TrialRecord>& history)>;

struct StudyConfig {
  int n_trials = 30;
  Direction direction = Direction::Maximize;
  MedianPruner pruner;
  bool pruning = true;
  PrunerFn custom_pruner;
  std::uint64_t seed = 0;
  int n_startup = 10;
  double gamma = 0.25;
  int n_candidates = 24;
  // Trials sampled together from the same history snapshot; only these run
  // concurrently, so results never depend on the worker count.
  int batch_size = 1;
  int workers = 1;

  void validate() const {
    if (n_trials < 1) throw ConfigError("n_trials must be at least 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in (0,1)");
    if (n_candidates < 1 || batch_size < 1) throw ConfigError("n_candidates and batch_size must be positive");
  }
};

inline bool better(double a, double b, Direction d) { return d == Direction::Maximize ? a > b : a < b; }

// ---- sampling ------------------------------------------------------------

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Transformed coordinate: log for log-uniform, identity otherwise.
inline double to_internal(const ParamSpec& s, const ParamValue& v) {
  const double x = as_double(v);
  return s.kind == ParamKind::LogUniform ? std::log(x) : x;
}

inline std::pair<double, double> internal_bounds(const ParamSpec& s) {
  if (s.kind == ParamKind::LogUniform) return {std::log(s.lo), std::log(s.hi)};
  if (s.kind == ParamKind::Integer) return {s.lo, static_cast<double>(s.integer_max())};
  return {s.lo, s.hi};
}

inline ParamValue from_internal(const ParamSpec& s, double t) {
  const auto [lo, hi] = internal_bounds(s);
  t = std::clamp(t, lo, hi);
  switch (s.kind) {
    case ParamKind::LogUniform: return std::clamp(std::exp(t), s.lo, s.hi);
    case ParamKind::Integer: {
      const auto l = static_cast<std::int64_t>(s.lo);
      const auto j = static_cast<std::int64_t>(std::llround((t - s.lo) / static_cast<double>(s.step)));
      return std::clamp(l + j * s.step, l, s.integer_max());
    }
    default: return t;
  }
}

inline ParamValue sample_uniform(const ParamSpec& s, Engine& gen) {
  switch (s.kind) {
    case ParamKind::Categorical: return s.choices[uniform_index(gen, s.choices.size())];
    case ParamKind::Integer: {
      const auto n = static_cast<std::uint64_t>((s.integer_max() - static_cast<std::int64_t>(s.lo)) / s.step + 1);
      return static_cast<std::int64_t>(s.lo) + static_cast<std::int64_t>(uniform_index(gen, n)) * s.step;
    }
    case ParamKind::LogUniform: return from_internal(s, uniform(gen, std::log(s.lo), std::log(s.hi)));
    case ParamKind::Uniform: return from_internal(s, uniform(gen, s.lo, s.hi));
  }
  return 0.0;
}

// Truncated-Gaussian mixture on [lo, hi] with one kernel per observation
// (Scott bandwidth) plus a uniform prior component of equal weight.
struct ParzenDensity {
  std::vector<double> centers;
  double sigma = 1.0;
  double lo = 0.0;
  double hi = 1.0;

  ParzenDensity(std::vector<double> obs, double lo_, double hi_) : centers(std::move(obs)), lo(lo_), hi(hi_) {
    const double range = hi - lo;
    const auto n = static_cast<double>(centers.size());
    double sd = 0.0;
    if (centers.size() > 1) {
      double mean = 0.0;
      for (double c : centers) mean += c;
      mean /= n;
      for (double c : centers) sd += (c - mean) * (c - mean);
      sd = std::sqrt(sd / (n - 1.0));
    }
    sigma = 1.06 * sd * std::pow(std::max(n, 1.0), -0.2);
    sigma = std::clamp(sigma, range / 100.0, range);
  }

  double weight() const { return 1.0 / static_cast<double>(centers.size() + 1); }

  double pdf(double t) const {
    double p = weight() / (hi - lo);
    for (double c : centers) {
      const double mass = normal_cdf((hi - c) / sigma) - normal_cdf((lo - c) / sigma);
      const double z = (t - c) / sigma;
      p += weight() * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi) * std::max(mass, 1e-300));
    }
    return p;
  }

  double sample(Engine& gen) const {
    const auto j = uniform_index(gen, centers.size() + 1);
    if (j == centers.size()) return uniform(gen, lo, hi);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double t = centers[j] + sigma * standard_normal(gen);
      if (t >= lo && t <= hi) return t;
    }
    return std::clamp(centers[j], lo, hi);
  }
};

}  // namespace detail

// Startup phase (fewer than n_startup complete trials): independent uniform
// draws, log-uniform in log space. Afterwards each dimension draws
// n_candidates values from the density of the best gamma fraction of
// complete trials and keeps the one maximizing good/bad density ratio.
inline ParamMap sample(const SearchSpace& space, const std::vector<TrialRecord>& history, const StudyConfig& cfg,
                       Engine& gen) {
  if (space.empty()) throw ConfigError("search space is empty");
  std::vector<const TrialRecord*> done;
  for (const auto& t : history) {
    if (t.state == TrialState::Complete && t.final_score) done.push_back(&t);
  }
  ParamMap out;
  const std::size_t n_good =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.gamma * static_cast<double>(done.size()))));
  if (done.size() < static_cast<std::size_t>(std::max(cfg.n_startup, 1)) || n_good >= done.size()) {
    for (const auto& s : space) out[s.name] = detail::sample_uniform(s, gen);
    return out;
  }
  std::stable_sort(done.begin(), done.end(), [&](const TrialRecord* a, const TrialRecord* b) {
    return better(*a->final_score, *b->final_score, cfg.direction);
  });
  const std::vector<const TrialRecord*> good(done.begin(), done.begin() + static_cast<std::ptrdiff_t>(n_good));
  const std::vector<const TrialRecord*> bad(done.begin() + static_cast<std::ptrdiff_t>(n_good), done.end());
  for (const auto& s : space) {
    auto observed = [&](const std::vector<const TrialRecord*>& group) {
      std::vector<ParamValue> vals;
      for (const auto* t : group) {
        if (const auto it = t->config.find(s.name); it != t->config.end()) vals.push_back(it->second);
      }
      return vals;
    };
    const auto good_vals = observed(good);
    const auto bad_vals = observed(bad);
    if (s.kind == ParamKind::Categorical) {
      const std::size_t k = s.choices.size();
      auto probs = [&](const std::vector<ParamValue>& vals) {
        std::vector<double> p(k, 1.0);
        for (const auto& v : vals) {
          const auto it = std::find(s.choices.begin(), s.choices.end(), v);
          if (it != s.choices.end()) p[static_cast<std::size_t>(it - s.choices.begin())] += 1.0;
        }
        const double total = static_cast<double>(vals.size() + k);
        for (auto& x : p) x /= total;
        return p;
      };
      const auto pg = probs(good_vals), pb = probs(bad_vals);
      std::size_t best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < cfg.n_candidates; ++c) {
        double u = uniform01(gen);
        std::size_t idx = 0;
        while (idx + 1 < k && u >= pg[idx]) u -= pg[idx++];
        const double score = std::log(pg[idx]) - std::log(pb[idx]);
        if (score > best_score) {
          best_score = score;
          best = idx;
        }
      }
      out[s.name] = s.choices[best];
      continue;
    }
    const auto [lo, hi] = detail::internal_bounds(s);
    auto internal = [&](const std::vector<ParamValue>& vals) {
      std::vector<double> t;
      for (const auto& v : vals) t.push_back(std::clamp(detail::to_internal(s, v), lo, hi));
      return t;
    };
    const detail::ParzenDensity lg(internal(good_vals), lo, hi), lb(internal(bad_vals), lo, hi);
    double best_t = lo;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cfg.n_candidates; ++c) {
      const double t = lg.sample(gen);
      const double score = std::log(lg.pdf(t)) - std::log(lb.pdf(t));
      if (score > best_score) {
        best_score = score;
        best_t = t;
      }
    }
    out[s.name] = detail::from_internal(s, best_t);
  }
  return out;
}

// ---- pruning -------------------------------------------------------------

// True iff the current step exceeds the warmup, enough trials have
// completed, and the latest interim score is strictly worse than the median
// of complete trials' scores at the same step.
inline bool should_prune(const TrialRecord& trial, const std::vector<TrialRecord>& history, const MedianPruner& pruner,
                         Direction direction) {
  const auto step = trial.interim_scores.size();
  if (step == 0 || static_cast<int>(step) <= pruner.warmup_steps) return false;
  std::vector<double> others;
  int completed = 0;
  for (const auto& t : history) {
    if (t.trial_id == trial.trial_id || t.state != TrialState::Complete) continue;
    ++completed;
    if (t.interim_scores.size() >= step) others.push_back(t.interim_scores[step - 1]);
  }
  if (completed < pruner.startup_trials || others.empty()) return false;
  std::sort(others.begin(), others.end());
  const std::size_t m = others.size();
  const double median = m % 2 ? others[m / 2] : 0.5 * (others[m / 2 - 1] + others[m / 2]);
  return better(median, trial.interim_scores.back(), direction);
}

// ---- study ---------------------------------------------------------------

// Thrown by objectives to stop an unpromising trial.
struct TrialPruned {};

class TrialContext {
 public:
  TrialContext(TrialRecord& record, const std::vector<TrialRecord>& history, const StudyConfig& cfg)
      : record_(record), history_(history), cfg_(cfg) {}

  int trial_id() const noexcept { return record_.trial_id; }
  std::uint64_t seed() const noexcept { return record_.seed; }
  void report(double score) { record_.interim_scores.push_back(score); }

  bool should_prune() const {
    if (!cfg_.pruning) return false;
    if (cfg_.custom_pruner) return cfg_.custom_pruner(record_, history_);
    return vaforge::should_prune(record_, history_, cfg_.pruner, cfg_.direction);
  }

 private:
  TrialRecord& record_;
  const std::vector<TrialRecord>& history_;
  const StudyConfig& cfg_;
};

using StudyObjective = std::function<double(const ParamMap&, TrialContext&)>;

struct StudyResult {
  ParamMap best_config;
  double best_score = 0.0;
  int best_trial = -1;
  std::vector<TrialRecord> trials;
};

// Trial t samples with seed + t and receives seed + t as its own seed.
inline StudyResult run_study(const StudyObjective& objective, const SearchSpace& space, const StudyConfig& cfg) {
  cfg.validate();
  for (const auto& s : space) s.validate();
  StudyResult res;
  while (static_cast<int>(res.trials.size()) < cfg.n_trials) {
    const std::vector<TrialRecord> snapshot = res.trials;
    const int batch = std::min(cfg.batch_size, cfg.n_trials - static_cast<int>(res.trials.size()));
    std::vector<TrialRecord> pending(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      auto& t = pending[static_cast<std::size_t>(b)];
      t.trial_id = static_cast<int>(res.trials.size()) + b;
      t.seed = cfg.seed + static_cast<std::uint64_t>(t.trial_id);
      Engine gen = make_engine(t.seed);
      t.config = sample(space, snapshot, cfg, gen);
    }
    parallel_for(pending.size(), cfg.workers, [&](std::size_t b) {
      auto& t = pending[b];
      TrialContext ctx(t, snapshot, cfg);
      try {
        const double score = objective(t.config, ctx);
        if (std::isfinite(score)) {
          t.final_score = score;
          t.state = TrialState::Complete;
        } else {
          t.state = TrialState::Failed;
          t.error = "objective returned a non-finite score";
        }
      } catch (const TrialPruned&) {
        t.state = TrialState::Pruned;
      } catch (const std::exception& e) {
        t.state = TrialState::Failed;
        t.error = e.what();
      }
    });
    for (auto& t : pending) res.trials.push_back(std::move(t));
  }
  for (const auto& t : res.trials) {
    if (t.state != TrialState::Complete) continue;
    if (res.best_trial < 0 || better(*t.final_score, res.best_score, cfg.direction)) {
      res.best_trial = t.trial_id;
      res.best_score = *t.final_score;
      res.best_config = t.config;
    }
  }
  if (res.best_trial < 0) throw AllTrialsPrunedError("no trial completed");
  return res;
}

inline nlohmann::json to_json(const TrialRecord& t) {
  return {{"trial_id", t.trial_id},
          {"seed", t.seed},
          {"config", to_json(t.config)},
          {"interim_scores", t.interim_scores},
          {"final_score", t.final_score ? nlohmann::json(*t.final_score) : nlohmann::json(nullptr)},
          {"state", std::string(trial_state_name(t.state))},
          {"error", t.error}};
}

inline void write_study_log(std::ostream& out, const std::vector<TrialRecord>& trials) {
  for (const auto& t : trials) out << to_json(t).dump() << '\n';
}

// ---- cross-validated objective -------------------------------------------

// Builds the learner spec for a sampled config.
using SpecFactory = std::function<LearnerSpec(const ParamMap& config, std::uint64_t seed)>;

// Sampled values overlay `fixed`; unknown keys are rejected by the learner.
inline SpecFactory spec_template(LearnerKind kind, ParamMap fixed = {}) {
  return [kind, fixed](const ParamMap& config, std::uint64_t seed) {
    LearnerSpec s{kind, fixed, seed, nullptr};
    for (const auto& [k, v] : config) s.hyperparams[k] = v;
    return s;
  };
}

// Mean validation weighted F1 over stratified k folds (fixed by fold_seed
// at construction). Fold scores are reported as interim values; the trial
// is pruned as soon as the pruner asks for it.
inline StudyObjective cv_objective(SpecFactory make_spec, FeatureMatrix x, std::vector<int> y,
                                   std::vector<std::string> classes, int k = 5, std::uint64_t fold_seed = 0,
                                   int workers = 1) {
  auto folds = stratified_kfold_indices(y, classes.size(), k, fold_seed);
  return [make_spec = std::move(make_spec), x = std::move(x), y = std::move(y), classes = std::move(classes),
          folds = std::move(folds), workers](const ParamMap& config, TrialContext& ctx) {
    auto fold_score = [&](std::size_t f) {
      const auto& fold = folds[f];
      std::vector<int> y_train, y_val;
      for (auto i : fold.train) y_train.push_back(y[i]);
      for (auto i : fold.val) y_val.push_back(y[i]);
      const LearnerSpec spec = make_spec(config, ctx.seed() + f);
      const FittedModel m = fit(spec, x.select_rows(fold.train), y_train, classes);
      const auto pred = argmax_labels(predict_proba(m, x.select_rows(fold.val)));
      return weighted_f1(y_val, pred, classes);
    };
    std::vector<double> scores(folds.size());
    if (workers > 1) {
      parallel_for(folds.size(), workers, [&](std::size_t f) { scores[f] = fold_score(f); });
    }
    double sum = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      if (workers <= 1) scores[f] = fold_score(f);
      sum += scores[f];
      ctx.report(scores[f]);
      if (ctx.should_prune()) throw TrialPruned{};
    }
    return sum / static_cast<double>(folds.size());
  };
}

// ---- search-space presets ------------------------------------------------

inline std::vector<std::string> preset_names() {
  return {"plm", "catboost", "lightgbm", "gbdt", "xgb", "mlp", "random_forest", "native_gbdt", "native_mlp"};
}

// The published search spaces, plus two adapted to the native learners.
// Tuple and None choices of the published tables are kept as strings.
inline SearchSpace preset_space(std::string_view name) {
  using P = ParamSpec;
  auto ints = [](std::initializer_list<std::int64_t> v) { return std::vector<ParamValue>(v.begin(), v.end()); };
  auto reals = [](std::initializer_list<double> v) { return std::vector<ParamValue>(v.begin(), v.end()); };
  auto strs = [](std::initializer_list<const char*> v) {
    std::vector<ParamValue> out;
    for (const char* s : v) out.emplace_back(std::string(s));
    return out;
  };
  if (name == "plm") {
    // The warmup ratio range starts at 0, which a log scale cannot
    // represent; it is searched uniformly.
    return {P::log_uniform("learning_rate", 5e-6, 4e-5),
            P::categorical("batch_size", ints({8, 16, 32})),
            P::categorical("epochs", ints({3, 5, 7})),
            P::log_uniform("weight_decay", 1e-6, 0.1),
            P::uniform("warmup_ratio", 0.0, 0.2),
            P::categorical("gradient_accumulation_steps", ints({1, 2})),
            P::categorical("freeze_layers", ints({0, 4, 8, 12}))};
  }
  if (name == "catboost") {
    return {P::categorical("iterations", ints({100, 150, 200})), P::log_uniform("learning_rate", 0.01, 0.2),
            P::integer("depth", 3, 9), P::categorical("boosting_type", strs({"Ordered", "Plain"})),
            P::integer("l2_leaf_reg", 2, 4)};
  }
  if (name == "lightgbm") {
    return {P::log_uniform("learning_rate", 0.01, 0.2), P::categorical("n_estimators", ints({50, 100, 200})),
            P::categorical("max_depth", ints({-1, 3, 5, 7})), P::categorical("num_leaves", ints({25, 50, 100})),
            P::categorical("min_data_in_leaf", ints({1, 5, 10}))};
  }
  if (name == "gbdt" || name == "native_gbdt") {
    return {P::log_uniform("learning_rate", 0.01, 0.2), P::categorical("n_estimators", ints({50, 100, 150, 200})),
            P::categorical("max_depth", ints({1, 3, 5, 7})), P::categorical("min_samples_split", ints({2, 5, 10})),
            P::categorical("min_samples_leaf", ints({1, 2, 4})), P::categorical("subsample", reals({0.8, 1.0}))};
  }
  if (name == "xgb") {
    return {P::log_uniform("learning_rate", 0.01, 0.1), P::categorical("n_estimators", ints({50, 100, 150, 200})),
            P::categorical("max_depth", ints({1, 3, 5, 7})), P::categorical("booster", strs({"gbtree", "dart"})),
            P::categorical("gamma", reals({0.0, 0.05, 0.1, 0.2}))};
  }
  if (name == "mlp") {
    return {P::categorical("hidden_layer_sizes", strs({"50,50", "100", "100,50"})),
            P::categorical("activation", strs({"tanh", "relu"})), P::categorical("solver", strs({"adam", "sgd"})),
            P::categorical("alpha", reals({0.0001, 0.001, 0.01})),
            P::categorical("learning_rate", strs({"constant", "adaptive"})), P::integer("max_iter", 800, 3000, 200)};
  }
  if (name == "random_forest") {
    return {P::categorical("n_estimators", ints({50, 100, 150, 200})),
            P::categorical("max_depth", std::vector<ParamValue>{std::int64_t{5}, std::int64_t{10}, std::int64_t{20},
                                                                std::string("None")}),
            P::categorical("min_samples_split", ints({2, 5, 10})),
            P::categorical("max_features", strs({"auto", "sqrt", "log2"})),
            P::categorical("min_samples_leaf", ints({1, 2, 4}))};
  }
  if (name == "native_mlp") {
    // One hidden layer: widths are the first-layer sizes of the published
    // choices; solver and learning-rate schedule do not apply.
    return {P::categorical("hidden", ints({50, 100})), P::categorical("activation", strs({"tanh", "relu"})),
            P::categorical("alpha", reals({0.0001, 0.001, 0.01})), P::integer("max_iter", 800, 3000, 200)};
  }
  throw ConfigError("unknown search-space preset '" + std::string(name) + "'");
}

// JSON: {"preset": name} or a list of {"name", "type", "low", "high",
// "step", "choices"} objects.
inline SearchSpace space_from_json(const nlohmann::json& j) {
  if (j.is_object() && j.contains("preset")) return preset_space(j.at("preset").get<std::string>());
  if (!j.is_array()) throw ConfigError("search space must be a preset object or a list of parameters");
  SearchSpace out;
  for (const auto& p : j) {
    const auto name = p.at("name").get<std::string>();
    const auto type = p.at("type").get<std::string>();
    if (type == "log_uniform") {
      out.push_back(ParamSpec::log_uniform(name, p.at("low").get<double>(), p.at("high").get<double>()));
    } else if (type == "uniform") {
      out.push_back(ParamSpec::uniform(name, p.at("low").get<double>(), p.at("high").get<double>()));
    } else if (type == "integer") {
      out.push_back(ParamSpec::integer(name, p.at("low").get<std::int64_t>(), p.at("high").get<std::int64_t>(),
                                       p.value("step", std::int64_t{1})));
    } else if (type == "categorical") {
      std::vector<ParamValue> choices;
      for (const auto& c : p.at("choices")) choices.push_back(param_from_json(c));
      out.push_back(ParamSpec::categorical(name, std::move(choices)));
    } else {
      throw ConfigError("unknown parameter type '" + type + "'");
    }
  }
  return out;
}

}  // namespace vaforge
