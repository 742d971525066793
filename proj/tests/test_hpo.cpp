#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "vaforge/hpo.hpp"

using namespace vaforge;

namespace {

// Kolmogorov–Smirnov statistic of `xs` against U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (xs[i] - lo) / (hi - lo);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

TrialRecord complete(int id, std::vector<double> interim, double final_score) {
  TrialRecord t;
  t.trial_id = id;
  t.interim_scores = std::move(interim);
  t.final_score = final_score;
  t.state = TrialState::Complete;
  return t;
}

TrialRecord running(int id, std::vector<double> interim) {
  TrialRecord t;
  t.trial_id = id;
  t.interim_scores = std::move(interim);
  return t;
}

// Distance objective in log10 space; maximized at `opt`.
StudyObjective log_distance(double opt) {
  return [opt](const ParamMap& c, TrialContext&) { return -std::abs(std::log10(as_double(c.at("x"))) - std::log10(opt)); };
}

FeatureMatrix features(const Matrix& v) {
  std::vector<std::string> ids, cols;
  for (Eigen::Index r = 0; r < v.rows(); ++r) ids.push_back("r" + std::to_string(r));
  for (Eigen::Index c = 0; c < v.cols(); ++c) cols.push_back("f" + std::to_string(c));
  return FeatureMatrix(ids, cols, v);
}

}  // namespace

TEST(ParamSpec, ValidationRules) {
  EXPECT_THROW(ParamSpec::uniform("u", 1.0, 1.0), ConfigError);
  EXPECT_THROW(ParamSpec::log_uniform("l", 0.0, 1.0), ConfigError);
  EXPECT_THROW(ParamSpec::log_uniform("l", -1.0, 1.0), ConfigError);
  EXPECT_THROW(ParamSpec::categorical("c", {}), ConfigError);
  EXPECT_THROW(ParamSpec::integer("i", 5, 2), ConfigError);
  EXPECT_THROW(ParamSpec::integer("i", 0, 10, 0), ConfigError);
  EXPECT_THROW(ParamSpec::uniform("", 0.0, 1.0), ConfigError);
  EXPECT_EQ(ParamSpec::integer("i", 800, 3000, 200).integer_max(), 3000);
  EXPECT_EQ(ParamSpec::integer("i", 0, 10, 3).integer_max(), 9);
}

TEST(Sample, StartupLogUniformPassesUniformityCheck) {
  const SearchSpace space = {ParamSpec::log_uniform("lr", 5e-6, 4e-5)};
  StudyConfig cfg;
  std::vector<double> logs;
  for (int i = 0; i < 1000; ++i) {
    Engine gen = make_engine(derive_seed(42, static_cast<std::uint64_t>(i)));
    const double v = as_double(sample(space, {}, cfg, gen).at("lr"));
    ASSERT_GE(v, 5e-6);
    ASSERT_LE(v, 4e-5);
    logs.push_back(std::log(v));
  }
  // Critical value of the one-sample KS test at alpha = 0.01.
  EXPECT_LT(ks_uniform(logs, std::log(5e-6), std::log(4e-5)), 1.628 / std::sqrt(1000.0));
}

TEST(Sample, ValuesAlwaysWithinBoundsIncludingTpePhase) {
  const SearchSpace space = {ParamSpec::log_uniform("l", 1e-4, 10.0), ParamSpec::uniform("u", -2.0, 3.0),
                             ParamSpec::integer("i", 800, 3000, 200),
                             ParamSpec::categorical("c", {std::int64_t{8}, std::int64_t{16}, std::int64_t{32}})};
  StudyConfig cfg;
  cfg.n_startup = 5;
  std::vector<TrialRecord> history;
  for (int i = 0; i < 12; ++i) {
    Engine gen = make_engine(static_cast<std::uint64_t>(1000 + i));
    auto t = complete(i, {}, static_cast<double>((i * 7) % 5));
    t.config = sample(space, {}, cfg, gen);
    history.push_back(t);
  }
  for (int i = 0; i < 10000; ++i) {
    Engine gen = make_engine(static_cast<std::uint64_t>(i));
    const auto c = sample(space, i % 2 ? history : std::vector<TrialRecord>{}, cfg, gen);
    for (const auto& s : space) ASSERT_TRUE(s.contains(c.at(s.name))) << s.name;
  }
}

TEST(Sample, EmptyHistoryIsTheUniformStartupRule) {
  const SearchSpace space = {ParamSpec::uniform("u", 0.0, 1.0), ParamSpec::log_uniform("l", 1e-3, 1.0)};
  StudyConfig cfg;
  cfg.n_startup = 0;
  Engine a = make_engine(5), b = make_engine(5);
  const auto s = sample(space, {}, cfg, a);
  EXPECT_EQ(s.at("u"), detail::sample_uniform(space[0], b));
  EXPECT_EQ(s.at("l"), detail::sample_uniform(space[1], b));
  EXPECT_THROW(sample({}, {}, cfg, a), ConfigError);
}

TEST(Sample, TpeConcentratesNearGoodRegion) {
  const SearchSpace space = {ParamSpec::uniform("x", 0.0, 1.0)};
  StudyConfig cfg;
  cfg.n_startup = 5;
  std::vector<TrialRecord> history;
  for (int i = 0; i < 40; ++i) {
    auto t = complete(i, {}, 0.0);
    const double x = (i + 0.5) / 40.0;
    t.config["x"] = x;
    t.final_score = -std::abs(x - 0.8);
    history.push_back(t);
  }
  int near = 0;
  for (int i = 0; i < 200; ++i) {
    Engine gen = make_engine(static_cast<std::uint64_t>(i));
    near += std::abs(as_double(sample(space, history, cfg, gen).at("x")) - 0.8) < 0.15;
  }
  // Uniform sampling would land there 30% of the time.
  EXPECT_GT(near, 140);
}

TEST(Pruner, StartupGuardWarmupAndMedianRule) {
  const MedianPruner p{2, 3};
  std::vector<TrialRecord> history = {complete(0, {0.8, 0.8, 0.8}, 0.8), complete(1, {0.7, 0.7, 0.7}, 0.7)};
  // Only two complete trials: startup guard holds.
  EXPECT_FALSE(should_prune(running(9, {0.1, 0.1, 0.1}), history, p, Direction::Maximize));
  history.push_back(complete(2, {0.6, 0.6, 0.6}, 0.6));
  // Median at step 3 is 0.7; 0.5 is strictly worse.
  EXPECT_TRUE(should_prune(running(9, {0.9, 0.9, 0.5}), history, p, Direction::Maximize));
  EXPECT_FALSE(should_prune(running(9, {0.9, 0.9, 0.7}), history, p, Direction::Maximize));
  // Within warmup (step 2 <= 2).
  EXPECT_FALSE(should_prune(running(9, {0.1, 0.1}), history, p, Direction::Maximize));
  // Minimization flips the comparison.
  EXPECT_TRUE(should_prune(running(9, {0.1, 0.1, 0.75}), history, p, Direction::Minimize));
  EXPECT_FALSE(should_prune(running(9, {0.1, 0.1, 0.5}), history, p, Direction::Minimize));
  // Pruned trials do not count toward the median.
  auto pruned = running(3, {0.0, 0.0, 0.0});
  pruned.state = TrialState::Pruned;
  history.push_back(pruned);
  EXPECT_FALSE(should_prune(running(9, {0.9, 0.9, 0.7}), history, p, Direction::Maximize));
}

TEST(Pruner, BestSoFarNeverPruned) {
  const MedianPruner p{1, 1};
  std::vector<TrialRecord> history;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 0.9);
  for (int i = 0; i < 10; ++i) history.push_back(complete(i, {u(gen), u(gen), u(gen), u(gen)}, 0.5));
  for (std::size_t step = 1; step <= 4; ++step) {
    EXPECT_FALSE(should_prune(running(99, std::vector<double>(step, 0.95)), history, p, Direction::Maximize));
  }
}

TEST(Study, CategoricalDominance) {
  const SearchSpace space = {ParamSpec::categorical("opt", {std::string("a"), std::string("b")})};
  StudyConfig cfg;
  cfg.n_trials = 10;
  cfg.seed = 4;
  const auto res = run_study(
      [](const ParamMap& c, TrialContext&) { return std::get<std::string>(c.at("opt")) == "b" ? 0.7 : 0.3; }, space,
      cfg);
  EXPECT_EQ(std::get<std::string>(res.best_config.at("opt")), "b");
  EXPECT_EQ(res.best_score, 0.7);
  EXPECT_EQ(res.trials.size(), 10u);
}

TEST(Study, LogUniformOptimumWithinOneDecade) {
  const SearchSpace space = {ParamSpec::log_uniform("x", 1e-6, 1.0)};
  int hits = 0;
  for (std::uint64_t rerun = 0; rerun < 100; ++rerun) {
    StudyConfig cfg;
    cfg.n_trials = 30;
    cfg.seed = rerun * 1000;
    const auto res = run_study(log_distance(3e-4), space, cfg);
    hits += -res.best_score <= 1.0;
  }
  EXPECT_GE(hits, 95);
}

TEST(Study, PrunedTrialsNeverBestAndHaveNoScore) {
  const SearchSpace space = {ParamSpec::uniform("x", 0.0, 1.0)};
  StudyConfig cfg;
  cfg.n_trials = 20;
  cfg.seed = 2;
  // Prune everything once four trials have completed; late trials would
  // otherwise score highest.
  cfg.custom_pruner = [](const TrialRecord& t, const std::vector<TrialRecord>& h) {
    return t.trial_id >= 4 && !h.empty();
  };
  const auto res = run_study(
      [](const ParamMap& c, TrialContext& ctx) {
        ctx.report(0.0);
        if (ctx.should_prune()) throw TrialPruned{};
        return as_double(c.at("x")) + ctx.trial_id();
      },
      space, cfg);
  EXPECT_LT(res.best_trial, 4);
  for (const auto& t : res.trials) {
    if (t.state == TrialState::Pruned) {
      EXPECT_FALSE(t.final_score.has_value());
      EXPECT_NE(t.trial_id, res.best_trial);
    }
    if (t.state == TrialState::Complete) {
      EXPECT_TRUE(t.final_score.has_value());
    }
  }
}

TEST(Study, AllPrunedOrFailedRaises) {
  const SearchSpace space = {ParamSpec::uniform("x", 0.0, 1.0)};
  StudyConfig cfg;
  cfg.n_trials = 3;
  EXPECT_THROW(run_study([](const ParamMap&, TrialContext&) -> double { throw TrialPruned{}; }, space, cfg),
               AllTrialsPrunedError);
  const auto failing = [](const ParamMap&, TrialContext&) -> double { throw std::runtime_error("boom"); };
  EXPECT_THROW(run_study(failing, space, cfg), AllTrialsPrunedError);
  cfg.n_trials = 0;
  EXPECT_THROW(run_study(log_distance(0.5), space, cfg), ConfigError);
}

TEST(Study, ReproducibleAndWorkerIndependent) {
  const SearchSpace space = {ParamSpec::log_uniform("x", 1e-5, 1.0), ParamSpec::integer("n", 1, 9)};
  StudyConfig cfg;
  cfg.n_trials = 25;
  cfg.seed = 77;
  cfg.batch_size = 4;
  auto obj = [](const ParamMap& c, TrialContext&) {
    return -std::abs(std::log10(as_double(c.at("x"))) + 2.0) - 0.1 * static_cast<double>(as_int(c.at("n")));
  };
  cfg.workers = 1;
  const auto a = run_study(obj, space, cfg);
  cfg.workers = 4;
  const auto b = run_study(obj, space, cfg);
  std::ostringstream la, lb;
  write_study_log(la, a.trials);
  write_study_log(lb, b.trials);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(a.best_trial, b.best_trial);
  // One JSON object per line.
  std::istringstream lines(la.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["trial_id"], n++);
    EXPECT_EQ(j["state"], "complete");
  }
  EXPECT_EQ(n, 25);
}

TEST(CvObjective, LeakedLabelGivesCeilingAndIsDeterministic) {
  const std::size_t n = 60;
  Matrix v(n, 2);
  std::vector<int> y(n);
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 3);
    v(static_cast<Eigen::Index>(i), 0) = 10.0 * y[i];
    v(static_cast<Eigen::Index>(i), 1) = nd(gen);
  }
  auto obj = cv_objective(spec_template(LearnerKind::Knn), features(v), y, {"a", "b", "c"}, 5, 3);
  TrialRecord rec;
  rec.seed = 1;
  StudyConfig cfg;
  TrialContext ctx(rec, {}, cfg);
  ParamMap config{{"k", std::int64_t{3}}};
  EXPECT_EQ(obj(config, ctx), 1.0);
  EXPECT_EQ(rec.interim_scores.size(), 5u);
  TrialRecord rec2;
  rec2.seed = 1;
  TrialContext ctx2(rec2, {}, cfg);
  EXPECT_EQ(obj(config, ctx2), 1.0);
  EXPECT_EQ(rec.interim_scores, rec2.interim_scores);
}

TEST(CvObjective, RandomLabelsScoreNearChance) {
  const std::size_t n = 600;
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> u(0, 1);
  Matrix v(n, 3);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = nd(gen);
  std::vector<int> y(n);
  for (auto& l : y) l = u(gen);
  auto obj = cv_objective(spec_template(LearnerKind::Logreg), features(v), y, {"a", "b"}, 5, 1);
  TrialRecord rec;
  StudyConfig cfg;
  TrialContext ctx(rec, {}, cfg);
  const double score = obj({}, ctx);
  // Weighted F1 of a chance-level binary classifier; 99% band for n = 600.
  EXPECT_LT(std::abs(score - 0.5), 2.576 * std::sqrt(0.25 / n) + 0.02);
  EXPECT_THROW(cv_objective(spec_template(LearnerKind::Logreg), features(v), y, {"a", "b"}, 1, 1), FoldError);
}

TEST(CvObjective, PrunesThroughContext) {
  Matrix v = Matrix::Zero(20, 1);
  std::vector<int> y(20);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  auto obj = cv_objective(spec_template(LearnerKind::Logreg), features(v), y, {"a", "b"}, 4, 1);
  TrialRecord rec;
  StudyConfig cfg;
  cfg.custom_pruner = [](const TrialRecord& t, const std::vector<TrialRecord>&) { return t.interim_scores.size() >= 2; };
  TrialContext ctx(rec, {}, cfg);
  EXPECT_THROW(obj({}, ctx), TrialPruned);
  EXPECT_EQ(rec.interim_scores.size(), 2u);
}

TEST(Presets, MatchPublishedTables) {
  const auto plm = preset_space("plm");
  ASSERT_EQ(plm.size(), 7u);
  EXPECT_EQ(plm[0].name, "learning_rate");
  EXPECT_EQ(plm[0].kind, ParamKind::LogUniform);
  EXPECT_EQ(plm[0].lo, 5e-6);
  EXPECT_EQ(plm[0].hi, 4e-5);
  EXPECT_EQ(plm[1].choices, (std::vector<ParamValue>{std::int64_t{8}, std::int64_t{16}, std::int64_t{32}}));
  EXPECT_EQ(plm[3].lo, 1e-6);
  EXPECT_EQ(plm[3].hi, 0.1);
  EXPECT_EQ(plm[4].hi, 0.2);
  EXPECT_EQ(plm[6].choices.size(), 4u);

  const auto cat = preset_space("catboost");
  EXPECT_EQ(cat[2].kind, ParamKind::Integer);
  EXPECT_EQ(cat[2].lo, 3);
  EXPECT_EQ(cat[2].hi, 9);
  const auto mlp = preset_space("mlp");
  EXPECT_EQ(mlp.back().name, "max_iter");
  EXPECT_EQ(mlp.back().step, 200);
  EXPECT_EQ(mlp.back().lo, 800);
  EXPECT_EQ(mlp.back().hi, 3000);
  EXPECT_EQ(preset_space("xgb")[0].hi, 0.1);
  EXPECT_EQ(preset_space("lightgbm")[2].choices.front(), ParamValue(std::int64_t{-1}));
  for (const auto& n : preset_names()) EXPECT_NO_THROW(preset_space(n)) << n;
  EXPECT_THROW(preset_space("nope"), ConfigError);
}

TEST(Presets, NativeSpacesAreAcceptedByLearners) {
  Matrix v(12, 2);
  std::vector<int> y(12);
  for (Eigen::Index i = 0; i < 12; ++i) {
    y[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
    v(i, 0) = y[static_cast<std::size_t>(i)];
    v(i, 1) = static_cast<double>(i) / 12.0;
  }
  for (const auto& [name, kind] : {std::pair{"native_gbdt", LearnerKind::Gbdt}, std::pair{"native_mlp", LearnerKind::Mlp}}) {
    const auto space = preset_space(name);
    StudyConfig cfg;
    Engine gen = make_engine(1);
    auto config = sample(space, {}, cfg, gen);
    if (kind == LearnerKind::Mlp) config["max_iter"] = std::int64_t{50};
    if (kind == LearnerKind::Gbdt) config["n_estimators"] = std::int64_t{5};
    EXPECT_NO_THROW(fit(spec_template(kind)(config, 0), features(v), y, {"a", "b"})) << name;
  }
}

TEST(Presets, SpaceFromJson) {
  const auto j = nlohmann::json::parse(R"([
    {"name": "l2", "type": "log_uniform", "low": 1e-6, "high": 1.0},
    {"name": "k", "type": "integer", "low": 1, "high": 21, "step": 2},
    {"name": "act", "type": "categorical", "choices": ["tanh", "relu"]},
    {"name": "u", "type": "uniform", "low": 0, "high": 0.5}])");
  const auto space = space_from_json(j);
  ASSERT_EQ(space.size(), 4u);
  EXPECT_EQ(space[0].kind, ParamKind::LogUniform);
  EXPECT_EQ(space[1].step, 2);
  EXPECT_EQ(space[2].choices.size(), 2u);
  EXPECT_EQ(space[3].hi, 0.5);
  EXPECT_EQ(space_from_json(nlohmann::json::parse(R"({"preset": "xgb"})")).size(), 5u);
  EXPECT_THROW(space_from_json(nlohmann::json::parse(R"([{"name": "x", "type": "beta"}])")), ConfigError);
  EXPECT_THROW(space_from_json(nlohmann::json::parse(R"([{"name": "x", "type": "uniform", "low": 2, "high": 1}])")),
               ConfigError);
  EXPECT_THROW(space_from_json(nlohmann::json::parse("3")), ConfigError);
}
