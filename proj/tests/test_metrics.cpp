#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vaforge/metrics.hpp"

using namespace vaforge;

namespace {

const std::vector<std::string> kAb = {"A", "B"};

ProbMatrix probs(const std::vector<std::vector<double>>& rows, std::vector<std::string> classes) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(classes.size()));
  std::vector<std::string> ids;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ids.push_back("r" + std::to_string(r));
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return ProbMatrix(ids, std::move(classes), m);
}

ProbMatrix random_probs(std::size_t n, std::size_t c, std::mt19937_64& gen) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<std::vector<double>> rows(n, std::vector<double>(c));
  for (auto& row : rows) {
    double s = 0;
    for (auto& v : row) s += v = g(gen) + 1e-9;
    for (auto& v : row) v /= s;
  }
  std::vector<std::string> classes;
  for (std::size_t i = 0; i < c; ++i) classes.push_back("c" + std::to_string(i));
  return probs(rows, classes);
}

}  // namespace

TEST(Confusion, EnumerationExample) {
  const auto cm = confusion(std::vector<std::string>{"A", "A", "B"}, std::vector<std::string>{"A", "B", "B"}, kAb);
  EXPECT_EQ(cm.counts, (std::vector<std::vector<std::int64_t>>{{1, 1}, {0, 1}}));
  EXPECT_EQ(cm.total(), 3);
}

TEST(Confusion, PerfectAndEmpty) {
  const std::vector<int> y = {0, 1, 2, 2};
  const auto cm = confusion(y, y, {"a", "b", "c"});
  EXPECT_EQ(cm.counts, (std::vector<std::vector<std::int64_t>>{{1, 0, 0}, {0, 1, 0}, {0, 0, 2}}));
  const auto empty = confusion(std::vector<int>{}, std::vector<int>{}, kAb);
  EXPECT_EQ(empty.total(), 0);
}

TEST(Confusion, UnknownLabelsRejected) {
  EXPECT_THROW(confusion(std::vector<std::string>{"A"}, std::vector<std::string>{"Z"}, kAb), LabelError);
  EXPECT_THROW(confusion(std::vector<int>{0}, std::vector<int>{2}, kAb), LabelError);
  EXPECT_THROW(confusion(std::vector<int>{0, 1}, std::vector<int>{0}, kAb), LabelError);
}

TEST(PerClass, FormulaAndZeroDivision) {
  // Class A: TP=1, FP=1, FN=0.
  ConfusionMatrix cm{{"A", "B", "C"}, {{1, 0, 0}, {1, 0, 0}, {0, 0, 0}}};
  const auto s = per_class_prf(cm);
  EXPECT_DOUBLE_EQ(s[0].precision, 0.5);
  EXPECT_DOUBLE_EQ(s[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(s[0].f1, 2.0 / 3.0);
  EXPECT_EQ(s[2].precision, 0.0);
  EXPECT_EQ(s[2].recall, 0.0);
  EXPECT_EQ(s[2].f1, 0.0);
  EXPECT_EQ(s[2].support, 0);
  ConfusionMatrix perfect{{"A"}, {{4}}};
  EXPECT_EQ(per_class_prf(perfect)[0].f1, 1.0);
}

TEST(Aggregate, WeightedMacroArithmetic) {
  std::vector<ClassScores> s(2);
  s[0].f1 = 1.0;
  s[0].support = 3;
  s[1].f1 = 0.0;
  s[1].support = 1;
  EXPECT_DOUBLE_EQ(aggregate(s, Averaging::Weighted).f1, 0.75);
  EXPECT_DOUBLE_EQ(aggregate(s, Averaging::Macro).f1, 0.5);
}

TEST(Aggregate, ConstantMetricIsModeIndependent) {
  std::vector<ClassScores> s(3);
  for (std::size_t i = 0; i < 3; ++i) {
    s[i].precision = s[i].recall = s[i].f1 = 0.4;
    s[i].support = static_cast<std::int64_t>(i + 1);
  }
  EXPECT_NEAR(aggregate(s, Averaging::Weighted).f1, 0.4, 1e-15);
  EXPECT_NEAR(aggregate(s, Averaging::Macro).f1, 0.4, 1e-15);
}

TEST(Aggregate, MicroEqualsAccuracyEqualsWeightedRecall) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + trial % 6;
    std::uniform_int_distribution<int> u(0, c - 1);
    std::vector<int> t(30 + trial), p(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = u(gen);
      p[i] = u(gen) % 2 == 0 ? t[i] : u(gen);
    }
    std::vector<std::string> classes;
    for (int i = 0; i < c; ++i) classes.push_back(std::to_string(i));
    const auto cm = confusion(t, p, classes);
    const auto pc = per_class_prf(cm);
    const auto micro = aggregate(pc, Averaging::Micro);
    const double acc = accuracy(cm);
    EXPECT_EQ(micro.f1, acc);
    EXPECT_EQ(micro.precision, acc);
    EXPECT_EQ(micro.recall, acc);
    EXPECT_NEAR(aggregate(pc, Averaging::Weighted).recall, acc, 1e-12);
  }
}

TEST(Csmf, Modes) {
  const auto sym = probs({{1, 0}, {0, 1}}, kAb);
  for (auto mode : {CsmfMode::MeanProb, CsmfMode::TopCause}) {
    EXPECT_EQ(csmf(sym, mode).fractions, (std::vector<double>{0.5, 0.5}));
  }
  const auto same = probs({{0.6, 0.4}, {0.6, 0.4}}, kAb);
  EXPECT_NEAR(csmf(same).fractions[0], 0.6, 1e-15);
  EXPECT_NEAR(csmf(same).fractions[1], 0.4, 1e-15);
  EXPECT_EQ(csmf(same, CsmfMode::TopCause).fractions, (std::vector<double>{1.0, 0.0}));
  const auto one = probs({{0.3, 0.7}}, kAb);
  EXPECT_EQ(csmf(one).fractions, (std::vector<double>{0.3, 0.7}));
}

TEST(CsmfAccuracy, ReferenceValues) {
  EXPECT_DOUBLE_EQ(csmf_accuracy({0.5, 0.3, 0.2}, {0.4, 0.4, 0.2}), 0.875);
  EXPECT_EQ(csmf_accuracy({0.2, 0.8}, {0.2, 0.8}), 1.0);
  // All mass on the rarest true class attains the lower bound; on a majority class, half.
  EXPECT_DOUBLE_EQ(csmf_accuracy({0.5, 0.5, 0.0}, {0.0, 0.0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(csmf_accuracy({0.5, 0.5, 0.0}, {1.0, 0.0, 0.0}), 0.5);
  EXPECT_THROW(csmf_accuracy({1.0}, {1.0}), DegenerateError);
}

TEST(CsmfAccuracy, MatchesOracleAndBounds) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 500; ++trial) {
    const auto t = random_probs(1, 2 + trial % 5, gen);
    const auto p = random_probs(1, 2 + trial % 5, gen);
    std::vector<double> tv(t.values.data(), t.values.data() + t.values.size());
    std::vector<double> pv(p.values.data(), p.values.data() + p.values.size());
    const double a = csmf_accuracy(tv, pv);
    EXPECT_NEAR(a, oracle::csmf_accuracy(tv, pv), 1e-12);
    EXPECT_LE(a, 1.0);
    EXPECT_GE(a, 0.0 - 1e-12);
    EXPECT_NEAR(csmf_accuracy(tv, tv), 1.0, 1e-15);
  }
}

TEST(CsmfAccuracy, AlignsByClassName) {
  const CsmfVector t{{"A", "B", "C"}, {0.5, 0.3, 0.2}};
  const CsmfVector p{{"C", "A", "B"}, {0.2, 0.4, 0.4}};
  EXPECT_DOUBLE_EQ(csmf_accuracy(t, p), 0.875);
  EXPECT_THROW(csmf_accuracy(t, CsmfVector{{"A", "B", "Z"}, {0.2, 0.4, 0.4}}), AlignmentError);
}

TEST(CccsmfAccuracy, ChanceCorrection) {
  EXPECT_NEAR(cccsmf_accuracy(0.632), 0.0, 1e-15);
  EXPECT_NEAR(cccsmf_accuracy(1.0), 1.0, 1e-15);
  EXPECT_NEAR(cccsmf_accuracy(0.875), 0.6603, 1e-4);
  EXPECT_LT(cccsmf_accuracy(0.3), 0.0);
}

TEST(Evaluate, ClassPermutationInvariance) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 3 + trial % 3;
    const auto p = random_probs(40, c, gen);
    std::vector<int> t(40);
    std::uniform_int_distribution<int> u(0, static_cast<int>(c) - 1);
    for (auto& v : t) v = u(gen);
    std::vector<int> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    // New column j holds old class perm[j].
    Matrix pv(p.values.rows(), p.values.cols());
    std::vector<std::string> classes(c);
    std::vector<int> inv(c);
    for (std::size_t j = 0; j < c; ++j) {
      pv.col(static_cast<Eigen::Index>(j)) = p.values.col(perm[j]);
      classes[j] = p.classes[static_cast<std::size_t>(perm[j])];
      inv[static_cast<std::size_t>(perm[j])] = static_cast<int>(j);
    }
    std::vector<int> tp(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) tp[i] = inv[static_cast<std::size_t>(t[i])];
    const auto a = evaluate(t, p);
    const auto b = evaluate(tp, ProbMatrix(p.ids, classes, pv));
    // Ties in argmax could break differently; continuous random rows make them measure-zero.
    EXPECT_EQ(a.accuracy, b.accuracy);
    for (const auto* mode : {"weighted", "macro", "micro"}) {
      EXPECT_NEAR(a.averaged.at(mode).f1, b.averaged.at(mode).f1, 1e-12);
      EXPECT_NEAR(a.averaged.at(mode).precision, b.averaged.at(mode).precision, 1e-12);
    }
    for (const auto* mode : {"mean_prob", "top_cause"}) {
      EXPECT_NEAR(*a.csmf_acc.at(mode), *b.csmf_acc.at(mode), 1e-12);
    }
  }
}

TEST(Evaluate, SingleCausePopulationLeavesCsmfUndefined) {
  const auto p = probs({{1.0}, {1.0}}, {"only"});
  const auto r = evaluate(std::vector<int>{0, 0}, p);
  EXPECT_FALSE(r.csmf_acc.at("mean_prob").has_value());
  EXPECT_TRUE(to_json(r)["csmf_accuracy_mean_prob"].is_null());
  EXPECT_TRUE(to_json(r)["cccsmf_accuracy_top_cause"].is_null());
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_THROW(evaluate(std::vector<int>{0}, p), AlignmentError);
}

TEST(Evaluate, JsonAndCsvExports) {
  const auto p = probs({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}}, kAb);
  const auto r = evaluate(std::vector<int>{0, 1, 1}, p);
  const auto j = to_json(r);
  EXPECT_EQ(j["n"], 3);
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 2.0 / 3.0);
  EXPECT_EQ(j["per_class"].size(), 2u);
  EXPECT_TRUE(j.contains("cccsmf_accuracy_top_cause"));
  std::ostringstream cm;
  write_confusion_csv(cm, r.confusion);
  EXPECT_EQ(cm.str(), "true\\predicted,A,B\nA,1,0\nB,1,1\n");
  std::ostringstream cs;
  write_csmf_csv(cs, r);
  EXPECT_EQ(cs.str().substr(0, cs.str().find('\n')), "class,true,pred_mean_prob,pred_top_cause");
}

TEST(Bootstrap, DeterministicAcrossWorkersAndBracketsEstimate) {
  std::vector<double> x(200);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(2.0, 1.0);
  for (auto& v : x) v = nd(gen);
  auto mean = [&](const std::vector<std::size_t>& idx) {
    double s = 0;
    for (auto i : idx) s += x[i];
    return s / static_cast<double>(idx.size());
  };
  const auto a = bootstrap(x.size(), 400, 17, mean, 0.95, 1);
  const auto b = bootstrap(x.size(), 400, 17, mean, 0.95, 4);
  EXPECT_EQ(a.replicates, b.replicates);
  const double full = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  EXPECT_LT(a.lower, full);
  EXPECT_GT(a.upper, full);
  EXPECT_THROW(bootstrap(0, 10, 1, mean), RangeError);
}
