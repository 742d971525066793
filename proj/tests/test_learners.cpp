#include <map>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vaforge/learners.hpp"
#include "vaforge/synthetic.hpp"

using namespace vaforge;

namespace {

FeatureMatrix make_x(const Matrix& values) {
  std::vector<std::string> ids, cols;
  for (Eigen::Index r = 0; r < values.rows(); ++r) ids.push_back("r" + std::to_string(r));
  for (Eigen::Index c = 0; c < values.cols(); ++c) cols.push_back("f" + std::to_string(c));
  return FeatureMatrix(ids, cols, values);
}

Matrix random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(gen);
  return m;
}

std::vector<int> random_labels(std::size_t n, int c, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> u(0, c - 1);
  std::vector<int> y(n);
  for (auto& v : y) v = u(gen);
  return y;
}

// Labels from a fixed linear rule: class = argmax(X W).
std::vector<int> linear_labels(const Matrix& x, int c, std::uint64_t seed) {
  const Matrix w = random_matrix(x.cols(), c, seed);
  const Matrix s = x * w;
  std::vector<int> y(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) s.row(r).maxCoeff(&y[static_cast<std::size_t>(r)]);
  return y;
}

double train_accuracy(const FittedModel& m, const FeatureMatrix& x, const std::vector<int>& y) {
  const auto pred = argmax_labels(predict_proba(m, x));
  double hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
  return hit / static_cast<double>(y.size());
}

void expect_simplex(const ProbMatrix& p) {
  for (Eigen::Index r = 0; r < p.values.rows(); ++r) {
    EXPECT_GE(p.values.row(r).minCoeff(), 0.0);
    EXPECT_NEAR(p.values.row(r).sum(), 1.0, 1e-6);
  }
}

double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm())); }

const std::vector<std::string> kAbc = {"a", "b", "c"};

}  // namespace

TEST(Encoder, ResponseCodingAndMissingFlags) {
  VARecord a, b;
  a.id = "a";
  a.questions = {{"i2", Response::Yes}, {"i1", Response::DontKnow}};
  b.id = "b";
  b.questions = {{"i1", Response::No}};
  const std::vector<VARecord> recs = {a, b};
  const auto enc = TabularEncoder::fit(recs);
  const auto fm = enc.transform(recs);
  EXPECT_EQ(fm.columns, (std::vector<std::string>{"i1", "i1_missing", "i2", "i2_missing"}));
  Matrix expected(2, 4);
  expected << 0.5, 0, 1, 0,  //
      0, 0, 0.5, 1;
  EXPECT_EQ(fm.values, expected);
}

TEST(Spec, RejectsUndeclaredHyperparams) {
  LearnerSpec s{LearnerKind::Logreg, {{"depth", std::int64_t{3}}}, 0, nullptr};
  EXPECT_THROW(s.resolved(), HyperparamError);
  s.hyperparams = {{"l2", 0.5}};
  EXPECT_EQ(as_double(s.resolved().at("l2")), 0.5);
  EXPECT_EQ(as_int(s.resolved().at("max_iter")), 200);
}

TEST(Fit, RejectsSingleClassAndNonFinite) {
  const auto x = make_x(random_matrix(4, 2, 1));
  const std::vector<int> y = {1, 1, 1, 1};
  for (auto kind : {LearnerKind::Logreg, LearnerKind::Mlp, LearnerKind::Gbdt, LearnerKind::Knn}) {
    EXPECT_THROW(fit({kind, {}, 0, nullptr}, x, y, kAbc), DegenerateDataError);
  }
  auto bad = x;
  bad.values(0, 0) = std::nan("");
  EXPECT_THROW(fit({LearnerKind::Logreg, {}, 0, nullptr}, bad, std::vector<int>{0, 1, 0, 1}, kAbc), NonFiniteError);
}

TEST(Logreg, SeparableTwoPoints) {
  Matrix v(2, 1);
  v << -1, 1;
  const auto x = make_x(v);
  const std::vector<int> y = {0, 1};
  const auto m = fit({LearnerKind::Logreg, {}, 0, nullptr}, x, y, {"neg", "pos"});
  EXPECT_EQ(train_accuracy(m, x, y), 1.0);
}

TEST(Logreg, ZeroWeightsGiveUniformRows) {
  const auto x = make_x(random_matrix(5, 3, 2));
  FittedModel m;
  m.spec = {LearnerKind::Logreg, {}, 0, nullptr};
  m.classes = kAbc;
  m.feature_columns = x.columns;
  m.params = LogregParams{Vector::Zero(static_cast<Eigen::Index>(logreg_param_count(3, 3)))};
  const auto p = predict_proba(m, x);
  EXPECT_LE((p.values.array() - 1.0 / 3).abs().maxCoeff(), 1e-15);
}

TEST(Logreg, GradientAnalyticCases) {
  const Matrix empty(0, 3);
  const std::vector<int> none;
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(logreg_param_count(3, 2)));
  EXPECT_EQ(logreg_gradient(zero, empty, none, 2, 0.0).norm(), 0.0);
  const Vector p = random_matrix(zero.size(), 1, 3).col(0);
  EXPECT_LE((logreg_gradient(p, empty, none, 2, 0.3) - 2 * 0.3 * p).norm(), 1e-15);
}

TEST(Logreg, GradientMatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = random_matrix(12, 4, seed);
    const auto y = random_labels(12, 3, seed + 100);
    const Vector p = 0.5 * random_matrix(static_cast<Eigen::Index>(logreg_param_count(4, 3)), 1, seed + 200).col(0);
    const double l2 = 0.01 * static_cast<double>(seed);
    auto f = [&](const Vector& v) { return logreg_loss_and_gradient(v, x, y, 3, l2, nullptr); };
    EXPECT_LT(rel_err(logreg_gradient(p, x, y, 3, l2), oracle::numeric_gradient(f, p)), 1e-4);
  }
}

TEST(Mlp, GradientMatchesCentralDifferencesEveryLayer) {
  for (auto act : {Activation::Tanh, Activation::Relu}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const MlpShape shape{4, 5, 3, act};
      const Matrix x = random_matrix(10, 4, seed);
      const auto y = random_labels(10, 3, seed + 7);
      const Vector p = mlp_init(shape, seed);
      auto f = [&](const Vector& v) { return mlp_loss_and_gradient(v, shape, x, y, 0.05, nullptr); };
      Vector g;
      mlp_loss_and_gradient(p, shape, x, y, 0.05, &g);
      const Vector num = oracle::numeric_gradient(f, p);
      // Layer slices: W1, b1, W2, b2.
      const Eigen::Index sizes[] = {5 * 4, 5, 3 * 5, 3};
      Eigen::Index off = 0;
      for (auto len : sizes) {
        EXPECT_LT(rel_err(g.segment(off, len), num.segment(off, len)), 1e-4) << "offset " << off;
        off += len;
      }
    }
  }
}

TEST(Training, LossHistoryNonIncreasingAndDeterministic) {
  const Matrix v = random_matrix(60, 5, 11);
  const auto x = make_x(v);
  const auto y = linear_labels(v, 3, 12);
  for (auto kind : {LearnerKind::Logreg, LearnerKind::Mlp}) {
    const LearnerSpec spec{kind, {}, 9, nullptr};
    const auto a = fit(spec, x, y, kAbc);
    const auto b = fit(spec, x, y, kAbc);
    ASSERT_GT(a.loss_history.size(), 2u);
    for (std::size_t i = 1; i < a.loss_history.size(); ++i) EXPECT_LE(a.loss_history[i], a.loss_history[i - 1]);
    EXPECT_EQ(predict_proba(a, x).values, predict_proba(b, x).values);
    EXPECT_GE(train_accuracy(a, x, y), 0.9);
  }
}

TEST(Gbdt, XorWithDepthTwo) {
  Matrix v(4, 2);
  v << 0, 0, 0, 1, 1, 0, 1, 1;
  const auto x = make_x(v);
  const std::vector<int> y = {0, 1, 1, 0};
  const auto m = fit_gbdt({LearnerKind::Gbdt, {{"n_estimators", std::int64_t{50}}, {"max_depth", std::int64_t{2}}}, 0, nullptr},
                          x, y, {"same", "diff"});
  EXPECT_EQ(train_accuracy(m, x, y), 1.0);
}

TEST(Gbdt, MinusOneDepthIsUnlimited) {
  const auto x = make_x(random_matrix(60, 3, 21));
  const auto y = random_labels(60, 2, 22);
  auto spec = [](std::int64_t depth) {
    return LearnerSpec{LearnerKind::Gbdt, {{"n_estimators", std::int64_t{5}}, {"max_depth", depth}}, 0, nullptr};
  };
  EXPECT_EQ(predict_proba(fit(spec(-1), x, y, {"a", "b"}), x).values,
            predict_proba(fit(spec(64), x, y, {"a", "b"}), x).values);
  EXPECT_THROW(fit(spec(-2), x, y, {"a", "b"}), HyperparamError);
}

TEST(Gbdt, NoTreesPredictsClassFrequencies) {
  const auto x = make_x(random_matrix(10, 2, 3));
  const std::vector<int> y = {0, 0, 0, 0, 0, 1, 1, 1, 2, 2};
  const auto m = fit({LearnerKind::Gbdt, {{"n_estimators", std::int64_t{0}}}, 0, nullptr}, x, y, kAbc);
  const auto p = predict_proba(m, x);
  for (Eigen::Index r = 0; r < p.values.rows(); ++r) {
    EXPECT_NEAR(p.values(r, 0), 0.5, 1e-12);
    EXPECT_NEAR(p.values(r, 1), 0.3, 1e-12);
    EXPECT_NEAR(p.values(r, 2), 0.2, 1e-12);
  }
}

TEST(Gbdt, PerRoundLossNonIncreasing) {
  const Matrix v = random_matrix(80, 4, 5);
  const auto y = linear_labels(v, 3, 6);
  const auto m = fit({LearnerKind::Gbdt, {{"learning_rate", 0.05}, {"n_estimators", std::int64_t{40}}}, 0, nullptr},
                     make_x(v), y, kAbc);
  const auto& g = std::get<GbdtParams>(m.params);
  for (const auto& losses : g.round_losses) {
    ASSERT_EQ(losses.size(), 41u);
    for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1] + 1e-12);
  }
}

TEST(Gbdt, MinSamplesLeafHonoured) {
  const Matrix v = random_matrix(30, 2, 8);
  const auto y = linear_labels(v, 2, 9);
  const auto m = fit({LearnerKind::Gbdt, {{"min_samples_leaf", std::int64_t{7}}, {"n_estimators", std::int64_t{5}}}, 0,
                      nullptr},
                     make_x(v), y, {"a", "b"});
  const auto& g = std::get<GbdtParams>(m.params);
  for (const auto& per_class : g.trees) {
    for (const auto& tree : per_class) {
      // Route every training row to its leaf and count occupancy.
      std::map<int, int> occupancy;
      for (Eigen::Index r = 0; r < v.rows(); ++r) {
        int i = 0;
        while (tree.nodes[static_cast<std::size_t>(i)].feature >= 0) {
          const auto& n = tree.nodes[static_cast<std::size_t>(i)];
          i = v(r, n.feature) <= n.threshold ? n.left : n.right;
        }
        ++occupancy[i];
      }
      for (const auto& [leaf, count] : occupancy) EXPECT_GE(count, 7);
    }
  }
}

TEST(Training, RowPermutationInvariance) {
  const Matrix v = random_matrix(40, 3, 21);
  const auto y = linear_labels(v, 3, 22);
  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(3));
  Matrix vp(40, 3);
  std::vector<int> yp(40);
  for (std::size_t i = 0; i < 40; ++i) {
    vp.row(static_cast<Eigen::Index>(i)) = v.row(static_cast<Eigen::Index>(perm[i]));
    yp[i] = y[perm[i]];
  }
  const auto x = make_x(v);
  for (auto kind : {LearnerKind::Logreg, LearnerKind::Gbdt}) {
    const LearnerSpec spec{kind, {{kind == LearnerKind::Logreg ? "l2" : "l2_leaf_reg", 0.1}}, 0, nullptr};
    const auto a = fit(spec, x, y, kAbc);
    const auto b = fit(spec, make_x(vp), yp, kAbc);
    EXPECT_LE((predict_proba(a, x).values - predict_proba(b, x).values).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Knn, OneNearestOnTrainingSetIsOneHot) {
  const Matrix v = random_matrix(25, 3, 31);
  const auto y = random_labels(25, 3, 32);
  const auto x = make_x(v);
  const auto m = fit({LearnerKind::Knn, {{"k", std::int64_t{1}}}, 0, nullptr}, x, y, kAbc);
  const auto p = predict_proba(m, x);
  for (std::size_t r = 0; r < y.size(); ++r) {
    EXPECT_EQ(p.values(static_cast<Eigen::Index>(r), y[r]), 1.0);
  }
}

TEST(PredictProba, SimplexAndDimensionCheck) {
  const Matrix v = random_matrix(30, 4, 41);
  const auto x = make_x(v);
  const auto y = linear_labels(v, 3, 42);
  for (auto kind : {LearnerKind::Logreg, LearnerKind::Mlp, LearnerKind::Gbdt, LearnerKind::Knn}) {
    const auto m = fit({kind, {}, 0, nullptr}, x, y, kAbc);
    expect_simplex(predict_proba(m, make_x(random_matrix(15, 4, 43) * 10)));
    EXPECT_THROW(predict_proba(m, make_x(random_matrix(3, 5, 44))), DimensionError);
  }
}

TEST(Serialization, ModelJsonRoundTripPredictsIdentically) {
  const Matrix v = random_matrix(30, 3, 51);
  const auto x = make_x(v);
  const auto y = linear_labels(v, 3, 52);
  for (auto kind : {LearnerKind::Logreg, LearnerKind::Mlp, LearnerKind::Gbdt, LearnerKind::Knn}) {
    const auto m = fit({kind, {}, 4, nullptr}, x, y, kAbc);
    const auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(predict_proba(back, x).values, predict_proba(m, x).values) << learner_kind_name(kind);
  }
}

TEST(External, LoadRemapRenormalizeAndErrors) {
  testutil::TempDir dir("ext");
  const auto ok = load_external_predictions(dir.write("ok.csv", "id,b,a\nx,0.25,0.75\ny,0.4995,0.4995\n"), {"a", "b"});
  EXPECT_EQ(ok.ids, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(ok.values(0, 0), 0.75);
  EXPECT_NEAR(ok.values(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(ok.values.row(1).sum(), 1.0, 1e-15);
  EXPECT_THROW(load_external_predictions(dir.write("u.csv", "id,a,zz\nx,0.5,0.5\n"), {"a", "b"}), SchemaError);
  EXPECT_THROW(load_external_predictions(dir.write("s.csv", "id,a,b\nx,0.5,0.4\n"), {"a", "b"}), StochasticityError);
  EXPECT_THROW(load_external_predictions(dir.write("d.csv", "id,a,b\nx,0.5,0.5\nx,0.5,0.5\n"), {"a", "b"}),
               DuplicateIdError);
}

TEST(External, PredictAlignsById) {
  testutil::TempDir dir("ext2");
  auto src = std::make_shared<const ProbMatrix>(
      load_external_predictions(dir.write("p.csv", "id,a,b\nr0,1,0\nr1,0,1\nr2,0.5,0.5\n"), {"a", "b"}));
  const auto x = make_x(Matrix(3, 0));
  const auto m = fit({LearnerKind::External, {}, 0, src}, x, std::vector<int>{0, 1, 0}, {"a", "b"});
  const auto p = predict_proba(m, x.select_rows({2, 0}));
  EXPECT_EQ(p.ids, (std::vector<std::string>{"r2", "r0"}));
  EXPECT_EQ(p.values(1, 0), 1.0);
}
