#pragma once

// Native base classifiers behind one interface, tabular encoding of question
// responses, and the adapter for externally produced probability matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vaforge/core_data.hpp"
#include "vaforge/csv.hpp"
#include "vaforge/errors.hpp"
#include "vaforge/matrix.hpp"
#include "vaforge/params.hpp"
#include "vaforge/rng.hpp"

namespace vaforge {

// ---- tabular encoding ----------------------------------------------------

// Yes=1, No=0, DontKnow=0.5, Missing=0.5, plus a 0/1 column flagging
// Missing for each indicator.
class TabularEncoder {
 public:
  TabularEncoder() = default;
  explicit TabularEncoder(std::vector<std::string> indicators) : indicators_(std::move(indicators)) {}

  // Sorted union of indicators seen in the records.
  static TabularEncoder fit(std::span<const VARecord> records) {
    std::set<std::string> all;
    for (const auto& r : records) {
      for (const auto& [k, v] : r.questions) all.insert(k);
    }
    return TabularEncoder(std::vector<std::string>(all.begin(), all.end()));
  }

  static double encode(Response r) {
    switch (r) {
      case Response::Yes: return 1.0;
      case Response::No: return 0.0;
      case Response::DontKnow:
      case Response::Missing: return 0.5;
    }
    return 0.5;
  }

  const std::vector<std::string>& indicators() const noexcept { return indicators_; }

  std::vector<std::string> column_names() const {
    std::vector<std::string> cols;
    for (const auto& ind : indicators_) {
      cols.push_back(ind);
      cols.push_back(ind + "_missing");
    }
    return cols;
  }

  FeatureMatrix transform(std::span<const VARecord> records) const {
    Matrix m(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(2 * indicators_.size()));
    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
      ids.push_back(records[r].id);
      for (std::size_t j = 0; j < indicators_.size(); ++j) {
        const Response resp = records[r].response(indicators_[j]);
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(2 * j)) = encode(resp);
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(2 * j + 1)) = resp == Response::Missing ? 1.0 : 0.0;
      }
    }
    return FeatureMatrix(std::move(ids), column_names(), std::move(m));
  }

 private:
  std::vector<std::string> indicators_;
};

// ---- specs ---------------------------------------------------------------

enum class LearnerKind { Logreg, Mlp, Gbdt, Knn, External };

inline std::string_view learner_kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::Logreg: return "logreg";
    case LearnerKind::Mlp: return "mlp";
    case LearnerKind::Gbdt: return "gbdt";
    case LearnerKind::Knn: return "knn";
    case LearnerKind::External: return "external";
  }
  return "logreg";
}

inline LearnerKind parse_learner_kind(std::string_view s) {
  for (auto k : {LearnerKind::Logreg, LearnerKind::Mlp, LearnerKind::Gbdt, LearnerKind::Knn, LearnerKind::External}) {
    if (learner_kind_name(k) == s) return k;
  }
  throw HyperparamError("unknown learner kind '" + std::string(s) + "'");
}

// Declared hyperparameters and defaults per kind.
inline const ParamMap& default_hyperparams(LearnerKind kind) {
  static const std::map<LearnerKind, ParamMap> defaults = {
      {LearnerKind::Logreg, {{"l2", 1e-4}, {"max_iter", std::int64_t{200}}, {"tol", 1e-7}}},
      {LearnerKind::Mlp,
       {{"hidden", std::int64_t{32}},
        {"activation", std::string("tanh")},
        {"alpha", 1e-4},
        {"max_iter", std::int64_t{200}},
        {"tol", 1e-7}}},
      {LearnerKind::Gbdt,
       {{"n_estimators", std::int64_t{100}},
        {"learning_rate", 0.1},
        {"max_depth", std::int64_t{3}},
        {"min_samples_leaf", std::int64_t{1}},
        {"min_samples_split", std::int64_t{2}},
        {"subsample", 1.0},
        {"l2_leaf_reg", 1.0}}},
      {LearnerKind::Knn, {{"k", std::int64_t{5}}}},
      {LearnerKind::External, {}},
  };
  return defaults.at(kind);
}

struct LearnerSpec {
  LearnerKind kind = LearnerKind::Logreg;
  ParamMap hyperparams;
  std::uint64_t seed = 0;
  // Probability source for kind == External.
  std::shared_ptr<const ProbMatrix> external;

  // Declared defaults overlaid with the user values; unknown keys rejected.
  ParamMap resolved() const {
    ParamMap out = default_hyperparams(kind);
    for (const auto& [k, v] : hyperparams) {
      if (!out.contains(k)) {
        throw HyperparamError("hyperparameter '" + k + "' is not declared for learner '" +
                              std::string(learner_kind_name(kind)) + "'");
      }
      out[k] = v;
    }
    return out;
  }
};

// ---- optimizer -----------------------------------------------------------

// Objective returns the loss and writes the gradient.
using Objective = std::function<double(const Vector&, Vector&)>;

struct OptimizeResult {
  Vector x;
  std::vector<double> loss_history;  // loss after each accepted step, starting with the initial loss
};

// L-BFGS with Armijo backtracking. Every accepted step strictly lowers the
// loss, so the history is nonincreasing.
inline OptimizeResult minimize_lbfgs(const Objective& f, Vector x, int max_iter, double tol, int memory = 10) {
  OptimizeResult res;
  Vector g(x.size());
  double loss = f(x, g);
  res.loss_history.push_back(loss);
  std::vector<Vector> s_hist, y_hist;
  std::vector<double> rho_hist;
  Vector g_new(x.size());
  for (int it = 0; it < max_iter; ++it) {
    if (g.size() == 0 || g.lpNorm<Eigen::Infinity>() < tol) break;
    Vector q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    Vector r = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(r);
      r += s_hist[i] * (alpha[i] - beta);
    }
    Vector dir = -r;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(g.norm(), 1e-12)) : 1.0;
    bool accepted = false;
    Vector x_new;
    double loss_new = loss;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = x + step * dir;
      loss_new = f(x_new, g_new);
      if (std::isfinite(loss_new) && loss_new <= loss + 1e-4 * step * slope && loss_new < loss) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    const double prev = loss;
    x = x_new;
    g = g_new;
    loss = loss_new;
    res.loss_history.push_back(loss);
    if (prev - loss <= 1e-14 * std::max(1.0, std::abs(prev))) break;
  }
  res.x = std::move(x);
  return res;
}

// ---- softmax helpers -----------------------------------------------------

inline void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - mx).exp();
    z.row(r) /= z.row(r).sum();
  }
}

// Mean cross-entropy of row-stochastic P against labels.
inline double mean_cross_entropy(const Matrix& p, std::span<const int> y) {
  if (y.empty()) return 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    loss -= std::log(std::max(p(static_cast<Eigen::Index>(i), y[i]), 1e-300));
  }
  return loss / static_cast<double>(y.size());
}

inline Matrix one_hot(std::span<const int> y, Eigen::Index n_classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(y.size()), n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) m(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return m;
}

// ---- logistic regression -------------------------------------------------

// Parameter layout: W (C x D, row-major) followed by b (C).
inline std::size_t logreg_param_count(Eigen::Index n_features, Eigen::Index n_classes) {
  return static_cast<std::size_t>(n_classes * (n_features + 1));
}

// Mean multiclass cross-entropy plus l2 * ||params||^2 (bias included).
inline double logreg_loss_and_gradient(const Vector& params, const Matrix& x, std::span<const int> y,
                                       Eigen::Index n_classes, double l2, Vector* grad) {
  const Eigen::Index d = x.cols();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> w(params.data(), n_classes, d);
  const Eigen::Map<const Vector> b(params.data() + n_classes * d, n_classes);
  double loss = l2 * params.squaredNorm();
  if (grad) *grad = 2.0 * l2 * params;
  const auto n = static_cast<Eigen::Index>(y.size());
  if (n == 0) return loss;
  Matrix p = x * w.transpose();
  p.rowwise() += b.transpose();
  softmax_rows(p);
  loss += mean_cross_entropy(p, y);
  if (grad) {
    const Matrix g = (p - one_hot(y, n_classes)) / static_cast<double>(n);
    Eigen::Map<RowMat> gw(grad->data(), n_classes, d);
    Eigen::Map<Vector> gb(grad->data() + n_classes * d, n_classes);
    gw += g.transpose() * x;
    gb += g.colwise().sum().transpose();
  }
  return loss;
}

inline Vector logreg_gradient(const Vector& params, const Matrix& x, std::span<const int> y, Eigen::Index n_classes,
                              double l2) {
  Vector g;
  logreg_loss_and_gradient(params, x, y, n_classes, l2, &g);
  return g;
}

// ---- multilayer perceptron -----------------------------------------------

enum class Activation { Tanh, Relu };

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw HyperparamError("activation must be 'tanh' or 'relu'");
}

struct MlpShape {
  Eigen::Index inputs = 0;
  Eigen::Index hidden = 0;
  Eigen::Index classes = 0;
  Activation activation = Activation::Tanh;

  // Layout: W1 (H x D row-major), b1 (H), W2 (C x H row-major), b2 (C).
  std::size_t param_count() const { return static_cast<std::size_t>(hidden * (inputs + 1) + classes * (hidden + 1)); }
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MlpView {
  Eigen::Map<const RowMat> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const RowMat> w2;
  Eigen::Map<const Vector> b2;

  MlpView(const Vector& p, const MlpShape& s)
      : w1(p.data(), s.hidden, s.inputs),
        b1(p.data() + s.hidden * s.inputs, s.hidden),
        w2(p.data() + s.hidden * (s.inputs + 1), s.classes, s.hidden),
        b2(p.data() + s.hidden * (s.inputs + 1) + s.classes * s.hidden, s.classes) {}
};

inline Matrix mlp_hidden_pre(const MlpView& v, const Matrix& x) {
  Matrix a = x * v.w1.transpose();
  a.rowwise() += v.b1.transpose();
  return a;
}

inline Matrix activate(const Matrix& a, Activation act) {
  if (act == Activation::Tanh) return a.array().tanh().matrix();
  return a.array().max(0.0).matrix();
}

}  // namespace detail

inline Matrix mlp_forward(const Vector& params, const MlpShape& shape, const Matrix& x) {
  const detail::MlpView v(params, shape);
  const Matrix h = detail::activate(detail::mlp_hidden_pre(v, x), shape.activation);
  Matrix z = h * v.w2.transpose();
  z.rowwise() += v.b2.transpose();
  softmax_rows(z);
  return z;
}

// Mean cross-entropy plus alpha * (||W1||^2 + ||W2||^2).
inline double mlp_loss_and_gradient(const Vector& params, const MlpShape& shape, const Matrix& x,
                                    std::span<const int> y, double alpha, Vector* grad) {
  const detail::MlpView v(params, shape);
  double loss = alpha * (v.w1.squaredNorm() + v.w2.squaredNorm());
  const auto n = static_cast<Eigen::Index>(y.size());
  const Matrix a = n ? detail::mlp_hidden_pre(v, x) : Matrix(0, shape.hidden);
  const Matrix h = detail::activate(a, shape.activation);
  Matrix p = h * v.w2.transpose();
  p.rowwise() += v.b2.transpose();
  softmax_rows(p);
  loss += mean_cross_entropy(p, y);
  if (!grad) return loss;
  grad->setZero(static_cast<Eigen::Index>(shape.param_count()));
  using detail::RowMat;
  Eigen::Map<RowMat> gw1(grad->data(), shape.hidden, shape.inputs);
  Eigen::Map<Vector> gb1(grad->data() + shape.hidden * shape.inputs, shape.hidden);
  Eigen::Map<RowMat> gw2(grad->data() + shape.hidden * (shape.inputs + 1), shape.classes, shape.hidden);
  Eigen::Map<Vector> gb2(grad->data() + shape.hidden * (shape.inputs + 1) + shape.classes * shape.hidden,
                         shape.classes);
  gw1 = 2.0 * alpha * v.w1;
  gw2 = 2.0 * alpha * v.w2;
  if (n == 0) return loss;
  const Matrix gz = (p - one_hot(y, shape.classes)) / static_cast<double>(n);
  gw2 += gz.transpose() * h;
  gb2 += gz.colwise().sum().transpose();
  Matrix dh = gz * v.w2;
  if (shape.activation == Activation::Tanh) {
    dh.array() *= (1.0 - h.array().square());
  } else {
    dh.array() *= (a.array() > 0.0).cast<double>();
  }
  gw1 += dh.transpose() * x;
  gb1 += dh.colwise().sum().transpose();
  return loss;
}

// Glorot-uniform weights, zero biases.
inline Vector mlp_init(const MlpShape& s, std::uint64_t seed) {
  Vector p = Vector::Zero(static_cast<Eigen::Index>(s.param_count()));
  Engine gen = make_engine(seed);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(s.inputs + s.hidden));
  const double lim2 = std::sqrt(6.0 / static_cast<double>(s.hidden + s.classes));
  for (Eigen::Index i = 0; i < s.hidden * s.inputs; ++i) p(i) = uniform(gen, -lim1, lim1);
  const Eigen::Index off = s.hidden * (s.inputs + 1);
  for (Eigen::Index i = 0; i < s.classes * s.hidden; ++i) p(off + i) = uniform(gen, -lim2, lim2);
  return p;
}

// ---- gradient boosted trees ----------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
};

struct TreeParams {
  int max_depth = 3;
  int min_samples_leaf = 1;
  int min_samples_split = 2;
  double l2_leaf_reg = 1.0;
  double learning_rate = 0.1;
};

namespace detail {

struct TreeBuilder {
  const Matrix& x;
  const std::vector<double>& g;
  const std::vector<double>& h;
  const TreeParams& p;
  RegressionTree tree;

  double leaf_value(const std::vector<std::size_t>& rows) const {
    double gs = 0.0, hs = 0.0;
    for (auto r : rows) {
      gs += g[r];
      hs += h[r];
    }
    return -p.learning_rate * gs / (hs + p.l2_leaf_reg);
  }

  int build(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    const std::size_t n = rows.size();
    const auto msl = static_cast<std::size_t>(std::max(1, p.min_samples_leaf));
    if (depth >= p.max_depth || n < static_cast<std::size_t>(std::max(2, p.min_samples_split)) || n < 2 * msl) {
      tree.nodes[static_cast<std::size_t>(id)].value = leaf_value(rows);
      return id;
    }
    double gt = 0.0, ht = 0.0;
    for (auto r : rows) {
      gt += g[r];
      ht += h[r];
    }
    const double lambda = p.l2_leaf_reg;
    const double parent = gt * gt / (ht + lambda);
    double best_gain = -std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order = rows;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = x(static_cast<Eigen::Index>(a), f), vb = x(static_cast<Eigen::Index>(b), f);
        return va != vb ? va < vb : a < b;
      });
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        gl += g[order[i]];
        hl += h[order[i]];
        const double v = x(static_cast<Eigen::Index>(order[i]), f);
        const double v_next = x(static_cast<Eigen::Index>(order[i + 1]), f);
        if (v == v_next) continue;
        if (i + 1 < msl || n - i - 1 < msl) continue;
        const double gr = gt - gl, hr = ht - hl;
        const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = v + (v_next - v) / 2.0;
        }
      }
    }
    if (best_feature < 0 || best_gain < -1e-12) {
      tree.nodes[static_cast<std::size_t>(id)].value = leaf_value(rows);
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto r : rows) {
      (x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// Exact-split second-order regression tree on (gradient, hessian) pairs.
inline RegressionTree fit_regression_tree(const Matrix& x, const std::vector<double>& g, const std::vector<double>& h,
                                          const std::vector<std::size_t>& rows, const TreeParams& params) {
  detail::TreeBuilder b{x, g, h, params, {}};
  b.build(rows, 0);
  return std::move(b.tree);
}

struct GbdtParams {
  std::vector<double> base_scores;                 // per class, logit of the clipped prior
  std::vector<std::vector<RegressionTree>> trees;  // per class, per round
  std::vector<std::vector<double>> round_losses;   // per class: binary log-loss before round 0 and after each round
};

struct LogregParams {
  Vector params;
};
struct MlpParams {
  MlpShape shape;
  Vector params;
};
struct KnnParams {
  int k = 5;
  Matrix x;
  std::vector<int> y;
};
struct ExternalParams {
  std::shared_ptr<const ProbMatrix> source;
};

struct FittedModel {
  LearnerSpec spec;
  std::vector<std::string> classes;
  std::vector<std::string> feature_columns;
  std::variant<LogregParams, MlpParams, GbdtParams, KnnParams, ExternalParams> params;
  std::vector<double> loss_history;  // logreg / mlp training loss per accepted step
};

namespace detail {

inline void check_training_inputs(const FeatureMatrix& x, std::span<const int> y, std::size_t n_classes) {
  if (x.rows() != y.size()) throw DimensionError("feature rows and label count differ");
  if (y.size() < 2) throw DegenerateDataError("need at least two training rows");
  std::set<int> distinct(y.begin(), y.end());
  for (int c : distinct) {
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes) throw LabelError("label index out of range");
  }
  if (distinct.size() < 2) throw DegenerateDataError("training labels contain a single class");
  require_finite(x.values, "training features");
}

inline GbdtParams fit_gbdt_params(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                                  const ParamMap& hp, std::uint64_t seed) {
  const auto n_estimators = as_int(hp.at("n_estimators"));
  TreeParams tp;
  tp.learning_rate = as_double(hp.at("learning_rate"));
  tp.max_depth = static_cast<int>(as_int(hp.at("max_depth")));
  tp.min_samples_leaf = static_cast<int>(as_int(hp.at("min_samples_leaf")));
  tp.min_samples_split = static_cast<int>(as_int(hp.at("min_samples_split")));
  tp.l2_leaf_reg = as_double(hp.at("l2_leaf_reg"));
  const double subsample = as_double(hp.at("subsample"));
  if (n_estimators < 0 || tp.learning_rate <= 0 || tp.max_depth < -1 || subsample <= 0 || subsample > 1 ||
      tp.l2_leaf_reg < 0) {
    throw HyperparamError("invalid gbdt hyperparameters");
  }
  // max_depth = -1 (as in some presets) means unlimited; cap at a depth that
  // cannot be reached with desk-scale data.
  if (tp.max_depth == -1) tp.max_depth = 64;
  const std::size_t n = y.size();
  GbdtParams out;
  out.trees.resize(n_classes);
  out.round_losses.resize(n_classes);
  std::vector<double> g(n), h(n), f(n);
  for (std::size_t k = 0; k < n_classes; ++k) {
    double count = 0.0;
    for (int c : y) count += c == static_cast<int>(k) ? 1.0 : 0.0;
    const double prior = std::clamp(count / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
    const double base = std::log(prior / (1.0 - prior));
    out.base_scores.push_back(base);
    std::fill(f.begin(), f.end(), base);
    auto log_loss = [&] {
      double l = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = y[i] == static_cast<int>(k) ? 1.0 : 0.0;
        // log(1 + e^{-z}) for positives, log(1 + e^{z}) for negatives
        const double z = t > 0.5 ? f[i] : -f[i];
        l += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
      }
      return l / static_cast<double>(n);
    };
    out.round_losses[k].push_back(log_loss());
    for (std::int64_t round = 0; round < n_estimators; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        const double pr = detail::sigmoid(f[i]);
        const double t = y[i] == static_cast<int>(k) ? 1.0 : 0.0;
        g[i] = pr - t;
        h[i] = std::max(pr * (1.0 - pr), 1e-12);
      }
      std::vector<std::size_t> rows(n);
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      if (subsample < 1.0) {
        Engine gen = make_engine(derive_seed(seed, k * 1000003ULL + static_cast<std::uint64_t>(round)));
        shuffle(std::span<std::size_t>(rows), gen);
        rows.resize(std::max<std::size_t>(1, static_cast<std::size_t>(subsample * static_cast<double>(n))));
        std::sort(rows.begin(), rows.end());
      }
      RegressionTree tree = fit_regression_tree(x, g, h, rows, tp);
      for (std::size_t i = 0; i < n; ++i) f[i] += tree.predict(x.row(static_cast<Eigen::Index>(i)));
      out.trees[k].push_back(std::move(tree));
      out.round_losses[k].push_back(log_loss());
    }
  }
  return out;
}

}  // namespace detail

inline FittedModel fit(const LearnerSpec& spec, const FeatureMatrix& x, std::span<const int> y,
                       const std::vector<std::string>& classes) {
  FittedModel model;
  model.spec = spec;
  model.classes = classes;
  model.feature_columns = x.columns;
  const ParamMap hp = spec.resolved();
  const auto n_classes = static_cast<Eigen::Index>(classes.size());
  if (spec.kind == LearnerKind::External) {
    if (!spec.external) throw HyperparamError("external learner requires a probability source");
    model.params = ExternalParams{std::make_shared<const ProbMatrix>(spec.external->aligned(spec.external->ids, classes))};
    return model;
  }
  detail::check_training_inputs(x, y, classes.size());
  switch (spec.kind) {
    case LearnerKind::Logreg: {
      const double l2 = as_double(hp.at("l2"));
      const Objective obj = [&](const Vector& p, Vector& g) {
        return logreg_loss_and_gradient(p, x.values, y, n_classes, l2, &g);
      };
      auto res = minimize_lbfgs(obj, Vector::Zero(static_cast<Eigen::Index>(logreg_param_count(x.values.cols(), n_classes))),
                                static_cast<int>(as_int(hp.at("max_iter"))), as_double(hp.at("tol")));
      model.loss_history = std::move(res.loss_history);
      model.params = LogregParams{std::move(res.x)};
      break;
    }
    case LearnerKind::Mlp: {
      MlpShape shape{x.values.cols(), static_cast<Eigen::Index>(as_int(hp.at("hidden"))), n_classes,
                     parse_activation(as_string(hp.at("activation")))};
      if (shape.hidden < 1) throw HyperparamError("mlp hidden size must be positive");
      const double alpha = as_double(hp.at("alpha"));
      const Objective obj = [&](const Vector& p, Vector& g) {
        return mlp_loss_and_gradient(p, shape, x.values, y, alpha, &g);
      };
      auto res = minimize_lbfgs(obj, mlp_init(shape, spec.seed), static_cast<int>(as_int(hp.at("max_iter"))),
                                as_double(hp.at("tol")));
      model.loss_history = std::move(res.loss_history);
      model.params = MlpParams{shape, std::move(res.x)};
      break;
    }
    case LearnerKind::Gbdt:
      model.params = detail::fit_gbdt_params(x.values, y, classes.size(), hp, spec.seed);
      break;
    case LearnerKind::Knn: {
      const auto k = as_int(hp.at("k"));
      if (k < 1) throw HyperparamError("knn k must be positive");
      model.params = KnnParams{static_cast<int>(k), x.values, std::vector<int>(y.begin(), y.end())};
      break;
    }
    case LearnerKind::External: break;
  }
  return model;
}

inline FittedModel fit_gbdt(const LearnerSpec& spec, const FeatureMatrix& x, std::span<const int> y,
                            const std::vector<std::string>& classes) {
  if (spec.kind != LearnerKind::Gbdt) throw HyperparamError("fit_gbdt requires a gbdt spec");
  return fit(spec, x, y, classes);
}

namespace detail {

inline Matrix knn_proba(const KnnParams& p, const Matrix& q, Eigen::Index n_classes) {
  const Eigen::Index n_train = p.x.rows();
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(p.k, n_train));
  Matrix out = Matrix::Zero(q.rows(), n_classes);
  std::vector<std::pair<double, std::size_t>> dist(static_cast<std::size_t>(n_train));
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    for (Eigen::Index t = 0; t < n_train; ++t) {
      dist[static_cast<std::size_t>(t)] = {(p.x.row(t) - q.row(r)).squaredNorm(), static_cast<std::size_t>(t)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t j = 0; j < k; ++j) out(r, p.y[dist[j].second]) += 1.0;
    out.row(r) /= static_cast<double>(k);
  }
  return out;
}

}  // namespace detail

// Row-stochastic class probabilities for every row of X.
inline ProbMatrix predict_proba(const FittedModel& model, const FeatureMatrix& x) {
  const auto n_classes = static_cast<Eigen::Index>(model.classes.size());
  if (const auto* ext = std::get_if<ExternalParams>(&model.params)) {
    return ext->source->aligned(x.ids, model.classes);
  }
  if (x.cols() != model.feature_columns.size()) {
    throw DimensionError("model expects " + std::to_string(model.feature_columns.size()) + " features, got " +
                         std::to_string(x.cols()));
  }
  require_finite(x.values, "prediction features");
  Matrix p;
  if (const auto* lr = std::get_if<LogregParams>(&model.params)) {
    using RowMat = detail::RowMat;
    const Eigen::Index d = x.values.cols();
    const Eigen::Map<const RowMat> w(lr->params.data(), n_classes, d);
    const Eigen::Map<const Vector> b(lr->params.data() + n_classes * d, n_classes);
    p = x.values * w.transpose();
    p.rowwise() += b.transpose();
    softmax_rows(p);
  } else if (const auto* mlp = std::get_if<MlpParams>(&model.params)) {
    p = mlp_forward(mlp->params, mlp->shape, x.values);
  } else if (const auto* gb = std::get_if<GbdtParams>(&model.params)) {
    p.resize(x.values.rows(), n_classes);
    for (Eigen::Index r = 0; r < x.values.rows(); ++r) {
      for (Eigen::Index k = 0; k < n_classes; ++k) {
        double z = gb->base_scores[static_cast<std::size_t>(k)];
        for (const auto& t : gb->trees[static_cast<std::size_t>(k)]) z += t.predict(x.values.row(r));
        p(r, k) = detail::sigmoid(z);
      }
      p.row(r) /= p.row(r).sum();
    }
  } else if (const auto* knn = std::get_if<KnnParams>(&model.params)) {
    p = detail::knn_proba(*knn, x.values, n_classes);
  }
  return ProbMatrix(x.ids, model.classes, std::move(p));
}

// ---- external predictions ------------------------------------------------

// CSV header "id,<class...>" with the same class set as class_list (any
// order). Rows within 1e-3 of summing to one are renormalized.
inline ProbMatrix load_external_predictions(const std::string& path, const std::vector<std::string>& class_list) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw SchemaError("prediction file is empty: " + path);
  const auto& header = rows.front().fields;
  if (header.empty() || header[0] != "id") throw SchemaError("prediction header must start with 'id'");
  std::vector<std::string> file_classes(header.begin() + 1, header.end());
  const std::set<std::string> want(class_list.begin(), class_list.end());
  const std::set<std::string> have(file_classes.begin(), file_classes.end());
  if (have.size() != file_classes.size()) throw SchemaError("duplicate class column in " + path);
  if (want != have) throw SchemaError("prediction classes in " + path + " do not match the class list");
  std::vector<Eigen::Index> col_of(file_classes.size());
  for (std::size_t j = 0; j < file_classes.size(); ++j) {
    col_of[j] = std::find(class_list.begin(), class_list.end(), file_classes[j]) - class_list.begin();
  }
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  Matrix values(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(class_list.size()));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != header.size()) throw ParseError(rows[r].line, "wrong column count");
    if (!seen.insert(f[0]).second) throw DuplicateIdError("duplicate id '" + f[0] + "' in " + path);
    ids.push_back(f[0]);
    double sum = 0.0;
    for (std::size_t j = 1; j < f.size(); ++j) {
      double v = 0.0;
      try {
        std::size_t pos = 0;
        v = std::stod(f[j], &pos);
        if (pos != f[j].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(rows[r].line, "non-numeric probability '" + f[j] + "'");
      }
      if (!std::isfinite(v) || v < 0.0) throw StochasticityError("negative or non-finite probability in row '" + f[0] + "'");
      values(static_cast<Eigen::Index>(r - 1), col_of[j - 1]) = v;
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-3 + 1e-12) {  // inclusive bound, tolerant of decimal rounding
      throw StochasticityError("row '" + f[0] + "' sums to " + csv::format_double(sum));
    }
    values.row(static_cast<Eigen::Index>(r - 1)) /= sum;
  }
  return ProbMatrix(std::move(ids), class_list, std::move(values));
}

inline void write_prob_matrix_csv(std::ostream& out, const ProbMatrix& p) {
  std::vector<std::string> header = {"id"};
  header.insert(header.end(), p.classes.begin(), p.classes.end());
  csv::write_row(out, header);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    std::vector<std::string> f = {p.ids[r]};
    for (Eigen::Index c = 0; c < p.values.cols(); ++c) {
      f.push_back(csv::format_double(p.values(static_cast<Eigen::Index>(r), c)));
    }
    csv::write_row(out, f);
  }
}

// ---- model artifacts -----------------------------------------------------

namespace detail {

inline nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json mat_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) rows.back()[static_cast<std::size_t>(c)] = m(r, c);
  }
  return rows;
}

inline Matrix mat_from(const nlohmann::json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = j[r][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline nlohmann::json tree_json(const RegressionTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  return nodes;
}

inline RegressionTree tree_from(const nlohmann::json& j) {
  RegressionTree t;
  for (const auto& n : j) {
    t.nodes.push_back({n[0].get<int>(), n[1].get<double>(), n[2].get<int>(), n[3].get<int>(), n[4].get<double>()});
  }
  return t;
}

}  // namespace detail

inline nlohmann::json to_json(const FittedModel& m) {
  nlohmann::json j = {{"format", "vaforge.model"},
                      {"version", 1},
                      {"kind", std::string(learner_kind_name(m.spec.kind))},
                      {"hyperparams", to_json(m.spec.hyperparams)},
                      {"seed", m.spec.seed},
                      {"classes", m.classes},
                      {"feature_columns", m.feature_columns}};
  nlohmann::json p;
  if (const auto* lr = std::get_if<LogregParams>(&m.params)) {
    p["params"] = detail::vec_json(lr->params);
  } else if (const auto* mlp = std::get_if<MlpParams>(&m.params)) {
    p["hidden"] = mlp->shape.hidden;
    p["activation"] = mlp->shape.activation == Activation::Tanh ? "tanh" : "relu";
    p["params"] = detail::vec_json(mlp->params);
  } else if (const auto* gb = std::get_if<GbdtParams>(&m.params)) {
    p["base_scores"] = gb->base_scores;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& per_class : gb->trees) {
      nlohmann::json ts = nlohmann::json::array();
      for (const auto& t : per_class) ts.push_back(detail::tree_json(t));
      trees.push_back(std::move(ts));
    }
    p["trees"] = std::move(trees);
  } else if (const auto* knn = std::get_if<KnnParams>(&m.params)) {
    p["k"] = knn->k;
    p["x"] = detail::mat_json(knn->x);
    p["y"] = knn->y;
  } else if (const auto* ext = std::get_if<ExternalParams>(&m.params)) {
    p["ids"] = ext->source->ids;
    p["values"] = detail::mat_json(ext->source->values);
  }
  j["learned"] = std::move(p);
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "vaforge.model" || j.value("version", 0) != 1) {
    throw SchemaError("not a vaforge.model v1 artifact");
  }
  FittedModel m;
  m.spec.kind = parse_learner_kind(j.at("kind").get<std::string>());
  m.spec.hyperparams = params_from_json(j.at("hyperparams"));
  m.spec.seed = j.at("seed").get<std::uint64_t>();
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.feature_columns = j.at("feature_columns").get<std::vector<std::string>>();
  const auto& p = j.at("learned");
  const auto n_classes = static_cast<Eigen::Index>(m.classes.size());
  const auto d = static_cast<Eigen::Index>(m.feature_columns.size());
  switch (m.spec.kind) {
    case LearnerKind::Logreg: m.params = LogregParams{detail::vec_from(p.at("params"))}; break;
    case LearnerKind::Mlp:
      m.params = MlpParams{MlpShape{d, p.at("hidden").get<Eigen::Index>(), n_classes,
                                    parse_activation(p.at("activation").get<std::string>())},
                           detail::vec_from(p.at("params"))};
      break;
    case LearnerKind::Gbdt: {
      GbdtParams g;
      g.base_scores = p.at("base_scores").get<std::vector<double>>();
      for (const auto& per_class : p.at("trees")) {
        g.trees.emplace_back();
        for (const auto& t : per_class) g.trees.back().push_back(detail::tree_from(t));
      }
      m.params = std::move(g);
      break;
    }
    case LearnerKind::Knn:
      m.params = KnnParams{p.at("k").get<int>(), detail::mat_from(p.at("x"), d), p.at("y").get<std::vector<int>>()};
      break;
    case LearnerKind::External: {
      auto ids = p.at("ids").get<std::vector<std::string>>();
      Matrix values = detail::mat_from(p.at("values"), n_classes);
      m.params = ExternalParams{std::make_shared<const ProbMatrix>(std::move(ids), m.classes, std::move(values))};
      break;
    }
  }
  return m;
}

}  // namespace vaforge
