#pragma once

// Narrative screening, preprocessing, n-gram TF-IDF and truncated SVD.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "vaforge/errors.hpp"
#include "vaforge/matrix.hpp"
#include "vaforge/rng.hpp"

namespace vaforge::text {

using Tokens = std::vector<std::string>;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline Tokens split_whitespace(std::string_view s) {
  Tokens out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

inline std::string join(const Tokens& toks, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

}  // namespace detail

// Narratives that consist only of one of these markers carry no content.
inline const std::vector<std::string>& invalid_narrative_markers() {
  static const std::vector<std::string> markers = {
      "nothing", "done", "folder empty", "photo cannot be read", "unclear photo", "no preview available",
      "va number does not match"};
  return markers;
}

// Lowercase, punctuation to spaces, whitespace collapsed and trimmed.
inline std::string normalize_for_matching(std::string_view text) {
  std::string lowered = detail::ascii_lower(text);
  for (char& c : lowered) {
    if (detail::is_ascii_punct(c)) c = ' ';
  }
  const auto toks = detail::split_whitespace(lowered);
  return detail::join(toks, 0, toks.size());
}

// True for empty narratives and for the known placeholder markers.
inline bool is_invalid_narrative(std::string_view text) {
  const std::string norm = normalize_for_matching(text);
  if (norm.empty()) return true;
  const auto& markers = invalid_narrative_markers();
  return std::find(markers.begin(), markers.end(), norm) != markers.end();
}

inline const std::vector<std::string>& default_stopwords() {
  // English function words. Negations (no, not, nor) are kept out on
  // purpose: they change clinical meaning.
  static const std::vector<std::string> words = {
      "a",       "about",   "above",   "after",    "again",   "against", "all",     "am",      "an",
      "and",     "any",     "are",     "as",       "at",      "be",      "because", "been",    "before",
      "being",   "below",   "between", "both",     "but",     "by",      "can",     "could",   "did",
      "do",      "does",    "doing",   "down",     "during",  "each",    "few",     "for",     "from",
      "further", "had",     "has",     "have",     "having",  "he",      "her",     "here",    "hers",
      "herself", "him",     "himself", "his",      "how",     "i",       "if",      "in",      "into",
      "is",      "it",      "its",     "itself",   "just",    "me",      "more",    "most",    "my",
      "myself",  "now",     "of",      "off",      "on",      "once",    "only",    "or",      "other",
      "our",     "ours",    "ourselves", "out",    "over",    "own",     "same",    "she",     "should",
      "so",      "some",    "such",    "than",     "that",    "the",     "their",   "theirs",  "them",
      "themselves", "then", "there",   "these",    "they",    "this",    "those",   "through", "to",
      "too",     "under",   "until",   "up",       "very",    "was",     "we",      "were",    "what",
      "when",    "where",   "which",   "while",    "who",     "whom",    "why",     "will",    "with",
      "would",   "you",     "your",    "yours",    "yourself", "yourselves", "also", "s",       "t",
      "said",    "says",    "upon",    "via",      "within",  "without", "onto",    "among",   "amongst",
      "however", "therefore", "thus",  "hence",    "whose",   "whether", "yet",     "ever",    "every",
      "either",  "neither", "another", "may",      "might",   "must",    "shall",   "got",     "get"};
  return words;
}

inline const std::map<std::string, std::string>& default_lemma_table() {
  // Irregular and common clinical inflections. Entries mapping a word to
  // itself shield it from the suffix fallback.
  static const std::map<std::string, std::string> table = {
      {"admitted", "admit"},       {"admitting", "admit"},     {"aids", "aids"},
      {"anything", "anything"},    {"ate", "eat"},             {"bled", "bleed"},
      {"bleeding", "bleed"},       {"bleeds", "bleed"},        {"breathed", "breathe"},
      {"breathing", "breathe"},    {"burned", "burn"},         {"burnt", "burn"},
      {"children", "child"},       {"collapsed", "collapse"},  {"complained", "complain"},
      {"complaining", "complain"}, {"convulsing", "convulse"}, {"coughed", "cough"},
      {"coughing", "cough"},       {"coughs", "cough"},        {"diabetes", "diabetes"},
      {"diagnosed", "diagnose"},   {"died", "die"},            {"dies", "die"},
      {"drank", "drink"},          {"dying", "die"},           {"evening", "evening"},
      {"everything", "everything"}, {"fainted", "faint"},      {"fainting", "faint"},
      {"feet", "foot"},            {"fell", "fall"},           {"felt", "feel"},
      {"gave", "give"},            {"given", "give"},          {"herpes", "herpes"},
      {"hospitalised", "hospitalise"}, {"hospitalized", "hospitalize"}, {"injured", "injure"},
      {"injuries", "injury"},      {"lost", "lose"},           {"measles", "measles"},
      {"men", "man"},              {"morning", "morning"},     {"mumps", "mumps"},
      {"nothing", "nothing"},      {"passed", "pass"},         {"rabies", "rabies"},
      {"rushed", "rush"},          {"saw", "see"},             {"scabies", "scabies"},
      {"seen", "see"},             {"shot", "shoot"},          {"something", "something"},
      {"stabbed", "stab"},         {"started", "start"},       {"stopped", "stop"},
      {"sweated", "sweat"},        {"swollen", "swell"},       {"swelled", "swell"},
      {"taken", "take"},           {"teeth", "tooth"},         {"tested", "test"},
      {"took", "take"},            {"treated", "treat"},       {"vomited", "vomit"},
      {"vomiting", "vomit"},       {"went", "go"},             {"women", "woman"},
      {"worsened", "worsen"},      {"wounded", "wound"},       {"diarrhoea", "diarrhoea"},
      {"tuberculosis", "tuberculosis"}, {"pneumonia", "pneumonia"}, {"always", "always"},
      {"perhaps", "perhaps"},      {"sometimes", "sometimes"}, {"various", "various"},
      {"previous", "previous"},    {"serious", "serious"},     {"nervous", "nervous"},
      {"status", "status"},        {"virus", "virus"},         {"abscess", "abscess"}};
  return table;
}

inline std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open word list: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto toks = detail::split_whitespace(line);
    if (toks.empty() || toks.front().starts_with('#')) continue;
    out.push_back(toks.front());
  }
  return out;
}

// Two whitespace-separated columns per line: inflected lemma.
inline std::map<std::string, std::string> load_lemma_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open lemma table: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto toks = detail::split_whitespace(line);
    if (toks.empty() || toks.front().starts_with('#')) continue;
    if (toks.size() != 2) throw SchemaError("lemma table line must have two columns: " + line);
    out[toks[0]] = toks[1];
  }
  return out;
}

struct PreprocessConfig {
  bool lowercase = true;
  bool strip_punctuation = true;
  bool collapse_whitespace = true;
  bool remove_stopwords = true;
  bool lemmatize = true;
  std::vector<std::string> stopword_list = default_stopwords();
  std::map<std::string, std::string> lemma_table = default_lemma_table();

  static PreprocessConfig none() {
    PreprocessConfig c;
    c.lowercase = c.strip_punctuation = c.collapse_whitespace = c.remove_stopwords = c.lemmatize = false;
    return c;
  }

  void validate() const {
    if (remove_stopwords && stopword_list.empty()) {
      throw SchemaError("stopword removal enabled with an empty stopword list");
    }
  }
};

namespace detail {

inline bool has_vowel(std::string_view s) { return s.find_first_of("aeiouy") != std::string_view::npos; }

inline bool ends_with(std::string_view s, std::string_view suf) {
  return s.size() >= suf.size() && s.substr(s.size() - suf.size()) == suf;
}

// One step of the conservative suffix fallback; returns the input when no
// rule applies.
inline std::string suffix_step(const std::string& w) {
  if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  if (ends_with(w, "s") && w.size() > 3 && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is")) {
    return w.substr(0, w.size() - 1);
  }
  if (ends_with(w, "ing") && w.size() >= 7) {
    std::string stem = w.substr(0, w.size() - 3);
    if (!has_vowel(stem)) return w;
    const std::size_t n = stem.size();
    if (n >= 2 && stem[n - 1] == stem[n - 2] && std::string_view("aeioulsz").find(stem[n - 1]) == std::string_view::npos) {
      stem.pop_back();
    }
    return stem;
  }
  return w;
}

}  // namespace detail

// Table lookup first, then the suffix fallback, iterated to a fixed point.
inline std::string lemmatize_word(const std::string& word, const std::map<std::string, std::string>& table) {
  std::string cur = word;
  for (int iter = 0; iter < 8; ++iter) {
    std::string next;
    if (const auto it = table.find(cur); it != table.end()) {
      next = it->second;
    } else {
      if (cur.empty() || !std::all_of(cur.begin(), cur.end(), [](char c) { return c >= 'a' && c <= 'z'; })) return cur;
      next = detail::suffix_step(cur);
    }
    if (next == cur) return cur;
    cur = std::move(next);
  }
  return cur;
}

// Steps run in a fixed order: lowercase, punctuation strip, whitespace
// collapse, whitespace tokenization, stopword removal, lemmatization. A
// lemma that is itself a stopword is not substituted, which keeps the
// pipeline idempotent.
inline Tokens preprocess(std::string_view text, const PreprocessConfig& cfg) {
  cfg.validate();
  std::string s = cfg.lowercase ? detail::ascii_lower(text) : std::string(text);
  if (cfg.strip_punctuation) {
    for (char& c : s) {
      if (detail::is_ascii_punct(c)) c = ' ';
    }
  }
  Tokens toks = detail::split_whitespace(s);
  std::unordered_set<std::string> stop;
  if (cfg.remove_stopwords) {
    stop.insert(cfg.stopword_list.begin(), cfg.stopword_list.end());
    std::erase_if(toks, [&](const std::string& t) { return stop.contains(t); });
  }
  if (cfg.lemmatize) {
    for (auto& t : toks) {
      std::string lemma = lemmatize_word(t, cfg.lemma_table);
      if (!lemma.empty() && !stop.contains(lemma)) t = std::move(lemma);
    }
  }
  return toks;
}

inline std::string join_tokens(const Tokens& toks) { return detail::join(toks, 0, toks.size()); }

// All n-grams with lo <= n <= hi, joined by single spaces.
inline std::vector<std::string> ngrams(const Tokens& toks, int lo, int hi) {
  std::vector<std::string> out;
  for (int n = lo; n <= hi; ++n) {
    const auto N = static_cast<std::size_t>(n);
    if (N == 0 || toks.size() < N) continue;
    for (std::size_t i = 0; i + N <= toks.size(); ++i) out.push_back(detail::join(toks, i, i + N));
  }
  return out;
}

using SparseVector = std::vector<std::pair<int, double>>;  // (column, value), ascending columns

// Smoothed idf, raw term counts, L2-normalized rows.
struct TfidfModel {
  std::map<std::string, int> vocabulary;
  std::vector<std::string> terms;  // column -> n-gram
  std::vector<int> doc_freq;       // per column
  std::vector<double> idf;         // per column
  int n_docs = 0;
  int ngram_lo = 1;
  int ngram_hi = 2;
  int min_df = 2;
  std::optional<int> max_features;

  std::size_t size() const noexcept { return terms.size(); }

  SparseVector transform(const Tokens& doc) const {
    std::map<int, double> counts;
    for (const auto& g : ngrams(doc, ngram_lo, ngram_hi)) {
      if (const auto it = vocabulary.find(g); it != vocabulary.end()) counts[it->second] += 1.0;
    }
    SparseVector out;
    out.reserve(counts.size());
    double norm2 = 0.0;
    for (const auto& [col, tf] : counts) {
      const double v = tf * idf[static_cast<std::size_t>(col)];
      out.emplace_back(col, v);
      norm2 += v * v;
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& e : out) e.second *= inv;
    }
    return out;
  }

  SparseRowMatrix transform_corpus(const std::vector<Tokens>& docs) const {
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t r = 0; r < docs.size(); ++r) {
      for (const auto& [c, v] : transform(docs[r])) trips.emplace_back(static_cast<int>(r), c, v);
    }
    SparseRowMatrix m(static_cast<Eigen::Index>(docs.size()), static_cast<Eigen::Index>(terms.size()));
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  }
};

inline double smoothed_idf(int n_docs, int df) {
  return std::log((1.0 + n_docs) / (1.0 + df)) + 1.0;
}

// Vocabulary keeps n-grams with document frequency >= min_df; when
// max_features is set the highest-df n-grams survive (ties by n-gram).
// Columns are numbered in lexicographic n-gram order.
inline TfidfModel fit_tfidf(const std::vector<Tokens>& corpus, int ngram_lo = 1, int ngram_hi = 2, int min_df = 2,
                            std::optional<int> max_features = std::nullopt) {
  if (corpus.empty()) throw EmptyVocabularyError("cannot fit TF-IDF on an empty corpus");
  if (ngram_lo < 1 || ngram_hi < ngram_lo) throw DimensionError("invalid n-gram range");
  std::map<std::string, int> df;
  for (const auto& doc : corpus) {
    auto grams = ngrams(doc, ngram_lo, ngram_hi);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& g : grams) ++df[g];
  }
  std::vector<std::pair<std::string, int>> kept;
  for (auto& [g, n] : df) {
    if (n >= min_df) kept.emplace_back(g, n);
  }
  if (kept.empty()) throw EmptyVocabularyError("no n-gram reaches min_df=" + std::to_string(min_df));
  if (max_features && static_cast<std::size_t>(*max_features) < kept.size()) {
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    kept.resize(static_cast<std::size_t>(std::max(0, *max_features)));
    std::sort(kept.begin(), kept.end());
    if (kept.empty()) throw EmptyVocabularyError("max_features=0 leaves no vocabulary");
  }
  TfidfModel m;
  m.n_docs = static_cast<int>(corpus.size());
  m.ngram_lo = ngram_lo;
  m.ngram_hi = ngram_hi;
  m.min_df = min_df;
  m.max_features = max_features;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    m.vocabulary.emplace(kept[i].first, static_cast<int>(i));
    m.terms.push_back(kept[i].first);
    m.doc_freq.push_back(kept[i].second);
    m.idf.push_back(smoothed_idf(m.n_docs, kept[i].second));
  }
  return m;
}

struct SvdModel {
  Matrix components;  // k x D, orthonormal rows
  Vector singular_values;
  int k = 0;

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(components.cols()); }
};

struct SvdOptions {
  std::uint64_t seed = 0;
  int power_iterations = 4;
  int oversampling = 10;
  // Inputs with at most this many columns use the exact dense SVD.
  Eigen::Index exact_max_columns = 512;
  bool force_randomized = false;
};

namespace detail {

inline Matrix orthonormal_basis(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), std::min(y.rows(), y.cols()));
}

// Flip each component so its largest-magnitude entry is positive.
inline void fix_signs(Matrix& comps) {
  for (Eigen::Index r = 0; r < comps.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < comps.cols(); ++c) {
      if (std::abs(comps(r, c)) > std::abs(comps(r, best))) best = c;
    }
    if (comps(r, best) < 0) comps.row(r) *= -1.0;
  }
}

template <typename Mat>
SvdModel exact_svd(const Mat& x, int k) {
  const Matrix dense = Matrix(x);
  Eigen::BDCSVD<Matrix> svd(dense, Eigen::ComputeThinV);
  SvdModel m;
  m.k = k;
  m.singular_values = svd.singularValues().head(k);
  m.components = svd.matrixV().leftCols(k).transpose();
  return m;
}

// Randomized range finder with power iterations followed by an exact SVD
// of the small projected matrix.
template <typename Mat>
SvdModel randomized_svd(const Mat& x, int k, const SvdOptions& opt) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index l = std::min<Eigen::Index>(k + opt.oversampling, std::min(n, d));
  Engine gen = make_engine(opt.seed);
  Matrix omega(d, l);
  for (Eigen::Index j = 0; j < l; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) omega(i, j) = standard_normal(gen);
  }
  Matrix q = orthonormal_basis(Matrix(x * omega));
  for (int it = 0; it < opt.power_iterations; ++it) {
    const Matrix z = orthonormal_basis(Matrix(x.transpose() * q));
    q = orthonormal_basis(Matrix(x * z));
  }
  const Matrix b = Matrix(q.transpose() * x);  // l x d
  Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinV);
  SvdModel m;
  m.k = k;
  m.singular_values = svd.singularValues().head(k);
  m.components = svd.matrixV().leftCols(k).transpose();
  return m;
}

}  // namespace detail

// Rank-k truncated SVD; components are the top-k right singular vectors.
template <typename Mat>
SvdModel fit_svd(const Mat& x, int k, const SvdOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (k < 1 || k > std::min(n, d)) {
    throw DimensionError("svd rank k=" + std::to_string(k) + " must be in [1, min(N, D)] = [1, " +
                         std::to_string(std::min(n, d)) + "]");
  }
  SvdModel m;
  if (!opt.force_randomized && (d <= opt.exact_max_columns || k + opt.oversampling >= std::min(n, d))) {
    m = detail::exact_svd(x, k);
  } else {
    m = detail::randomized_svd(x, k, opt);
  }
  detail::fix_signs(m.components);
  return m;
}

inline SvdModel fit_svd(const FeatureMatrix& x, int k, const SvdOptions& opt = {}) {
  require_finite(x.values, "svd input");
  return fit_svd(x.values, k, opt);
}

template <typename Mat>
Matrix project_svd(const SvdModel& model, const Mat& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim()) {
    throw DimensionError("svd input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(model.input_dim()));
  }
  return Matrix(x * model.components.transpose());
}

inline std::vector<std::string> svd_column_names(int k, const std::string& prefix = "svd_") {
  std::vector<std::string> names;
  for (int i = 0; i < k; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

inline FeatureMatrix transform_svd(const SvdModel& model, const FeatureMatrix& x) {
  return FeatureMatrix(x.ids, svd_column_names(model.k), project_svd(model, x.values));
}

inline FeatureMatrix transform_svd(const SvdModel& model, const SparseRowMatrix& x, std::vector<std::string> ids) {
  return FeatureMatrix(std::move(ids), svd_column_names(model.k), project_svd(model, x));
}

// Frobenius norm of X - X V^T V.
template <typename Mat>
double reconstruction_error(const SvdModel& model, const Mat& x) {
  const Matrix dense = Matrix(x);
  const Matrix proj = dense * model.components.transpose() * model.components;
  return (dense - proj).norm();
}

// Highest-weighted n-grams per component, by |weight|.
inline std::vector<std::vector<std::pair<std::string, double>>> top_ngrams_per_component(const TfidfModel& tfidf,
                                                                                         const SvdModel& svd,
                                                                                         std::size_t n) {
  std::vector<std::vector<std::pair<std::string, double>>> out;
  for (Eigen::Index r = 0; r < svd.components.rows(); ++r) {
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(svd.components.cols()));
    for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<Eigen::Index>(i);
    const std::size_t take = std::min(n, cols.size());
    std::partial_sort(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(take), cols.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        const double wa = std::abs(svd.components(r, a)), wb = std::abs(svd.components(r, b));
                        return wa != wb ? wa > wb : a < b;
                      });
    std::vector<std::pair<std::string, double>> row;
    for (std::size_t i = 0; i < take; ++i) {
      row.emplace_back(tfidf.terms.at(static_cast<std::size_t>(cols[i])), svd.components(r, cols[i]));
    }
    out.push_back(std::move(row));
  }
  return out;
}

// ---- JSON artifacts ------------------------------------------------------

inline constexpr int kArtifactVersion = 1;

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw SchemaError("ragged matrix in artifact");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline void check_artifact(const nlohmann::json& j, const char* kind) {
  if (j.value("format", "") != kind) throw SchemaError(std::string("artifact is not a ") + kind);
  if (j.value("version", 0) != kArtifactVersion) throw SchemaError("unsupported artifact version");
}

inline nlohmann::json to_json(const TfidfModel& m) {
  return {{"format", "vaforge.tfidf"},
          {"version", kArtifactVersion},
          {"terms", m.terms},
          {"doc_freq", m.doc_freq},
          {"n_docs", m.n_docs},
          {"ngram_range", {m.ngram_lo, m.ngram_hi}},
          {"min_df", m.min_df},
          {"max_features", m.max_features ? nlohmann::json(*m.max_features) : nlohmann::json()}};
}

inline TfidfModel tfidf_from_json(const nlohmann::json& j) {
  check_artifact(j, "vaforge.tfidf");
  TfidfModel m;
  m.terms = j.at("terms").get<std::vector<std::string>>();
  m.doc_freq = j.at("doc_freq").get<std::vector<int>>();
  m.n_docs = j.at("n_docs").get<int>();
  m.ngram_lo = j.at("ngram_range").at(0).get<int>();
  m.ngram_hi = j.at("ngram_range").at(1).get<int>();
  m.min_df = j.at("min_df").get<int>();
  if (!j.at("max_features").is_null()) m.max_features = j.at("max_features").get<int>();
  if (m.terms.size() != m.doc_freq.size()) throw SchemaError("tfidf artifact terms/doc_freq length mismatch");
  for (std::size_t i = 0; i < m.terms.size(); ++i) {
    m.vocabulary.emplace(m.terms[i], static_cast<int>(i));
    m.idf.push_back(smoothed_idf(m.n_docs, m.doc_freq[i]));
  }
  return m;
}

inline nlohmann::json to_json(const SvdModel& m) {
  std::vector<double> sv(m.singular_values.data(), m.singular_values.data() + m.singular_values.size());
  return {{"format", "vaforge.svd"},
          {"version", kArtifactVersion},
          {"k", m.k},
          {"singular_values", sv},
          {"components", matrix_to_json(m.components)}};
}

inline SvdModel svd_from_json(const nlohmann::json& j) {
  check_artifact(j, "vaforge.svd");
  SvdModel m;
  m.k = j.at("k").get<int>();
  const auto sv = j.at("singular_values").get<std::vector<double>>();
  m.singular_values = Eigen::Map<const Vector>(sv.data(), static_cast<Eigen::Index>(sv.size()));
  m.components = matrix_from_json(j.at("components"));
  if (m.components.rows() != m.k) throw SchemaError("svd artifact component count mismatch");
  return m;
}

// ---- fitted narrative featurizer -----------------------------------------

struct TextPipelineConfig {
  PreprocessConfig preprocess;
  int ngram_lo = 1;
  int ngram_hi = 2;
  int min_df = 2;
  std::optional<int> max_features;
  int svd_k = 100;  // 0 keeps the TF-IDF columns
  SvdOptions svd;
};

// Preprocessing, TF-IDF and (optionally) SVD fitted on one corpus. The SVD
// rank is capped at min(N, D) of the fitting corpus.
struct TextFeaturizer {
  PreprocessConfig preprocess_config;
  TfidfModel tfidf;
  std::optional<SvdModel> svd;

  FeatureMatrix transform(const std::vector<std::string>& texts, std::vector<std::string> ids) const {
    std::vector<Tokens> docs;
    docs.reserve(texts.size());
    for (const auto& t : texts) docs.push_back(preprocess(t, preprocess_config));
    const SparseRowMatrix x = tfidf.transform_corpus(docs);
    if (svd) return transform_svd(*svd, x, std::move(ids));
    std::vector<std::string> cols;
    cols.reserve(tfidf.terms.size());
    for (const auto& t : tfidf.terms) cols.push_back("tfidf:" + t);
    return FeatureMatrix(std::move(ids), std::move(cols), Matrix(x));
  }
};

inline TextFeaturizer fit_text_featurizer(const std::vector<std::string>& texts, const TextPipelineConfig& cfg) {
  TextFeaturizer f;
  f.preprocess_config = cfg.preprocess;
  std::vector<Tokens> docs;
  docs.reserve(texts.size());
  for (const auto& t : texts) docs.push_back(preprocess(t, cfg.preprocess));
  f.tfidf = fit_tfidf(docs, cfg.ngram_lo, cfg.ngram_hi, cfg.min_df, cfg.max_features);
  if (cfg.svd_k > 0) {
    const SparseRowMatrix x = f.tfidf.transform_corpus(docs);
    const int k = static_cast<int>(std::min<Eigen::Index>(cfg.svd_k, std::min(x.rows(), x.cols())));
    f.svd = fit_svd(x, k, cfg.svd);
  }
  return f;
}

}  // namespace vaforge::text
