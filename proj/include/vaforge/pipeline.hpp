#pragma once

// Config-driven end-to-end commands behind the vaforge executable. Every
// command writes deterministic JSON/CSV artifacts: same config and seed give
// byte-identical files regardless of the worker count.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vaforge/core_data.hpp"
#include "vaforge/errors.hpp"
#include "vaforge/fusion.hpp"
#include "vaforge/hpo.hpp"
#include "vaforge/learners.hpp"
#include "vaforge/metrics.hpp"
#include "vaforge/parallel.hpp"
#include "vaforge/sufficiency.hpp"
#include "vaforge/tabular_text.hpp"
#include "vaforge/text_features.hpp"

namespace vaforge::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

// ---- configuration -------------------------------------------------------

enum class Modality { Question, Narrative, AllText, Features, External };

inline std::string modality_name(Modality m) {
  switch (m) {
    case Modality::Question: return "question";
    case Modality::Narrative: return "narrative";
    case Modality::AllText: return "all_text";
    case Modality::Features: return "features";
    case Modality::External: return "external";
  }
  return "question";
}

inline Modality parse_modality(const std::string& s) {
  for (auto m : {Modality::Question, Modality::Narrative, Modality::AllText, Modality::Features, Modality::External}) {
    if (modality_name(m) == s) return m;
  }
  throw ConfigError("unknown modality '" + s + "'");
}

struct ModelConfig {
  std::string name;
  Modality modality = Modality::Question;
  LearnerKind kind = LearnerKind::Logreg;
  ParamMap hyperparams;  // fully resolved (defaults included)
  std::uint64_t seed = 0;
  std::string predictions;  // external only
};

struct FusionConfig {
  std::string strategy = "none";  // none | soft_vote | stacking
  int folds = 5;
  LearnerKind meta_kind = LearnerKind::Knn;
  ParamMap meta_hyperparams;
  std::uint64_t seed = 0;
};

struct HpoConfig {
  std::string model;
  int n_trials = 30;
  json space = json::object();
  int folds = 5;
  MedianPruner pruner;
  Direction direction = Direction::Maximize;
  int n_startup = 10;
  int batch_size = 1;
};

struct SufficiencyCommandConfig {
  int svd_k = 450;
  LearnerKind learner = LearnerKind::Logreg;
  ParamMap hyperparams;
  int importance_rows = 50;
  int importance_samples = 32;
};

struct RunConfig {
  std::string data;
  Format format = Format::Jsonl;
  std::string taxonomy;  // empty: built-in level-3 grouping
  LabelLevel level = LabelLevel::L3;
  std::string templates;  // empty: starter table
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  double test_fraction = 0.2;
  text::TextPipelineConfig text;
  std::string stopwords;
  std::string lemmas;
  std::vector<ModelConfig> models;
  FusionConfig fusion;
  HpoConfig hpo;
  std::vector<double> fractions;
  SufficiencyCommandConfig sufficiency;
  // Not part of the manifest.
  int workers = 1;
  std::string out = "vaforge_out";
};

namespace detail {

inline std::string resolve_path(const std::string& p, const fs::path& base) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal().string();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
}

inline ParamMap resolved_hyperparams(LearnerKind kind, const ParamMap& given) {
  return LearnerSpec{kind, given, 0, nullptr}.resolved();
}

inline std::vector<double> default_fractions() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}; }

}  // namespace detail

// Relative paths are resolved against base_dir. seed_override replaces the
// top-level seed and every seed derived from it that the file leaves
// unspecified.
inline RunConfig parse_config(const json& j, const fs::path& base_dir, std::optional<std::uint64_t> seed_override = {}) {
  using detail::get_or;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    RunConfig c;
    c.seed = seed_override ? *seed_override : get_or<std::uint64_t>(j, "seed", 0);
    const json data = j.value("data", json::object());
    c.data = detail::resolve_path(get_or<std::string>(data, "path", ""), base_dir);
    if (c.data.empty()) throw ConfigError("config is missing data.path");
    c.format = data.contains("format") ? parse_format(data.at("format").get<std::string>()).value_or(Format::Jsonl)
                                       : format_from_path(c.data);
    c.taxonomy = detail::resolve_path(get_or<std::string>(data, "taxonomy", ""), base_dir);
    c.templates = detail::resolve_path(get_or<std::string>(data, "templates", ""), base_dir);
    const auto level = parse_label_level(get_or<std::string>(data, "label_level", "level3"));
    if (!level) throw ConfigError("label_level must be level1, level2 or level3");
    c.level = *level;

    const json split = j.value("split", json::object());
    c.split_seed = seed_override && !split.contains("seed") ? c.seed : get_or<std::uint64_t>(split, "seed", c.seed);
    c.test_fraction = get_or<double>(split, "test_fraction", 0.2);

    const json t = j.value("text", json::object());
    auto& pc = c.text.preprocess;
    pc.lowercase = get_or<bool>(t, "lowercase", true);
    pc.strip_punctuation = get_or<bool>(t, "strip_punctuation", true);
    pc.collapse_whitespace = get_or<bool>(t, "collapse_whitespace", true);
    pc.remove_stopwords = get_or<bool>(t, "remove_stopwords", true);
    pc.lemmatize = get_or<bool>(t, "lemmatize", true);
    c.stopwords = detail::resolve_path(get_or<std::string>(t, "stopwords", ""), base_dir);
    c.lemmas = detail::resolve_path(get_or<std::string>(t, "lemmas", ""), base_dir);
    if (!c.stopwords.empty()) pc.stopword_list = text::load_word_list(c.stopwords);
    if (!c.lemmas.empty()) pc.lemma_table = text::load_lemma_table(c.lemmas);
    const auto ngram = get_or<std::vector<int>>(t, "ngram_range", {1, 2});
    if (ngram.size() != 2) throw ConfigError("text.ngram_range must have two entries");
    c.text.ngram_lo = ngram[0];
    c.text.ngram_hi = ngram[1];
    c.text.min_df = get_or<int>(t, "min_df", 2);
    if (t.contains("max_features") && !t.at("max_features").is_null()) c.text.max_features = t.at("max_features").get<int>();
    c.text.svd_k = get_or<int>(t, "svd_k", 100);
    c.text.svd.seed = get_or<std::uint64_t>(t, "svd_seed", c.seed);

    std::set<std::string> names;
    for (const auto& m : j.value("models", json::array())) {
      ModelConfig mc;
      mc.name = m.at("name").get<std::string>();
      if (!names.insert(mc.name).second) throw ConfigError("duplicate model name '" + mc.name + "'");
      mc.modality = parse_modality(m.at("modality").get<std::string>());
      if (mc.modality == Modality::External) {
        mc.kind = LearnerKind::External;
        mc.predictions = detail::resolve_path(m.at("predictions").get<std::string>(), base_dir);
      } else {
        mc.kind = parse_learner_kind(get_or<std::string>(m, "learner", "logreg"));
        if (mc.kind == LearnerKind::External) throw ConfigError("model '" + mc.name + "': use modality external");
      }
      mc.hyperparams = detail::resolved_hyperparams(mc.kind, params_from_json(m.value("hyperparams", json::object())));
      mc.seed = seed_override && !m.contains("seed") ? c.seed : get_or<std::uint64_t>(m, "seed", c.seed);
      c.models.push_back(std::move(mc));
    }

    const json f = j.value("fusion", json::object());
    c.fusion.strategy = get_or<std::string>(f, "strategy", c.models.size() > 1 ? "soft_vote" : "none");
    if (c.fusion.strategy != "none" && c.fusion.strategy != "soft_vote" && c.fusion.strategy != "stacking") {
      throw ConfigError("fusion.strategy must be none, soft_vote or stacking");
    }
    c.fusion.folds = get_or<int>(f, "folds", 5);
    const json meta = f.value("meta", json::object());
    c.fusion.meta_kind = parse_learner_kind(get_or<std::string>(meta, "learner", "knn"));
    c.fusion.meta_hyperparams =
        detail::resolved_hyperparams(c.fusion.meta_kind, params_from_json(meta.value("hyperparams", json::object())));
    c.fusion.seed = seed_override && !f.contains("seed") ? c.seed : get_or<std::uint64_t>(f, "seed", c.seed);

    const json h = j.value("hpo", json::object());
    c.hpo.model = get_or<std::string>(h, "model", c.models.empty() ? "" : c.models.front().name);
    c.hpo.n_trials = get_or<int>(h, "n_trials", 30);
    c.hpo.space = h.value("space", json::object());
    c.hpo.folds = get_or<int>(h, "folds", 5);
    const json pr = h.value("pruner", json::object());
    c.hpo.pruner.warmup_steps = get_or<int>(pr, "warmup_steps", 1);
    c.hpo.pruner.startup_trials = get_or<int>(pr, "startup_trials", 5);
    c.hpo.direction = get_or<std::string>(h, "direction", "maximize") == "minimize" ? Direction::Minimize
                                                                                     : Direction::Maximize;
    c.hpo.n_startup = get_or<int>(h, "n_startup", 10);
    c.hpo.batch_size = get_or<int>(h, "batch_size", 1);

    c.fractions = j.contains("sensitivity") ? get_or<std::vector<double>>(j.at("sensitivity"), "fractions",
                                                                         detail::default_fractions())
                                            : detail::default_fractions();
    const json s = j.value("sufficiency", json::object());
    c.sufficiency.svd_k = get_or<int>(s, "svd_k", 450);
    c.sufficiency.learner = parse_learner_kind(get_or<std::string>(s, "learner", "logreg"));
    c.sufficiency.hyperparams =
        detail::resolved_hyperparams(c.sufficiency.learner, params_from_json(s.value("hyperparams", json::object())));
    c.sufficiency.importance_rows = get_or<int>(s, "importance_rows", 50);
    c.sufficiency.importance_samples = get_or<int>(s, "importance_samples", 32);

    c.out = get_or<std::string>(j, "output", c.out);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

// Fully explicit config: replaying it reproduces every artifact.
inline json to_manifest(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["data"] = {{"path", c.data},
               {"format", c.format == Format::Csv ? "csv" : "jsonl"},
               {"taxonomy", c.taxonomy},
               {"templates", c.templates},
               {"label_level", std::string(label_level_name(c.level))}};
  j["split"] = {{"seed", c.split_seed}, {"test_fraction", c.test_fraction}};
  const auto& pc = c.text.preprocess;
  j["text"] = {{"lowercase", pc.lowercase},
               {"strip_punctuation", pc.strip_punctuation},
               {"collapse_whitespace", pc.collapse_whitespace},
               {"remove_stopwords", pc.remove_stopwords},
               {"lemmatize", pc.lemmatize},
               {"stopwords", c.stopwords},
               {"lemmas", c.lemmas},
               {"ngram_range", {c.text.ngram_lo, c.text.ngram_hi}},
               {"min_df", c.text.min_df},
               {"max_features", c.text.max_features ? json(*c.text.max_features) : json(nullptr)},
               {"svd_k", c.text.svd_k},
               {"svd_seed", c.text.svd.seed}};
  json models = json::array();
  for (const auto& m : c.models) {
    json mj = {{"name", m.name},
               {"modality", modality_name(m.modality)},
               {"hyperparams", to_json(m.hyperparams)},
               {"seed", m.seed}};
    if (m.modality == Modality::External) {
      mj["predictions"] = m.predictions;
    } else {
      mj["learner"] = std::string(learner_kind_name(m.kind));
    }
    models.push_back(std::move(mj));
  }
  j["models"] = std::move(models);
  j["fusion"] = {{"strategy", c.fusion.strategy},
                 {"folds", c.fusion.folds},
                 {"seed", c.fusion.seed},
                 {"meta",
                  {{"learner", std::string(learner_kind_name(c.fusion.meta_kind))},
                   {"hyperparams", to_json(c.fusion.meta_hyperparams)}}}};
  j["hpo"] = {{"model", c.hpo.model},
              {"n_trials", c.hpo.n_trials},
              {"space", c.hpo.space},
              {"folds", c.hpo.folds},
              {"pruner", {{"warmup_steps", c.hpo.pruner.warmup_steps}, {"startup_trials", c.hpo.pruner.startup_trials}}},
              {"direction", c.hpo.direction == Direction::Maximize ? "maximize" : "minimize"},
              {"n_startup", c.hpo.n_startup},
              {"batch_size", c.hpo.batch_size}};
  j["sensitivity"] = {{"fractions", c.fractions}};
  j["sufficiency"] = {{"svd_k", c.sufficiency.svd_k},
                      {"learner", std::string(learner_kind_name(c.sufficiency.learner))},
                      {"hyperparams", to_json(c.sufficiency.hyperparams)},
                      {"importance_rows", c.sufficiency.importance_rows},
                      {"importance_samples", c.sufficiency.importance_samples}};
  return j;
}

inline RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j, fs::absolute(path).parent_path(), seed_override);
}

// ---- shared execution ----------------------------------------------------

inline CauseTaxonomy load_taxonomy(const RunConfig& c) {
  if (c.taxonomy.empty()) return CauseTaxonomy::default_level3();
  if (!fs::exists(c.taxonomy)) throw ConfigError("taxonomy file not found: " + c.taxonomy);
  return load_taxonomy_csv(c.taxonomy);
}

inline TemplateTable load_templates(const RunConfig& c) {
  if (c.templates.empty()) return starter_template_table();
  if (!fs::exists(c.templates)) throw ConfigError("template file not found: " + c.templates);
  return load_template_csv(c.templates);
}

inline Dataset load_run_dataset(const RunConfig& c) {
  if (!fs::exists(c.data)) throw ConfigError("dataset not found: " + c.data);
  return load_dataset(c.data, c.format, load_taxonomy(c), c.level);
}

inline void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct FeatureBlock {
  FeatureMatrix train;
  FeatureMatrix test;
};

// Features of one modality, fitted on the training records only.
inline FeatureBlock build_features(Modality m, const std::vector<VARecord>& train, const std::vector<VARecord>& test,
                                   const RunConfig& c, const TemplateTable& templates) {
  auto ids = [](const std::vector<VARecord>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs) out.push_back(r.id);
    return out;
  };
  auto texts = [&](const std::vector<VARecord>& rs, bool fused) {
    std::vector<std::string> out;
    for (const auto& r : rs) out.push_back(fused ? build_fused_document(r, templates) : r.narrative);
    return out;
  };
  switch (m) {
    case Modality::Question: {
      const auto enc = TabularEncoder::fit(train);
      return {enc.transform(train), enc.transform(test)};
    }
    case Modality::Narrative:
    case Modality::AllText: {
      const bool fused = m == Modality::AllText;
      const auto f = text::fit_text_featurizer(texts(train, fused), c.text);
      return {f.transform(texts(train, fused), ids(train)), f.transform(texts(test, fused), ids(test))};
    }
    case Modality::Features: {
      auto t = build_features(Modality::Narrative, train, test, c, templates);
      auto q = build_features(Modality::Question, train, test, c, templates);
      return {fuse_features(t.train, q.train), fuse_features(t.test, q.test)};
    }
    case Modality::External:
      return {FeatureMatrix(ids(train), {}, Matrix(static_cast<Eigen::Index>(train.size()), 0)),
              FeatureMatrix(ids(test), {}, Matrix(static_cast<Eigen::Index>(test.size()), 0))};
  }
  throw ConfigError("unknown modality");
}

inline LearnerSpec make_spec(const ModelConfig& m, const std::vector<std::string>& classes) {
  LearnerSpec s{m.kind, m.hyperparams, m.seed, nullptr};
  if (m.kind == LearnerKind::External) {
    if (!fs::exists(m.predictions)) throw ConfigError("prediction file not found: " + m.predictions);
    s.external = std::make_shared<const ProbMatrix>(load_external_predictions(m.predictions, classes));
  }
  return s;
}

struct ExperimentResult {
  std::vector<std::string> classes;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::vector<int> y_test;
  std::vector<NamedProbs> model_probs;            // per model, on the test ids
  std::optional<NamedProbs> ensemble;             // soft_vote / stacking output
  std::string primary;                            // name of the headline result
  std::vector<std::string> static_adapters;
};

// Trains every configured model on `train_idx`, predicts `test_idx` and
// applies the fusion strategy.
inline ExperimentResult run_experiment(const Dataset& ds, const std::vector<std::size_t>& train_idx,
                                       const std::vector<std::size_t>& test_idx, const RunConfig& c,
                                       const std::string& strategy) {
  if (c.models.empty()) throw ConfigError("config lists no models");
  const TemplateTable templates = load_templates(c);
  ExperimentResult res;
  res.classes = ds.classes();
  res.train_ids = ds.ids(train_idx);
  res.test_ids = ds.ids(test_idx);
  res.y_test = ds.labels_at(test_idx);
  const auto y_train = ds.labels_at(train_idx);
  std::vector<VARecord> train, test;
  for (auto i : train_idx) train.push_back(ds.record(i));
  for (auto i : test_idx) test.push_back(ds.record(i));

  std::map<Modality, FeatureBlock> blocks;
  for (const auto& m : c.models) {
    if (!blocks.contains(m.modality)) blocks.emplace(m.modality, build_features(m.modality, train, test, c, templates));
  }
  std::vector<LearnerSpec> specs;
  for (const auto& m : c.models) specs.push_back(make_spec(m, res.classes));

  res.model_probs.resize(c.models.size());
  parallel_for(c.models.size(), c.workers, [&](std::size_t i) {
    const auto& block = blocks.at(c.models[i].modality);
    const FittedModel model = fit(specs[i], block.train, y_train, res.classes);
    res.model_probs[i] = {c.models[i].name, predict_proba(model, block.test)};
  });
  for (const auto& m : c.models) {
    if (m.kind == LearnerKind::External) res.static_adapters.push_back(m.name);
  }
  res.primary = c.models.front().name;
  if (strategy == "soft_vote") {
    std::vector<ProbMatrix> mats;
    for (const auto& p : res.model_probs) mats.push_back(p.probs);
    res.ensemble = NamedProbs{"soft_vote", soft_vote(mats).probs};
    res.primary = "soft_vote";
  } else if (strategy == "stacking") {
    std::vector<OofPrediction> oofs(c.models.size());
    for (std::size_t i = 0; i < c.models.size(); ++i) {
      oofs[i] = generate_oof(c.models[i].name, specs[i], blocks.at(c.models[i].modality).train, y_train, res.classes,
                             c.fusion.folds, c.fusion.seed, c.workers);
    }
    const StackedModel sm =
        stack_train(oofs, y_train, LearnerSpec{c.fusion.meta_kind, c.fusion.meta_hyperparams, c.fusion.seed, nullptr});
    res.ensemble = NamedProbs{"stacking", stack_predict(sm, res.model_probs).probs};
    res.primary = "stacking";
  }
  return res;
}

inline const ProbMatrix& primary_probs(const ExperimentResult& r) {
  if (r.ensemble) return r.ensemble->probs;
  return r.model_probs.front().probs;
}

inline std::string prob_csv(const ProbMatrix& p) {
  std::ostringstream out;
  write_prob_matrix_csv(out, p);
  return out.str();
}

// metrics.json, confusion.csv, csmf.csv, predictions/*.csv
inline json write_experiment(const ExperimentResult& r, const fs::path& out_dir, const std::string& strategy) {
  json results = json::object();
  MetricReport primary_report;
  auto handle = [&](const NamedProbs& np) {
    const MetricReport rep = evaluate(r.y_test, np.probs);
    results[np.name] = to_json(rep);
    write_text(out_dir / "predictions" / (np.name + ".csv"), prob_csv(np.probs));
    if (np.name == r.primary) primary_report = rep;
  };
  for (const auto& p : r.model_probs) handle(p);
  if (r.ensemble) handle(*r.ensemble);
  json metrics = {{"strategy", strategy},
                  {"primary", r.primary},
                  {"classes", r.classes},
                  {"n_train", r.train_ids.size()},
                  {"n_test", r.test_ids.size()},
                  {"static_adapters", r.static_adapters},
                  {"results", results}};
  write_text(out_dir / "metrics.json", dump(metrics));
  std::ostringstream cm, cs;
  write_confusion_csv(cm, primary_report.confusion);
  write_csmf_csv(cs, primary_report);
  write_text(out_dir / "confusion.csv", cm.str());
  write_text(out_dir / "csmf.csv", cs.str());
  return metrics;
}

// ---- commands ------------------------------------------------------------

inline int cmd_validate(const RunConfig& c, std::ostream& log) {
  json report;
  bool ok = true;
  std::vector<std::string> problems;
  std::optional<CauseTaxonomy> tax;
  try {
    tax = load_taxonomy(c);
    (void)load_templates(c);
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  if (!fs::exists(c.data)) problems.push_back("dataset not found: " + c.data);
  for (const auto& m : c.models) {
    if (m.modality == Modality::External && !fs::exists(m.predictions)) {
      problems.push_back("prediction file not found: " + m.predictions);
    }
  }
  json diags = json::array();
  json invalid = json::array();
  json counts = json::object();
  std::size_t n_records = 0, n_labeled = 0;
  if (problems.empty()) {
    const auto res = read_records(c.data, c.format, *tax);
    n_records = res.records.size();
    for (const auto& d : res.diagnostics) {
      diags.push_back({{"line", d.line}, {"record_id", d.record_id}, {"message", d.message}});
    }
    for (const auto& r : res.records) {
      if (text::is_invalid_narrative(r.narrative)) invalid.push_back(r.id);
      if (const auto& lab = r.cause(c.level)) {
        ++n_labeled;
        counts[*lab] = counts.value(*lab, 0) + 1;
      }
    }
    if (!res.diagnostics.empty()) ok = false;
  } else {
    ok = false;
  }
  report["ok"] = ok;
  report["problems"] = problems;
  report["n_records"] = n_records;
  report["n_labeled"] = n_labeled;
  report["class_counts"] = counts;
  report["diagnostics"] = diags;
  report["invalid_narratives"] = invalid;
  report["n_invalid_narratives"] = invalid.size();
  log << dump(report);
  if (!c.out.empty()) write_text(fs::path(c.out) / "validation.json", dump(report));
  return ok ? kExitOk : kExitValidation;
}

inline int cmd_prep(const RunConfig& c, std::ostream& log) {
  const Dataset ds = load_run_dataset(c);
  const TemplateTable templates = load_templates(c);
  const SplitPlan plan = stratified_split(ds, c.test_fraction, c.split_seed);
  const fs::path out(c.out);
  write_text(out / "split.json", dump({{"seed", plan.seed},
                                       {"test_fraction", plan.test_fraction},
                                       {"train_ids", plan.train_ids},
                                       {"test_ids", plan.test_ids}}));
  std::ostringstream docs;
  for (const auto& r : ds.records()) {
    docs << json{{"id", r.id},
                 {"invalid_narrative", text::is_invalid_narrative(r.narrative)},
                 {"fused_document", build_fused_document(r, templates)}}
                .dump()
         << "\n";
  }
  write_text(out / "documents.jsonl", docs.str());
  std::vector<std::string> train_texts;
  for (auto i : plan.train_indices) train_texts.push_back(ds.record(i).narrative);
  const auto f = text::fit_text_featurizer(train_texts, c.text);
  write_text(out / "tfidf.json", dump(text::to_json(f.tfidf)));
  if (f.svd) write_text(out / "svd.json", dump(text::to_json(*f.svd)));
  write_text(out / "manifest.json", dump(to_manifest(c)));
  log << "prepared " << ds.size() << " records (" << plan.train_ids.size() << " train, " << plan.test_ids.size()
      << " test) in " << out.string() << "\n";
  return kExitOk;
}

inline int cmd_run(const RunConfig& c, std::ostream& log, std::optional<std::string> strategy_override = {}) {
  const Dataset ds = load_run_dataset(c);
  const SplitPlan plan = stratified_split(ds, c.test_fraction, c.split_seed);
  RunConfig effective = c;
  if (strategy_override) effective.fusion.strategy = *strategy_override;
  const auto res = run_experiment(ds, plan.train_indices, plan.test_indices, effective, effective.fusion.strategy);
  const fs::path out(c.out);
  const json metrics = write_experiment(res, out, effective.fusion.strategy);
  write_text(out / "manifest.json", dump(to_manifest(effective)));
  log << "primary result '" << res.primary << "': accuracy "
      << metrics.at("results").at(res.primary).at("accuracy").get<double>() << "\n";
  return kExitOk;
}

// Both ensemble strategies over the configured models, side by side.
inline int cmd_ensemble(const RunConfig& c, std::ostream& log) {
  const Dataset ds = load_run_dataset(c);
  const SplitPlan plan = stratified_split(ds, c.test_fraction, c.split_seed);
  json summary = json::object();
  for (const std::string strategy : {"soft_vote", "stacking"}) {
    const auto res = run_experiment(ds, plan.train_indices, plan.test_indices, c, strategy);
    const json metrics = write_experiment(res, fs::path(c.out) / strategy, strategy);
    summary[strategy] = metrics.at("results").at(strategy);
    log << strategy << ": accuracy " << summary[strategy].at("accuracy").get<double>() << "\n";
  }
  write_text(fs::path(c.out) / "ensemble.json", dump(summary));
  write_text(fs::path(c.out) / "manifest.json", dump(to_manifest(c)));
  return kExitOk;
}

inline int cmd_hpo(const RunConfig& c, std::ostream& log) {
  const Dataset ds = load_run_dataset(c);
  const SplitPlan plan = stratified_split(ds, c.test_fraction, c.split_seed);
  const auto it = std::find_if(c.models.begin(), c.models.end(), [&](const auto& m) { return m.name == c.hpo.model; });
  if (it == c.models.end()) throw ConfigError("hpo.model '" + c.hpo.model + "' is not a configured model");
  if (it->kind == LearnerKind::External) throw ConfigError("hpo needs a native learner");
  const SearchSpace space = space_from_json(c.hpo.space);
  std::vector<VARecord> train;
  for (auto i : plan.train_indices) train.push_back(ds.record(i));
  const auto block = build_features(it->modality, train, {}, c, load_templates(c));
  ParamMap fixed = it->hyperparams;
  for (const auto& s : space) fixed.erase(s.name);
  StudyConfig sc;
  sc.n_trials = c.hpo.n_trials;
  sc.direction = c.hpo.direction;
  sc.pruner = c.hpo.pruner;
  sc.seed = c.seed;
  sc.n_startup = c.hpo.n_startup;
  sc.batch_size = c.hpo.batch_size;
  sc.workers = c.workers;
  const auto objective = cv_objective(spec_template(it->kind, fixed), block.train, ds.labels_at(plan.train_indices),
                                      ds.classes(), c.hpo.folds, c.split_seed, 1);
  const StudyResult res = run_study(objective, space, sc);
  std::ostringstream logf;
  write_study_log(logf, res.trials);
  const fs::path out(c.out);
  write_text(out / "study_log.jsonl", logf.str());
  int pruned = 0, complete = 0;
  for (const auto& t : res.trials) {
    pruned += t.state == TrialState::Pruned;
    complete += t.state == TrialState::Complete;
  }
  write_text(out / "hpo_best.json", dump({{"model", it->name},
                                          {"best_config", to_json(res.best_config)},
                                          {"best_score", res.best_score},
                                          {"best_trial", res.best_trial},
                                          {"n_complete", complete},
                                          {"n_pruned", pruned},
                                          {"objective", "mean validation weighted F1"}}));
  write_text(out / "manifest.json", dump(to_manifest(c)));
  log << "best trial " << res.best_trial << " score " << res.best_score << "\n";
  return kExitOk;
}

// One row per training fraction on the fixed hold-out test set.
inline int cmd_sensitivity(const RunConfig& c, std::ostream& log) {
  const Dataset ds = load_run_dataset(c);
  const SplitPlan plan = stratified_split(ds, c.test_fraction, c.split_seed);
  const auto y_train = ds.labels_at(plan.train_indices);
  std::ostringstream table;
  csv::write_row(table, {"fraction", "n_train", "accuracy", "f1_weighted", "csmf_accuracy"});
  for (double frac : c.fractions) {
    const auto keep = stratified_sample_indices(y_train, ds.class_count(), frac, c.split_seed);
    std::vector<std::size_t> train_idx;
    for (auto k : keep) train_idx.push_back(plan.train_indices[k]);
    const auto res = run_experiment(ds, train_idx, plan.test_indices, c, c.fusion.strategy);
    const MetricReport rep = evaluate(res.y_test, primary_probs(res));
    const auto csmf_acc = rep.csmf_acc.at("mean_prob");
    csv::write_row(table, {csv::format_double(frac), std::to_string(train_idx.size()),
                           csv::format_double(rep.accuracy), csv::format_double(rep.averaged.at("weighted").f1),
                           csmf_acc ? csv::format_double(*csmf_acc) : ""});
    log << "fraction " << frac << ": accuracy " << rep.accuracy << "\n";
  }
  const fs::path out(c.out);
  write_text(out / "sensitivity.csv", table.str());
  write_text(out / "sensitivity_test_ids.json", dump(plan.test_ids));
  write_text(out / "manifest.json", dump(to_manifest(c)));
  return kExitOk;
}

// Soft vote of all models and of each leave-one-out subset.
inline int cmd_ablation(const RunConfig& c, std::ostream& log) {
  const Dataset ds = load_run_dataset(c);
  const SplitPlan plan = stratified_split(ds, c.test_fraction, c.split_seed);
  const auto res = run_experiment(ds, plan.train_indices, plan.test_indices, c, "none");
  const auto rows = leave_one_out_votes(res.model_probs);
  std::ostringstream table;
  csv::write_row(table, {"subset", "members", "accuracy", "f1_weighted", "f1_macro", "csmf_accuracy",
                         "cccsmf_accuracy", "delta_accuracy", "delta_csmf_accuracy"});
  std::optional<MetricReport> base;
  for (const auto& row : rows) {
    const MetricReport rep = evaluate(res.y_test, row.vote.probs);
    if (!base) base = rep;
    std::string members;
    for (const auto& m : row.members) members += (members.empty() ? "" : "|") + m;
    const auto ca = rep.csmf_acc.at("mean_prob"), base_ca = base->csmf_acc.at("mean_prob");
    const auto cc = rep.cccsmf_acc.at("mean_prob");
    csv::write_row(table, {row.label, members, csv::format_double(rep.accuracy),
                           csv::format_double(rep.averaged.at("weighted").f1),
                           csv::format_double(rep.averaged.at("macro").f1), ca ? csv::format_double(*ca) : "",
                           cc ? csv::format_double(*cc) : "", csv::format_double(rep.accuracy - base->accuracy),
                           ca && base_ca ? csv::format_double(*ca - *base_ca) : ""});
    log << row.label << ": accuracy " << rep.accuracy << "\n";
  }
  const fs::path out(c.out);
  write_text(out / "ablation.csv", table.str());
  write_text(out / "manifest.json", dump(to_manifest(c)));
  return kExitOk;
}

inline int cmd_sufficiency(const RunConfig& c, std::ostream& log) {
  const Dataset ds = load_run_dataset(c);
  SufficiencyConfig sc;
  sc.text = c.text;
  sc.text.svd_k = c.sufficiency.svd_k;
  const LearnerSpec spec{c.sufficiency.learner, c.sufficiency.hyperparams, c.seed, nullptr};
  sc.narrative_spec = sc.question_spec = sc.fused_spec = spec;
  sc.test_fraction = c.test_fraction;
  sc.seed = c.split_seed;
  const auto rep = predict_sufficiency_pipeline(ds.records(), sc);
  json j = {{"classes", rep.classes},
            {"n_train", rep.train_ids.size()},
            {"n_test", rep.test_ids.size()},
            {"svd_k_used", rep.svd_k_used},
            {"acc_narrative", rep.acc_narrative},
            {"acc_question", rep.acc_question},
            {"acc_multimodal", rep.acc_multimodal}};
  if (rep.contribution) {
    j["total_gain"] = rep.contribution->total_gain;
    j["contrib_narrative_pct"] = rep.contribution->contrib_narrative_pct;
    j["contrib_question_pct"] = rep.contribution->contrib_question_pct;
  } else {
    j["total_gain"] = 0.0;
    j["contrib_narrative_pct"] = nullptr;
    j["contrib_question_pct"] = nullptr;
  }
  // Importance of the question-only model's indicators on test rows.
  std::map<std::string, const VARecord*> by_id;
  for (const auto& r : ds.records()) by_id[r.id] = &r;
  std::vector<VARecord> train, test;
  std::vector<int> y_train;
  std::vector<std::string> classes = rep.classes;
  for (const auto& id : rep.train_ids) {
    train.push_back(*by_id.at(id));
    const auto lvl = std::string(sufficiency_level_name(group_sufficiency(*train.back().sufficiency_score)));
    y_train.push_back(static_cast<int>(std::find(classes.begin(), classes.end(), lvl) - classes.begin()));
  }
  for (std::size_t i = 0; i < rep.test_ids.size() && static_cast<int>(i) < c.sufficiency.importance_rows; ++i) {
    test.push_back(*by_id.at(rep.test_ids[i]));
  }
  const auto enc = TabularEncoder::fit(train);
  const FeatureMatrix x_train = enc.transform(train);
  const FittedModel model = fit(spec, x_train, y_train, classes);
  const auto imp = shapley_importance(model, enc.transform(test), feature_means(x_train),
                                      c.sufficiency.importance_samples, c.seed, c.workers);
  std::ostringstream imp_csv;
  write_importance_csv(imp_csv, imp);
  const fs::path out(c.out);
  write_text(out / "sufficiency.json", dump(j));
  write_text(out / "importance.csv", imp_csv.str());
  write_text(out / "manifest.json", dump(to_manifest(c)));
  log << dump(j);
  return kExitOk;
}

// Markdown summary of an existing metrics.json.
inline int cmd_report(const RunConfig& c, std::ostream& log) {
  const fs::path out(c.out);
  std::ifstream in(out / "metrics.json");
  if (!in) throw ConfigError("no metrics.json in " + out.string() + "; run first");
  const json m = json::parse(in);
  std::ostringstream md;
  md << "# vaforge report\n\n";
  md << "Strategy: " << m.at("strategy").get<std::string>() << "; primary result: " << m.at("primary").get<std::string>()
     << "; train/test: " << m.at("n_train") << "/" << m.at("n_test") << "\n\n";
  md << "| result | accuracy | F1 weighted | F1 macro | CSMF acc (mean prob) | CCCSMF acc |\n";
  md << "|---|---|---|---|---|---|\n";
  auto fmt = [](const json& v) {
    if (v.is_null()) return std::string("n/a");
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(3);
    s << v.get<double>();
    return s.str();
  };
  for (const auto& [name, r] : m.at("results").items()) {
    md << "| " << name << " | " << fmt(r.at("accuracy")) << " | " << fmt(r.at("f1_weighted")) << " | "
       << fmt(r.at("f1_macro")) << " | " << fmt(r.at("csmf_accuracy_mean_prob")) << " | "
       << fmt(r.at("cccsmf_accuracy_mean_prob")) << " |\n";
  }
  if (!m.at("static_adapters").empty()) {
    md << "\nStatic adapters (fixed external predictions reused across folds): " << m.at("static_adapters").dump()
       << "\n";
  }
  write_text(out / "report.md", md.str());
  log << md.str();
  return kExitOk;
}

}  // namespace vaforge::pipeline
