// Generates a synthetic corpus, then trains unimodal models and both fusion
// strategies on it and prints a comparison plus the sufficiency analysis.
//
//   demo_pipeline [out_dir] [n_records] [seed]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "vaforge/vaforge.hpp"

using namespace vaforge;
using namespace vaforge::pipeline;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? argv[1] : "demo_out";
  const std::size_t n = argc > 2 ? std::stoul(argv[2]) : 1500;
  const std::uint64_t seed = argc > 3 ? std::stoull(argv[3]) : 1;
  try {
    fs::create_directories(out);
    synthetic::Config sc;
    sc.n_records = n;
    sc.seed = seed;
    sc.sufficiency = synthetic::SufficiencyMode::FromIndicator;
    {
      std::ofstream recs(out / "records.jsonl", std::ios::binary);
      write_records_jsonl(recs, synthetic::generate(sc));
      std::ofstream tax(out / "taxonomy.csv", std::ios::binary);
      tax << "icd10,level1,level2,level3\n";
      for (const auto& c : synthetic::class_names(sc.n_classes)) tax << ",,," << c << "\n";
      // One sentence per synthetic indicator, so the all_text model sees the
      // question block as text.
      std::ofstream tpl(out / "templates.csv", std::ios::binary);
      tpl << "indicator,yes_text,no_text,skip_on\n";
      const int n_ind = sc.n_classes * sc.indicators_per_class + sc.noise_indicators;
      for (int i = 100; i < 100 + n_ind; ++i) tpl << "i" << i << ",Symptom s" << i << " was present.,,DontKnow|Missing\n";
    }
    const nlohmann::json cfg = {
        {"seed", seed},
        {"data", {{"path", "records.jsonl"}, {"taxonomy", "taxonomy.csv"}, {"templates", "templates.csv"}}},
        {"text", {{"svd_k", 40}}},
        {"models",
         {{{"name", "narrative_logreg"}, {"modality", "narrative"}, {"learner", "logreg"}},
          {{"name", "question_logreg"}, {"modality", "question"}, {"learner", "logreg"}},
          {{"name", "question_gbdt"}, {"modality", "question"}, {"learner", "gbdt"},
           {"hyperparams", {{"n_estimators", 40}, {"max_depth", 2}}}},
          {{"name", "all_text_logreg"}, {"modality", "all_text"}, {"learner", "logreg"}},
          {{"name", "features_logreg"}, {"modality", "features"}, {"learner", "logreg"}}}},
        {"fusion", {{"folds", 5}}},
        {"sufficiency", {{"svd_k", 40}}}};
    RunConfig c = parse_config(cfg, out);
    c.out = out.string();

    std::ostringstream log;
    cmd_ensemble(c, log);
    const auto summary = nlohmann::json::parse(std::ifstream(out / "ensemble.json"));
    const auto unimodal = nlohmann::json::parse(std::ifstream(out / "soft_vote" / "metrics.json"));
    std::printf("%-20s %9s %9s %9s\n", "result", "accuracy", "f1_w", "csmf_acc");
    auto row = [](const std::string& name, const nlohmann::json& r) {
      std::printf("%-20s %9.3f %9.3f %9.3f\n", name.c_str(), r.at("accuracy").get<double>(),
                  r.at("f1_weighted").get<double>(), r.at("csmf_accuracy_mean_prob").get<double>());
    };
    for (const auto& [name, r] : unimodal.at("results").items()) {
      if (name != "soft_vote") row(name, r);
    }
    row("soft_vote", summary.at("soft_vote"));
    row("stacking", summary.at("stacking"));

    c.out = (out / "sufficiency").string();
    cmd_sufficiency(c, log);
    const auto suff = nlohmann::json::parse(std::ifstream(out / "sufficiency" / "sufficiency.json"));
    std::printf("\nsufficiency accuracy: narrative %.3f, question %.3f, multimodal %.3f\n",
                suff.at("acc_narrative").get<double>(), suff.at("acc_question").get<double>(),
                suff.at("acc_multimodal").get<double>());
    std::printf("outputs in %s\n", out.string().c_str());
  } catch (const std::exception& e) {
    std::cerr << "demo failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
