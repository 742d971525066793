#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vaforge/core_data.hpp"
#include "vaforge/synthetic.hpp"

using namespace vaforge;

namespace {

CauseTaxonomy ab_taxonomy() { return CauseTaxonomy({"X"}, {"Fever", "Injury"}, {"A", "B"}); }

std::vector<VARecord> make_records(const std::map<std::string, int>& counts) {
  std::vector<VARecord> out;
  for (const auto& [cls, n] : counts) {
    for (int i = 0; i < n; ++i) {
      VARecord r;
      r.id = cls + std::to_string(i);
      r.narrative = "text";
      r.cause_level3 = cls;
      out.push_back(r);
    }
  }
  return out;
}

std::map<std::string, int> class_counts(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::map<std::string, int> out;
  for (auto i : idx) ++out[*ds.record(i).cause_level3];
  return out;
}

}  // namespace

TEST(Taxonomy, DefaultLevelThreeHasSixCategories) {
  const auto tax = CauseTaxonomy::default_level3();
  const auto& l3 = tax.classes(LabelLevel::L3);
  ASSERT_EQ(l3.size(), 6u);
  EXPECT_EQ(l3.front(), "HIV and pulmonary TB");
  EXPECT_EQ(l3.back(), "indeterminate");
}

TEST(Taxonomy, EncodeDecodeRoundTrip) {
  const auto tax = CauseTaxonomy::default_level3();
  for (const auto& c : tax.classes(LabelLevel::L3)) {
    EXPECT_EQ(tax.decode(LabelLevel::L3, *tax.encode(LabelLevel::L3, c)), c);
  }
  EXPECT_FALSE(tax.encode(LabelLevel::L3, "Martian flu"));
}

TEST(Taxonomy, RejectsDuplicatesAndUnknownMappingTargets) {
  EXPECT_THROW(CauseTaxonomy({}, {}, {"a", "a"}), SchemaError);
  EXPECT_THROW(CauseTaxonomy({}, {}, {"a"}, {{"A00", "", "", "b"}}), SchemaError);
}

TEST(Taxonomy, CsvKeepsFileOrderAndMapsIcdRanges) {
  testutil::TempDir dir("tax");
  const auto path = dir.write("tax.csv",
                              "icd10,level1,level2,level3\n"
                              "A15-A19,TB,Infections,HIV and pulmonary TB\n"
                              "V01,Road,Injuries,injuries\n"
                              ",Other,Other,indeterminate\n");
  const auto tax = load_taxonomy_csv(path);
  EXPECT_EQ(tax.classes(LabelLevel::L3), (std::vector<std::string>{"HIV and pulmonary TB", "injuries", "indeterminate"}));
  ASSERT_NE(tax.map_icd10("A16.2"), nullptr);
  EXPECT_EQ(tax.map_icd10("A16.2")->level2, "Infections");
  EXPECT_EQ(tax.map_icd10("V01"), tax.map_icd10("V019"));
  EXPECT_EQ(tax.map_icd10("A20"), nullptr);
}

TEST(LoadDataset, ThreeValidJsonlRows) {
  testutil::TempDir dir("load");
  const auto path = dir.write("d.jsonl",
                              R"({"id":"a","narrative":"fever","questions":{"i019a":"Yes"},"cause_level2":"Fever"})"
                              "\n"
                              R"({"id":"b","narrative":"","questions":{},"cause_level2":"Injury"})"
                              "\n"
                              R"({"id":"c","narrative":"x","questions":{"i147o":"DontKnow"}})"
                              "\n");
  const Dataset ds = load_dataset(path, Format::Jsonl, ab_taxonomy(), LabelLevel::L2);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.label(0), 0);
  EXPECT_EQ(ds.label(1), 1);
  EXPECT_FALSE(ds.label(2));
  EXPECT_EQ(ds.labeled_indices(), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(ds.record(2).response("i147o"), Response::DontKnow);
  EXPECT_EQ(ds.record(2).response("i999"), Response::Missing);
}

TEST(LoadDataset, UnknownLabelNamesTheRow) {
  testutil::TempDir dir("label");
  const auto path = dir.write("d.jsonl",
                              R"({"id":"ok","narrative":"","questions":{},"cause_level2":"Fever"})"
                              "\n"
                              R"({"id":"bad7","narrative":"","questions":{},"cause_level2":"Martian flu"})"
                              "\n");
  try {
    load_dataset(path, Format::Jsonl, ab_taxonomy(), LabelLevel::L2);
    FAIL() << "expected LabelError";
  } catch (const LabelError& e) {
    EXPECT_NE(std::string(e.what()).find("bad7"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(LoadDataset, MalformedAndIncompleteRowsAreReportedNotDropped) {
  testutil::TempDir dir("diag");
  const auto path = dir.write("d.jsonl",
                              R"({"id":"a","narrative":"","questions":{}})"
                              "\n{not json\n"
                              R"({"id":"c","questions":{}})"
                              "\n"
                              R"({"id":"a","narrative":"","questions":{}})"
                              "\n");
  const auto res = read_records(path, Format::Jsonl, ab_taxonomy());
  ASSERT_EQ(res.diagnostics.size(), 3u);
  EXPECT_EQ(res.diagnostics[0].kind, Diagnostic::Kind::Parse);
  EXPECT_EQ(res.diagnostics[0].line, 2u);
  EXPECT_EQ(res.diagnostics[1].kind, Diagnostic::Kind::Schema);
  EXPECT_EQ(res.diagnostics[2].kind, Diagnostic::Kind::Duplicate);
  EXPECT_THROW(load_dataset(path, Format::Jsonl, ab_taxonomy(), LabelLevel::L2), ParseError);
}

TEST(LoadDataset, MissingFieldIsSchemaError) {
  testutil::TempDir dir("schema");
  const auto path = dir.write("d.jsonl", R"({"id":"a","questions":{}})" "\n");
  EXPECT_THROW(load_dataset(path, Format::Jsonl, ab_taxonomy(), LabelLevel::L2), SchemaError);
}

TEST(LoadDataset, SufficiencyScoreOutOfRangeRejected) {
  testutil::TempDir dir("score");
  const auto path = dir.write("d.jsonl", R"({"id":"a","narrative":"","questions":{},"sufficiency_score":6})" "\n");
  EXPECT_THROW(load_dataset(path, Format::Jsonl, ab_taxonomy(), LabelLevel::L2), SchemaError);
}

TEST(LoadDataset, CsvShortResponseCodes) {
  testutil::TempDir dir("csv");
  const auto path = dir.write("d.csv",
                              "id,narrative,cause_level2,i019a,i019b,i022c,i147o,other\n"
                              "r1,\"fever, cough\",Fever,Y,N,DK,,ignored\n");
  const Dataset ds = load_dataset(path, Format::Csv, ab_taxonomy(), LabelLevel::L2);
  const auto& r = ds.record(0);
  EXPECT_EQ(r.narrative, "fever, cough");
  EXPECT_EQ(r.response("i019a"), Response::Yes);
  EXPECT_EQ(r.response("i019b"), Response::No);
  EXPECT_EQ(r.response("i022c"), Response::DontKnow);
  EXPECT_EQ(r.response("i147o"), Response::Missing);
  EXPECT_EQ(r.questions.size(), 4u);  // "other" is not a question column
}

TEST(LoadDataset, WriterRoundTripBothFormats) {
  synthetic::Config cfg;
  cfg.n_records = 40;
  cfg.seed = 3;
  cfg.sufficiency = synthetic::SufficiencyMode::Random;
  const auto records = synthetic::generate(cfg);
  testutil::TempDir dir("rt");
  for (auto fmt : {Format::Jsonl, Format::Csv}) {
    const auto path = dir.file(fmt == Format::Csv ? "d.csv" : "d.jsonl");
    write_records(path, fmt, records);
    const Dataset ds = load_dataset(path, format_from_path(path), synthetic::taxonomy(4), LabelLevel::L3);
    ASSERT_EQ(ds.size(), records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& a = records[i];
      const auto& b = ds.record(i);
      EXPECT_EQ(a.id, b.id);
      EXPECT_EQ(a.narrative, b.narrative);
      EXPECT_EQ(a.cause_level3, b.cause_level3);
      EXPECT_EQ(a.sufficiency_score, b.sufficiency_score);
      for (const auto& [k, v] : a.questions) EXPECT_EQ(b.response(k), v) << k;
    }
  }
}

TEST(LoadDataset, IcdCodeFillsLevels) {
  testutil::TempDir dir("icd");
  const CauseTaxonomy tax({}, {"Fever", "Injury"}, {"A", "B"}, {{"V01-V99", "", "Injury", "B"}});
  const auto path = dir.write("d.jsonl", R"({"id":"a","narrative":"","questions":{},"cause_icd10":"V43.5"})" "\n");
  const Dataset ds = load_dataset(path, Format::Jsonl, tax, LabelLevel::L2);
  EXPECT_EQ(ds.record(0).cause_level2, "Injury");
  EXPECT_EQ(ds.label(0), 1);
}

TEST(Dataset, RejectsDuplicateIds) {
  auto recs = make_records({{"A", 2}});
  recs[1].id = recs[0].id;
  EXPECT_THROW(Dataset(recs, ab_taxonomy(), LabelLevel::L3), DuplicateIdError);
}

TEST(Split, ExactProportionsTenAndTen) {
  const Dataset ds(make_records({{"A", 10}, {"B", 10}}), ab_taxonomy(), LabelLevel::L3);
  const auto plan = stratified_split(ds, 0.2, 11);
  EXPECT_EQ(class_counts(ds, plan.test_indices), (std::map<std::string, int>{{"A", 2}, {"B", 2}}));
}

TEST(Split, DeterministicGivenSeed) {
  const Dataset ds(make_records({{"A", 13}, {"B", 9}}), ab_taxonomy(), LabelLevel::L3);
  const auto a = stratified_split(ds, 0.2, 5), b = stratified_split(ds, 0.2, 5);
  EXPECT_EQ(a.train_ids, b.train_ids);
  EXPECT_EQ(a.test_ids, b.test_ids);
  EXPECT_NE(a.test_ids, stratified_split(ds, 0.2, 6).test_ids);
}

TEST(Split, WithinOneOfExpectedOverManySeeds) {
  const Dataset ds(make_records({{"A", 7}, {"B", 3}}), ab_taxonomy(), LabelLevel::L3);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto plan = stratified_split(ds, 0.2, seed);
    auto counts = class_counts(ds, plan.test_indices);
    EXPECT_LE(std::abs(counts["A"] - 1.4), 1.0);
    EXPECT_LE(std::abs(counts["B"] - 0.6), 1.0);
    // Partition of all labeled ids.
    std::set<std::string> all(plan.train_ids.begin(), plan.train_ids.end());
    for (const auto& id : plan.test_ids) EXPECT_TRUE(all.insert(id).second);
    EXPECT_EQ(all.size(), 10u);
  }
}

TEST(Split, UnlabeledRecordsExcluded) {
  auto recs = make_records({{"A", 5}, {"B", 5}});
  VARecord u;
  u.id = "unlabeled";
  recs.push_back(u);
  const Dataset ds(recs, ab_taxonomy(), LabelLevel::L3);
  const auto plan = stratified_split(ds, 0.2, 1);
  EXPECT_EQ(plan.train_ids.size() + plan.test_ids.size(), 10u);
}

TEST(Split, EmptyClassRaises) {
  const Dataset ds(make_records({{"A", 5}}), ab_taxonomy(), LabelLevel::L3);
  EXPECT_THROW(stratified_split(ds, 0.2, 1), EmptyClassError);
  EXPECT_THROW(subsample_training(ds, 0.5, 1), EmptyClassError);
}

TEST(KFold, TenAndTenFiveFolds) {
  const Dataset ds(make_records({{"A", 10}, {"B", 10}}), ab_taxonomy(), LabelLevel::L3);
  const auto folds = stratified_kfold(ds, 5, 2);
  ASSERT_EQ(folds.size(), 5u);
  std::multiset<std::size_t> seen;
  for (const auto& f : folds) {
    EXPECT_EQ(class_counts(ds, f.val), (std::map<std::string, int>{{"A", 2}, {"B", 2}}));
    EXPECT_EQ(f.train.size() + f.val.size(), 20u);
    for (auto i : f.val) {
      seen.insert(i);
      EXPECT_EQ(std::count(f.train.begin(), f.train.end(), i), 0);
    }
  }
  EXPECT_EQ(seen.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 20u);
}

TEST(KFold, ElevenInOneClassGivesThreeTwoTwoTwoTwo) {
  std::vector<int> labels(11, 0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto folds = stratified_kfold_indices(labels, 1, 5, seed);
    std::vector<std::size_t> sizes;
    for (const auto& f : folds) sizes.push_back(f.val.size());
    std::sort(sizes.begin(), sizes.end());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 2, 2, 3}));
  }
}

TEST(KFold, PerClassFoldSizesDifferByAtMostOne) {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) labels.insert(labels.end(), static_cast<std::size_t>(5 + 3 * c), c);
  const auto folds = stratified_kfold_indices(labels, 4, 5, 9);
  for (int c = 0; c < 4; ++c) {
    std::vector<int> sizes;
    for (const auto& f : folds) sizes.push_back(static_cast<int>(std::count_if(f.val.begin(), f.val.end(), [&](auto i) { return labels[i] == c; })));
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
  }
}

TEST(KFold, ClassSmallerThanKRaises) {
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1, 1, 1};
  EXPECT_THROW(stratified_kfold_indices(labels, 2, 5, 0), FoldError);
  EXPECT_THROW(stratified_kfold_indices(labels, 2, 1, 0), FoldError);
}

TEST(Subsample, FractionOneIsIdentity) {
  const Dataset ds(make_records({{"A", 6}, {"B", 4}}), ab_taxonomy(), LabelLevel::L3);
  const Dataset sub = subsample_training(ds, 1.0, 3);
  EXPECT_EQ(sub.ids(sub.labeled_indices()), ds.ids(ds.labeled_indices()));
}

TEST(Subsample, HalfOfTwentyAndTwenty) {
  const Dataset ds(make_records({{"A", 20}, {"B", 20}}), ab_taxonomy(), LabelLevel::L3);
  const Dataset sub = subsample_training(ds, 0.5, 3);
  std::vector<std::size_t> all(sub.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  EXPECT_EQ(class_counts(sub, all), (std::map<std::string, int>{{"A", 10}, {"B", 10}}));
}

TEST(Subsample, PerClassCountsWithinOne) {
  const Dataset ds(make_records({{"A", 17}, {"B", 6}}), ab_taxonomy(), LabelLevel::L3);
  for (double f : {0.1, 0.3, 0.55, 0.9}) {
    const Dataset sub = subsample_training(ds, f, 8);
    std::vector<std::size_t> all(sub.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto counts = class_counts(sub, all);
    EXPECT_LE(std::abs(counts["A"] - 17 * f), 1.0);
    EXPECT_LE(std::abs(counts["B"] - 6 * f), 1.0);
  }
}
