#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <random>

#include "ifs/error.hpp"
#include "ifs/eval.hpp"
#include "test_util.hpp"

using namespace ifs;
using ifs::test::make_ranking;
using ifs::test::oracle_ap;
using ifs::test::TempDir;

namespace {

GroundTruth gt_of(const std::string& q, std::set<std::string> good, std::set<std::string> ok = {},
                  std::set<std::string> junk = {}) {
  return GroundTruth{q, std::move(good), std::move(ok), std::move(junk)};
}

std::vector<std::string> as_vector(const std::set<std::string>& a, const std::set<std::string>& b = {}) {
  std::vector<std::string> v(a.begin(), a.end());
  v.insert(v.end(), b.begin(), b.end());
  return v;
}

}  // namespace

TEST(AveragePrecision, PerfectRanking) {
  EXPECT_EQ(average_precision(make_ranking("q", {"a", "b", "c", "d"}), gt_of("q", {"a", "b"})), 1.0);
}

TEST(AveragePrecision, HitsAtOneAndThree) {
  const auto r = make_ranking("q", {"a", "x", "b", "y"});
  const auto gt = gt_of("q", {"a", "b"});
  const double ap = average_precision(r, gt);
  EXPECT_NEAR(ap, oracle_ap({"a", "x", "b", "y"}, {"a", "b"}, {}), 1e-12);
  EXPECT_NEAR(ap, 19.0 / 24.0, 1e-12);
}

TEST(AveragePrecision, JunkIsTransparent) {
  const auto with_junk = average_precision(make_ranking("q", {"j", "a", "x"}), gt_of("q", {"a"}, {}, {"j"}));
  const auto without = average_precision(make_ranking("q", {"a", "x"}), gt_of("q", {"a"}));
  EXPECT_EQ(with_junk, without);
  EXPECT_EQ(with_junk, 1.0);
}

TEST(AveragePrecision, OkCountsAsPositive) {
  EXPECT_EQ(average_precision(make_ranking("q", {"a", "b", "x"}), gt_of("q", {"a"}, {"b"})), 1.0);
}

TEST(AveragePrecision, UnretrievedPositivesLowerRecall) {
  EXPECT_NEAR(average_precision(make_ranking("q", {"a", "x"}), gt_of("q", {"a", "missing"})), 0.5, 1e-15);
}

TEST(AveragePrecision, ZeroPositivesIsZero) {
  EXPECT_EQ(average_precision(make_ranking("q", {"a"}), gt_of("q", {}, {}, {"a"})), 0.0);
}

TEST(AveragePrecision, UnmatchedQuery) {
  try {
    average_precision(make_ranking("q1", {"a"}), gt_of("q2", {"a"}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnmatchedQuery);
  }
}

TEST(AveragePrecision, RandomRankingsMatchOracle) {
  std::mt19937_64 rng(80);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<std::string> ids;
    GroundTruth gt{"q", {}, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("i" + std::to_string(i));
      switch (rng() % 6) {
        case 0: gt.good.insert(ids.back()); break;
        case 1: gt.ok.insert(ids.back()); break;
        case 2: gt.junk.insert(ids.back()); break;
        default: break;
      }
    }
    if (rng() % 3 == 0) gt.good.insert("never_retrieved");
    std::shuffle(ids.begin(), ids.end(), rng);
    const double ap = average_precision(make_ranking("q", ids), gt);
    ASSERT_NEAR(ap, oracle_ap(ids, as_vector(gt.good, gt.ok), as_vector(gt.junk)), 1e-12);
    ASSERT_GE(ap, 0.0);
    ASSERT_LE(ap, 1.0 + 1e-15);
  }
}

TEST(AveragePrecision, PromotingAPositiveNeverLowersAp) {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> ids;
    GroundTruth gt{"q", {}, {}, {}};
    for (int i = 0; i < 20; ++i) {
      ids.push_back("i" + std::to_string(i));
      if (rng() % 3 == 0) gt.good.insert(ids.back());
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t k = 1 + rng() % 19;
    if (!gt.is_positive(ids[k]) || gt.is_positive(ids[k - 1])) continue;
    const double before = average_precision(make_ranking("q", ids), gt);
    std::swap(ids[k], ids[k - 1]);
    ASSERT_GE(average_precision(make_ranking("q", ids), gt), before);
  }
}

TEST(MeanAp, SingleAndPair) {
  const std::vector<Ranking> one{make_ranking("q1", {"a", "x", "b"})};
  const std::vector<GroundTruth> gts{gt_of("q1", {"a", "b"}), gt_of("q2", {"x"})};
  const auto r1 = mean_ap(one, gts);
  EXPECT_EQ(r1.map, r1.per_query[0].ap);
  const std::vector<Ranking> two{make_ranking("q1", {"a", "x", "b"}), make_ranking("q2", {"a", "x"})};
  const auto r2 = mean_ap(two, gts);
  EXPECT_EQ(r2.map, (r2.per_query[0].ap + r2.per_query[1].ap) / 2.0);
  EXPECT_EQ(r2.per_query[1].num_relevant, 1u);
}

TEST(MeanAp, SuiteMatchesOracleMean) {
  std::mt19937_64 rng(82);
  std::vector<Ranking> rankings;
  std::vector<GroundTruth> gts;
  double oracle_sum = 0.0;
  for (int q = 0; q < 55; ++q) {
    const std::string qid = "q" + std::to_string(q);
    std::vector<std::string> ids;
    GroundTruth gt{qid, {}, {}, {}};
    for (int i = 0; i < 40; ++i) {
      ids.push_back("i" + std::to_string(i));
      const auto roll = rng() % 8;
      if (roll == 0) gt.good.insert(ids.back());
      if (roll == 1) gt.ok.insert(ids.back());
      if (roll == 2) gt.junk.insert(ids.back());
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    oracle_sum += oracle_ap(ids, as_vector(gt.good, gt.ok), as_vector(gt.junk));
    rankings.push_back(make_ranking(qid, ids));
    gts.push_back(gt);
  }
  EXPECT_NEAR(mean_ap(rankings, gts).map, oracle_sum / 55.0, 1e-12);
}

TEST(MeanAp, MissingGroundTruthListedExhaustively) {
  const std::vector<Ranking> rs{make_ranking("q1", {"a"}), make_ranking("q2", {"a"}), make_ranking("q3", {"a"})};
  const std::vector<GroundTruth> gts{gt_of("q2", {"a"})};
  try {
    mean_ap(rs, gts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGroundTruth);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("q1"), std::string::npos);
    EXPECT_NE(msg.find("q3"), std::string::npos);
  }
}

TEST(MeanAp, ZeroPositiveQueryFlagged) {
  const std::vector<Ranking> rs{make_ranking("q1", {"a"}), make_ranking("q2", {"a"})};
  const std::vector<GroundTruth> gts{gt_of("q1", {"a"}), gt_of("q2", {})};
  const auto r = mean_ap(rs, gts);
  EXPECT_TRUE(r.has_zero_positive_query());
  EXPECT_TRUE(r.per_query[1].zero_positives);
  EXPECT_EQ(r.map, 0.5);
}

TEST(Iou, HandValues) {
  EXPECT_EQ(iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
  EXPECT_EQ(iou({0, 0, 2, 2}, {3, 3, 4, 4}), 0.0);
  EXPECT_EQ(iou({0, 0, 2, 2}, {2, 0, 4, 2}), 0.0);
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-15);
}

TEST(Iou, SymmetricAndBoundedByAreaRatio) {
  std::mt19937_64 rng(83);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 500; ++i) {
    const double ax = u(rng), ay = u(rng), bx = u(rng), by = u(rng);
    const BoundingBox a{ax, ay, ax + 1 + u(rng), ay + 1 + u(rng)};
    const BoundingBox b{bx, by, bx + 1 + u(rng), by + 1 + u(rng)};
    ASSERT_EQ(iou(a, b), iou(b, a));
    ASSERT_LE(iou(a, b), std::min(a.area(), b.area()) / std::max(a.area(), b.area()) + 1e-15);
    ASSERT_GE(iou(a, b), 0.0);
  }
}

TEST(Localization, CountsOnlyPlantedImages) {
  Ranking r = make_ranking("q", {"a", "b", "c", "d"});
  r.entries[0].localization = BoundingBox{0, 0, 10, 10};
  r.entries[1].localization = BoundingBox{0, 0, 10, 10};
  r.entries[2].localization = BoundingBox{50, 50, 60, 60};
  PlantedBoxes boxes;
  boxes["q"]["a"] = {0, 0, 10, 12};
  boxes["q"]["c"] = {0, 0, 10, 10};
  boxes["q"]["d"] = {0, 0, 10, 10};  // no localization: not evaluated
  const auto stats = localization_accuracy(std::vector<Ranking>{r}, boxes);
  EXPECT_EQ(stats.evaluated, 2u);
  EXPECT_EQ(stats.hits, 1u);
  EXPECT_EQ(stats.rate(), 0.5);
}

TEST(PlantedBoxesFile, RoundTripAndErrors) {
  PlantedBoxes boxes;
  boxes["q1"]["a"] = {1.5, 2, 30, 40.25};
  boxes["q2"]["b"] = {0, 0, 16, 16};
  TempDir dir;
  save_planted_boxes(boxes, dir / "p.json");
  EXPECT_EQ(load_planted_boxes(dir / "p.json"), boxes);
  std::ofstream(dir / "bad.json") << R"({"q": {"a": [5, 5, 1, 1]}})";
  EXPECT_THROW(load_planted_boxes(dir / "bad.json"), Error);
  std::ofstream(dir / "garbage.json") << "{nope";
  EXPECT_THROW(load_planted_boxes(dir / "garbage.json"), Error);
}

TEST(Reports, TextAndJson) {
  EvalReport r;
  r.stage = Stage::qe;
  r.per_query = {{"q1", 0.75, 3, false}, {"q2", 0.0, 0, true}};
  r.map = 0.375;
  r.localization = LocalizationStats{9, 10, 0.5};
  const auto text = format_report_text(r);
  EXPECT_NE(text.find("stage: qe"), std::string::npos);
  EXPECT_NE(text.find("0.375000"), std::string::npos);
  EXPECT_NE(text.find("(no positives)"), std::string::npos);
  EXPECT_NE(text.find("9 / 10"), std::string::npos);
  const auto json = nlohmann::json::parse(format_report_json(r));
  EXPECT_EQ(json["map"].get<double>(), 0.375);
  EXPECT_EQ(json["per_query"][1]["zero_positives"].get<bool>(), true);
  EXPECT_EQ(json["localization"]["hits"].get<int>(), 9);
}
