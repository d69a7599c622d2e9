#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "support/retrieval_oracle.hpp"
#include "uavgeo/error.hpp"
#include "uavgeo/retrieval.hpp"

using namespace uavgeo;
using namespace uavgeo::retrieval;

namespace {

GalleryIndex make_gallery(const std::vector<std::vector<double>>& d, const std::vector<std::string>& ids, View v) {
  GalleryIndex g;
  for (std::size_t i = 0; i < d.size(); ++i) g.add(d[i], ids[i], v);
  return g;
}

std::vector<double> random_vec(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n;
  std::vector<double> v(dim);
  for (double& x : v) x = n(rng);
  return v;
}

}  // namespace

TEST(RankGallery, ThreeFourFive) {
  const auto g = make_gallery({{0, 0}, {3, 4}}, {"a", "b"}, View::Satellite);
  const std::vector<double> q{0, 0};
  const auto r = rank_gallery(q, g);
  EXPECT_EQ(r[0].index, 0);
  EXPECT_EQ(r[0].distance, 0.0);
  EXPECT_EQ(r[1].distance, 5.0);
}

TEST(RankGallery, ExactMatchRanksFirst) {
  std::mt19937_64 rng(1);
  std::vector<std::vector<double>> d;
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) {
    d.push_back(random_vec(rng, 4));
    ids.push_back(std::to_string(i));
  }
  const auto g = make_gallery(d, ids, View::Satellite);
  EXPECT_EQ(rank_gallery(d[6], g)[0].index, 6);
}

TEST(RankGallery, TiesKeepGalleryOrderAndDimensionsAreChecked) {
  const auto g = make_gallery({{1, 0}, {0, 1}, {-1, 0}}, {"a", "b", "c"}, View::Satellite);
  const std::vector<double> q{0, 0};
  const auto r = rank_gallery(q, g);
  EXPECT_EQ(r[0].index, 0);
  EXPECT_EQ(r[1].index, 1);
  EXPECT_EQ(r[2].index, 2);
  const std::vector<double> bad{0, 0, 0};
  EXPECT_THROW(rank_gallery(bad, g), Error);
}

TEST(RankGallery, InvariantUnderIsometry) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> d;
    std::vector<std::string> ids;
    for (int i = 0; i < 15; ++i) {
      d.push_back(random_vec(rng, 2));
      ids.push_back("x");
    }
    auto q = random_vec(rng, 2);
    const double a = std::uniform_real_distribution<double>(0, 6.28)(rng);
    const double tx = 3.0, ty = -1.5;
    auto iso = [&](const std::vector<double>& v) {
      return std::vector<double>{std::cos(a) * v[0] - std::sin(a) * v[1] + tx, std::sin(a) * v[0] + std::cos(a) * v[1] + ty};
    };
    std::vector<std::vector<double>> moved;
    for (const auto& v : d) moved.push_back(iso(v));
    const auto r1 = rank_gallery(q, make_gallery(d, ids, View::Satellite));
    const auto r2 = rank_gallery(iso(q), make_gallery(moved, ids, View::Satellite));
    for (std::size_t i = 0; i < r1.size(); ++i) EXPECT_EQ(r1[i].index, r2[i].index);
  }
}

TEST(Recall, HandCounted) {
  const std::vector<int> ones{1, 1, 1};
  EXPECT_EQ(recall_at_k(ones, 1), 1.0);
  const std::vector<int> r{1, 3};
  EXPECT_EQ(recall_at_k(r, 1), 0.5);
  EXPECT_EQ(recall_at_k(r, 3), 1.0);
  EXPECT_THROW(recall_at_k(r, 0), Error);
}

TEST(AveragePrecision, HandComputed) {
  EXPECT_EQ(average_precision({true}), 1.0);
  EXPECT_NEAR(average_precision({true, false, true}), 0.8333, 1e-4);
  EXPECT_DOUBLE_EQ(average_precision({true, false, true}), (1.0 + 2.0 / 3.0) / 2.0);
  try {
    average_precision({false, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no ground truth in gallery");
  }
}

TEST(AveragePrecision, OneExactlyWhenRelevantItemsLead) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 20);
    std::vector<bool> flags(n);
    for (int i = 0; i < n; ++i) flags[i] = rng() % 3 == 0;
    if (std::find(flags.begin(), flags.end(), true) == flags.end()) flags[rng() % n] = true;
    const double ap = average_precision(flags);
    const auto last_rel = std::find(flags.rbegin(), flags.rend(), true);
    const auto first_irrel = std::find(flags.begin(), flags.end(), false);
    const bool leading = first_irrel == flags.end() || (flags.rend() - last_rel) <= (first_irrel - flags.begin());
    EXPECT_GT(ap, 0.0);
    EXPECT_LE(ap, 1.0);
    EXPECT_EQ(ap == 1.0, leading);
  }
}

TEST(Evaluate, PerfectOneHotEmbeddingsBothDirections) {
  const int classes = 6;
  GalleryIndex sat, drone;
  std::vector<std::vector<double>> dq, sq;
  std::vector<std::string> dids, sids;
  for (int c = 0; c < classes; ++c) {
    std::vector<double> onehot(classes, 0.0);
    onehot[c] = 1.0;
    sat.add(onehot, std::to_string(c), View::Satellite);
    sq.push_back(onehot);
    sids.push_back(std::to_string(c));
    for (int v = 0; v < 3; ++v) {
      drone.add(onehot, std::to_string(c), View::Drone);
      dq.push_back(onehot);
      dids.push_back(std::to_string(c));
    }
  }
  const auto d2s = evaluate(dq, dids, sat, Direction::DroneToSatellite);
  EXPECT_EQ(d2s.recall_at.at(1), 1.0);
  EXPECT_EQ(d2s.ap_mean, 1.0);
  const auto s2d = evaluate(sq, sids, drone, Direction::SatelliteToDrone);
  EXPECT_EQ(s2d.recall_at.at(1), 1.0);
  EXPECT_EQ(s2d.ap_mean, 1.0);
  EXPECT_THROW(evaluate(dq, dids, drone, Direction::DroneToSatellite), Error);
}

TEST(Evaluate, RandomEmbeddingsGiveChanceRecall) {
  std::mt19937_64 rng(4);
  double sum = 0;
  const int seeds = 300;
  for (int s = 0; s < seeds; ++s) {
    GalleryIndex sat;
    std::vector<std::vector<double>> q;
    std::vector<std::string> ids;
    for (int c = 0; c < 10; ++c) {
      sat.add(random_vec(rng, 8), std::to_string(c), View::Satellite);
      for (int v = 0; v < 4; ++v) {
        q.push_back(random_vec(rng, 8));
        ids.push_back(std::to_string(c));
      }
    }
    sum += evaluate(q, ids, sat, Direction::DroneToSatellite).recall_at.at(1);
  }
  EXPECT_NEAR(sum / seeds, 0.1, 0.015);
}

TEST(Evaluate, MissingGroundTruthIsExcludedAndEmptyIsAnError) {
  const auto g = make_gallery({{0.0}, {1.0}}, {"a", "b"}, View::Satellite);
  const auto r = evaluate({{0.1}, {5.0}}, {"a", "zzz"}, g, Direction::DroneToSatellite);
  EXPECT_EQ(r.excluded, 1);
  EXPECT_EQ(r.evaluated(), 1);
  EXPECT_EQ(r.recall_at.at(1), 1.0);
  try {
    evaluate({}, {}, g, Direction::DroneToSatellite);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no queries");
  }
}

TEST(Evaluate, FiveClassToyMatchesOracle) {
  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> gd, qd;
  std::vector<std::string> gids, qids;
  for (int c = 0; c < 5; ++c) {
    for (int v = 0; v < 3; ++v) {
      gd.push_back(random_vec(rng, 3));
      gids.push_back("c" + std::to_string(c));
    }
    qd.push_back(random_vec(rng, 3));
    qids.push_back("c" + std::to_string(c));
  }
  const auto report = evaluate(qd, qids, make_gallery(gd, gids, View::Drone), Direction::SatelliteToDrone);
  const auto oracle = fixtures::oracle_evaluate(qd, qids, gd, gids);
  for (int k : {1, 5, 10}) EXPECT_EQ(report.recall_at.at(k), fixtures::oracle_recall(oracle.first_rank, k));
  EXPECT_EQ(report.ap_mean, fixtures::oracle_mean(oracle.ap));
  EXPECT_EQ(report.top1percent_k, 1);
}

TEST(Evaluate, RecallIsMonotoneInK) {
  std::mt19937_64 rng(6);
  std::vector<std::vector<double>> gd, qd;
  std::vector<std::string> gids, qids;
  for (int i = 0; i < 40; ++i) {
    gd.push_back(random_vec(rng, 3));
    gids.push_back(std::to_string(i % 8));
    qd.push_back(random_vec(rng, 3));
    qids.push_back(std::to_string(i % 8));
  }
  std::vector<int> ks;
  for (int k = 1; k <= 40; ++k) ks.push_back(k);
  const auto r = evaluate(qd, qids, make_gallery(gd, gids, View::Satellite), Direction::DroneToSatellite, ks);
  for (int k = 2; k <= 40; ++k) EXPECT_GE(r.recall_at.at(k), r.recall_at.at(k - 1));
  EXPECT_EQ(r.recall_at.at(40), 1.0);
}

TEST(Report, FilesAndKeys) {
  const auto g = make_gallery({{0.0}, {1.0}}, {"a", "b"}, View::Satellite);
  const auto r = evaluate({{0.1}, {0.9}}, {"a", "b"}, g, Direction::DroneToSatellite);
  const auto kv = format_report_kv(r);
  for (const char* key : {"recall@1=", "recall@5=", "recall@10=", "recall@top1percent=", "ap="}) {
    EXPECT_NE(kv.find(key), std::string::npos) << key;
  }
  const auto dir = std::filesystem::temp_directory_path() / "uavgeo_report_test";
  write_report(r, dir, {"q1.png", "q2.png"});
  for (const char* f : {"report.txt", "report.kv", "ranks.tsv"}) EXPECT_GT(std::filesystem::file_size(dir / f), 0u);
}

TEST(Direction, Parsing) {
  EXPECT_EQ(direction_from_string("drone2sat"), Direction::DroneToSatellite);
  EXPECT_EQ(direction_from_string("sat2drone"), Direction::SatelliteToDrone);
  EXPECT_EQ(query_view(Direction::SatelliteToDrone), View::Satellite);
  EXPECT_EQ(gallery_view(Direction::SatelliteToDrone), View::Drone);
  EXPECT_THROW(direction_from_string("sideways"), ConfigError);
}
