#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "moc/metrics.hpp"
#include "moc/rng.hpp"
#include "test_util.hpp"

using Catch::Approx;

namespace {

moc::RiskScoredCohort scored(std::vector<moc::SurvivalRecord> records,
                             std::vector<double> risks) {
  moc::RiskScoredCohort sc;
  sc.records = std::move(records);
  for (std::size_t i = 0; i < sc.records.size(); ++i) sc.risk[sc.records[i].id] = risks[i];
  return sc;
}

}  // namespace

TEST_CASE("concordance on hand-checked cohorts", "[metrics]") {
  // perfectly reversed risks, all uncensored
  {
    auto sc = scored({{"a", 1, true}, {"b", 2, true}, {"c", 3, true}, {"d", 4, true}},
                     {0.9, 0.7, 0.4, 0.1});
    REQUIRE(moc::c_index(sc) == 1.0);
  }
  // identical risks: every comparable pair ties
  {
    auto sc = scored({{"a", 1, true}, {"b", 2, true}, {"c", 3, false}}, {0.5, 0.5, 0.5});
    REQUIRE(moc::c_index(sc) == 0.5);
  }
  // mixed case: comparable (a,b),(a,c),(b,c); concordant (a,b),(a,c)
  {
    auto sc = scored({{"a", 1, true}, {"b", 2, true}, {"c", 3, false}}, {0.9, 0.2, 0.5});
    REQUIRE(moc::c_index(sc) == Approx(2.0 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("concordance errors without comparable pairs", "[metrics]") {
  // the only early subject is censored, so nothing is comparable
  auto sc = scored({{"a", 1, false}, {"b", 2, false}}, {0.1, 0.9});
  REQUIRE_THROWS_AS(moc::c_index(sc), moc::Error);
}

TEST_CASE("concordance equals the double-loop oracle", "[metrics]") {
  for (int trial = 0; trial < 60; ++trial) {
    moc::Rng rng(700 + static_cast<std::uint64_t>(trial));
    const int n = 2 + static_cast<int>(rng.bounded(99));
    std::vector<moc::SurvivalRecord> records;
    std::vector<double> risks;
    for (int i = 0; i < n; ++i) {
      records.push_back({"r" + std::to_string(i), 1.0 + static_cast<double>(rng.bounded(15)),
                         rng.uniform() < 0.7});
      // quantized risks force plenty of prediction ties
      risks.push_back(static_cast<double>(rng.bounded(10)) / 10.0);
    }
    const auto sc = scored(records, risks);
    const double expected = testutil::c_index_oracle(sc);
    if (expected < 0.0) {
      REQUIRE_THROWS_AS(moc::c_index(sc), moc::Error);
    } else {
      REQUIRE(moc::c_index(sc) == expected);  // exact, both sides count in halves
    }
  }
}

TEST_CASE("concordance symmetry and monotone invariance", "[metrics]") {
  moc::Rng rng(71);
  const int n = 60;
  std::vector<moc::SurvivalRecord> records;
  std::vector<double> risks;
  for (int i = 0; i < n; ++i) {
    records.push_back({"r" + std::to_string(i), rng.uniform(1.0, 50.0), rng.uniform() < 0.7});
    risks.push_back(rng.normal());  // continuous, so ties have probability zero
  }
  const auto sc = scored(records, risks);
  std::vector<double> negated = risks;
  for (double& r : negated) r = -r;
  const auto sc_neg = scored(records, negated);
  REQUIRE(moc::c_index(sc) + moc::c_index(sc_neg) == Approx(1.0).epsilon(1e-12));

  std::vector<double> squashed = risks;
  for (double& r : squashed) r = 1.0 / (1.0 + std::exp(-3.0 * r));  // strictly increasing
  REQUIRE(moc::c_index(scored(records, squashed)) == moc::c_index(sc));
}

TEST_CASE("product-limit curve on hand-checked cohorts", "[metrics]") {
  // no events: the curve stays at 1 (no event times at all)
  {
    std::vector<moc::SurvivalRecord> rs = {{"a", 1, false}, {"b", 2, false}};
    const auto km = moc::km_curve(rs);
    REQUIRE(km.times.empty());
  }
  // one event at t=1 with four at risk
  {
    std::vector<moc::SurvivalRecord> rs = {
        {"a", 1, true}, {"b", 2, false}, {"c", 3, false}, {"d", 4, false}};
    const auto km = moc::km_curve(rs);
    REQUIRE(km.times == std::vector<double>{1.0});
    REQUIRE(km.survival[0] == Approx(0.75).epsilon(1e-15));
    REQUIRE(km.at_risk[0] == 4);
    REQUIRE(km.events[0] == 1);
  }
  // two events, two subjects: 1/2 then 0
  {
    std::vector<moc::SurvivalRecord> rs = {{"a", 1, true}, {"b", 2, true}};
    const auto km = moc::km_curve(rs);
    REQUIRE(km.survival == std::vector<double>{0.5, 0.0});
  }
  // censored subject leaves the risk set after its time
  {
    std::vector<moc::SurvivalRecord> rs = {
        {"a", 1, true}, {"b", 2, false}, {"c", 3, true}, {"d", 4, true}};
    const auto km = moc::km_curve(rs);
    // S(1) = 3/4; S(3) = 3/4 * 1/2 = 3/8; S(4) = 0
    REQUIRE(km.survival[0] == Approx(0.75).epsilon(1e-15));
    REQUIRE(km.survival[1] == Approx(0.375).epsilon(1e-15));
    REQUIRE(km.survival[2] == Approx(0.0).margin(1e-15));
  }
}

TEST_CASE("product-limit curve is non-increasing on random cohorts", "[metrics]") {
  for (int trial = 0; trial < 20; ++trial) {
    moc::Rng rng(730 + static_cast<std::uint64_t>(trial));
    std::vector<moc::SurvivalRecord> rs;
    const int n = 2 + static_cast<int>(rng.bounded(60));
    for (int i = 0; i < n; ++i) {
      rs.push_back({"r" + std::to_string(i), 1.0 + static_cast<double>(rng.bounded(10)),
                    rng.uniform() < 0.6});
    }
    const auto km = moc::km_curve(rs);
    double prev = 1.0;
    for (double s : km.survival) {
      REQUIRE(s <= prev + 1e-15);
      REQUIRE(s >= 0.0);
      REQUIRE(s <= 1.0);
      prev = s;
    }
  }
}

TEST_CASE("chi-square tail agrees with the integration oracle", "[metrics]") {
  for (const double x : {0.1, 1.0, 3.841, 6.635, 10.0}) {
    REQUIRE(moc::chisq1_sf(x) == Approx(testutil::chisq1_sf_oracle(x)).margin(1e-6));
  }
  REQUIRE(moc::chisq1_sf(3.841) == Approx(0.05).margin(1e-3));
}

TEST_CASE("log-rank on duplicated groups is null", "[metrics]") {
  moc::Rng rng(74);
  std::vector<moc::SurvivalRecord> group;
  for (int i = 0; i < 30; ++i) {
    group.push_back({"g" + std::to_string(i), rng.uniform(1.0, 20.0), rng.uniform() < 0.8});
  }
  const auto lr = moc::logrank_test(group, group);
  REQUIRE(lr.statistic == Approx(0.0).margin(1e-12));
  REQUIRE(lr.p_value >= 0.99);
}

TEST_CASE("log-rank separates disjoint survival distributions", "[metrics]") {
  std::vector<moc::SurvivalRecord> early, late;
  for (int i = 0; i < 40; ++i) {
    early.push_back({"e" + std::to_string(i), 1.0 + i * 0.1, true});
    late.push_back({"l" + std::to_string(i), 50.0 + i * 0.1, true});
  }
  const auto lr = moc::logrank_test(early, late);
  REQUIRE(lr.p_value < 0.01);
}

TEST_CASE("log-rank statistic 3.841 corresponds to p of about 0.05", "[metrics]") {
  REQUIRE(moc::chisq1_sf(3.841) == Approx(0.05).margin(1e-3));
}

TEST_CASE("log-rank input validation", "[metrics]") {
  std::vector<moc::SurvivalRecord> a = {{"a", 1, false}};
  std::vector<moc::SurvivalRecord> b = {{"b", 2, false}};
  REQUIRE_THROWS_AS(moc::logrank_test(a, b), moc::Error);  // no events
  std::vector<moc::SurvivalRecord> empty;
  std::vector<moc::SurvivalRecord> ok = {{"a", 1, true}};
  REQUIRE_THROWS_AS(moc::logrank_test(empty, ok), moc::Error);
}

TEST_CASE("median split on distinct risks", "[metrics]") {
  auto sc = scored({{"a", 1, true}, {"b", 2, true}, {"c", 3, true}, {"d", 4, true}},
                   {0.1, 0.2, 0.8, 0.9});
  const auto split = moc::median_split(sc);
  REQUIRE(split.low_ids == std::vector<std::string>{"a", "b"});
  REQUIRE(split.high_ids == std::vector<std::string>{"c", "d"});
}

TEST_CASE("median split balances ties deterministically", "[metrics]") {
  auto sc = scored({{"a", 1, true}, {"b", 2, true}, {"c", 3, true}, {"d", 4, true}},
                   {0.5, 0.5, 0.5, 0.5});
  const auto split = moc::median_split(sc);
  REQUIRE(split.low_ids.size() == 2);
  REQUIRE(split.high_ids.size() == 2);
  const auto again = moc::median_split(sc);
  REQUIRE(split.low_ids == again.low_ids);
  REQUIRE(split.high_ids == again.high_ids);
}

TEST_CASE("median split with odd cohorts differs by exactly one", "[metrics]") {
  auto sc = scored({{"a", 1, true}, {"b", 2, true}, {"c", 3, true}, {"d", 4, true}, {"e", 5, true}},
                   {0.1, 0.3, 0.5, 0.7, 0.9});
  const auto split = moc::median_split(sc);
  const auto diff = static_cast<long>(split.low_ids.size()) -
                    static_cast<long>(split.high_ids.size());
  REQUIRE(std::abs(diff) == 1);
}
