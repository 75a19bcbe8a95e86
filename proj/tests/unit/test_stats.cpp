#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "headprobe/error.hpp"
#include "headprobe/stats.hpp"
#include "support.hpp"

namespace headprobe {
namespace {

std::vector<SurprisalRecord> fixture_records(const nlohmann::json& c) {
  std::vector<SurprisalRecord> out;
  for (const auto& r : c.at("records")) {
    out.push_back({r.at("set_id"), Condition::parse(r.at("condition").get<std::string>()), r.at("y")});
  }
  return out;
}

TEST(Regression, MatchesReferenceOls) {
  const auto fx = testing::read_json(testing::fixture("regression_cases.json"));
  for (const auto& c : fx.at("cases")) {
    const auto obs = to_observations(fixture_records(c));
    for (const Coding coding : {Coding::kSum, Coding::kTreatment}) {
      const RegressionFit fit = fit_two_by_two(obs, coding);
      EXPECT_EQ(fit.n_observations, obs.size());
      EXPECT_EQ(fit.residual_df, obs.size() - 4);
      const auto& ref = c.at("fits").at(to_string(coding));
      const auto terms = fit.terms();
      for (std::size_t j = 0; j < 4; ++j) {
        const auto& r = ref.at(RegressionFit::kTermNames[j]);
        const std::string where = std::string(to_string(coding)) + " " + RegressionFit::kTermNames[j];
        EXPECT_NEAR(terms[j]->estimate, r.at("estimate").get<double>(), 1e-9) << where;
        EXPECT_NEAR(terms[j]->se, r.at("se").get<double>(), 1e-9) << where;
        EXPECT_NEAR(terms[j]->t, r.at("t").get<double>(), 1e-8) << where;
        EXPECT_NEAR(terms[j]->p, r.at("p").get<double>(), 1e-9) << where;
      }
    }
  }
}

std::vector<Observation> planted(std::mt19937_64& rng, int per_cell, std::array<double, 4> beta, Coding coding) {
  const double lo = coding == Coding::kSum ? -0.5 : 0.0;
  const double hi = coding == Coding::kSum ? 0.5 : 1.0;
  std::vector<Observation> obs;
  for (int i = 0; i < per_cell; ++i) {
    for (const Condition c : Condition::all()) {
      const double a = c.dependent_plausible ? lo : hi;
      const double b = c.distractor_plausible ? lo : hi;
      obs.push_back({c.dependent_plausible, c.distractor_plausible, beta[0] + beta[1] * a + beta[2] * b + beta[3] * a * b});
    }
  }
  std::shuffle(obs.begin(), obs.end(), rng);
  return obs;
}

TEST(RegressionProperty, RecoversPlantedCoefficients) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::array<double, 4> beta = {u(rng), u(rng), u(rng), u(rng)};
    for (const Coding coding : {Coding::kSum, Coding::kTreatment}) {
      const auto fit = fit_two_by_two(planted(rng, 2 + static_cast<int>(rng() % 20), beta, coding), coding);
      const auto terms = fit.terms();
      for (std::size_t j = 0; j < 4; ++j) {
        ASSERT_NEAR(terms[j]->estimate, beta[j], 1e-9);
        ASSERT_EQ(terms[j]->se, 0.0);
      }
    }
  }
}

TEST(Regression, AllEqualResponses) {
  std::vector<Observation> obs;
  for (int i = 0; i < 3; ++i)
    for (const Condition c : Condition::all()) obs.push_back({c.dependent_plausible, c.distractor_plausible, 7.25});
  const auto fit = fit_two_by_two(obs);
  EXPECT_NEAR(fit.intercept.estimate, 7.25, 1e-12);
  EXPECT_EQ(fit.intercept.t, std::numeric_limits<double>::infinity());
  EXPECT_EQ(fit.intercept.p, 0.0);
  for (const Coefficient* c : {&fit.dependent, &fit.distractor, &fit.interaction}) {
    EXPECT_NEAR(c->estimate, 0.0, 1e-12);
    EXPECT_EQ(c->se, 0.0);
    EXPECT_EQ(c->p, 1.0);
  }
}

TEST(RegressionProperty, ObservationOrderInvariant) {
  const auto fx = testing::read_json(testing::fixture("regression_cases.json"));
  auto obs = to_observations(fixture_records(fx.at("cases")[0]));
  const auto base = fit_two_by_two(obs);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(obs.begin(), obs.end(), rng);
    const auto fit = fit_two_by_two(obs);
    const auto a = base.terms(), b = fit.terms();
    for (std::size_t j = 0; j < 4; ++j) {
      ASSERT_NEAR(a[j]->estimate, b[j]->estimate, 1e-10);
      ASSERT_NEAR(a[j]->se, b[j]->se, 1e-10);
    }
  }
}

TEST(RegressionProperty, SumCodedMainEffectsEqualSensitivity) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(10.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SurprisalRecord> records;
    const int n_sets = 2 + static_cast<int>(rng() % 30);
    for (int s = 0; s < n_sets; ++s)
      for (const Condition c : Condition::all()) records.push_back({"s" + std::to_string(s), c, g(rng)});
    const auto fit = fit_two_by_two(to_observations(records), Coding::kSum);
    const auto sens = plausibility_sensitivity(records);
    ASSERT_NEAR(fit.dependent.estimate, sens.dependent_sensitivity_bits, 1e-9);
    ASSERT_NEAR(fit.distractor.estimate, sens.distractor_sensitivity_bits, 1e-9);
  }
}

TEST(RegressionProperty, TreatmentCodingIsReparameterisation) {
  const auto fx = testing::read_json(testing::fixture("regression_cases.json"));
  const auto obs = to_observations(fixture_records(fx.at("cases")[3]));
  const auto s = fit_two_by_two(obs, Coding::kSum);
  const auto t = fit_two_by_two(obs, Coding::kTreatment);
  EXPECT_NEAR(t.interaction.estimate, s.interaction.estimate, 1e-9);
  EXPECT_NEAR(t.interaction.se, s.interaction.se, 1e-9);
  // Treatment main effects are simple effects at the plausible level.
  EXPECT_NEAR(t.dependent.estimate, s.dependent.estimate - s.interaction.estimate / 2, 1e-9);
  EXPECT_NEAR(t.distractor.estimate, s.distractor.estimate - s.interaction.estimate / 2, 1e-9);
  // Balanced cells: the simple-effect SE is sqrt(2) times the main-effect SE.
  const auto fx0 = to_observations(fixture_records(fx.at("cases")[0]));
  EXPECT_NEAR(fit_two_by_two(fx0, Coding::kTreatment).dependent.se / fit_two_by_two(fx0).dependent.se,
              std::sqrt(2.0), 1e-9);
}

TEST(Regression, Errors) {
  std::vector<Observation> obs;
  for (const Condition c : Condition::all()) obs.push_back({c.dependent_plausible, c.distractor_plausible, 1.0});
  EXPECT_THROW(fit_two_by_two(obs), StatisticsError);
  obs.push_back({true, true, 2.0});
  EXPECT_NO_THROW(fit_two_by_two(obs));
  std::vector<Observation> missing_cell;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) missing_cell.push_back({c != 2, c != 1, static_cast<double>(i + c)});
  EXPECT_THROW(fit_two_by_two(missing_cell), StatisticsError);
}

TEST(TwoTailedP, KnownValuesAndMonotonicity) {
  EXPECT_NEAR(two_tailed_p(0.0, 10), 1.0, 1e-15);
  EXPECT_NEAR(two_tailed_p(2.228138851986274, 10), 0.05, 1e-9);
  EXPECT_NEAR(two_tailed_p(-2.228138851986274, 10), 0.05, 1e-9);
  EXPECT_NEAR(two_tailed_p(1.959963984540054, 1e9), 0.05, 1e-6);
  EXPECT_EQ(two_tailed_p(std::numeric_limits<double>::infinity(), 3), 0.0);
  EXPECT_TRUE(std::isnan(two_tailed_p(std::nan(""), 3)));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  for (int i = 0; i < 500; ++i) {
    const double df = 1 + static_cast<double>(rng() % 200);
    const double a = u(rng), b = u(rng);
    const double pa = two_tailed_p(a, df), pb = two_tailed_p(b, df);
    ASSERT_GE(pa, 0.0);
    ASSERT_LE(pa, 1.0);
    if (a < b) ASSERT_GE(pa, pb);
    if (a > b) ASSERT_LE(pa, pb);
  }
}

TEST(ConditionSummary, MeansAndStandardErrors) {
  std::vector<SurprisalRecord> records;
  const double values[3][4] = {{1, 2, 3, 4}, {3, 2, 5, 4}, {5, 2, 7, 4}};
  for (int s = 0; s < 3; ++s)
    for (int c = 0; c < 4; ++c) records.push_back({"s" + std::to_string(s), Condition::from_index(c), values[s][c]});
  const auto summary = condition_summary(records);
  EXPECT_DOUBLE_EQ(summary[0].mean, 3.0);
  EXPECT_NEAR(summary[0].se, 2.0 / std::sqrt(3.0), 1e-12);
  EXPECT_EQ(summary[1].se, 0.0);
  EXPECT_EQ(summary[2].n, 3u);
  EXPECT_EQ(summary[3].condition, Condition::from_index(3));

  records.resize(4);
  for (const auto& s : condition_summary(records)) EXPECT_EQ(s.se, 0.0);
  records.pop_back();
  EXPECT_THROW(condition_summary(records), StatisticsError);
}

}  // namespace
}  // namespace headprobe
