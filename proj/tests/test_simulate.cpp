#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dcm/model.hpp"
#include "dcm/rng.hpp"
#include "dcm/simulate.hpp"

using namespace dcm;

namespace {

// Scalar root oracle: solve logistic(intercept + x) = target by bisection.
double solve_gap_logit(double intercept, double target) {
  double lo = -50.0, hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (logistic(intercept + mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("study q-matrix layout") {
  const auto q = build_paper_qmatrix();
  CHECK(q.n_items() == 28);
  CHECK(q.n_attributes() == 3);
  CHECK(q.column_sums() == std::vector<int>{16, 16, 16});
  for (int i = 0; i < 4; ++i) {
    CHECK(q.row(i)[0] == 1);
    CHECK(q.row(i)[1] == 0);
    CHECK(q.row(i)[2] == 0);
  }
  for (int i = 24; i < 28; ++i) {
    CHECK(q.row(i)[0] == 1);
    CHECK(q.row(i)[1] == 1);
    CHECK(q.row(i)[2] == 1);
  }
  // Blocks of four identical rows.
  for (int block = 0; block < 7; ++block) {
    for (int k = 1; k < 4; ++k) {
      CHECK(q.rows()[4 * block + k] == q.rows()[4 * block]);
    }
  }
}

TEST_CASE("true parameters per variant") {
  const auto q = build_paper_qmatrix();
  const auto medium = ItemQualitySpec::medium();
  const auto high = ItemQualitySpec::high();

  SUBCASE("lcdm takes the parameter column verbatim") {
    const auto params = build_true_item_params(q, medium, ModelVariant::Lcdm);
    const auto& three_attr = params[24];
    CHECK(three_attr.intercept == -1.10);
    REQUIRE(three_attr.effects.size() == 7);
    for (const auto& [key, value] : three_attr.effects) {
      if (key.order() == 1) CHECK(value == 1.30);
      if (key.order() == 2) CHECK(value == 0.23);
      if (key.order() == 3) CHECK(value == 3.40);
    }
  }

  SUBCASE("dina interaction recalibrated to the full-mastery target") {
    const auto params = build_true_item_params(q, medium, ModelVariant::Dina);
    const auto& two_attr = params[12];  // q = (1,1,0)
    REQUIRE(two_attr.effects.size() == 1);
    CHECK(two_attr.effects[0].first.label() == "1,2");
    CHECK(two_attr.effects[0].second == doctest::Approx(2.8346).epsilon(1e-4));
    CHECK(two_attr.effects[0].second ==
          doctest::Approx(solve_gap_logit(-1.10, 0.85)).epsilon(1e-9));
    // Full mastery lands exactly on the published probability.
    const AttributeVector both({1, 1, 0});
    CHECK(response_probability(both, two_attr, q.row(12), ModelVariant::Dina) ==
          doctest::Approx(0.85).epsilon(1e-12));

    const auto& three_attr = params[24];
    CHECK(three_attr.effects[0].second ==
          doctest::Approx(solve_gap_logit(-1.10, 0.99)).epsilon(1e-9));
  }

  SUBCASE("dina verbatim policy keeps the table interaction") {
    TrueParamPolicy policy;
    policy.dina_recalibrate_interaction = false;
    const auto params = build_true_item_params(q, medium, ModelVariant::Dina, policy);
    CHECK(params[12].effects[0].second == 0.23);
    CHECK(params[24].effects[0].second == 3.40);
  }

  SUBCASE("crum keeps intercept and mains") {
    const auto params = build_true_item_params(q, high, ModelVariant::Crum);
    const auto& single = params[0];
    CHECK(single.intercept == -2.0);
    REQUIRE(single.effects.size() == 1);
    CHECK(single.effects[0].second == 2.0);
    const auto& three_attr = params[24];
    REQUIRE(three_attr.effects.size() == 3);
    for (const auto& [key, value] : three_attr.effects) {
      CHECK(key.order() == 1);
      CHECK(value == 2.0);
    }
  }

  SUBCASE("crum recalibration splits the full-mastery gap across mains") {
    TrueParamPolicy policy;
    policy.crum_recalibrate_mains = true;
    const auto params = build_true_item_params(q, medium, ModelVariant::Crum, policy);
    const auto& two_attr = params[12];
    const double expected = solve_gap_logit(-1.10, 0.85) / 2.0;
    for (const auto& [key, value] : two_attr.effects) {
      CHECK(value == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("profile sampling") {
  const auto lattice = enumerate_profiles(3);

  SUBCASE("point mass population") {
    PopulationSpec point;
    point.proportions.assign(8, 0.0);
    point.proportions[7] = 1.0;
    const auto profiles = sample_profiles(500, point, lattice, 7);
    for (const auto& p : profiles) {
      CHECK(p.bits() == std::vector<std::uint8_t>{1, 1, 1});
    }
  }

  SUBCASE("study population marginals and first profile share") {
    const auto pop = PopulationSpec::study_population();
    double sum = 0.0;
    for (double p : pop.proportions) sum += p;
    CHECK(sum == doctest::Approx(1.001).epsilon(1e-12));

    const int n = 100000;
    const auto profiles = sample_profiles(n, pop, lattice, 20260809);
    double share_zero = 0.0;
    std::array<double, 3> mastery{};
    for (const auto& p : profiles) {
      if (p.to_index() == 0) share_zero += 1.0;
      for (int a = 0; a < 3; ++a) mastery[a] += p.mastered(a);
    }
    share_zero /= n;
    CHECK(share_zero == doctest::Approx(0.293 / 1.001).epsilon(0.017));
    for (int a = 0; a < 3; ++a) {
      CHECK(mastery[a] / n == doctest::Approx(0.504).epsilon(0.01));
    }
  }

  SUBCASE("deterministic given seed") {
    const auto pop = PopulationSpec::study_population();
    const auto a = sample_profiles(1000, pop, lattice, 99);
    const auto b = sample_profiles(1000, pop, lattice, 99);
    CHECK(a == b);
    const auto c = sample_profiles(1000, pop, lattice, 100);
    CHECK(a != c);
  }

  SUBCASE("rejects bad input") {
    PopulationSpec neg;
    neg.proportions = {0.5, -0.1, 0.3, 0.3, 0.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(sample_profiles(10, neg, lattice, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_profiles(0, PopulationSpec::study_population(), lattice, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("response generation") {
  const auto q = build_paper_qmatrix();
  const auto lattice = enumerate_profiles(3);

  SUBCASE("saturated intercepts give an all-ones matrix") {
    auto params = build_true_item_params(q, ItemQualitySpec::medium(), ModelVariant::Lcdm);
    for (auto& item : params) item.intercept = 50.0;
    const auto profiles = sample_profiles(50, PopulationSpec::study_population(),
                                          lattice, 3);
    const auto data = generate_responses(profiles, q, params, ModelVariant::Lcdm, 4);
    for (auto v : data.data) CHECK(v == 1);
  }

  SUBCASE("non-master rate matches the medium intercept") {
    const auto params =
        build_true_item_params(q, ItemQualitySpec::medium(), ModelVariant::Lcdm);
    const std::vector<AttributeVector> profiles(10000, lattice.profile(0));
    const auto data = generate_responses(profiles, q, params, ModelVariant::Lcdm, 11);
    for (int i = 0; i < q.n_items(); ++i) {
      double mean = 0.0;
      for (int e = 0; e < data.n_examinees; ++e) mean += data.at(e, i);
      mean /= data.n_examinees;
      CHECK(std::fabs(mean - 0.25) < 0.015);
    }
  }

  SUBCASE("dina gate holds for partial mastery at high quality") {
    const auto params =
        build_true_item_params(q, ItemQualitySpec::high(), ModelVariant::Dina);
    const std::vector<AttributeVector> profiles(10000, AttributeVector({1, 1, 0}));
    const auto data = generate_responses(profiles, q, params, ModelVariant::Dina, 13);
    for (int i = 24; i < 28; ++i) {  // three-attribute items, gate unmet
      double mean = 0.0;
      for (int e = 0; e < data.n_examinees; ++e) mean += data.at(e, i);
      mean /= data.n_examinees;
      CHECK(std::fabs(mean - 0.12) < 0.01);
    }
  }

  SUBCASE("bit-identical for a fixed seed") {
    SimCondition condition;
    condition.generating_variant = ModelVariant::Crum;
    condition.n_examinees = 300;
    condition.quality = ItemQuality::High;
    const auto a = generate_condition_data(condition, q, {}, 77);
    const auto b = generate_condition_data(condition, q, {}, 77);
    CHECK(a.data == b.data);
    CHECK(a.true_profiles == b.true_profiles);
    const auto c = generate_condition_data(condition, q, {}, 78);
    CHECK(a.data != c.data);
  }
}

TEST_CASE("marginal calibration against the analytic mixture") {
  const auto q = build_paper_qmatrix();
  const auto lattice = enumerate_profiles(3);
  auto pop = PopulationSpec::study_population();
  pop.normalize();

  for (auto variant : {ModelVariant::Lcdm, ModelVariant::Dina, ModelVariant::Crum}) {
    const auto params =
        build_true_item_params(q, ItemQualitySpec::medium(), variant);
    const int n = 100000;
    const auto profiles = sample_profiles(n, pop, lattice, 555);
    const auto data = generate_responses(profiles, q, params, variant, 556);
    for (int i = 0; i < q.n_items(); ++i) {
      double analytic = 0.0;
      for (std::size_t c = 0; c < lattice.size(); ++c) {
        analytic += pop.proportions[c] *
                    response_probability(lattice.profile(c), params[i], q.row(i), variant);
      }
      double empirical = 0.0;
      for (int e = 0; e < n; ++e) empirical += data.at(e, i);
      empirical /= n;
      CHECK(std::fabs(empirical - analytic) < 0.01);
    }
  }
}
