#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dcm/io.hpp"
#include "dcm/model.hpp"
#include "dcm/rng.hpp"
#include "dcm/simulate.hpp"

using namespace dcm;

namespace {

ItemParameters lcdm_item(double intercept, double main, double two_way,
                         double three_way, std::span<const std::uint8_t> q_row) {
  ItemParameters item;
  item.intercept = intercept;
  for (const auto& key : active_effects(q_row, ModelVariant::Lcdm)) {
    const double v = key.order() == 1 ? main : key.order() == 2 ? two_way : three_way;
    item.effects.emplace_back(key, v);
  }
  return item;
}

}  // namespace

TEST_CASE("profile lattice enumeration") {
  const auto lattice = enumerate_profiles(3);
  CHECK(lattice.size() == 8);
  CHECK(lattice.profile(0).bits() == std::vector<std::uint8_t>{0, 0, 0});
  CHECK(lattice.profile(7).bits() == std::vector<std::uint8_t>{1, 1, 1});

  const auto tiny = enumerate_profiles(1);
  CHECK(tiny.size() == 2);
  CHECK(tiny.profile(0).bits() == std::vector<std::uint8_t>{0});
  CHECK(tiny.profile(1).bits() == std::vector<std::uint8_t>{1});

  const auto pair = enumerate_profiles(2);
  CHECK(pair.profile(0).bits() == std::vector<std::uint8_t>{0, 0});
  CHECK(pair.profile(1).bits() == std::vector<std::uint8_t>{1, 0});
  CHECK(pair.profile(2).bits() == std::vector<std::uint8_t>{0, 1});
  CHECK(pair.profile(3).bits() == std::vector<std::uint8_t>{1, 1});

  CHECK_THROWS_AS(enumerate_profiles(0), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_profiles(17), std::invalid_argument);

  for (std::size_t c = 0; c < lattice.size(); ++c) {
    CHECK(lattice.profile(c).to_index() == c);
  }
}

TEST_CASE("active effects per variant") {
  const std::vector<std::uint8_t> q23 = {0, 1, 1};
  const auto lcdm = active_effects(q23, ModelVariant::Lcdm);
  REQUIRE(lcdm.size() == 3);
  CHECK(lcdm[0].label() == "2");
  CHECK(lcdm[1].label() == "3");
  CHECK(lcdm[2].label() == "2,3");

  const auto dina = active_effects(q23, ModelVariant::Dina);
  REQUIRE(dina.size() == 1);
  CHECK(dina[0].label() == "2,3");

  const auto crum = active_effects(q23, ModelVariant::Crum);
  REQUIRE(crum.size() == 2);
  CHECK(crum[0].label() == "2");
  CHECK(crum[1].label() == "3");

  const std::vector<std::uint8_t> q1 = {1, 0, 0};
  for (auto v : {ModelVariant::Lcdm, ModelVariant::Dina, ModelVariant::Crum}) {
    const auto single = active_effects(q1, v);
    REQUIRE(single.size() == 1);
    CHECK(single[0].label() == "1");
  }

  const std::vector<std::uint8_t> zero = {0, 0, 0};
  CHECK_THROWS_AS(active_effects(zero, ModelVariant::Lcdm), std::invalid_argument);
}

TEST_CASE("effect key ordering and labels") {
  EffectKey a({0, 3}), b({1, 2});
  CHECK(a < b);  // same cardinality: lexicographic on the index sequence
  CHECK(EffectKey({1}) < a);
  CHECK(a.label() == "1,4");
  CHECK(EffectKey::parse("1,4").value() == a);
  CHECK(!EffectKey::parse("").has_value());
  CHECK(!EffectKey::parse("2,2").has_value());
  CHECK(!EffectKey::parse("0").has_value());
  CHECK_THROWS_AS(EffectKey({}), std::invalid_argument);
  CHECK_THROWS_AS(EffectKey({1, 1}), std::invalid_argument);
}

TEST_CASE("design vectors") {
  const std::vector<std::uint8_t> q23 = {0, 1, 1};
  const AttributeVector alpha({1, 1, 0});
  CHECK(build_design_vector(alpha, q23, ModelVariant::Lcdm) ==
        std::vector<std::uint8_t>{1, 0, 0});

  const AttributeVector none({0, 0, 0});
  CHECK(build_design_vector(none, q23, ModelVariant::Lcdm) ==
        std::vector<std::uint8_t>{0, 0, 0});

  const std::vector<std::uint8_t> q_all = {1, 1, 1};
  const AttributeVector all({1, 1, 1});
  CHECK(build_design_vector(all, q_all, ModelVariant::Lcdm) ==
        std::vector<std::uint8_t>(7, 1));
}

TEST_CASE("response probabilities against published cells") {
  const std::vector<std::uint8_t> q_all = {1, 1, 1};
  const auto medium = lcdm_item(-1.10, 1.30, 0.23, 3.40, q_all);

  const AttributeVector all({1, 1, 1});
  CHECK(response_probability(all, medium, q_all, ModelVariant::Lcdm) ==
        doctest::Approx(logistic(6.89)).epsilon(1e-12));
  CHECK(response_probability(all, medium, q_all, ModelVariant::Lcdm) > 0.99);

  const AttributeVector none({0, 0, 0});
  CHECK(response_probability(none, medium, q_all, ModelVariant::Lcdm) ==
        doctest::Approx(0.25).epsilon(0.01));

  // DINA conjunctive gate: partial mastery stays at the intercept.
  const std::vector<std::uint8_t> q23 = {0, 1, 1};
  ItemParameters gate;
  gate.intercept = -1.10;
  gate.effects.emplace_back(EffectKey({1, 2}), 2.8346);
  const AttributeVector partial({1, 1, 0});
  CHECK(response_probability(partial, gate, q23, ModelVariant::Dina) ==
        doctest::Approx(logistic(-1.10)).epsilon(1e-12));

  const std::vector<std::uint8_t> q12 = {1, 1, 0};
  const auto high2 = lcdm_item(-2.0, 2.0, 1.0, 0.1, q12);
  const AttributeVector both({1, 1, 0});
  CHECK(response_probability(both, high2, q12, ModelVariant::Lcdm) ==
        doctest::Approx(logistic(3.0)).epsilon(1e-12));
  CHECK(response_probability(both, high2, q12, ModelVariant::Lcdm) ==
        doctest::Approx(0.95).epsilon(0.01));

  ItemParameters bad;
  bad.intercept = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(response_probability(none, bad, q_all, ModelVariant::Lcdm),
                  std::invalid_argument);
}

TEST_CASE("probabilities stay inside (0,1) and match the intercept at zero") {
  Rng rng(991);
  const auto lattice = enumerate_profiles(3);
  const std::vector<std::uint8_t> q_all = {1, 1, 1};
  for (int trial = 0; trial < 200; ++trial) {
    const auto item = lcdm_item(rng.normal(0, 20), rng.normal(0, 20),
                                rng.normal(0, 20), rng.normal(0, 20), q_all);
    for (std::size_t c = 0; c < lattice.size(); ++c) {
      const double p =
          response_probability(lattice.profile(c), item, q_all, ModelVariant::Lcdm);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
    CHECK(response_probability(lattice.profile(0), item, q_all, ModelVariant::Lcdm) ==
          doctest::Approx(std::clamp(logistic(item.intercept),
                                     std::numeric_limits<double>::epsilon(),
                                     1.0 - std::numeric_limits<double>::epsilon()))
              .epsilon(1e-12));
  }
}

TEST_CASE("variant nesting") {
  const std::vector<std::uint8_t> q23 = {0, 1, 1};
  const auto lattice = enumerate_profiles(3);

  // LCDM with zero interactions equals CRUM with the same mains.
  ItemParameters lcdm_zero_int = lcdm_item(-0.7, 1.1, 0.0, 0.0, q23);
  ItemParameters crum;
  crum.intercept = -0.7;
  for (const auto& key : active_effects(q23, ModelVariant::Crum)) {
    crum.effects.emplace_back(key, 1.1);
  }
  for (std::size_t c = 0; c < lattice.size(); ++c) {
    CHECK(response_probability(lattice.profile(c), lcdm_zero_int, q23,
                               ModelVariant::Lcdm) ==
          doctest::Approx(response_probability(lattice.profile(c), crum, q23,
                                               ModelVariant::Crum))
              .epsilon(1e-14));
  }

  // LCDM with zero mains equals DINA with the same interaction.
  ItemParameters lcdm_zero_main = lcdm_item(-0.7, 0.0, 0.0, 0.0, q23);
  lcdm_zero_main.set(EffectKey({1, 2}), 2.3);
  ItemParameters dina;
  dina.intercept = -0.7;
  dina.effects.emplace_back(EffectKey({1, 2}), 2.3);
  for (std::size_t c = 0; c < lattice.size(); ++c) {
    CHECK(response_probability(lattice.profile(c), lcdm_zero_main, q23,
                               ModelVariant::Lcdm) ==
          doctest::Approx(response_probability(lattice.profile(c), dina, q23,
                                               ModelVariant::Dina))
              .epsilon(1e-14));
  }
}

TEST_CASE("single-attribute items are variant-independent") {
  const std::vector<std::uint8_t> q1 = {0, 1, 0};
  ItemParameters item;
  item.intercept = -1.3;
  item.effects.emplace_back(EffectKey({1}), 2.2);
  const auto lattice = enumerate_profiles(3);
  for (std::size_t c = 0; c < lattice.size(); ++c) {
    const double lcdm =
        response_probability(lattice.profile(c), item, q1, ModelVariant::Lcdm);
    CHECK(lcdm == response_probability(lattice.profile(c), item, q1, ModelVariant::Dina));
    CHECK(lcdm == response_probability(lattice.profile(c), item, q1, ModelVariant::Crum));
  }
}

TEST_CASE("monotone items never lose probability when mastery grows") {
  Rng rng(4242);
  const std::vector<std::uint8_t> q_all = {1, 1, 1};
  const auto lattice = enumerate_profiles(3);
  int accepted = 0;
  while (accepted < 100) {
    const auto item = lcdm_item(rng.normal(0, 1.5), rng.normal(0, 1.5),
                                rng.normal(0, 1.5), rng.normal(0, 1.5), q_all);
    if (!satisfies_monotonicity(item, q_all, ModelVariant::Lcdm)) continue;
    ++accepted;
    for (std::size_t c = 0; c < lattice.size(); ++c) {
      for (int a = 0; a < 3; ++a) {
        if (lattice.profile(c).mastered(a)) continue;
        const auto upgraded = AttributeVector::from_index(c | (1u << a), 3);
        CHECK(response_probability(upgraded, item, q_all, ModelVariant::Lcdm) >=
              response_probability(lattice.profile(c), item, q_all,
                                   ModelVariant::Lcdm) -
                  1e-12);
      }
    }
  }

  // The published parameter columns sit inside the monotone region.
  CHECK(satisfies_monotonicity(lcdm_item(-1.10, 1.30, 0.23, 3.40, q_all), q_all,
                               ModelVariant::Lcdm));
  CHECK(satisfies_monotonicity(lcdm_item(-2.0, 2.0, 1.0, 0.1, q_all), q_all,
                               ModelVariant::Lcdm));
  CHECK_FALSE(satisfies_monotonicity(lcdm_item(0.0, -0.5, 0.0, 0.0, q_all), q_all,
                                     ModelVariant::Lcdm));
  // A two-way more negative than the mains it rides on is rejected.
  CHECK_FALSE(satisfies_monotonicity(lcdm_item(0.0, 0.4, -1.0, 3.0, q_all), q_all,
                                     ModelVariant::Lcdm));
}

TEST_CASE("log_prob_pair matches the clamped probability") {
  for (double eta : {-50.0, -5.0, -0.3, 0.0, 0.7, 4.0, 60.0}) {
    double lp, lq;
    log_prob_pair(eta, lp, lq);
    CHECK(std::isfinite(lp));
    CHECK(std::isfinite(lq));
    if (std::fabs(eta) < 30) {
      CHECK(std::exp(lp) == doctest::Approx(logistic(eta)).epsilon(1e-12));
      CHECK(std::exp(lq) == doctest::Approx(1.0 - logistic(eta)).epsilon(1e-10));
    }
  }
}

TEST_CASE("q-matrix validation") {
  CHECK_THROWS_AS(QMatrix({{0, 0}, {1, 1}}), std::invalid_argument);   // empty row
  CHECK_THROWS_AS(QMatrix({{1, 0}, {1, 0}}), std::invalid_argument);   // empty column
  CHECK_THROWS_AS(QMatrix({{1, 2}}), std::invalid_argument);           // not binary
  CHECK_THROWS_AS(QMatrix({{1, 0}, {1}}), std::invalid_argument);      // ragged
  const QMatrix ok({{1, 0}, {0, 1}, {1, 1}});
  CHECK(ok.n_items() == 3);
  CHECK(ok.n_attributes() == 2);
  CHECK(ok.column_sums() == std::vector<int>{2, 2});
}

TEST_CASE("q-matrix csv round trip with and without header") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "dcm_model_io_test";
  fs::create_directories(dir);

  const auto q = build_paper_qmatrix();
  const auto path = (dir / "q.csv").string();
  write_qmatrix_csv(path, q);
  const auto back = read_qmatrix_csv(path);
  CHECK(back.rows() == q.rows());

  write_text_file((dir / "q_header.csv").string(),
                  "a1,a2,a3\n1,0,0\n0,1,0\n0,0,1\n1,1,1\n");
  const auto with_header = read_qmatrix_csv((dir / "q_header.csv").string());
  CHECK(with_header.n_items() == 4);
  CHECK(with_header.row(3)[2] == 1);

  write_text_file((dir / "bad.csv").string(), "0,0,0\n1,1,1\n");
  CHECK_THROWS(read_qmatrix_csv((dir / "bad.csv").string()));
  fs::remove_all(dir);
}

TEST_CASE("item parameter json round trip") {
  const auto q = build_paper_qmatrix();
  const auto params = build_true_item_params(q, ItemQualitySpec::medium(),
                                             ModelVariant::Lcdm);
  const auto text = item_params_to_json(params);
  const auto back = item_params_from_json(text);
  REQUIRE(back.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(back[i].intercept == doctest::Approx(params[i].intercept).epsilon(1e-15));
    REQUIRE(back[i].effects.size() == params[i].effects.size());
    for (std::size_t k = 0; k < params[i].effects.size(); ++k) {
      CHECK(back[i].effects[k].first == params[i].effects[k].first);
      CHECK(back[i].effects[k].second ==
            doctest::Approx(params[i].effects[k].second).epsilon(1e-15));
    }
  }
  CHECK(text.find("\"2,3\"") != std::string::npos);
}
