#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "dcm/io.hpp"
#include "dcm/rng.hpp"
#include "dcm/simulate.hpp"
#include "dcm/study.hpp"

using namespace dcm;

namespace fs = std::filesystem;

namespace {

StudyConfig tiny_config() {
  StudyConfig config;
  SimCondition condition;
  condition.generating_variant = ModelVariant::Crum;
  condition.n_examinees = 60;
  condition.quality = ItemQuality::High;
  condition.prior_level = PriorLevel::Informative;
  config.conditions = {condition};
  config.replications = 1;
  config.study_seed = 424242;
  config.chains.n_chains = 2;
  config.chains.burn_in = 150;
  config.chains.sampling = 150;
  config.chains.max_auto_extensions = 1;
  config.jobs = 1;
  return config;
}

std::string slurp_dir(const fs::path& dir) {
  std::string all;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    all += p.filename().string() + "\n" + read_text_file(p.string()) + "\n";
  }
  return all;
}

}  // namespace

TEST_CASE("select_best") {
  const double inf = std::numeric_limits<double>::infinity();

  SUBCASE("argmin for dic and waic") {
    const auto outcome = select_best({{ModelVariant::Lcdm, 100.0},
                                      {ModelVariant::Dina, 95.0},
                                      {ModelVariant::Crum, 90.0}},
                                     FitIndexKind::Dic);
    CHECK(outcome.best == ModelVariant::Crum);
    CHECK(outcome.excluded.empty());
  }

  SUBCASE("argmax of elpd for psis-loo") {
    const auto outcome = select_best(
        {{ModelVariant::Lcdm, -500.0}, {ModelVariant::Crum, -498.0}},
        FitIndexKind::PsisLoo);
    CHECK(outcome.best == ModelVariant::Crum);
  }

  SUBCASE("exact ties break toward parsimony") {
    CHECK(select_best({{ModelVariant::Lcdm, 100.0}, {ModelVariant::Crum, 100.0}},
                      FitIndexKind::Dic)
              .best == ModelVariant::Crum);
    CHECK(select_best({{ModelVariant::Lcdm, 100.0},
                       {ModelVariant::Crum, 100.0},
                       {ModelVariant::Dina, 100.0}},
                      FitIndexKind::Waic)
              .best == ModelVariant::Dina);
  }

  SUBCASE("non-finite candidates are excluded and reported") {
    const auto outcome = select_best({{ModelVariant::Lcdm, inf},
                                      {ModelVariant::Dina, 5.0},
                                      {ModelVariant::Crum, 6.0}},
                                     FitIndexKind::Dic);
    CHECK(outcome.best == ModelVariant::Dina);
    REQUIRE(outcome.excluded.size() == 1);
    CHECK(outcome.excluded[0] == ModelVariant::Lcdm);
    CHECK_THROWS_AS(select_best({{ModelVariant::Lcdm, inf}, {ModelVariant::Dina, 1.0}},
                                FitIndexKind::Dic),
                    std::invalid_argument);
  }
}

TEST_CASE("study config json round trip and presets") {
  const auto desk = StudyConfig::desk_preset();
  CHECK(desk.replications == 5);
  CHECK(desk.conditions.size() == 24);  // 2 priors x 2 sizes x 2 qualities x 3 models
  const auto paper = StudyConfig::paper_preset();
  CHECK(paper.replications == 25);
  CHECK(paper.conditions.size() == 36);

  const auto text = desk.to_json();
  const auto back = StudyConfig::from_json(text);
  CHECK(back.to_json() == text);
  CHECK(back.config_hash() == desk.config_hash());

  CHECK_THROWS(StudyConfig::from_json("{}"));
  StudyConfig bad = desk;
  bad.replications = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("response and loglik csv round trips") {
  const auto dir = fs::temp_directory_path() / "dcm_study_io";
  fs::create_directories(dir);

  SimCondition condition;
  condition.generating_variant = ModelVariant::Dina;
  condition.n_examinees = 25;
  condition.quality = ItemQuality::Medium;
  const auto q = build_paper_qmatrix();
  const auto data = generate_condition_data(condition, q, {}, 99);

  const auto resp_path = (dir / "resp.csv").string();
  write_responses_csv(resp_path, data);
  const auto back = read_responses_csv(resp_path);
  CHECK(back.data == data.data);
  CHECK(back.n_items == 28);

  LogLikMatrix ll;
  ll.n_examinees = 3;
  ll.n_draws = 4;
  Rng rng(3);
  ll.values.resize(12);
  for (auto& v : ll.values) v = -rng.uniform(0.1, 4.0);
  const auto ll_path = (dir / "ll.csv").string();
  write_loglik_csv(ll_path, ll);
  const auto ll_back = read_loglik_csv(ll_path);
  CHECK(ll_back.values == ll.values);

  write_truth_json((dir / "truth.json").string(), data, condition,
                   condition.generating_variant, 99);
  const auto truth_text = read_text_file((dir / "truth.json").string());
  CHECK(truth_text.find("\"generating_variant\": \"dina\"") != std::string::npos);

  fs::remove_all(dir);
}

TEST_CASE("replication artifacts and selection tabulation") {
  const auto config = tiny_config();
  const auto q = build_paper_qmatrix();

  SUBCASE("artifact json is deterministic") {
    const auto a = run_replication(config.conditions[0], 0, config, q);
    const auto b = run_replication(config.conditions[0], 0, config, q);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.fits.size() == 3);
    CHECK(a.selected.size() == 3);
    CHECK(a.has_recovery);
    CHECK(a.has_classification);
  }

  SUBCASE("results are invariant to condition execution order") {
    auto forward = tiny_config();
    SimCondition second = forward.conditions[0];
    second.n_examinees = 40;
    second.quality = ItemQuality::Medium;
    forward.conditions.push_back(second);
    auto reversed = forward;
    std::swap(reversed.conditions[0], reversed.conditions[1]);

    const auto a = run_study(forward);
    const auto b = run_study(reversed);
    REQUIRE(a.artifacts.size() == b.artifacts.size());
    for (const auto& artifact : a.artifacts) {
      bool found = false;
      for (const auto& other : b.artifacts) {
        if (other.condition.id() == artifact.condition.id() &&
            other.replication == artifact.replication) {
          CHECK(other.to_json() == artifact.to_json());
          found = true;
        }
      }
      CHECK(found);
    }
  }

  SUBCASE("selection counts sum to the replication count") {
    auto config2 = tiny_config();
    config2.replications = 2;
    const auto result = run_study(config2);
    REQUIRE(result.artifacts.size() == 2);
    for (const auto kind :
         {FitIndexKind::Dic, FitIndexKind::Waic, FitIndexKind::PsisLoo}) {
      (void)kind;
    }
    int dic_total = 0, waic_total = 0, loo_total = 0;
    for (const auto& row : result.table.rows) {
      dic_total += row.dic_count;
      waic_total += row.waic_count;
      loo_total += row.psisloo_count;
    }
    CHECK(dic_total == 2);
    CHECK(waic_total == 2);
    CHECK(loo_total == 2);
  }
}

TEST_CASE("emitted reports") {
  const auto base = fs::temp_directory_path() / "dcm_emit_test";
  fs::remove_all(base);
  fs::create_directories(base);
  const auto config = tiny_config();

  SUBCASE("reruns are byte-identical") {
    const auto result_a = run_study(config);
    emit_reports(result_a, config, (base / "a").string());
    const auto result_b = run_study(config);
    emit_reports(result_b, config, (base / "b").string());
    CHECK(slurp_dir(base / "a") == slurp_dir(base / "b"));
    CHECK(fs::exists(base / "a" / "selection_table.csv"));
    CHECK(fs::exists(base / "a" / "indices.csv"));
    CHECK(fs::exists(base / "a" / "recovery.csv"));
    CHECK(fs::exists(base / "a" / "classification.csv"));
    CHECK(fs::exists(base / "a" / "manifest.json"));

    // One artifact: one indices row per estimation variant, with all three
    // index columns present.
    const auto indices_text = read_text_file((base / "a" / "indices.csv").string());
    int lines = 0;
    for (char ch : indices_text) lines += ch == '\n';
    CHECK(lines == 1 + 3);
    CHECK(indices_text.find("dic") != std::string::npos);
    CHECK(indices_text.find("waic") != std::string::npos);
    CHECK(indices_text.find("elpd_psis_loo") != std::string::npos);
  }

  SUBCASE("empty artifact list emits the manifest only") {
    StudyResult empty;
    emit_reports(empty, config, (base / "empty").string());
    CHECK(fs::exists(base / "empty" / "manifest.json"));
    CHECK_FALSE(fs::exists(base / "empty" / "selection_table.csv"));
  }

  SUBCASE("unwritable output directory aborts with a diagnostic") {
    StudyResult empty;
    CHECK_THROWS(emit_reports(empty, config, "/proc/nonexistent/out"));
  }

  fs::remove_all(base);
}
