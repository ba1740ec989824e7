#include "dcm/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "dcm/io.hpp"

namespace dcm {

namespace {

// Parsimony rank for tie-breaking: fewer free parameters first.
int parsimony_rank(ModelVariant v) {
  switch (v) {
    case ModelVariant::Dina: return 0;
    case ModelVariant::Crum: return 1;
    case ModelVariant::Lcdm: return 2;
  }
  return 2;
}

std::vector<SimCondition> full_grid(const std::vector<int>& sample_sizes) {
  std::vector<SimCondition> conditions;
  for (PriorLevel prior : {PriorLevel::Informative, PriorLevel::Uninformative}) {
    for (int n : sample_sizes) {
      for (ItemQuality quality : {ItemQuality::Medium, ItemQuality::High}) {
        for (ModelVariant gen :
             {ModelVariant::Lcdm, ModelVariant::Dina, ModelVariant::Crum}) {
          SimCondition c;
          c.generating_variant = gen;
          c.n_examinees = n;
          c.quality = quality;
          c.prior_level = prior;
          conditions.push_back(c);
        }
      }
    }
  }
  return conditions;
}

}  // namespace

std::string_view to_string(FitIndexKind k) {
  switch (k) {
    case FitIndexKind::Dic: return "dic";
    case FitIndexKind::Waic: return "waic";
    case FitIndexKind::PsisLoo: return "psisloo";
  }
  return "dic";
}

StudyConfig StudyConfig::desk_preset() {
  StudyConfig config;
  config.replications = 5;
  config.conditions = full_grid({500, 1000});
  config.chains.n_chains = 4;
  config.chains.burn_in = 1000;
  config.chains.sampling = 1000;
  config.chains.max_auto_extensions = 2;
  return config;
}

StudyConfig StudyConfig::paper_preset() {
  StudyConfig config;
  config.replications = 25;
  config.conditions = full_grid({500, 1000, 2000});
  config.chains.n_chains = 4;
  config.chains.burn_in = 1000;
  config.chains.sampling = 2000;
  config.chains.max_auto_extensions = 2;
  return config;
}

void StudyConfig::validate() const {
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (estimation_variants.empty()) {
    throw std::invalid_argument("estimation variant set is empty");
  }
  if (conditions.empty()) throw std::invalid_argument("no conditions configured");
  for (const auto& c : conditions) {
    if (c.n_examinees < 1) throw std::invalid_argument("n_examinees must be >= 1");
  }
  if (chains.n_chains < 1 || chains.burn_in < 1 || chains.sampling < 1 ||
      chains.max_auto_extensions < 0) {
    throw std::invalid_argument("invalid chain configuration");
  }
}

std::string StudyConfig::to_json() const {
  nlohmann::json j;
  j["study_seed"] = study_seed;
  j["replications"] = replications;
  j["output_dir"] = output_dir;
  j["jobs"] = jobs;
  nlohmann::json variants = nlohmann::json::array();
  for (auto v : estimation_variants) variants.push_back(std::string(to_string(v)));
  j["estimation_variants"] = variants;
  j["chains"] = {{"n_chains", chains.n_chains},
                 {"burn_in", chains.burn_in},
                 {"sampling", chains.sampling},
                 {"max_auto_extensions", chains.max_auto_extensions},
                 {"adapt_window", chains.adapt_window},
                 {"enforce_monotonicity", chains.enforce_monotonicity}};
  j["generator"] = {{"dina_recalibrate_interaction", generator.dina_recalibrate_interaction},
                    {"crum_recalibrate_mains", generator.crum_recalibrate_mains}};
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : conditions) {
    conds.push_back({{"generating_variant", std::string(to_string(c.generating_variant))},
                     {"n_examinees", c.n_examinees},
                     {"quality", std::string(to_string(c.quality))},
                     {"prior", std::string(to_string(c.prior_level))}});
  }
  j["conditions"] = conds;
  return j.dump(2);
}

StudyConfig StudyConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  StudyConfig config;
  config.study_seed = j.value("study_seed", config.study_seed);
  config.replications = j.value("replications", config.replications);
  config.output_dir = j.value("output_dir", config.output_dir);
  config.jobs = j.value("jobs", config.jobs);
  if (j.contains("estimation_variants")) {
    config.estimation_variants.clear();
    for (const auto& name : j.at("estimation_variants")) {
      const auto v = variant_from_string(name.get<std::string>());
      if (!v) throw std::runtime_error("unknown variant " + name.get<std::string>());
      config.estimation_variants.push_back(*v);
    }
  }
  if (j.contains("chains")) {
    const auto& c = j.at("chains");
    config.chains.n_chains = c.value("n_chains", config.chains.n_chains);
    config.chains.burn_in = c.value("burn_in", config.chains.burn_in);
    config.chains.sampling = c.value("sampling", config.chains.sampling);
    config.chains.max_auto_extensions =
        c.value("max_auto_extensions", config.chains.max_auto_extensions);
    config.chains.adapt_window = c.value("adapt_window", config.chains.adapt_window);
    config.chains.enforce_monotonicity =
        c.value("enforce_monotonicity", config.chains.enforce_monotonicity);
  }
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    config.generator.dina_recalibrate_interaction =
        g.value("dina_recalibrate_interaction", true);
    config.generator.crum_recalibrate_mains = g.value("crum_recalibrate_mains", false);
  }
  if (!j.contains("conditions")) throw std::runtime_error("config lacks conditions");
  for (const auto& entry : j.at("conditions")) {
    SimCondition c;
    const auto gv = variant_from_string(entry.at("generating_variant").get<std::string>());
    const auto q = quality_from_string(entry.at("quality").get<std::string>());
    const auto p = prior_level_from_string(entry.at("prior").get<std::string>());
    if (!gv || !q || !p) throw std::runtime_error("bad condition entry");
    c.generating_variant = *gv;
    c.quality = *q;
    c.prior_level = *p;
    c.n_examinees = entry.at("n_examinees").get<int>();
    config.conditions.push_back(c);
  }
  config.validate();
  return config;
}

std::uint64_t StudyConfig::config_hash() const { return fnv1a(to_json()); }

SelectionOutcome select_best(const std::vector<std::pair<ModelVariant, double>>& values,
                             FitIndexKind kind) {
  SelectionOutcome outcome{ModelVariant::Lcdm, {}};
  std::vector<std::pair<ModelVariant, double>> usable;
  for (const auto& [variant, value] : values) {
    if (std::isfinite(value)) {
      usable.emplace_back(variant, value);
    } else {
      outcome.excluded.push_back(variant);
    }
  }
  if (usable.size() < 2) {
    throw std::invalid_argument("select_best needs >= 2 finite candidates");
  }

  // Larger elpd is better; smaller DIC/WAIC is better.
  const double sign = kind == FitIndexKind::PsisLoo ? -1.0 : 1.0;
  std::size_t best = 0;
  for (std::size_t k = 1; k < usable.size(); ++k) {
    const double score = sign * usable[k].second;
    const double best_score = sign * usable[best].second;
    if (score < best_score ||
        (score == best_score &&
         parsimony_rank(usable[k].first) < parsimony_rank(usable[best].first))) {
      best = k;
    }
  }
  outcome.best = usable[best].first;
  return outcome;
}

RunArtifact run_replication(const SimCondition& condition, int replication,
                            const StudyConfig& config, const QMatrix& qmatrix) {
  RunArtifact artifact;
  artifact.condition = condition;
  artifact.replication = replication;
  artifact.seed = mix_seed({config.study_seed, fnv1a(condition.id()),
                            static_cast<std::uint64_t>(replication)});

  const auto data = generate_condition_data(condition, qmatrix, config.generator,
                                            mix_seed({artifact.seed, 0xDA7A}));
  const ProfileLattice lattice(qmatrix.n_attributes());
  const auto prior = PriorSpec::for_level(condition.prior_level, lattice.size());

  std::vector<std::pair<ModelVariant, double>> dic_values, waic_values, loo_values;
  for (std::size_t v = 0; v < config.estimation_variants.size(); ++v) {
    const ModelVariant variant = config.estimation_variants[v];
    const auto fit = run_chains(data, qmatrix, variant, prior, config.chains,
                                mix_seed({artifact.seed, 0xF17, static_cast<std::uint64_t>(v)}));

    VariantFitRecord record;
    record.variant = variant;
    record.converged = fit.convergence.converged;
    record.max_rhat = fit.convergence.max_rhat;
    record.extensions_used = fit.convergence.extensions_used;
    if (!record.converged) {
      artifact.notes.push_back(std::string(to_string(variant)) +
                               ": not converged after extensions (max rhat " +
                               format_short(record.max_rhat) + ")");
    }

    const auto ll = pointwise_loglik(fit, data, qmatrix, variant);
    const auto ll_at_point =
        pointwise_loglik_at(fit.posterior_mean_flat(), fit.layout, data, qmatrix);
    record.indices = compute_fit_indices(ll, ll_at_point);

    dic_values.emplace_back(variant, record.indices.dic);
    waic_values.emplace_back(variant, record.indices.waic);
    loo_values.emplace_back(variant, record.indices.elpd_psis_loo);

    if (variant == condition.generating_variant) {
      RecoveryAccumulator acc;
      acc.add(fit.posterior_mean_items(), data.true_params);
      artifact.recovery = acc.report();
      artifact.has_recovery = true;

      const auto membership = fit.pooled_membership();
      const auto calls = classify_examinees(membership, lattice);
      artifact.classification = classification_rates(calls, data.true_profiles);
      artifact.classification_agreement =
          posterior_agreement_rates(membership, lattice, data.true_profiles);
      artifact.has_classification = true;
    }
    artifact.fits.push_back(std::move(record));
  }

  for (const auto kind : {FitIndexKind::Dic, FitIndexKind::Waic, FitIndexKind::PsisLoo}) {
    const auto& values = kind == FitIndexKind::Dic    ? dic_values
                         : kind == FitIndexKind::Waic ? waic_values
                                                      : loo_values;
    const auto outcome = select_best(values, kind);
    artifact.selected[kind] = outcome.best;
    for (auto v : outcome.excluded) {
      artifact.notes.push_back(std::string(to_string(kind)) + ": excluded " +
                               std::string(to_string(v)) + " (non-finite index)");
    }
  }
  return artifact;
}

std::string RunArtifact::to_json() const {
  nlohmann::json j;
  j["condition"] = condition.id();
  j["replication"] = replication;
  j["seed"] = seed;
  nlohmann::json fits_json = nlohmann::json::array();
  for (const auto& fit : fits) {
    fits_json.push_back(
        {{"variant", std::string(to_string(fit.variant))},
         {"converged", fit.converged},
         {"max_rhat", fit.max_rhat},
         {"extensions_used", fit.extensions_used},
         {"indices", nlohmann::json::parse(fit_report_to_json(fit.indices))}});
  }
  j["fits"] = fits_json;
  nlohmann::json sel;
  for (const auto& [kind, variant] : selected) {
    sel[std::string(to_string(kind))] = std::string(to_string(variant));
  }
  j["selected"] = sel;
  j["notes"] = notes;
  if (has_recovery) {
    nlohmann::json rec;
    for (int k = 0; k < 4; ++k) {
      const auto c = static_cast<ParamClass>(k);
      if (recovery.cell(c).n == 0) continue;
      rec[std::string(to_string(c))] = {{"bias", recovery.cell(c).bias},
                                        {"rmse", recovery.cell(c).rmse},
                                        {"n", recovery.cell(c).n}};
    }
    j["recovery"] = rec;
  }
  if (has_classification) {
    j["classification"] = {{"profile_rate", classification.profile_rate},
                           {"marginal_rates", classification.marginal_rates},
                           {"marginal_mean", classification.marginal_mean}};
    j["classification_agreement"] = {
        {"profile_rate", classification_agreement.profile_rate},
        {"marginal_rates", classification_agreement.marginal_rates},
        {"marginal_mean", classification_agreement.marginal_mean}};
  }
  return j.dump(2);
}

SelectionTable tabulate_selections(const std::vector<RunArtifact>& artifacts,
                                   const StudyConfig& config) {
  SelectionTable table;
  for (const auto& condition : config.conditions) {
    const std::string id = condition.id();
    for (const auto estimator : config.estimation_variants) {
      SelectionTable::Row row;
      row.condition_id = id;
      row.estimator = estimator;
      for (const auto& artifact : artifacts) {
        if (artifact.condition.id() != id) continue;
        if (artifact.selected.at(FitIndexKind::Dic) == estimator) ++row.dic_count;
        if (artifact.selected.at(FitIndexKind::Waic) == estimator) ++row.waic_count;
        if (artifact.selected.at(FitIndexKind::PsisLoo) == estimator) {
          ++row.psisloo_count;
        }
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

StudyResult run_study(const StudyConfig& config) {
  config.validate();
  const auto qmatrix = build_paper_qmatrix();

  struct Task {
    std::size_t condition_index;
    int replication;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < config.conditions.size(); ++c) {
    for (int r = 0; r < config.replications; ++r) {
      tasks.push_back({c, r});
    }
  }

  // Replications are the unit of parallelism; chains run serially inside
  // when the replication pool is already using the machine.
  StudyConfig worker_config = config;
  const int jobs = std::max(1, config.jobs);
  worker_config.chains.parallel_chains = jobs == 1;

  std::vector<RunArtifact> artifacts(tasks.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  auto worker = [&](int worker_id) {
    try {
      for (;;) {
        const std::size_t t = next.fetch_add(1);
        if (t >= tasks.size()) break;
        artifacts[t] = run_replication(config.conditions[tasks[t].condition_index],
                                       tasks[t].replication, worker_config, qmatrix);
      }
    } catch (...) {
      errors[worker_id] = std::current_exception();
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  StudyResult result;
  result.artifacts = std::move(artifacts);
  result.table = tabulate_selections(result.artifacts, config);
  return result;
}

namespace {

std::string condition_csv_fields(const SimCondition& c) {
  return std::string(to_string(c.prior_level)) + ',' + std::to_string(c.n_examinees) +
         ',' + std::string(to_string(c.quality)) + ',' +
         std::string(to_string(c.generating_variant));
}

}  // namespace

void emit_reports(const StudyResult& result, const StudyConfig& config,
                  const std::string& output_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec || !fs::is_directory(output_dir)) {
    throw std::runtime_error("cannot create output directory " + output_dir);
  }

  // Manifest: config echo, hash, per-replication seeds. No timestamps, so
  // reruns are byte-identical.
  nlohmann::json manifest;
  manifest["tool"] = "dcm-select";
  manifest["version"] = "0.1.0";
  manifest["study_seed"] = config.study_seed;
  manifest["config_hash"] = config.config_hash();
  manifest["replications"] = config.replications;
  manifest["config"] = nlohmann::json::parse(config.to_json());
  nlohmann::json cond_seeds = nlohmann::json::array();
  for (const auto& c : config.conditions) {
    nlohmann::json seeds = nlohmann::json::array();
    for (int r = 0; r < config.replications; ++r) {
      seeds.push_back(mix_seed({config.study_seed, fnv1a(c.id()),
                                static_cast<std::uint64_t>(r)}));
    }
    cond_seeds.push_back({{"condition", c.id()}, {"replication_seeds", seeds}});
  }
  manifest["condition_seeds"] = cond_seeds;
  write_text_file((fs::path(output_dir) / "manifest.json").string(),
                  manifest.dump(2) + "\n");

  if (result.artifacts.empty()) return;

  std::string selection = "prior,n,quality,generator,estimator,dic_count,waic_count,psisloo_count\n";
  std::size_t row_index = 0;
  for (const auto& condition : config.conditions) {
    for (std::size_t v = 0; v < config.estimation_variants.size(); ++v, ++row_index) {
      const auto& row = result.table.rows[row_index];
      selection += condition_csv_fields(condition) + ',' +
                   std::string(to_string(row.estimator)) + ',' +
                   std::to_string(row.dic_count) + ',' + std::to_string(row.waic_count) +
                   ',' + std::to_string(row.psisloo_count) + '\n';
    }
  }
  write_text_file((fs::path(output_dir) / "selection_table.csv").string(), selection);

  std::string indices =
      "prior,n,quality,generator,replication,estimator,converged,max_rhat,dic,p_dic,"
      "lpd_hat,elpd_waic,p_waic,waic,elpd_psis_loo,p_loo,khat_max,khat_above_0.7,"
      "selected_dic,selected_waic,selected_psisloo\n";
  for (const auto& artifact : result.artifacts) {
    for (const auto& fit : artifact.fits) {
      const auto& x = fit.indices;
      indices += condition_csv_fields(artifact.condition) + ',' +
                 std::to_string(artifact.replication) + ',' +
                 std::string(to_string(fit.variant)) + ',' +
                 (fit.converged ? "1," : "0,") + format_short(fit.max_rhat) + ',' +
                 format_short(x.dic) + ',' + format_short(x.p_dic) + ',' +
                 format_short(x.lpd_hat) + ',' + format_short(x.elpd_waic) + ',' +
                 format_short(x.p_waic) + ',' + format_short(x.waic) + ',' +
                 format_short(x.elpd_psis_loo) + ',' + format_short(x.p_loo) + ',' +
                 format_short(x.max_khat) + ',' + std::to_string(x.n_khat_above_07) +
                 ',' +
                 std::to_string(artifact.selected.at(FitIndexKind::Dic) == fit.variant) +
                 ',' +
                 std::to_string(artifact.selected.at(FitIndexKind::Waic) == fit.variant) +
                 ',' +
                 std::to_string(artifact.selected.at(FitIndexKind::PsisLoo) ==
                                fit.variant) +
                 '\n';
    }
  }
  write_text_file((fs::path(output_dir) / "indices.csv").string(), indices);

  std::string recovery = "prior,n,quality,generator,replication,param_class,bias,rmse,n_values\n";
  for (const auto& artifact : result.artifacts) {
    if (!artifact.has_recovery) continue;
    for (int k = 0; k < 4; ++k) {
      const auto c = static_cast<ParamClass>(k);
      const auto& cell = artifact.recovery.cell(c);
      if (cell.n == 0) continue;
      recovery += condition_csv_fields(artifact.condition) + ',' +
                  std::to_string(artifact.replication) + ',' +
                  std::string(to_string(c)) + ',' + format_short(cell.bias) + ',' +
                  format_short(cell.rmse) + ',' + std::to_string(cell.n) + '\n';
    }
  }
  write_text_file((fs::path(output_dir) / "recovery.csv").string(), recovery);

  std::string classification =
      "prior,n,quality,generator,replication,map_profile_rate,map_marginal_mean,"
      "agreement_profile_rate,agreement_marginal_mean";
  int n_attr = 0;
  for (const auto& artifact : result.artifacts) {
    if (artifact.has_classification) {
      n_attr = static_cast<int>(artifact.classification.marginal_rates.size());
      break;
    }
  }
  for (int a = 0; a < n_attr; ++a) {
    classification += ",map_marginal_a" + std::to_string(a + 1);
  }
  for (int a = 0; a < n_attr; ++a) {
    classification += ",agreement_marginal_a" + std::to_string(a + 1);
  }
  classification += '\n';
  for (const auto& artifact : result.artifacts) {
    if (!artifact.has_classification) continue;
    classification += condition_csv_fields(artifact.condition) + ',' +
                      std::to_string(artifact.replication) + ',' +
                      format_short(artifact.classification.profile_rate) + ',' +
                      format_short(artifact.classification.marginal_mean) + ',' +
                      format_short(artifact.classification_agreement.profile_rate) +
                      ',' +
                      format_short(artifact.classification_agreement.marginal_mean);
    for (double r : artifact.classification.marginal_rates) {
      classification += ',' + format_short(r);
    }
    for (double r : artifact.classification_agreement.marginal_rates) {
      classification += ',' + format_short(r);
    }
    classification += '\n';
  }
  write_text_file((fs::path(output_dir) / "classification.csv").string(), classification);
}

}  // namespace dcm
