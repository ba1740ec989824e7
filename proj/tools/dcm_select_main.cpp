#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dcm/indices.hpp"
#include "dcm/io.hpp"
#include "dcm/sampler.hpp"
#include "dcm/simulate.hpp"
#include "dcm/study.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& preset,
            std::uint64_t seed, bool seed_set, int jobs, bool jobs_set,
            const std::string& out_dir) {
  dcm::StudyConfig config;
  if (!config_path.empty()) {
    config = dcm::StudyConfig::from_json(dcm::read_text_file(config_path));
  } else if (preset == "desk") {
    config = dcm::StudyConfig::desk_preset();
  } else if (preset == "paper") {
    config = dcm::StudyConfig::paper_preset();
  } else {
    std::cerr << "run: pass --config FILE or --preset desk|paper\n";
    return 2;
  }
  if (seed_set) config.study_seed = seed;
  if (jobs_set) config.jobs = jobs;
  if (!out_dir.empty()) config.output_dir = out_dir;

  std::cout << "study: " << config.conditions.size() << " conditions x "
            << config.replications << " replications x "
            << config.estimation_variants.size() << " fits (seed "
            << config.study_seed << ", jobs " << config.jobs << ")\n";
  const auto result = dcm::run_study(config);
  dcm::emit_reports(result, config, config.output_dir);

  int flagged = 0;
  for (const auto& artifact : result.artifacts) {
    for (const auto& fit : artifact.fits) {
      if (!fit.converged) ++flagged;
    }
  }
  std::cout << "done: " << result.artifacts.size() << " replications, " << flagged
            << " non-converged fits flagged\n";
  std::cout << "reports written to " << config.output_dir << "\n";
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& qmatrix_path,
            const std::string& model, const std::string& prior_name,
            const dcm::ChainConfig& chains, std::uint64_t seed,
            const std::string& out_dir, const std::string& draws_path) {
  const auto variant = dcm::variant_from_string(model);
  if (!variant) {
    std::cerr << "unknown model '" << model << "'\n";
    return 2;
  }
  const auto level = dcm::prior_level_from_string(prior_name);
  if (!level) {
    std::cerr << "unknown prior '" << prior_name << "'\n";
    return 2;
  }

  const auto qmatrix = dcm::read_qmatrix_csv(qmatrix_path);
  const auto data = dcm::read_responses_csv(data_path);
  if (data.n_items != qmatrix.n_items()) {
    std::cerr << "data has " << data.n_items << " items, Q-matrix has "
              << qmatrix.n_items() << "\n";
    return 2;
  }
  const auto prior =
      dcm::PriorSpec::for_level(*level, std::size_t{1} << qmatrix.n_attributes());

  const auto fit = dcm::run_chains(data, qmatrix, *variant, prior, chains, seed);
  std::cout << "chains: " << chains.n_chains << ", burn-in "
            << fit.convergence.burn_in_used << ", sampling "
            << fit.convergence.sampling_used << ", extensions "
            << fit.convergence.extensions_used << "\n";
  std::cout << "max rhat: " << dcm::format_short(fit.convergence.max_rhat)
            << (fit.convergence.converged ? " (converged)" : " (NOT converged)")
            << "\n";

  const auto ll = dcm::pointwise_loglik(fit, data, qmatrix, *variant);
  const auto ll_point =
      dcm::pointwise_loglik_at(fit.posterior_mean_flat(), fit.layout, data, qmatrix);
  const auto report = dcm::compute_fit_indices(ll, ll_point);
  std::cout << "dic " << dcm::format_short(report.dic) << " (p_dic "
            << dcm::format_short(report.p_dic) << ")\n"
            << "waic " << dcm::format_short(report.waic) << " (p_waic "
            << dcm::format_short(report.p_waic) << ")\n"
            << "elpd_psis_loo " << dcm::format_short(report.elpd_psis_loo)
            << " (p_loo " << dcm::format_short(report.p_loo) << ", max khat "
            << dcm::format_short(report.max_khat) << ")\n";

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  dcm::write_text_file((fs::path(out_dir) / "fit_report.json").string(),
                       dcm::fit_report_to_json(report) + "\n");
  dcm::write_pointwise_csv((fs::path(out_dir) / "pointwise.csv").string(), report);
  dcm::write_text_file(
      (fs::path(out_dir) / "item_parameters.json").string(),
      dcm::item_params_to_json(fit.posterior_mean_items()) + "\n");
  if (!draws_path.empty()) dcm::write_draws_csv(draws_path, fit);
  std::cout << "fit artifacts written to " << out_dir << "\n";
  return 0;
}

int cmd_simulate(const std::string& model, const std::string& quality_name, int n,
                 std::uint64_t seed, const std::string& out_dir) {
  const auto variant = dcm::variant_from_string(model);
  const auto quality = dcm::quality_from_string(quality_name);
  if (!variant || !quality) {
    std::cerr << "unknown model or quality\n";
    return 2;
  }
  dcm::SimCondition condition;
  condition.generating_variant = *variant;
  condition.n_examinees = n;
  condition.quality = *quality;

  const auto qmatrix = dcm::build_paper_qmatrix();
  const auto data = dcm::generate_condition_data(condition, qmatrix, {}, seed);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  dcm::write_qmatrix_csv((fs::path(out_dir) / "qmatrix.csv").string(), qmatrix);
  dcm::write_responses_csv((fs::path(out_dir) / "responses.csv").string(), data);
  dcm::write_truth_json((fs::path(out_dir) / "truth.json").string(), data, condition,
                        *variant, seed);
  std::cout << "wrote " << n << "x" << qmatrix.n_items() << " responses, Q-matrix and "
            << "truth sidecar to " << out_dir << "\n";
  return 0;
}

int cmd_indices(const std::string& loglik_path, const std::string& point_path,
                const std::string& out_path) {
  const auto ll = dcm::read_loglik_csv(loglik_path);
  std::cout << "loglik matrix: " << ll.n_examinees << " examinees x " << ll.n_draws
            << " draws\n";

  const auto waic = dcm::compute_waic(ll);
  const auto loo = dcm::compute_psis_loo(ll);
  std::cout << "lpd_hat " << dcm::format_short(waic.lpd_hat) << "\n"
            << "waic " << dcm::format_short(waic.waic) << " (elpd "
            << dcm::format_short(waic.elpd_waic) << ", p_waic "
            << dcm::format_short(waic.p_waic) << ")\n"
            << "elpd_psis_loo " << dcm::format_short(loo.elpd) << " (p_loo "
            << dcm::format_short(loo.p_loo) << ", max khat "
            << dcm::format_short(loo.max_khat) << ", khat>0.7: "
            << loo.n_khat_above_07 << ")\n";

  dcm::FitIndexReport report;
  bool have_dic = false;
  if (!point_path.empty()) {
    const auto point = dcm::read_loglik_csv(point_path);
    std::vector<double> ll_point;
    if (point.n_examinees == ll.n_examinees && point.n_draws == 1) {
      ll_point = point.values;
    } else if (point.n_examinees == 1 && point.n_draws == ll.n_examinees) {
      ll_point = point.values;  // accept a single-row layout too
    } else {
      std::cerr << "point log-likelihood must hold one value per examinee\n";
      return 2;
    }
    const auto dic = dcm::compute_dic(ll, ll_point);
    std::cout << "dic " << dcm::format_short(dic.dic) << " (p_dic "
              << dcm::format_short(dic.p_dic) << ")\n";
    report = dcm::compute_fit_indices(ll, ll_point);
    have_dic = true;
  } else {
    report.lpd_hat = waic.lpd_hat;
    report.elpd_waic = waic.elpd_waic;
    report.p_waic = waic.p_waic;
    report.waic = waic.waic;
    report.elpd_psis_loo = loo.elpd;
    report.p_loo = loo.p_loo;
    report.max_khat = loo.max_khat;
    report.n_khat_above_07 = loo.n_khat_above_07;
    report.pointwise_lpd = waic.pointwise_lpd;
    report.pointwise_elpd_waic = waic.pointwise_elpd;
    report.pointwise_elpd_loo = loo.pointwise_elpd;
    report.pointwise_khat = loo.khat;
    std::cout << "dic skipped (no --loglik-at-point)\n";
  }
  if (!out_path.empty()) {
    dcm::write_text_file(out_path, dcm::fit_report_to_json(report) + "\n");
    std::cout << "report written to " << out_path
              << (have_dic ? "" : " (dic fields zero)") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian DCM estimation and model-selection toolkit"};
  app.require_subcommand(1);

  // run
  std::string run_config, run_preset, run_out;
  std::uint64_t run_seed = 0;
  int run_jobs = 1;
  auto* run = app.add_subcommand("run", "run a simulation study");
  run->add_option("--config", run_config, "study config JSON");
  run->add_option("--preset", run_preset, "desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  auto* seed_opt = run->add_option("--seed", run_seed, "study seed override");
  auto* jobs_opt = run->add_option("--jobs", run_jobs, "parallel replications");
  run->add_option("--out", run_out, "output directory override");

  // fit
  std::string fit_data, fit_qmatrix, fit_model, fit_prior = "informative";
  std::string fit_out = "fit_out", fit_draws;
  std::uint64_t fit_seed = 1;
  dcm::ChainConfig fit_chains;
  auto* fit = app.add_subcommand("fit", "fit one model to a response CSV");
  fit->add_option("--data", fit_data, "response CSV")->required();
  fit->add_option("--qmatrix", fit_qmatrix, "Q-matrix CSV")->required();
  fit->add_option("--model", fit_model, "lcdm|dina|crum")->required();
  fit->add_option("--prior", fit_prior, "informative|uninformative");
  fit->add_option("--chains", fit_chains.n_chains, "number of chains");
  fit->add_option("--burn-in", fit_chains.burn_in, "burn-in iterations");
  fit->add_option("--sampling", fit_chains.sampling, "sampling iterations");
  fit->add_option("--max-extensions", fit_chains.max_auto_extensions,
                  "doublings allowed when rhat > 1.1");
  fit->add_option("--seed", fit_seed, "fit seed");
  fit->add_option("--out", fit_out, "output directory");
  fit->add_option("--draws", fit_draws, "write draws CSV to this path");

  // indices
  std::string idx_loglik, idx_point, idx_out;
  auto* indices = app.add_subcommand("indices", "indices from a log-lik matrix CSV");
  indices->add_option("--loglik", idx_loglik, "N x S log-likelihood CSV")->required();
  indices->add_option("--loglik-at-point", idx_point,
                      "per-examinee log-lik at the point estimate (enables DIC)");
  indices->add_option("--out", idx_out, "write the report JSON here");

  // simulate
  std::string sim_model = "lcdm", sim_quality = "medium", sim_out = "sim_out";
  int sim_n = 500;
  std::uint64_t sim_seed = 1;
  auto* simulate = app.add_subcommand("simulate", "generate a study dataset");
  simulate->add_option("--model", sim_model, "generating model lcdm|dina|crum");
  simulate->add_option("--quality", sim_quality, "medium|high");
  simulate->add_option("--n", sim_n, "number of examinees");
  simulate->add_option("--seed", sim_seed, "generation seed");
  simulate->add_option("--out", sim_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(run_config, run_preset, run_seed, seed_opt->count() > 0, run_jobs,
                     jobs_opt->count() > 0, run_out);
    }
    if (fit->parsed()) {
      return cmd_fit(fit_data, fit_qmatrix, fit_model, fit_prior, fit_chains, fit_seed,
                     fit_out, fit_draws);
    }
    if (indices->parsed()) {
      return cmd_indices(idx_loglik, idx_point, idx_out);
    }
    if (simulate->parsed()) {
      return cmd_simulate(sim_model, sim_quality, sim_n, sim_seed, sim_out);
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
