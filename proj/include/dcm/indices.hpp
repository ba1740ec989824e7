#ifndef DCM_INDICES_HPP
#define DCM_INDICES_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "dcm/model.hpp"
#include "dcm/sampler.hpp"
#include "dcm/simulate.hpp"

namespace dcm {

// N x S matrix of log p(y_e | theta^s) with the latent profile marginalized
// out; all entries finite and <= 0.
struct LogLikMatrix {
  int n_examinees = 0;
  int n_draws = 0;
  std::vector<double> values;  // row-major, N x S

  double at(int e, int s) const {
    return values[static_cast<std::size_t>(e) * n_draws + s];
  }
  std::span<const double> row(int e) const {
    return {values.data() + static_cast<std::size_t>(e) * n_draws,
            static_cast<std::size_t>(n_draws)};
  }
};

// Per-examinee marginal log-likelihoods for one flattened parameter vector
// (item coefficient blocks then class probabilities), log-sum-exp over
// classes.
std::vector<double> pointwise_loglik_at(std::span<const double> flat_params,
                                        const ParameterLayout& layout,
                                        const ResponseMatrix& data,
                                        const QMatrix& qmatrix);

// The full matrix over all pooled retained draws.
LogLikMatrix pointwise_loglik(const FitResult& fit, const ResponseMatrix& data,
                              const QMatrix& qmatrix, ModelVariant variant);

struct DicResult {
  double dic = 0.0;
  double p_dic = 0.0;
};

// DIC from the pointwise matrix and the per-examinee log-likelihood at the
// posterior-mean point estimate.
DicResult compute_dic(const LogLikMatrix& ll, std::span<const double> ll_at_point);

struct WaicResult {
  double elpd_waic = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
  double lpd_hat = 0.0;
  std::vector<double> pointwise_lpd;
  std::vector<double> pointwise_elpd;
};

// lpd-hat via log-sum-exp minus log S; penalty is the sum of pointwise
// sample variances (S-1 denominator). Requires S >= 2.
WaicResult compute_waic(const LogLikMatrix& ll);

struct GpdFit {
  double khat = 0.0;
  double sigma = 0.0;
};

// Profile-likelihood (Zhang-Stephens style) generalized Pareto fit on
// positive exceedances. Needs >= 5 values; a constant sample reports
// khat = -inf as the degenerate flag.
GpdFit fit_generalized_pareto(std::vector<double> exceedances);

// Smoothed importance weights for one examinee (log scale, shifted so the
// raw maximum is 0). The M = min(ceil(0.2 S), ceil(3 sqrt(S))) largest
// weights are replaced by expected order statistics of the fitted GPD and
// everything is truncated at the raw maximum. A failed GPD fit falls back
// to truncation-only with khat = +inf.
struct ImportanceWeights {
  std::vector<double> log_weights;
  double khat = 0.0;
};

ImportanceWeights smooth_importance_weights(std::span<const double> raw_log_ratios);

struct PsisLooResult {
  double elpd = 0.0;
  double p_loo = 0.0;
  double max_khat = 0.0;
  int n_khat_above_07 = 0;
  std::vector<double> khat;
  std::vector<double> pointwise_elpd;
};

// PSIS-LOO elpd; raw ratio for examinee e at draw s is 1/p(y_e|theta^s) in
// log space. Requires S >= 25. Points with khat > 0.7 are still computed
// but counted as unreliable.
PsisLooResult compute_psis_loo(const LogLikMatrix& ll);

// Brute-force LOO oracle: refits the model once per held-out examinee and
// scores the held-out row against the refit posterior. Aborts if any refit
// fails to converge. Small N only.
std::vector<double> exact_loo_pointwise(const ResponseMatrix& data,
                                        const QMatrix& qmatrix, ModelVariant variant,
                                        const PriorSpec& prior,
                                        const ChainConfig& config, std::uint64_t seed);
double exact_loo(const ResponseMatrix& data, const QMatrix& qmatrix,
                 ModelVariant variant, const PriorSpec& prior,
                 const ChainConfig& config, std::uint64_t seed);

// All three indices plus pointwise diagnostics.
struct FitIndexReport {
  double dic = 0.0;
  double p_dic = 0.0;
  double lpd_hat = 0.0;
  double elpd_waic = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
  double elpd_psis_loo = 0.0;
  double p_loo = 0.0;
  double max_khat = 0.0;
  int n_khat_above_07 = 0;
  std::vector<double> pointwise_lpd;
  std::vector<double> pointwise_elpd_waic;
  std::vector<double> pointwise_elpd_loo;
  std::vector<double> pointwise_khat;
};

FitIndexReport compute_fit_indices(const LogLikMatrix& ll,
                                   std::span<const double> ll_at_point);

}  // namespace dcm

#endif  // DCM_INDICES_HPP
