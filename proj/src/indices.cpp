#include "dcm/indices.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dcm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> values) {
  double mx = -kInf;
  for (double v : values) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double total = 0.0;
  for (double v : values) total += std::exp(v - mx);
  return mx + std::log(total);
}

}  // namespace

std::vector<double> pointwise_loglik_at(std::span<const double> flat_params,
                                        const ParameterLayout& layout,
                                        const ResponseMatrix& data,
                                        const QMatrix& qmatrix) {
  const int n_items = qmatrix.n_items();
  const int n_attr = qmatrix.n_attributes();
  const int n_classes = layout.n_classes;

  // Per-item class tables for this parameter vector.
  std::vector<double> base(n_classes, 0.0);
  std::vector<double> delta(static_cast<std::size_t>(n_items) * n_classes);
  for (int i = 0; i < n_items; ++i) {
    const auto masks = class_activation_masks(layout.item_keys[i], n_attr);
    const double* beta = flat_params.data() + layout.item_offsets[i];
    for (int c = 0; c < n_classes; ++c) {
      double eta = beta[0];
      std::uint32_t mask = masks[c];
      while (mask) {
        eta += beta[1 + __builtin_ctz(mask)];
        mask &= mask - 1;
      }
      double lp, lq;
      log_prob_pair(eta, lp, lq);
      base[c] += lq;
      delta[static_cast<std::size_t>(i) * n_classes + c] = lp - lq;
    }
  }
  std::vector<double> log_nu(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    log_nu[c] = std::log(std::max(flat_params[layout.n_item_coefficients + c], 1e-300));
  }

  std::vector<double> out(data.n_examinees);
  std::vector<double> acc(n_classes);
  for (int e = 0; e < data.n_examinees; ++e) {
    for (int c = 0; c < n_classes; ++c) acc[c] = log_nu[c] + base[c];
    const std::uint8_t* row = data.data.data() + static_cast<std::size_t>(e) * n_items;
    for (int i = 0; i < n_items; ++i) {
      if (row[i]) {
        const double* d = delta.data() + static_cast<std::size_t>(i) * n_classes;
        for (int c = 0; c < n_classes; ++c) acc[c] += d[c];
      }
    }
    out[e] = log_sum_exp(acc);
  }
  return out;
}

LogLikMatrix pointwise_loglik(const FitResult& fit, const ResponseMatrix& data,
                              const QMatrix& qmatrix, ModelVariant) {
  const int s_total = fit.total_draws();
  if (s_total < 1) throw std::invalid_argument("no retained draws");

  LogLikMatrix ll;
  ll.n_examinees = data.n_examinees;
  ll.n_draws = s_total;
  ll.values.resize(static_cast<std::size_t>(data.n_examinees) * s_total);
  for (int s = 0; s < s_total; ++s) {
    const auto column = pointwise_loglik_at(fit.draw(s), fit.layout, data, qmatrix);
    for (int e = 0; e < data.n_examinees; ++e) {
      ll.values[static_cast<std::size_t>(e) * s_total + s] = column[e];
    }
  }
  return ll;
}

DicResult compute_dic(const LogLikMatrix& ll, std::span<const double> ll_at_point) {
  if (static_cast<int>(ll_at_point.size()) != ll.n_examinees) {
    throw std::invalid_argument("point log-likelihood size mismatch");
  }
  double ll_point_total = 0.0;
  for (double v : ll_at_point) ll_point_total += v;

  double mean_ll = 0.0;
  for (int s = 0; s < ll.n_draws; ++s) {
    double total = 0.0;
    for (int e = 0; e < ll.n_examinees; ++e) total += ll.at(e, s);
    mean_ll += total;
  }
  mean_ll /= static_cast<double>(ll.n_draws);

  DicResult out;
  out.p_dic = 2.0 * (ll_point_total - mean_ll);
  out.dic = -2.0 * ll_point_total + 2.0 * out.p_dic;
  return out;
}

WaicResult compute_waic(const LogLikMatrix& ll) {
  if (ll.n_draws < 2) throw std::invalid_argument("WAIC needs at least two draws");
  WaicResult out;
  out.pointwise_lpd.resize(ll.n_examinees);
  out.pointwise_elpd.resize(ll.n_examinees);
  const double log_s = std::log(static_cast<double>(ll.n_draws));
  for (int e = 0; e < ll.n_examinees; ++e) {
    const auto row = ll.row(e);
    const double lpd = log_sum_exp(row) - log_s;

    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(ll.n_draws);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(ll.n_draws - 1);

    out.pointwise_lpd[e] = lpd;
    out.pointwise_elpd[e] = lpd - var;
    out.lpd_hat += lpd;
    out.p_waic += var;
  }
  out.elpd_waic = out.lpd_hat - out.p_waic;
  out.waic = -2.0 * out.elpd_waic;
  return out;
}

GpdFit fit_generalized_pareto(std::vector<double> x) {
  if (x.size() < 5) throw std::invalid_argument("GPD fit needs >= 5 tail values");
  for (double v : x) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("GPD tail values must be finite and nonnegative");
    }
  }
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  if (x.back() - x.front() < 1e-30 * std::max(1.0, std::fabs(x.back()))) {
    return {-kInf, 0.0};  // constant tail, nothing to fit
  }

  // Zhang & Stephens (2009) profile posterior on a theta grid.
  const double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  std::size_t quart = static_cast<std::size_t>(std::floor(n / 4.0 + 0.5));
  if (quart < 1) quart = 1;
  double xstar = x[quart - 1];
  if (xstar <= 0.0) {
    auto it = std::find_if(x.begin(), x.end(), [](double v) { return v > 0.0; });
    if (it == x.end()) return {-kInf, 0.0};
    xstar = *it;
  }

  std::vector<double> theta(m), k(m), log_lik(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x.back() +
               (1.0 - std::sqrt(static_cast<double>(m) / (j + 0.5))) / (prior * xstar);
    double mean_log = 0.0;
    for (double v : x) mean_log += std::log1p(-theta[j] * v);
    k[j] = mean_log / static_cast<double>(n);
    if (theta[j] == 0.0 || k[j] == 0.0 || -theta[j] / k[j] <= 0.0) {
      log_lik[j] = -kInf;
    } else {
      log_lik[j] = static_cast<double>(n) * (std::log(-theta[j] / k[j]) - k[j] - 1.0);
    }
  }
  const double lse = log_sum_exp(log_lik);
  if (!std::isfinite(lse)) throw std::runtime_error("GPD profile likelihood degenerate");
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    theta_hat += theta[j] * std::exp(log_lik[j] - lse);
  }

  double khat = 0.0;
  for (double v : x) khat += std::log1p(-theta_hat * v);
  khat /= static_cast<double>(n);
  const double sigma = -khat / theta_hat;
  // Weakly informative regularization toward 0.5 (as in the reference
  // implementation of the smoothing method).
  khat = (khat * static_cast<double>(n) + 5.0) / (static_cast<double>(n) + 10.0);
  if (!std::isfinite(khat) || !std::isfinite(sigma)) {
    throw std::runtime_error("GPD fit produced non-finite estimates");
  }
  return {khat, sigma};
}

namespace {

double gpd_quantile(double p, double khat, double sigma) {
  if (std::fabs(khat) < 1e-12) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-khat * std::log1p(-p)) / khat;
}

}  // namespace

ImportanceWeights smooth_importance_weights(std::span<const double> raw_log_ratios) {
  const std::size_t s = raw_log_ratios.size();
  if (s == 0) throw std::invalid_argument("no importance ratios");

  ImportanceWeights out;
  out.log_weights.assign(raw_log_ratios.begin(), raw_log_ratios.end());
  double mx = -kInf;
  for (double v : out.log_weights) mx = std::max(mx, v);
  for (double& v : out.log_weights) v -= mx;  // raw maximum shifts to 0

  const std::size_t tail_len =
      std::min(static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(s))),
               static_cast<std::size_t>(std::ceil(3.0 * std::sqrt(static_cast<double>(s)))));
  if (tail_len < 5) {
    out.khat = kInf;  // not enough tail to fit; truncation-only
    return out;
  }

  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.log_weights[a] < out.log_weights[b];
  });

  const std::size_t first_tail = s - tail_len;
  const double cutoff = out.log_weights[order[first_tail - 1]];
  const double cutoff_exp = std::exp(cutoff);

  const double tail_spread = out.log_weights[order[s - 1]] -
                             out.log_weights[order[first_tail]];
  if (tail_spread < 1e-12) {
    out.khat = -kInf;  // constant tail: smoothing is a no-op
    return out;
  }

  std::vector<double> exceedances(tail_len);
  for (std::size_t k = 0; k < tail_len; ++k) {
    exceedances[k] = std::exp(out.log_weights[order[first_tail + k]]) - cutoff_exp;
  }

  GpdFit fit;
  try {
    fit = fit_generalized_pareto(exceedances);
  } catch (const std::exception&) {
    out.khat = kInf;  // fit failure: fall back to truncation-only
    return out;
  }
  if (!std::isfinite(fit.khat)) {
    out.khat = fit.khat;
    return out;
  }

  // Replace the sorted tail by expected order statistics of the fitted GPD,
  // then truncate everything at the raw maximum.
  for (std::size_t k = 0; k < tail_len; ++k) {
    const double p = (static_cast<double>(k) + 0.5) / static_cast<double>(tail_len);
    const double q = gpd_quantile(p, fit.khat, fit.sigma);
    out.log_weights[order[first_tail + k]] =
        std::min(std::log(q + cutoff_exp), 0.0);
  }
  out.khat = fit.khat;
  return out;
}

PsisLooResult compute_psis_loo(const LogLikMatrix& ll) {
  if (ll.n_draws < 25) throw std::invalid_argument("PSIS-LOO needs S >= 25");
  PsisLooResult out;
  out.khat.resize(ll.n_examinees);
  out.pointwise_elpd.resize(ll.n_examinees);
  out.max_khat = -kInf;

  const double log_s = std::log(static_cast<double>(ll.n_draws));
  std::vector<double> ratios(ll.n_draws), weighted(ll.n_draws);
  double lpd_hat = 0.0;
  for (int e = 0; e < ll.n_examinees; ++e) {
    const auto row = ll.row(e);
    for (int s = 0; s < ll.n_draws; ++s) ratios[s] = -row[s];
    const auto weights = smooth_importance_weights(ratios);
    for (int s = 0; s < ll.n_draws; ++s) {
      weighted[s] = weights.log_weights[s] + row[s];
    }
    const double elpd_e = log_sum_exp(weighted) - log_sum_exp(weights.log_weights);
    out.pointwise_elpd[e] = elpd_e;
    out.elpd += elpd_e;
    out.khat[e] = weights.khat;
    out.max_khat = std::max(out.max_khat, weights.khat);
    if (weights.khat > 0.7) ++out.n_khat_above_07;
    lpd_hat += log_sum_exp(row) - log_s;
  }
  out.p_loo = lpd_hat - out.elpd;
  return out;
}

std::vector<double> exact_loo_pointwise(const ResponseMatrix& data,
                                        const QMatrix& qmatrix, ModelVariant variant,
                                        const PriorSpec& prior,
                                        const ChainConfig& config, std::uint64_t seed) {
  const int n = data.n_examinees;
  if (n < 1) throw std::invalid_argument("empty data");

  std::vector<double> elpd(n);
  for (int e = 0; e < n; ++e) {
    ResponseMatrix held_out;
    held_out.n_examinees = 1;
    held_out.n_items = data.n_items;
    held_out.data.assign(data.data.begin() + static_cast<std::size_t>(e) * data.n_items,
                         data.data.begin() + static_cast<std::size_t>(e + 1) * data.n_items);

    ResponseMatrix rest;
    rest.n_examinees = n - 1;
    rest.n_items = data.n_items;
    rest.data.reserve(static_cast<std::size_t>(n - 1) * data.n_items);
    for (int o = 0; o < n; ++o) {
      if (o == e) continue;
      rest.data.insert(rest.data.end(),
                       data.data.begin() + static_cast<std::size_t>(o) * data.n_items,
                       data.data.begin() + static_cast<std::size_t>(o + 1) * data.n_items);
    }

    std::vector<double> held_ll;
    const std::uint64_t refit_seed = mix_seed({seed, static_cast<std::uint64_t>(e)});
    if (rest.n_examinees == 0) {
      // Single-examinee input: the refit posterior is the prior, sampled by
      // running the same kernel with no data rows.
      std::vector<double> draw_buffer;
      GibbsChain chain(rest, qmatrix, variant, prior,
                       mix_seed({refit_seed, 0}));
      for (int it = 0; it < config.burn_in; ++it) chain.sweep(true);
      const auto layout = chain.layout();
      for (int it = 0; it < config.sampling * config.n_chains; ++it) {
        chain.sweep(false);
        draw_buffer.clear();
        chain.append_draw_to(draw_buffer);
        const auto point = pointwise_loglik_at(draw_buffer, layout, held_out, qmatrix);
        held_ll.push_back(point[0]);
      }
    } else {
      const auto fit = run_chains(rest, qmatrix, variant, prior, config, refit_seed);
      if (!fit.convergence.converged) {
        throw std::runtime_error("exact LOO refit failed to converge (examinee " +
                                 std::to_string(e) + ")");
      }
      const auto held_matrix = pointwise_loglik(fit, held_out, qmatrix, variant);
      held_ll.assign(held_matrix.values.begin(), held_matrix.values.end());
    }
    elpd[e] = log_sum_exp(held_ll) - std::log(static_cast<double>(held_ll.size()));
  }
  return elpd;
}

double exact_loo(const ResponseMatrix& data, const QMatrix& qmatrix,
                 ModelVariant variant, const PriorSpec& prior,
                 const ChainConfig& config, std::uint64_t seed) {
  double total = 0.0;
  for (double v : exact_loo_pointwise(data, qmatrix, variant, prior, config, seed)) {
    total += v;
  }
  return total;
}

FitIndexReport compute_fit_indices(const LogLikMatrix& ll,
                                   std::span<const double> ll_at_point) {
  FitIndexReport report;
  const auto dic = compute_dic(ll, ll_at_point);
  auto waic = compute_waic(ll);
  auto loo = compute_psis_loo(ll);

  report.dic = dic.dic;
  report.p_dic = dic.p_dic;
  report.lpd_hat = waic.lpd_hat;
  report.elpd_waic = waic.elpd_waic;
  report.p_waic = waic.p_waic;
  report.waic = waic.waic;
  report.elpd_psis_loo = loo.elpd;
  report.p_loo = loo.p_loo;
  report.max_khat = loo.max_khat;
  report.n_khat_above_07 = loo.n_khat_above_07;
  report.pointwise_lpd = std::move(waic.pointwise_lpd);
  report.pointwise_elpd_waic = std::move(waic.pointwise_elpd);
  report.pointwise_elpd_loo = std::move(loo.pointwise_elpd);
  report.pointwise_khat = std::move(loo.khat);
  return report;
}

}  // namespace dcm
