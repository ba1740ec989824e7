#include "dcm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <thread>

namespace dcm {

PriorSpec PriorSpec::informative(std::size_t n_classes) {
  PriorSpec p;
  p.item_variance = 5.0;
  p.dirichlet_concentration.assign(n_classes, 1.0);
  return p;
}

PriorSpec PriorSpec::uninformative(std::size_t n_classes) {
  PriorSpec p;
  p.item_variance = 1000.0;
  p.dirichlet_concentration.assign(n_classes, 1.0);
  return p;
}

PriorSpec PriorSpec::for_level(PriorLevel level, std::size_t n_classes) {
  return level == PriorLevel::Informative ? informative(n_classes)
                                          : uninformative(n_classes);
}

ParameterLayout ParameterLayout::build(const QMatrix& qmatrix, ModelVariant variant,
                                       int n_attributes) {
  ParameterLayout layout;
  layout.n_classes = 1 << n_attributes;
  int offset = 0;
  for (int i = 0; i < qmatrix.n_items(); ++i) {
    layout.item_offsets.push_back(offset);
    auto keys = active_effects(qmatrix.row(i), variant);
    if (keys.size() > 31) throw std::invalid_argument("too many effects per item");
    offset += 1 + static_cast<int>(keys.size());
    layout.item_keys.push_back(std::move(keys));
  }
  layout.n_item_coefficients = offset;
  return layout;
}

std::string ParameterLayout::parameter_name(int flat_index) const {
  if (flat_index >= n_item_coefficients) {
    return "nu[" + std::to_string(flat_index - n_item_coefficients) + "]";
  }
  int item = 0;
  while (item + 1 < static_cast<int>(item_offsets.size()) &&
         item_offsets[item + 1] <= flat_index) {
    ++item;
  }
  const int j = flat_index - item_offsets[item];
  char buf[16];
  std::snprintf(buf, sizeof(buf), "item%02d", item + 1);
  if (j == 0) return std::string(buf) + ".intercept";
  return std::string(buf) + ".effect[" + item_keys[item][j - 1].label() + "]";
}

double psrf(const std::vector<std::vector<double>>& chains, bool* degenerate) {
  if (degenerate) *degenerate = false;
  const std::size_t m = chains.size();
  if (m < 2) throw std::invalid_argument("psrf needs at least two chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw std::invalid_argument("psrf chains must be equal length");
  }
  if (n < 2) throw std::invalid_argument("psrf needs at least two draws per chain");

  double w = 0.0;
  std::vector<double> means(m);
  for (std::size_t c = 0; c < m; ++c) {
    double mean = 0.0;
    for (double v : chains[c]) mean += v;
    mean /= static_cast<double>(n);
    means[c] = mean;
    double var = 0.0;
    for (double v : chains[c]) var += (v - mean) * (v - mean);
    w += var / static_cast<double>(n - 1);
  }
  w /= static_cast<double>(m);

  double grand = 0.0;
  for (double v : means) grand += v;
  grand /= static_cast<double>(m);
  double b_over_n = 0.0;
  for (double v : means) b_over_n += (v - grand) * (v - grand);
  b_over_n /= static_cast<double>(m - 1);

  if (w <= 0.0) {
    if (degenerate) *degenerate = true;
    return 1.0;
  }
  const double nn = static_cast<double>(n);
  return std::sqrt(((nn - 1.0) / nn * w + b_over_n) / w);
}

GibbsChain::GibbsChain(const ResponseMatrix& data, const QMatrix& qmatrix,
                       ModelVariant variant, const PriorSpec& prior,
                       std::uint64_t seed, bool enforce_monotonicity)
    : data_(data.data.data()),
      n_examinees_(data.n_examinees),
      n_items_(data.n_items),
      n_attributes_(qmatrix.n_attributes()),
      n_classes_(1 << qmatrix.n_attributes()),
      variant_(variant),
      prior_(prior),
      enforce_monotonicity_(enforce_monotonicity),
      layout_(ParameterLayout::build(qmatrix, variant, qmatrix.n_attributes())),
      rng_(seed) {
  if (n_items_ != qmatrix.n_items()) {
    throw std::invalid_argument("data/Q-matrix item mismatch");
  }
  if (static_cast<int>(prior_.dirichlet_concentration.size()) != n_classes_) {
    throw std::invalid_argument("Dirichlet concentration size mismatch");
  }
  if (prior_.item_variance <= 0.0) throw std::invalid_argument("variance must be > 0");
  for (double a : prior_.dirichlet_concentration) {
    if (a <= 0.0) throw std::invalid_argument("concentration must be > 0");
  }

  class_effect_masks_.resize(n_items_);
  monotone_terms_.resize(n_items_);
  for (int i = 0; i < n_items_; ++i) {
    const auto& keys = layout_.item_keys[i];
    auto q_row = qmatrix.row(i);

    class_effect_masks_[i] = class_activation_masks(keys, n_attributes_);

    // For every (mastered-subset, added-attribute) pair over the measured
    // attributes, the effect coefficients whose sum must stay nonnegative.
    std::vector<int> measured;
    for (std::size_t a = 0; a < q_row.size(); ++a) {
      if (q_row[a]) measured.push_back(static_cast<int>(a));
    }
    const std::size_t m = measured.size();
    for (std::uint32_t sub = 0; sub < (1u << m); ++sub) {
      for (std::size_t add = 0; add < m; ++add) {
        if (sub & (1u << add)) continue;
        std::vector<int> terms;
        for (std::size_t j = 0; j < keys.size(); ++j) {
          bool contains_add = false;
          bool within = true;
          for (int a : keys[j].attributes()) {
            std::size_t pos = m;
            for (std::size_t k = 0; k < m; ++k) {
              if (measured[k] == a) {
                pos = k;
                break;
              }
            }
            if (pos == add) {
              contains_add = true;
            } else if (pos == m || !(sub & (1u << pos))) {
              within = false;
              break;
            }
          }
          if (within && contains_add) terms.push_back(static_cast<int>(j));
        }
        if (!terms.empty()) monotone_terms_[i].push_back(std::move(terms));
      }
    }
  }

  coefs_.resize(n_items_);
  for (int i = 0; i < n_items_; ++i) {
    coefs_[i].assign(layout_.item_block_size(i), 0.0);
  }
  class_probs_.assign(n_classes_, 1.0 / n_classes_);
  log_class_probs_.assign(n_classes_, std::log(1.0 / n_classes_));
  assignments_.assign(n_examinees_, 0);
  class_posterior_.assign(static_cast<std::size_t>(n_examinees_) * n_classes_, 0.0);
  class_counts_.assign(n_classes_, 0);
  if (n_examinees_ > 0) class_counts_[0] = n_examinees_;

  eta_.assign(static_cast<std::size_t>(n_items_) * n_classes_, 0.0);
  log_p_.assign(eta_.size(), 0.0);
  log_q_.assign(log_p_.size(), 0.0);
  delta_.assign(log_p_.size(), 0.0);
  base_.assign(n_classes_, 0.0);
  suff_correct_.assign(log_p_.size(), 0);

  proposal_scale_.assign(layout_.n_item_coefficients, 0.5);
  adapt_steps_.assign(layout_.n_item_coefficients, 0);
  adapt_log_sum_.assign(layout_.n_item_coefficients, 0.0);
  adapt_log_count_.assign(layout_.n_item_coefficients, 0);
  proposals_.assign(layout_.n_item_coefficients, 0);
  accepts_.assign(layout_.n_item_coefficients, 0);

  initialize(seed);
}

void GibbsChain::initialize(std::uint64_t) {
  // Over-dispersed but numerically sane starting points: prior-shaped draws
  // truncated to the monotone region, with the initial sd capped so the
  // uninformative prior does not start the chain in saturated-logit limbo.
  const double s0 = std::min(std::sqrt(prior_.item_variance), 2.0);
  for (int i = 0; i < n_items_; ++i) {
    auto& beta = coefs_[i];
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      for (auto& v : beta) v = s0 * rng_.normal();
      ok = item_monotone(i);
    }
    if (!ok) {
      for (std::size_t j = 1; j < beta.size(); ++j) beta[j] = std::fabs(beta[j]);
    }
    rebuild_item_tables(i);
  }
  if (n_examinees_ > 0) sample_assignments();
}

void GibbsChain::rebuild_item_tables(int item) {
  const auto& beta = coefs_[item];
  for (int c = 0; c < n_classes_; ++c) {
    double eta = beta[0];
    std::uint32_t mask = class_effect_masks_[item][c];
    while (mask) {
      const int j = __builtin_ctz(mask);
      eta += beta[1 + j];
      mask &= mask - 1;
    }
    double lp, lq;
    log_prob_pair(eta, lp, lq);
    const std::size_t idx = static_cast<std::size_t>(item) * n_classes_ + c;
    eta_[idx] = eta;
    log_p_[idx] = lp;
    log_q_[idx] = lq;
  }
}

void GibbsChain::rebuild_assignment_tables() {
  std::fill(base_.begin(), base_.end(), 0.0);
  for (int i = 0; i < n_items_; ++i) {
    for (int c = 0; c < n_classes_; ++c) {
      const std::size_t idx = static_cast<std::size_t>(i) * n_classes_ + c;
      base_[c] += log_q_[idx];
      delta_[idx] = log_p_[idx] - log_q_[idx];
    }
  }
}

void GibbsChain::sample_assignments() {
  rebuild_assignment_tables();
  std::fill(class_counts_.begin(), class_counts_.end(), 0);

  std::vector<double> acc(n_classes_);
  for (int e = 0; e < n_examinees_; ++e) {
    for (int c = 0; c < n_classes_; ++c) acc[c] = log_class_probs_[c] + base_[c];
    const std::uint8_t* row = data_ + static_cast<std::size_t>(e) * n_items_;
    for (int i = 0; i < n_items_; ++i) {
      if (row[i]) {
        const double* d = delta_.data() + static_cast<std::size_t>(i) * n_classes_;
        for (int c = 0; c < n_classes_; ++c) acc[c] += d[c];
      }
    }
    double mx = acc[0];
    for (int c = 1; c < n_classes_; ++c) mx = std::max(mx, acc[c]);
    double total = 0.0;
    for (int c = 0; c < n_classes_; ++c) {
      acc[c] = std::exp(acc[c] - mx);
      total += acc[c];
    }
    double* post = class_posterior_.data() + static_cast<std::size_t>(e) * n_classes_;
    for (int c = 0; c < n_classes_; ++c) post[c] = acc[c] / total;

    const double u = rng_.uniform() * total;
    double cum = 0.0;
    int pick = n_classes_ - 1;
    for (int c = 0; c < n_classes_; ++c) {
      cum += acc[c];
      if (u < cum) {
        pick = c;
        break;
      }
    }
    assignments_[e] = pick;
    ++class_counts_[pick];
  }
  suff_valid_ = false;
}

void GibbsChain::update_class_probs() {
  std::vector<double> conc(n_classes_);
  for (int c = 0; c < n_classes_; ++c) {
    conc[c] = prior_.dirichlet_concentration[c] + class_counts_[c];
  }
  rng_.dirichlet(conc, class_probs_);
  for (int c = 0; c < n_classes_; ++c) {
    log_class_probs_[c] = std::log(class_probs_[c]);
  }
}

double GibbsChain::item_loglik(int item) const {
  double ll = 0.0;
  const std::size_t off = static_cast<std::size_t>(item) * n_classes_;
  for (int c = 0; c < n_classes_; ++c) {
    const int s = suff_correct_[off + c];
    const int n = class_counts_[c];
    ll += s * log_p_[off + c] + (n - s) * log_q_[off + c];
  }
  return ll;
}

bool GibbsChain::item_monotone(int item) const {
  if (!enforce_monotonicity_) return true;
  const auto& beta = coefs_[item];
  for (const auto& terms : monotone_terms_[item]) {
    double sum = 0.0;
    for (int j : terms) sum += beta[1 + j];
    if (sum < 0.0) return false;
  }
  return true;
}

void GibbsChain::update_item_params(bool adapting) {
  if (!adapting && !scales_finalized_) {
    // Freeze to the averaged tail of the adaptation trajectory rather than
    // its last noisy iterate.
    for (std::size_t k = 0; k < proposal_scale_.size(); ++k) {
      if (adapt_log_count_[k] > 0) {
        proposal_scale_[k] =
            std::exp(adapt_log_sum_[k] / static_cast<double>(adapt_log_count_[k]));
      }
    }
    scales_finalized_ = true;
  }
  if (!suff_valid_) {
    std::fill(suff_correct_.begin(), suff_correct_.end(), 0);
    for (int e = 0; e < n_examinees_; ++e) {
      const std::uint8_t* row = data_ + static_cast<std::size_t>(e) * n_items_;
      const int c = assignments_[e];
      for (int i = 0; i < n_items_; ++i) {
        suff_correct_[static_cast<std::size_t>(i) * n_classes_ + c] += row[i];
      }
    }
    suff_valid_ = true;
  }

  const double inv_two_var = 0.5 / prior_.item_variance;
  std::vector<double> cand_eta(n_classes_), cand_lp(n_classes_), cand_lq(n_classes_);

  for (int i = 0; i < n_items_; ++i) {
    auto& beta = coefs_[i];
    const std::size_t off = static_cast<std::size_t>(i) * n_classes_;
    double cur_ll = item_loglik(i);

    for (std::size_t j = 0; j < beta.size(); ++j) {
      const int flat = layout_.item_offsets[i] + static_cast<int>(j);
      const double scale = proposal_scale_[flat];
      const double old_v = beta[j];
      const double new_v = old_v + scale * rng_.normal();

      bool accepted = false;
      beta[j] = new_v;
      if (item_monotone(i)) {
        const double dv = new_v - old_v;
        const std::uint32_t bit = j == 0 ? 0u : (1u << (j - 1));
        double cand_ll = 0.0;
        for (int c = 0; c < n_classes_; ++c) {
          double eta = eta_[off + c];
          if (j == 0 || (class_effect_masks_[i][c] & bit)) eta += dv;
          double lp, lq;
          log_prob_pair(eta, lp, lq);
          cand_eta[c] = eta;
          cand_lp[c] = lp;
          cand_lq[c] = lq;
          cand_ll += suff_correct_[off + c] * lp +
                     (class_counts_[c] - suff_correct_[off + c]) * lq;
        }
        const double log_ratio =
            cand_ll - cur_ll + inv_two_var * (old_v * old_v - new_v * new_v);
        if (log_ratio >= 0.0 || std::log(rng_.uniform() + 1e-300) < log_ratio) {
          accepted = true;
          cur_ll = cand_ll;
          for (int c = 0; c < n_classes_; ++c) {
            eta_[off + c] = cand_eta[c];
            log_p_[off + c] = cand_lp[c];
            log_q_[off + c] = cand_lq[c];
          }
        }
      }
      if (!accepted) beta[j] = old_v;

      if (adapting && !adaptation_frozen_) {
        const long t = ++adapt_steps_[flat];
        const double gamma = std::min(0.25, 2.0 / std::sqrt(static_cast<double>(t)));
        double s = proposal_scale_[flat] *
                   std::exp(gamma * ((accepted ? 1.0 : 0.0) - 0.44));
        proposal_scale_[flat] = std::clamp(s, 1e-6, 4.0e2);
        if (t > 150) {
          adapt_log_sum_[flat] += std::log(proposal_scale_[flat]);
          ++adapt_log_count_[flat];
        }
      } else {
        ++proposals_[flat];
        if (accepted) ++accepts_[flat];
      }
    }
  }
}

void GibbsChain::set_class_probs(std::vector<double> probs) {
  if (static_cast<int>(probs.size()) != n_classes_) {
    throw std::invalid_argument("class prob size mismatch");
  }
  class_probs_ = std::move(probs);
  for (int c = 0; c < n_classes_; ++c) {
    log_class_probs_[c] = std::log(std::max(class_probs_[c], 1e-300));
  }
}

void GibbsChain::set_assignments(std::vector<int> assignments) {
  if (static_cast<int>(assignments.size()) != n_examinees_) {
    throw std::invalid_argument("assignment size mismatch");
  }
  assignments_ = std::move(assignments);
  std::fill(class_counts_.begin(), class_counts_.end(), 0);
  for (int z : assignments_) {
    if (z < 0 || z >= n_classes_) throw std::invalid_argument("bad class index");
    ++class_counts_[z];
  }
  suff_valid_ = false;
}

void GibbsChain::set_coefficients(int item, std::vector<double> values) {
  if (values.size() != coefs_[item].size()) {
    throw std::invalid_argument("coefficient size mismatch");
  }
  coefs_[item] = std::move(values);
  rebuild_item_tables(item);
}

void GibbsChain::set_all_proposal_scales(double scale) {
  std::fill(proposal_scale_.begin(), proposal_scale_.end(), scale);
  scales_finalized_ = true;
}

void GibbsChain::append_draw_to(std::vector<double>& out) const {
  for (int i = 0; i < n_items_; ++i) {
    out.insert(out.end(), coefs_[i].begin(), coefs_[i].end());
  }
  out.insert(out.end(), class_probs_.begin(), class_probs_.end());
}

void GibbsChain::accumulate_membership(std::vector<double>& sums) const {
  for (std::size_t k = 0; k < class_posterior_.size(); ++k) {
    sums[k] += class_posterior_[k];
  }
}

std::vector<double> GibbsChain::sampling_acceptance_rates() const {
  std::vector<double> rates(proposals_.size(), 0.0);
  for (std::size_t k = 0; k < proposals_.size(); ++k) {
    rates[k] = proposals_[k] > 0
                   ? static_cast<double>(accepts_[k]) / proposals_[k]
                   : 0.0;
  }
  return rates;
}

void GibbsChain::reset_acceptance_counters() {
  std::fill(proposals_.begin(), proposals_.end(), 0);
  std::fill(accepts_.begin(), accepts_.end(), 0);
}

int FitResult::total_draws() const {
  int total = 0;
  for (const auto& c : chains) total += c.n_draws;
  return total;
}

std::span<const double> FitResult::draw(int pooled_index) const {
  const int per_chain = chains.front().n_draws;
  return chains[pooled_index / per_chain].draw(pooled_index % per_chain);
}

std::vector<double> FitResult::posterior_mean_flat() const {
  const int p = layout.n_parameters();
  std::vector<double> mean(p, 0.0);
  long total = 0;
  for (const auto& chain : chains) {
    for (int s = 0; s < chain.n_draws; ++s) {
      const auto row = chain.draw(s);
      for (int k = 0; k < p; ++k) mean[k] += row[k];
    }
    total += chain.n_draws;
  }
  for (auto& v : mean) v /= static_cast<double>(total);
  return mean;
}

std::vector<ItemParameters> FitResult::posterior_mean_items() const {
  const auto mean = posterior_mean_flat();
  std::vector<ItemParameters> items;
  items.reserve(layout.item_keys.size());
  for (std::size_t i = 0; i < layout.item_keys.size(); ++i) {
    ItemParameters item;
    const int off = layout.item_offsets[i];
    item.intercept = mean[off];
    for (std::size_t j = 0; j < layout.item_keys[i].size(); ++j) {
      item.effects.emplace_back(layout.item_keys[i][j], mean[off + 1 + j]);
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<double> FitResult::posterior_mean_class_probs() const {
  const auto mean = posterior_mean_flat();
  return {mean.begin() + layout.n_item_coefficients, mean.end()};
}

std::vector<double> FitResult::pooled_membership() const {
  std::vector<double> pooled(chains.front().membership_mean.size(), 0.0);
  for (const auto& chain : chains) {
    for (std::size_t k = 0; k < pooled.size(); ++k) {
      pooled[k] += chain.membership_mean[k];
    }
  }
  for (auto& v : pooled) v /= static_cast<double>(chains.size());
  return pooled;
}

namespace {

ChainDraws run_single_chain(const ResponseMatrix& data, const QMatrix& qmatrix,
                            ModelVariant variant, const PriorSpec& prior,
                            int burn_in, int sampling, int adapt_window,
                            bool enforce_monotonicity, std::uint64_t chain_seed) {
  GibbsChain chain(data, qmatrix, variant, prior, chain_seed, enforce_monotonicity);
  const int adapt_until = adapt_window > 0 ? std::min(adapt_window, burn_in) : burn_in;
  for (int it = 0; it < burn_in; ++it) chain.sweep(it < adapt_until);

  ChainDraws draws;
  draws.n_draws = sampling;
  draws.n_parameters = chain.layout().n_parameters();
  draws.values.reserve(static_cast<std::size_t>(sampling) * draws.n_parameters);
  draws.membership_mean.assign(
      static_cast<std::size_t>(data.n_examinees) * (1 << qmatrix.n_attributes()),
      0.0);
  chain.reset_acceptance_counters();
  for (int it = 0; it < sampling; ++it) {
    chain.sweep(false);
    chain.append_draw_to(draws.values);
    chain.accumulate_membership(draws.membership_mean);
  }
  for (auto& v : draws.membership_mean) v /= static_cast<double>(sampling);
  draws.acceptance_rate = chain.sampling_acceptance_rates();
  return draws;
}

}  // namespace

FitResult run_chains(const ResponseMatrix& data, const QMatrix& qmatrix,
                     ModelVariant variant, const PriorSpec& prior,
                     const ChainConfig& config, std::uint64_t seed) {
  if (data.n_examinees < 1) throw std::invalid_argument("empty data");
  if (config.n_chains < 1 || config.burn_in < 1 || config.sampling < 1 ||
      config.max_auto_extensions < 0) {
    throw std::invalid_argument("invalid chain configuration");
  }

  FitResult result;
  result.layout = ParameterLayout::build(qmatrix, variant, qmatrix.n_attributes());

  int burn = config.burn_in;
  int sampling = config.sampling;
  for (int attempt = 0; attempt <= config.max_auto_extensions; ++attempt) {
    std::vector<ChainDraws> chains(config.n_chains);
    if (config.parallel_chains && config.n_chains > 1) {
      std::vector<std::thread> workers;
      std::vector<std::exception_ptr> errors(config.n_chains);
      for (int c = 0; c < config.n_chains; ++c) {
        workers.emplace_back([&, c] {
          try {
            chains[c] = run_single_chain(data, qmatrix, variant, prior, burn,
                                         sampling, config.adapt_window,
                                         config.enforce_monotonicity,
                                         mix_seed({seed, static_cast<std::uint64_t>(c)}));
          } catch (...) {
            errors[c] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
      }
    } else {
      for (int c = 0; c < config.n_chains; ++c) {
        chains[c] = run_single_chain(data, qmatrix, variant, prior, burn, sampling,
                                     config.adapt_window, config.enforce_monotonicity,
                                     mix_seed({seed, static_cast<std::uint64_t>(c)}));
      }
    }

    ConvergenceReport report;
    report.extensions_used = attempt;
    report.burn_in_used = burn;
    report.sampling_used = sampling;
    report.max_rhat = 0.0;
    if (config.n_chains >= 2) {
      const int p = result.layout.n_parameters();
      std::vector<std::vector<double>> columns(config.n_chains,
                                               std::vector<double>(sampling));
      for (int k = 0; k < p; ++k) {
        for (int c = 0; c < config.n_chains; ++c) {
          for (int s = 0; s < sampling; ++s) {
            columns[c][s] = chains[c].draw(s)[k];
          }
        }
        bool degenerate = false;
        const double r = psrf(columns, &degenerate);
        report.rhat.emplace_back(result.layout.parameter_name(k), r);
        if (degenerate) ++report.n_degenerate;
        report.max_rhat = std::max(report.max_rhat, r);
      }
    }
    report.converged = config.n_chains < 2 || report.max_rhat <= 1.1;

    result.chains = std::move(chains);
    result.convergence = std::move(report);
    if (result.convergence.converged || attempt == config.max_auto_extensions) {
      break;
    }
    burn *= 2;
    sampling *= 2;
  }
  return result;
}

}  // namespace dcm
