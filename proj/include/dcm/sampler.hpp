#ifndef DCM_SAMPLER_HPP
#define DCM_SAMPLER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dcm/model.hpp"
#include "dcm/rng.hpp"
#include "dcm/simulate.hpp"

namespace dcm {

// Independent normal priors (mean 0, shared variance) on all item
// coefficients; Dirichlet prior on the class-probability vector.
struct PriorSpec {
  double item_variance = 5.0;
  std::vector<double> dirichlet_concentration;

  static PriorSpec informative(std::size_t n_classes);
  static PriorSpec uninformative(std::size_t n_classes);
  static PriorSpec for_level(PriorLevel level, std::size_t n_classes);
};

struct ChainConfig {
  int n_chains = 4;
  int burn_in = 1000;
  int sampling = 2000;
  int max_auto_extensions = 2;
  int adapt_window = 0;  // 0: adapt through the whole burn-in
  bool parallel_chains = true;
  // Monotonicity is enforced by default; switching it off removes the
  // label anchoring and is intended only for sensitivity comparisons.
  bool enforce_monotonicity = true;
};

// Flattened coefficient bookkeeping: per-item blocks (intercept first, then
// effects in key order), followed by the 2^A class probabilities.
struct ParameterLayout {
  std::vector<std::vector<EffectKey>> item_keys;
  std::vector<int> item_offsets;
  int n_item_coefficients = 0;
  int n_classes = 0;

  static ParameterLayout build(const QMatrix& qmatrix, ModelVariant variant,
                               int n_attributes);
  int n_parameters() const { return n_item_coefficients + n_classes; }
  int item_block_size(int item) const {
    return 1 + static_cast<int>(item_keys[item].size());
  }
  std::string parameter_name(int flat_index) const;
};

// Retained posterior output of one chain.
struct ChainDraws {
  int n_draws = 0;
  int n_parameters = 0;
  std::vector<double> values;           // n_draws x n_parameters, row-major
  std::vector<double> membership_mean;  // N x 2^A running-mean class posteriors
  std::vector<double> acceptance_rate;  // per item coefficient, sampling phase

  std::span<const double> draw(int s) const {
    return {values.data() + static_cast<std::size_t>(s) * n_parameters,
            static_cast<std::size_t>(n_parameters)};
  }
};

struct ConvergenceReport {
  std::vector<std::pair<std::string, double>> rhat;
  double max_rhat = 0.0;
  bool converged = false;
  int n_degenerate = 0;  // parameters with zero within-chain variance
  int extensions_used = 0;
  int burn_in_used = 0;
  int sampling_used = 0;
};

struct FitResult {
  ParameterLayout layout;
  std::vector<ChainDraws> chains;
  ConvergenceReport convergence;

  int total_draws() const;
  std::span<const double> draw(int pooled_index) const;
  // Posterior means across all retained draws of all chains.
  std::vector<double> posterior_mean_flat() const;
  std::vector<ItemParameters> posterior_mean_items() const;
  std::vector<double> posterior_mean_class_probs() const;
  std::vector<double> pooled_membership() const;  // N x 2^A
};

// Gelman-Rubin PSRF: sqrt(((n-1)/n * W + B/n) / W) with W the mean
// within-chain sample variance and B/n the variance of the chain means.
// W == 0 reports 1 and sets the degenerate flag.
double psrf(const std::vector<std::vector<double>>& chains,
            bool* degenerate = nullptr);

// One Markov chain of the Metropolis-within-Gibbs sampler: exact categorical
// draws for latent classes, conjugate Dirichlet for class probabilities,
// adaptive random-walk Metropolis (coordinate-wise, 0.44 acceptance target)
// for item coefficients with monotonicity-violating proposals auto-rejected.
class GibbsChain {
 public:
  GibbsChain(const ResponseMatrix& data, const QMatrix& qmatrix,
             ModelVariant variant, const PriorSpec& prior, std::uint64_t seed,
             bool enforce_monotonicity = true);

  void sample_assignments();
  void update_class_probs();
  void update_item_params(bool adapting);
  void sweep(bool adapting) {
    sample_assignments();
    update_class_probs();
    update_item_params(adapting);
  }

  const ParameterLayout& layout() const { return layout_; }
  const std::vector<int>& assignments() const { return assignments_; }
  const std::vector<double>& class_posteriors() const { return class_posterior_; }
  const std::vector<double>& class_probs() const { return class_probs_; }
  const std::vector<double>& coefficients(int item) const { return coefs_[item]; }

  // Test hooks.
  void set_class_probs(std::vector<double> probs);
  void set_assignments(std::vector<int> assignments);
  void set_coefficients(int item, std::vector<double> values);
  void set_all_proposal_scales(double scale);
  void freeze_adaptation() { adaptation_frozen_ = true; }

  void append_draw_to(std::vector<double>& out) const;
  void accumulate_membership(std::vector<double>& sums) const;
  std::vector<double> sampling_acceptance_rates() const;
  void reset_acceptance_counters();

 private:
  void rebuild_item_tables(int item);
  void rebuild_assignment_tables();
  double item_loglik(int item) const;
  bool item_monotone(int item) const;
  void initialize(std::uint64_t seed);

  const std::uint8_t* data_;
  int n_examinees_;
  int n_items_;
  int n_attributes_;
  int n_classes_;
  ModelVariant variant_;
  PriorSpec prior_;
  bool enforce_monotonicity_;
  ParameterLayout layout_;
  Rng rng_;

  // Per item: active-effect masks per class and monotonicity term lists.
  std::vector<std::vector<std::uint32_t>> class_effect_masks_;
  std::vector<std::vector<std::vector<int>>> monotone_terms_;

  std::vector<std::vector<double>> coefs_;
  std::vector<double> class_probs_;
  std::vector<double> log_class_probs_;
  std::vector<int> assignments_;
  std::vector<double> class_posterior_;  // N x C, last sample_assignments call
  std::vector<int> class_counts_;

  std::vector<double> eta_;             // I x C response logits
  std::vector<double> log_p_, log_q_;   // I x C tables
  std::vector<double> delta_, base_;    // assignment accumulators
  std::vector<int> suff_correct_;       // I x C correct counts
  bool suff_valid_ = false;

  std::vector<double> proposal_scale_;  // per item coefficient
  std::vector<long> adapt_steps_;
  std::vector<double> adapt_log_sum_;   // averaged tail of the adaptation path
  std::vector<long> adapt_log_count_;
  std::vector<long> proposals_, accepts_;
  bool adaptation_frozen_ = false;
  bool scales_finalized_ = false;
};

// Runs n_chains independent chains from dispersed initial states. If
// max R-hat exceeds 1.1 the burn-in and sampling lengths are doubled and
// estimation restarts, up to max_auto_extensions; persistent non-convergence
// is flagged in the report while draws are still returned.
FitResult run_chains(const ResponseMatrix& data, const QMatrix& qmatrix,
                     ModelVariant variant, const PriorSpec& prior,
                     const ChainConfig& config, std::uint64_t seed);

}  // namespace dcm

#endif  // DCM_SAMPLER_HPP
