#include "dcm/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace dcm {

std::string_view to_string(ParamClass c) {
  switch (c) {
    case ParamClass::Intercept: return "intercept";
    case ParamClass::Main: return "main";
    case ParamClass::TwoWay: return "two_way";
    case ParamClass::ThreeWay: return "three_way";
  }
  return "intercept";
}

ParamClass param_class_of(const EffectKey& key) {
  switch (key.order()) {
    case 1: return ParamClass::Main;
    case 2: return ParamClass::TwoWay;
    default: return ParamClass::ThreeWay;
  }
}

void RecoveryAccumulator::add_value(ParamClass c, double estimate, double truth) {
  const int k = static_cast<int>(c);
  const double err = estimate - truth;
  sum_err_[k] += err;
  sum_sq_[k] += err * err;
  ++count_[k];
}

void RecoveryAccumulator::add(const std::vector<ItemParameters>& estimates,
                              const std::vector<ItemParameters>& truth) {
  if (estimates.size() != truth.size()) {
    throw std::invalid_argument("estimate/truth item counts differ");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    add_value(ParamClass::Intercept, estimates[i].intercept, truth[i].intercept);
    for (const auto& [key, true_value] : truth[i].effects) {
      const double* est = estimates[i].find(key);
      if (!est) throw std::invalid_argument("estimate missing effect " + key.label());
      add_value(param_class_of(key), *est, true_value);
    }
  }
}

RecoveryReport RecoveryAccumulator::report() const {
  RecoveryReport out;
  for (int k = 0; k < 4; ++k) {
    if (count_[k] == 0) continue;
    out.cells[k].n = count_[k];
    out.cells[k].bias = sum_err_[k] / static_cast<double>(count_[k]);
    out.cells[k].rmse = std::sqrt(sum_sq_[k] / static_cast<double>(count_[k]));
  }
  return out;
}

RecoveryReport compute_bias_rmse(const std::vector<std::vector<ItemParameters>>& estimates,
                                 const std::vector<ItemParameters>& truth) {
  if (estimates.empty()) throw std::invalid_argument("need at least one replication");
  RecoveryAccumulator acc;
  for (const auto& rep : estimates) acc.add(rep, truth);
  return acc.report();
}

ClassificationCalls classify_examinees(std::span<const double> membership,
                                       const ProfileLattice& lattice) {
  const std::size_t n_classes = lattice.size();
  if (n_classes == 0 || membership.size() % n_classes != 0) {
    throw std::invalid_argument("membership size not a multiple of class count");
  }
  const std::size_t n = membership.size() / n_classes;
  const int n_attr = lattice.n_attributes();

  ClassificationCalls calls;
  calls.profile_calls.resize(n);
  calls.marginal_probs.resize(n);
  calls.marginal_calls.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    const double* post = membership.data() + e * n_classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_classes; ++c) {
      if (post[c] > post[best]) best = c;  // ties keep the lowest index
    }
    calls.profile_calls[e] = static_cast<int>(best);

    std::vector<double> marg(n_attr, 0.0);
    for (std::size_t c = 0; c < n_classes; ++c) {
      for (int a = 0; a < n_attr; ++a) {
        if ((c >> a) & 1) marg[a] += post[c];
      }
    }
    std::vector<std::uint8_t> bits(n_attr);
    for (int a = 0; a < n_attr; ++a) bits[a] = marg[a] > 0.5 ? 1 : 0;
    calls.marginal_probs[e] = std::move(marg);
    calls.marginal_calls.emplace_back(std::move(bits));
  }
  return calls;
}

ClassificationReport posterior_agreement_rates(std::span<const double> membership,
                                               const ProfileLattice& lattice,
                                               std::span<const AttributeVector> truth) {
  const std::size_t n_classes = lattice.size();
  const std::size_t n = truth.size();
  if (membership.size() != n * n_classes) {
    throw std::invalid_argument("membership/truth size mismatch");
  }
  if (n == 0) throw std::invalid_argument("no examinees");
  const int n_attr = lattice.n_attributes();

  ClassificationReport report;
  report.marginal_rates.assign(n_attr, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    const double* post = membership.data() + e * n_classes;
    report.profile_rate += post[truth[e].to_index()];
    for (int a = 0; a < n_attr; ++a) {
      double mastered = 0.0;
      for (std::size_t c = 0; c < n_classes; ++c) {
        if ((c >> a) & 1) mastered += post[c];
      }
      report.marginal_rates[a] += truth[e].mastered(a) ? mastered : 1.0 - mastered;
    }
  }
  report.profile_rate /= static_cast<double>(n);
  for (double& r : report.marginal_rates) {
    r /= static_cast<double>(n);
    report.marginal_mean += r;
  }
  report.marginal_mean /= static_cast<double>(n_attr);
  return report;
}

ClassificationReport classification_rates(const ClassificationCalls& calls,
                                          std::span<const AttributeVector> truth) {
  const std::size_t n = truth.size();
  if (calls.profile_calls.size() != n) {
    throw std::invalid_argument("call/truth examinee counts differ");
  }
  if (n == 0) throw std::invalid_argument("no examinees");
  const int n_attr = truth.front().size();

  ClassificationReport report;
  report.marginal_rates.assign(n_attr, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    if (static_cast<std::size_t>(calls.profile_calls[e]) == truth[e].to_index()) {
      report.profile_rate += 1.0;
    }
    for (int a = 0; a < n_attr; ++a) {
      if (calls.marginal_calls[e].mastered(a) == truth[e].mastered(a)) {
        report.marginal_rates[a] += 1.0;
      }
    }
  }
  report.profile_rate /= static_cast<double>(n);
  for (double& r : report.marginal_rates) {
    r /= static_cast<double>(n);
    report.marginal_mean += r;
  }
  report.marginal_mean /= static_cast<double>(n_attr);
  return report;
}

}  // namespace dcm
