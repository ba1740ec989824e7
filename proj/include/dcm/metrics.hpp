#ifndef DCM_METRICS_HPP
#define DCM_METRICS_HPP

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "dcm/model.hpp"

namespace dcm {

// Parameter classes recovery statistics aggregate over.
enum class ParamClass { Intercept = 0, Main = 1, TwoWay = 2, ThreeWay = 3 };

std::string_view to_string(ParamClass c);
ParamClass param_class_of(const EffectKey& key);

struct RecoveryCell {
  double bias = 0.0;
  double rmse = 0.0;
  long n = 0;
};

// bias = mean(est - true), RMSE = sqrt(mean((est - true)^2)), aggregated per
// parameter class over items and replications.
struct RecoveryReport {
  std::array<RecoveryCell, 4> cells{};

  const RecoveryCell& cell(ParamClass c) const {
    return cells[static_cast<int>(c)];
  }
};

// Streams (estimate, truth) item-parameter pairs across replications.
class RecoveryAccumulator {
 public:
  void add(const std::vector<ItemParameters>& estimates,
           const std::vector<ItemParameters>& truth);
  void add_value(ParamClass c, double estimate, double truth);
  RecoveryReport report() const;

 private:
  std::array<double, 4> sum_err_{};
  std::array<double, 4> sum_sq_{};
  std::array<long, 4> count_{};
};

RecoveryReport compute_bias_rmse(const std::vector<std::vector<ItemParameters>>& estimates,
                                 const std::vector<ItemParameters>& truth);

// MAP profile call plus marginal mastery calls per examinee.
struct ClassificationCalls {
  std::vector<int> profile_calls;                    // lattice class indices
  std::vector<std::vector<double>> marginal_probs;   // per examinee, per attribute
  std::vector<AttributeVector> marginal_calls;
};

// membership: N x 2^A posterior class probabilities (rows sum to 1).
// Profile call = argmax class probability (ties to the lowest index);
// marginal mastery of attribute a = 1 iff its summed class probability
// exceeds 0.5 (ties to 0).
ClassificationCalls classify_examinees(std::span<const double> membership,
                                       const ProfileLattice& lattice);

struct ClassificationReport {
  double profile_rate = 0.0;
  std::vector<double> marginal_rates;
  double marginal_mean = 0.0;
};

ClassificationReport classification_rates(const ClassificationCalls& calls,
                                          std::span<const AttributeVector> truth);

// Expected draw-agreement rates: the posterior probability mass on the true
// profile (and true per-attribute status) averaged over examinees. This is
// the quantity the published accuracy tables report; it sits below the
// MAP-call rates because it averages over classification draws instead of
// committing to the argmax.
ClassificationReport posterior_agreement_rates(std::span<const double> membership,
                                               const ProfileLattice& lattice,
                                               std::span<const AttributeVector> truth);

}  // namespace dcm

#endif  // DCM_METRICS_HPP
