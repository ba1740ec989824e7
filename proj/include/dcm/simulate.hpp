#ifndef DCM_SIMULATE_HPP
#define DCM_SIMULATE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcm/model.hpp"

namespace dcm {

// Profile mixing weights over the 2^A classes (lattice index order).
// Entries are normalized by their sum before sampling; the published
// base-rate column sums to 1.001 from rounding.
struct PopulationSpec {
  std::vector<double> proportions;

  void normalize();
  // The three-attribute study population: base rate .504 per attribute,
  // profile proportions as published.
  static PopulationSpec study_population();
};

enum class ItemQuality { Medium, High };

std::string_view to_string(ItemQuality q);
std::optional<ItemQuality> quality_from_string(std::string_view s);

// Generating item parameters (logit units) and the correct-response
// probabilities they target at 0..3 mastered attributes.
struct ItemQualitySpec {
  ItemQuality quality = ItemQuality::Medium;
  double intercept = 0.0;
  double main = 0.0;
  double two_way = 0.0;
  double three_way = 0.0;
  std::array<double, 4> target_probs{};

  static ItemQualitySpec medium();
  static ItemQualitySpec high();
  static ItemQualitySpec for_quality(ItemQuality q);
};

// How DINA/CRUM truth is derived from the published LCDM parameter column.
// Default: DINA interactions are recalibrated so full-mastery probability
// hits the published target; CRUM takes mains verbatim.
struct TrueParamPolicy {
  bool dina_recalibrate_interaction = true;
  bool crum_recalibrate_mains = false;
};

// One cell of the study design.
struct SimCondition {
  ModelVariant generating_variant = ModelVariant::Lcdm;
  int n_examinees = 500;
  ItemQuality quality = ItemQuality::Medium;
  PriorLevel prior_level = PriorLevel::Informative;

  std::string id() const;  // e.g. "inf_n500_medium_lcdm"
};

// N x I binary response matrix, optionally carrying generation truth.
struct ResponseMatrix {
  int n_examinees = 0;
  int n_items = 0;
  std::vector<std::uint8_t> data;  // row-major

  std::vector<AttributeVector> true_profiles;   // empty when unknown
  std::vector<ItemParameters> true_params;      // empty when unknown

  std::uint8_t at(int examinee, int item) const {
    return data[static_cast<std::size_t>(examinee) * n_items + item];
  }
};

// The 28 x 3 study Q-matrix: four items per nonzero attribute pattern in the
// order (100, 010, 001, 110, 101, 011, 111); each attribute column sums to 16.
QMatrix build_paper_qmatrix();

// True item parameters per variant. LCDM takes the parameter column verbatim;
// CRUM keeps intercept + mains; DINA keeps the intercept and sets its single
// interaction to logit(p_full) - intercept (policy-switchable, see
// TrueParamPolicy).
std::vector<ItemParameters> build_true_item_params(const QMatrix& qmatrix,
                                                   const ItemQualitySpec& quality,
                                                   ModelVariant variant,
                                                   const TrueParamPolicy& policy = {});

// i.i.d. categorical profile draws; deterministic given seed.
std::vector<AttributeVector> sample_profiles(int n, const PopulationSpec& population,
                                             const ProfileLattice& lattice,
                                             std::uint64_t seed);

// Independent Bernoulli responses with p = response_probability; the truth
// (profiles and parameters) rides along in the result.
ResponseMatrix generate_responses(const std::vector<AttributeVector>& profiles,
                                  const QMatrix& qmatrix,
                                  const std::vector<ItemParameters>& params,
                                  ModelVariant variant, std::uint64_t seed);

// Convenience: full dataset for one condition cell.
ResponseMatrix generate_condition_data(const SimCondition& condition,
                                       const QMatrix& qmatrix,
                                       const TrueParamPolicy& policy,
                                       std::uint64_t seed);

}  // namespace dcm

#endif  // DCM_SIMULATE_HPP
