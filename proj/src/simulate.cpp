#include "dcm/simulate.hpp"

#include <cmath>
#include <stdexcept>

#include "dcm/rng.hpp"

namespace dcm {

void PopulationSpec::normalize() {
  double total = 0.0;
  for (double p : proportions) {
    if (p < 0.0) throw std::invalid_argument("negative profile proportion");
    total += p;
  }
  if (total <= 0.0) throw std::invalid_argument("profile proportions sum to zero");
  for (double& p : proportions) p /= total;
}

PopulationSpec PopulationSpec::study_population() {
  // Lattice index order (least-significant attribute first):
  // 000, 100, 010, 110, 001, 101, 011, 111.
  PopulationSpec pop;
  pop.proportions = {0.293, 0.075, 0.075, 0.054, 0.075, 0.054, 0.054, 0.321};
  return pop;
}

std::string_view to_string(ItemQuality q) {
  return q == ItemQuality::Medium ? "medium" : "high";
}

std::optional<ItemQuality> quality_from_string(std::string_view s) {
  if (s == "medium") return ItemQuality::Medium;
  if (s == "high") return ItemQuality::High;
  return std::nullopt;
}

ItemQualitySpec ItemQualitySpec::medium() {
  ItemQualitySpec spec;
  spec.quality = ItemQuality::Medium;
  spec.intercept = -1.10;
  spec.main = 1.30;
  spec.two_way = 0.23;
  spec.three_way = 3.40;
  spec.target_probs = {0.25, 0.55, 0.85, 0.99};
  return spec;
}

ItemQualitySpec ItemQualitySpec::high() {
  ItemQualitySpec spec;
  spec.quality = ItemQuality::High;
  spec.intercept = -2.0;
  spec.main = 2.0;
  spec.two_way = 1.0;
  spec.three_way = 0.1;
  spec.target_probs = {0.12, 0.50, 0.95, 0.99};
  return spec;
}

ItemQualitySpec ItemQualitySpec::for_quality(ItemQuality q) {
  return q == ItemQuality::Medium ? medium() : high();
}

std::string SimCondition::id() const {
  std::string out = prior_level == PriorLevel::Informative ? "inf" : "uninf";
  out += "_n" + std::to_string(n_examinees);
  out += "_";
  out += to_string(quality);
  out += "_";
  out += to_string(generating_variant);
  return out;
}

QMatrix build_paper_qmatrix() {
  const std::vector<std::vector<std::uint8_t>> patterns = {
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0},
      {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  std::vector<std::vector<std::uint8_t>> rows;
  rows.reserve(28);
  for (const auto& pattern : patterns) {
    for (int k = 0; k < 4; ++k) rows.push_back(pattern);
  }
  return QMatrix(std::move(rows));
}

std::vector<ItemParameters> build_true_item_params(const QMatrix& qmatrix,
                                                   const ItemQualitySpec& quality,
                                                   ModelVariant variant,
                                                   const TrueParamPolicy& policy) {
  auto coefficient_for_order = [&](int order) {
    switch (order) {
      case 1: return quality.main;
      case 2: return quality.two_way;
      default: return quality.three_way;
    }
  };

  std::vector<ItemParameters> params;
  params.reserve(qmatrix.n_items());
  for (int i = 0; i < qmatrix.n_items(); ++i) {
    const auto q_row = qmatrix.row(i);
    ItemParameters item;
    item.intercept = quality.intercept;
    const auto keys = active_effects(q_row, variant);
    int n_measured = 0;
    for (auto q : q_row) n_measured += q;

    for (const auto& key : keys) {
      double value = coefficient_for_order(key.order());
      if (variant == ModelVariant::Dina && policy.dina_recalibrate_interaction) {
        // The single retained interaction is set so full required mastery
        // hits the published probability target.
        const double p_full = quality.target_probs[n_measured];
        value = logit(p_full) - quality.intercept;
      }
      if (variant == ModelVariant::Crum && policy.crum_recalibrate_mains) {
        const double p_full = quality.target_probs[n_measured];
        value = (logit(p_full) - quality.intercept) / n_measured;
      }
      item.effects.emplace_back(key, value);
    }
    params.push_back(std::move(item));
  }
  return params;
}

std::vector<AttributeVector> sample_profiles(int n, const PopulationSpec& population,
                                             const ProfileLattice& lattice,
                                             std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one examinee");
  if (population.proportions.size() != lattice.size()) {
    throw std::invalid_argument("population size does not match lattice");
  }
  PopulationSpec normalized = population;
  normalized.normalize();

  Rng rng(seed);
  std::vector<AttributeVector> profiles;
  profiles.reserve(n);
  for (int e = 0; e < n; ++e) {
    const std::size_t c = rng.categorical(normalized.proportions);
    profiles.push_back(lattice.profile(c));
  }
  return profiles;
}

ResponseMatrix generate_responses(const std::vector<AttributeVector>& profiles,
                                  const QMatrix& qmatrix,
                                  const std::vector<ItemParameters>& params,
                                  ModelVariant variant, std::uint64_t seed) {
  if (params.size() != static_cast<std::size_t>(qmatrix.n_items())) {
    throw std::invalid_argument("parameter count does not match Q-matrix");
  }
  const int n = static_cast<int>(profiles.size());
  const int n_items = qmatrix.n_items();
  const int n_attr = qmatrix.n_attributes();
  const std::size_t n_classes = std::size_t{1} << n_attr;

  // Response probability depends on the profile only through its class, so
  // precompute the item-by-class table once.
  std::vector<double> prob(static_cast<std::size_t>(n_items) * n_classes);
  const ProfileLattice lattice(n_attr);
  for (int i = 0; i < n_items; ++i) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      prob[i * n_classes + c] =
          response_probability(lattice.profile(c), params[i], qmatrix.row(i), variant);
    }
  }

  ResponseMatrix out;
  out.n_examinees = n;
  out.n_items = n_items;
  out.data.resize(static_cast<std::size_t>(n) * n_items);
  out.true_profiles = profiles;
  out.true_params = params;

  Rng rng(seed);
  for (int e = 0; e < n; ++e) {
    const std::size_t c = profiles[e].to_index();
    for (int i = 0; i < n_items; ++i) {
      out.data[static_cast<std::size_t>(e) * n_items + i] =
          rng.bernoulli(prob[i * n_classes + c]) ? 1 : 0;
    }
  }
  return out;
}

ResponseMatrix generate_condition_data(const SimCondition& condition,
                                       const QMatrix& qmatrix,
                                       const TrueParamPolicy& policy,
                                       std::uint64_t seed) {
  const auto quality = ItemQualitySpec::for_quality(condition.quality);
  const auto params = build_true_item_params(qmatrix, quality,
                                             condition.generating_variant, policy);
  const ProfileLattice lattice(qmatrix.n_attributes());
  auto population = PopulationSpec::study_population();
  if (population.proportions.size() != lattice.size()) {
    throw std::invalid_argument("study population is three-attribute only");
  }
  const auto profiles = sample_profiles(condition.n_examinees, population, lattice,
                                        mix_seed({seed, 0x01}));
  return generate_responses(profiles, qmatrix, params, condition.generating_variant,
                            mix_seed({seed, 0x02}));
}

}  // namespace dcm
