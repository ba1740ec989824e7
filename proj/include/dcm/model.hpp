#ifndef DCM_MODEL_HPP
#define DCM_MODEL_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dcm {

// The three estimation/generation models. DINA and CRUM are the constrained
// variants of the general log-linear model: DINA keeps only the intercept and
// the highest-order interaction per item, CRUM only intercept and mains.
enum class ModelVariant { Lcdm, Dina, Crum };

std::string_view to_string(ModelVariant v);
std::optional<ModelVariant> variant_from_string(std::string_view s);

// Prior information level for item coefficients (normal, mean 0):
// informative variance 5, uninformative variance 1000.
enum class PriorLevel { Informative, Uninformative };

std::string_view to_string(PriorLevel p);
std::optional<PriorLevel> prior_level_from_string(std::string_view s);

// Binary mastery profile alpha_e = [alpha_e1 ... alpha_eA].
class AttributeVector {
 public:
  AttributeVector() = default;
  explicit AttributeVector(std::vector<std::uint8_t> bits);

  // Profile for lattice index c: bit a of c is attribute a (least-significant
  // attribute first), so index 0 is the all-zero profile.
  static AttributeVector from_index(std::size_t index, int n_attributes);

  int size() const { return static_cast<int>(bits_.size()); }
  bool mastered(int attribute) const { return bits_[attribute] != 0; }
  std::size_t to_index() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const AttributeVector&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Item-by-attribute incidence matrix. Every entry is 0/1, every row and
// every column has at least one 1.
class QMatrix {
 public:
  explicit QMatrix(std::vector<std::vector<std::uint8_t>> rows);

  int n_items() const { return static_cast<int>(rows_.size()); }
  int n_attributes() const { return n_attributes_; }
  std::span<const std::uint8_t> row(int item) const { return rows_[item]; }
  const std::vector<std::vector<std::uint8_t>>& rows() const { return rows_; }
  std::vector<int> column_sums() const;

 private:
  std::vector<std::vector<std::uint8_t>> rows_;
  int n_attributes_ = 0;
};

// Nonempty subset of attribute indices naming one effect coefficient
// (a main effect when |subset| == 1, an interaction otherwise). Keys order
// by (cardinality, lexicographic index sequence) so serialization and
// design vectors are deterministic.
class EffectKey {
 public:
  explicit EffectKey(std::vector<int> attributes);  // 0-based indices
  static EffectKey from_mask(std::uint32_t mask);

  int order() const { return static_cast<int>(attributes_.size()); }
  std::uint32_t mask() const;
  const std::vector<int>& attributes() const { return attributes_; }

  // "2" or "2,3": 1-based attribute list, the serialization key format.
  std::string label() const;
  static std::optional<EffectKey> parse(std::string_view label);

  bool operator==(const EffectKey&) const = default;
  bool operator<(const EffectKey& other) const;

 private:
  std::vector<int> attributes_;  // sorted, unique, 0-based
};

// Intercept lambda_{i,0} plus effect coefficients keyed by attribute subset,
// stored in EffectKey order.
struct ItemParameters {
  double intercept = 0.0;
  std::vector<std::pair<EffectKey, double>> effects;

  const double* find(const EffectKey& key) const;
  void set(const EffectKey& key, double value);
};

// All 2^A profiles in binary counting order (least-significant attribute
// first); index 0 is the all-zero profile.
class ProfileLattice {
 public:
  explicit ProfileLattice(int n_attributes);

  std::size_t size() const { return profiles_.size(); }
  int n_attributes() const { return n_attributes_; }
  const AttributeVector& profile(std::size_t c) const { return profiles_[c]; }
  const std::vector<AttributeVector>& profiles() const { return profiles_; }

 private:
  int n_attributes_;
  std::vector<AttributeVector> profiles_;
};

// Rejects A = 0 and A > 16 (2^A classes otherwise get out of hand).
ProfileLattice enumerate_profiles(int n_attributes);

// Effect keys a variant keeps for an item: LCDM all nonempty subsets of the
// measured attributes, DINA the single full subset, CRUM the singletons.
// Rejects an all-zero q row.
std::vector<EffectKey> active_effects(std::span<const std::uint8_t> q_row,
                                      ModelVariant variant);

// h(alpha, q): entry for key K is prod_{a in K} alpha_a, aligned with
// active_effects order.
std::vector<std::uint8_t> build_design_vector(const AttributeVector& profile,
                                              std::span<const std::uint8_t> q_row,
                                              ModelVariant variant);

// Numerically stable logistic / logit.
double logistic(double x);
double logit(double p);

// (log p, log(1-p)) for a response logit, clamped to log(eps) consistently
// with response_probability.
void log_prob_pair(double eta, double& log_p, double& log_q);

// Returned probabilities are clamped into [eps, 1-eps] (machine epsilon) so
// downstream log-likelihoods stay finite. Parameters themselves are not
// clamped; non-finite parameters are rejected.
double response_logit(const AttributeVector& profile, const ItemParameters& item,
                      std::span<const std::uint8_t> q_row, ModelVariant variant);
double response_probability(const AttributeVector& profile,
                            const ItemParameters& item,
                            std::span<const std::uint8_t> q_row,
                            ModelVariant variant);

// For each lattice class, a bitmask marking which of `keys` are active
// (all attributes in the key mastered). Bit j corresponds to keys[j].
std::vector<std::uint32_t> class_activation_masks(const std::vector<EffectKey>& keys,
                                                  int n_attributes);

// Exact monotonicity: flipping any required attribute 0 -> 1 never lowers the
// response logit, checked over every profile of the item's measured
// attributes. Implies main effects >= 0 and every interaction bounded below
// by the negated sum of its subsumed effects.
bool satisfies_monotonicity(const ItemParameters& item,
                            std::span<const std::uint8_t> q_row,
                            ModelVariant variant);

}  // namespace dcm

#endif  // DCM_MODEL_HPP
