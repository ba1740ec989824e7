#include "dcm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dcm {

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Lcdm: return "lcdm";
    case ModelVariant::Dina: return "dina";
    case ModelVariant::Crum: return "crum";
  }
  return "lcdm";
}

std::optional<ModelVariant> variant_from_string(std::string_view s) {
  if (s == "lcdm" || s == "LCDM") return ModelVariant::Lcdm;
  if (s == "dina" || s == "DINA") return ModelVariant::Dina;
  if (s == "crum" || s == "CRUM") return ModelVariant::Crum;
  return std::nullopt;
}

std::string_view to_string(PriorLevel p) {
  return p == PriorLevel::Informative ? "informative" : "uninformative";
}

std::optional<PriorLevel> prior_level_from_string(std::string_view s) {
  if (s == "informative") return PriorLevel::Informative;
  if (s == "uninformative") return PriorLevel::Uninformative;
  return std::nullopt;
}

AttributeVector::AttributeVector(std::vector<std::uint8_t> bits)
    : bits_(std::move(bits)) {
  for (auto b : bits_) {
    if (b > 1) throw std::invalid_argument("attribute bits must be 0/1");
  }
}

AttributeVector AttributeVector::from_index(std::size_t index, int n_attributes) {
  std::vector<std::uint8_t> bits(n_attributes);
  for (int a = 0; a < n_attributes; ++a) {
    bits[a] = static_cast<std::uint8_t>((index >> a) & 1u);
  }
  return AttributeVector(std::move(bits));
}

std::size_t AttributeVector::to_index() const {
  std::size_t index = 0;
  for (std::size_t a = 0; a < bits_.size(); ++a) {
    if (bits_[a]) index |= (std::size_t{1} << a);
  }
  return index;
}

QMatrix::QMatrix(std::vector<std::vector<std::uint8_t>> rows)
    : rows_(std::move(rows)) {
  if (rows_.empty()) throw std::invalid_argument("Q-matrix has no items");
  n_attributes_ = static_cast<int>(rows_.front().size());
  if (n_attributes_ == 0) throw std::invalid_argument("Q-matrix has no attributes");
  std::vector<int> col_sums(n_attributes_, 0);
  for (const auto& row : rows_) {
    if (static_cast<int>(row.size()) != n_attributes_) {
      throw std::invalid_argument("Q-matrix rows have unequal length");
    }
    int row_sum = 0;
    for (int a = 0; a < n_attributes_; ++a) {
      if (row[a] > 1) throw std::invalid_argument("Q-matrix entries must be 0/1");
      row_sum += row[a];
      col_sums[a] += row[a];
    }
    if (row_sum == 0) throw std::invalid_argument("Q-matrix row measures no attribute");
  }
  for (int s : col_sums) {
    if (s == 0) throw std::invalid_argument("Q-matrix column measured by no item");
  }
}

std::vector<int> QMatrix::column_sums() const {
  std::vector<int> sums(n_attributes_, 0);
  for (const auto& row : rows_) {
    for (int a = 0; a < n_attributes_; ++a) sums[a] += row[a];
  }
  return sums;
}

EffectKey::EffectKey(std::vector<int> attributes) : attributes_(std::move(attributes)) {
  if (attributes_.empty()) throw std::invalid_argument("effect key must be nonempty");
  std::sort(attributes_.begin(), attributes_.end());
  for (std::size_t k = 0; k < attributes_.size(); ++k) {
    if (attributes_[k] < 0) throw std::invalid_argument("negative attribute index");
    if (k > 0 && attributes_[k] == attributes_[k - 1]) {
      throw std::invalid_argument("duplicate attribute in effect key");
    }
  }
}

EffectKey EffectKey::from_mask(std::uint32_t mask) {
  std::vector<int> attrs;
  for (int a = 0; a < 32; ++a) {
    if (mask & (1u << a)) attrs.push_back(a);
  }
  return EffectKey(std::move(attrs));
}

std::uint32_t EffectKey::mask() const {
  std::uint32_t m = 0;
  for (int a : attributes_) m |= (1u << a);
  return m;
}

std::string EffectKey::label() const {
  std::string out;
  for (std::size_t k = 0; k < attributes_.size(); ++k) {
    if (k > 0) out += ',';
    out += std::to_string(attributes_[k] + 1);
  }
  return out;
}

std::optional<EffectKey> EffectKey::parse(std::string_view label) {
  std::vector<int> attrs;
  std::size_t pos = 0;
  while (pos <= label.size()) {
    std::size_t comma = label.find(',', pos);
    std::string_view tok = label.substr(pos, comma == std::string_view::npos
                                                 ? std::string_view::npos
                                                 : comma - pos);
    if (tok.empty()) return std::nullopt;
    int value = 0;
    for (char c : tok) {
      if (c < '0' || c > '9') return std::nullopt;
      value = value * 10 + (c - '0');
    }
    if (value < 1) return std::nullopt;
    attrs.push_back(value - 1);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (attrs.empty()) return std::nullopt;
  for (std::size_t k = 1; k < attrs.size(); ++k) {
    if (attrs[k] <= attrs[k - 1]) return std::nullopt;
  }
  return EffectKey(std::move(attrs));
}

bool EffectKey::operator<(const EffectKey& other) const {
  if (attributes_.size() != other.attributes_.size()) {
    return attributes_.size() < other.attributes_.size();
  }
  return attributes_ < other.attributes_;
}

const double* ItemParameters::find(const EffectKey& key) const {
  for (const auto& [k, v] : effects) {
    if (k == key) return &v;
  }
  return nullptr;
}

void ItemParameters::set(const EffectKey& key, double value) {
  for (auto& [k, v] : effects) {
    if (k == key) {
      v = value;
      return;
    }
  }
  effects.emplace_back(key, value);
  std::sort(effects.begin(), effects.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
}

ProfileLattice::ProfileLattice(int n_attributes) : n_attributes_(n_attributes) {
  if (n_attributes < 1 || n_attributes > 16) {
    throw std::invalid_argument("attribute count must be in [1, 16]");
  }
  const std::size_t n_classes = std::size_t{1} << n_attributes;
  profiles_.reserve(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    profiles_.push_back(AttributeVector::from_index(c, n_attributes));
  }
}

ProfileLattice enumerate_profiles(int n_attributes) {
  return ProfileLattice(n_attributes);
}

std::vector<EffectKey> active_effects(std::span<const std::uint8_t> q_row,
                                      ModelVariant variant) {
  std::vector<int> measured;
  for (std::size_t a = 0; a < q_row.size(); ++a) {
    if (q_row[a]) measured.push_back(static_cast<int>(a));
  }
  if (measured.empty()) throw std::invalid_argument("q row measures no attribute");

  std::vector<EffectKey> keys;
  switch (variant) {
    case ModelVariant::Dina:
      keys.emplace_back(measured);
      break;
    case ModelVariant::Crum:
      for (int a : measured) keys.emplace_back(std::vector<int>{a});
      break;
    case ModelVariant::Lcdm: {
      const std::size_t m = measured.size();
      for (std::uint32_t sub = 1; sub < (1u << m); ++sub) {
        std::vector<int> attrs;
        for (std::size_t k = 0; k < m; ++k) {
          if (sub & (1u << k)) attrs.push_back(measured[k]);
        }
        keys.emplace_back(std::move(attrs));
      }
      std::sort(keys.begin(), keys.end());
      break;
    }
  }
  return keys;
}

std::vector<std::uint8_t> build_design_vector(const AttributeVector& profile,
                                              std::span<const std::uint8_t> q_row,
                                              ModelVariant variant) {
  const auto keys = active_effects(q_row, variant);
  std::vector<std::uint8_t> design(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    std::uint8_t on = 1;
    for (int a : keys[k].attributes()) {
      if (!profile.mastered(a)) {
        on = 0;
        break;
      }
    }
    design[k] = on;
  }
  return design;
}

double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

void log_prob_pair(double eta, double& log_p, double& log_q) {
  if (eta >= 0.0) {
    log_p = -std::log1p(std::exp(-eta));
    log_q = log_p - eta;
  } else {
    log_q = -std::log1p(std::exp(eta));
    log_p = log_q + eta;
  }
  static const double log_eps = std::log(std::numeric_limits<double>::epsilon());
  if (log_p < log_eps) log_p = log_eps;
  if (log_q < log_eps) log_q = log_eps;
}

double response_logit(const AttributeVector& profile, const ItemParameters& item,
                      std::span<const std::uint8_t> q_row, ModelVariant variant) {
  if (!std::isfinite(item.intercept)) {
    throw std::invalid_argument("non-finite intercept");
  }
  double eta = item.intercept;
  for (const auto& [key, value] : item.effects) {
    if (!std::isfinite(value)) throw std::invalid_argument("non-finite effect");
    bool on = true;
    for (int a : key.attributes()) {
      if (!profile.mastered(a)) {
        on = false;
        break;
      }
    }
    if (on) eta += value;
  }
  (void)q_row;
  (void)variant;
  return eta;
}

double response_probability(const AttributeVector& profile,
                            const ItemParameters& item,
                            std::span<const std::uint8_t> q_row,
                            ModelVariant variant) {
  const double p = logistic(response_logit(profile, item, q_row, variant));
  const double eps = std::numeric_limits<double>::epsilon();
  return std::min(1.0 - eps, std::max(eps, p));
}

std::vector<std::uint32_t> class_activation_masks(const std::vector<EffectKey>& keys,
                                                  int n_attributes) {
  const std::size_t n_classes = std::size_t{1} << n_attributes;
  std::vector<std::uint32_t> masks(n_classes, 0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t j = 0; j < keys.size(); ++j) {
      bool on = true;
      for (int a : keys[j].attributes()) {
        if (!((c >> a) & 1)) {
          on = false;
          break;
        }
      }
      if (on) masks[c] |= (1u << j);
    }
  }
  return masks;
}

bool satisfies_monotonicity(const ItemParameters& item,
                            std::span<const std::uint8_t> q_row,
                            ModelVariant variant) {
  std::vector<int> measured;
  for (std::size_t a = 0; a < q_row.size(); ++a) {
    if (q_row[a]) measured.push_back(static_cast<int>(a));
  }
  const std::size_t m = measured.size();
  const int n_attr = static_cast<int>(q_row.size());

  // Logit increment for flipping attribute `add` on top of mastery set
  // `sub` (a mask over the measured attributes).
  auto increment = [&](std::uint32_t sub, std::size_t add) {
    double delta = 0.0;
    for (const auto& [key, value] : item.effects) {
      bool contains_add = false;
      bool within = true;
      for (int a : key.attributes()) {
        std::size_t pos = m;
        for (std::size_t k = 0; k < m; ++k) {
          if (measured[k] == a) {
            pos = k;
            break;
          }
        }
        if (pos == m) {
          within = false;  // effect on an unmeasured attribute: never active
          break;
        }
        if (pos == add) {
          contains_add = true;
        } else if (!(sub & (1u << pos))) {
          within = false;
          break;
        }
      }
      if (within && contains_add) delta += value;
    }
    return delta;
  };

  (void)n_attr;
  (void)variant;
  for (std::uint32_t sub = 0; sub < (1u << m); ++sub) {
    for (std::size_t add = 0; add < m; ++add) {
      if (sub & (1u << add)) continue;
      if (increment(sub, add) < 0.0) return false;
    }
  }
  return true;
}

}  // namespace dcm
