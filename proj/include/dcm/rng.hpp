#ifndef DCM_RNG_HPP
#define DCM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

namespace dcm {

// SplitMix64 finalizer. Used for seed derivation so that every (study,
// condition, replication, chain) tuple gets an independent stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Documented seed-splitting rule: fold each component into the running
// hash with SplitMix64. mix_seed({study_seed, condition_id, rep_id}).
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x8E51ECA4F2B1D6A3ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

// FNV-1a, used to map condition id strings to seed components.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Seeded PRNG for deterministic simulation and MCMC. mt19937_64 supplies
// the bit stream (its sequence is pinned by the standard); all variate
// mappings are implemented here so results are identical across platforms
// and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + uniform() * (b - a); }

  // Standard normal via Box-Muller; the spare deviate is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Gamma(shape, 1) by Marsaglia-Tsang squeeze; shape < 1 boosted via the
  // u^(1/shape) trick.
  double gamma(double shape) {
    if (shape < 1.0) {
      double u = uniform();
      if (u < 1e-300) u = 1e-300;
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Index draw proportional to nonnegative weights (need not be normalized).
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
      acc += weights[k];
      if (u < acc) return k;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  // Dirichlet draw via normalized gammas.
  void dirichlet(std::span<const double> concentration, std::span<double> out) {
    double total = 0.0;
    for (std::size_t k = 0; k < concentration.size(); ++k) {
      out[k] = gamma(concentration[k]);
      total += out[k];
    }
    if (total <= 0.0) {
      const double uniform_p = 1.0 / static_cast<double>(concentration.size());
      for (auto& v : out) v = uniform_p;
      return;
    }
    for (auto& v : out) v /= total;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dcm

#endif  // DCM_RNG_HPP
