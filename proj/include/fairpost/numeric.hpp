#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fairpost {

// Scores are clamped into [kScoreEps, 1 - kScoreEps] before any
// log-likelihood based step.
inline constexpr double kScoreEps = 1e-6;

inline double clamp_score(double s) {
  if (s < kScoreEps) return kScoreEps;
  if (s > 1.0 - kScoreEps) return 1.0 - kScoreEps;
  return s;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Neumaier-compensated running sum. Adding the same values in the same
/// order always yields the same bits.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double compensated_sum(std::span<const double> xs);

using Rng = std::mt19937_64;

// Portable draws: the standard distributions are implementation-defined, so
// anything that must be reproducible across toolchains goes through these.
double uniform01(Rng& rng);
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);
std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed);

// round(x) with halves going up; used for every split size.
std::size_t round_half_up(double x);

// 64-bit FNV-1a content fingerprint (not cryptographic).
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex_digest(std::string_view bytes);

// Shortest text that reads back to the same double.
std::string format_double(double x);
// Whole-string parse; nullopt on any trailing garbage.
std::optional<double> parse_double(const std::string& s);

}  // namespace fairpost
