#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qpcsim/types.hpp"

namespace qpcsim {

// Enumerating 2^n sequences caps the exact oracle at desk scale.
inline constexpr std::int64_t kBruteForceMaxN = 24;

// |delta_theta| beyond this leaves the small-angle accuracy domain; results
// are still computed but flagged.
inline constexpr double kSmallAngleDomain = 0.3;

// Distribution of the transmitted count Q over a window of n probings.
struct CountDistribution {
  std::int64_t n = 0;
  std::vector<double> pmf;  // indexed by q = 0..n

  double mean() const;
  double variance() const;
};

// Two-component binomial mixture: the window is short enough that the
// observed system stays put, so outcomes are i.i.d. Bernoulli with the
// branch-conditional transmission probability. Stable for n up to 1e6.
CountDistribution mixture_pmf(const DensityMatrix2& rho,
                              const BarrierPair& barriers, std::int64_t n);

// Closed-form variance of Q in the frozen-state window, split into the
// weighted partition (shot) term and the measurement excess.
VarianceReport variance_short(const DensityMatrix2& rho,
                              const BarrierPair& barriers, std::int64_t n);

// Exact enumeration over all 2^n outcome sequences. Independent of the
// closed forms above; serves as the oracle they are tested against.
VarianceReport brute_force_variance(const DensityMatrix2& rho,
                                    const BarrierPair& barriers,
                                    std::int64_t n);

// Long-window variance built from independent frozen blocks of n_max
// probings at the relaxed state rho_ll = rho_rr = 1/2. nominal_total carries
// the rounded-coefficient form of the same quantity.
VarianceReport variance_long(const BarrierPair& barriers, std::int64_t n,
                             std::int64_t n_max);

// Measurement excess alone: rho_ll * rho_rr * (n p_l - n p_r)^2.
double measurement_noise(const DensityMatrix2& rho, const BarrierPair& barriers,
                         std::int64_t n);

// Lowest order in delta_theta: 4 p (1-p) n^2 delta_theta^2 with
// p = (p_l + p_r)/2. Approximates the squared mean gap (Q_l - Q_r)^2; the
// rho_ll * rho_rr weight is not included.
double measurement_noise_small_angle(const BarrierPair& barriers,
                                     std::int64_t n);

// Both sides of the measurement-noise vs decoherence-rate proportionality,
// evaluated at the relaxed state rho_ll = 1/2.
struct RelationReport {
  std::int64_t n = 0;
  std::int64_t n_max = 0;      // 0 when no long-regime scale was requested
  double delta_theta = 0.0;
  double v_m_exact = 0.0;      // frozen-window measurement noise
  double v_m_leading = 0.0;    // sin^2(theta_l+theta_r) n^2 dtheta^2 / 4
  double v_m_long = 0.0;       // block-composed value, 0 without n_max
  double d_rate = 0.0;         // decoherence rate of the observed system
  double ratio_short = 0.0;    // v_m_exact / (n^2 d_rate / flux)
  double ratio_long = 0.0;     // v_m_long / (n n_max d_rate / flux)
  double nominal_vm_short = 0.0;  // p(1-p) n^2 d_rate / flux
  double nominal_vm_long = 0.0;   // p(1-p) n n_max d_rate / flux
  double residual = 0.0;       // |v_m_exact - v_m_leading| / v_m_exact
  bool in_domain = true;       // |delta_theta| <= kSmallAngleDomain
  bool degenerate = false;     // d_rate == 0; ratios reported as 0
};

RelationReport decoherence_fluctuation_check(
    const BarrierPair& barriers, double flux, std::int64_t n,
    std::optional<std::int64_t> n_max = std::nullopt);

// Unbiased sample variance with a delete-1 jackknife standard error.
struct JackknifeEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

JackknifeEstimate jackknife_variance(std::span<const double> samples);

}  // namespace qpcsim
