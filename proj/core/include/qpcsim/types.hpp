#ifndef QPCSIM_TYPES_HPP
#define QPCSIM_TYPES_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

// Shared domain types for the two-state system monitored by a
// variable-barrier (QPC-style) detector. All types are immutable value
// types and safe to copy across worker threads.

namespace qpcsim {

// Tolerance conventions used throughout the library:
//  - kExactTol: identities that hold in exact arithmetic (conversions,
//    normalization, completeness).
//  - kPhysTol: slack on physicality constraints such as |P| <= 1, so that
//    states produced by long numerical evolutions still validate.
inline constexpr double kExactTol = 1e-12;
inline constexpr double kPhysTol = 1e-9;

/// Bloch ("polarization") vector of a two-state density matrix.
/// pz = Prob(L) - Prob(R); (px, py) carry the coherence.
struct PolarizationVector {
  double px = 0.0;
  double py = 0.0;
  double pz = 0.0;

  double norm() const { return std::sqrt(px * px + py * py + pz * pz); }
  double transverse_norm() const { return std::sqrt(px * px + py * py); }
  double prob_l() const { return 0.5 * (1.0 + pz); }
  double prob_r() const { return 0.5 * (1.0 - pz); }

  bool is_physical(double slack = kPhysTol) const {
    return std::isfinite(px) && std::isfinite(py) && std::isfinite(pz) &&
           norm() <= 1.0 + slack;
  }
};

/// Two-state density matrix. Only the upper off-diagonal element is stored;
/// rho_rl is implied by Hermiticity.
struct DensityMatrix2 {
  double rho_ll = 0.5;
  double rho_rr = 0.5;
  std::complex<double> rho_lr = 0.0;

  double trace() const { return rho_ll + rho_rr; }

  /// Trace one, diagonal in [0,1], and |rho_lr|^2 <= rho_ll * rho_rr.
  bool is_valid(double tol = kExactTol) const {
    if (!std::isfinite(rho_ll) || !std::isfinite(rho_rr) ||
        !std::isfinite(rho_lr.real()) || !std::isfinite(rho_lr.imag())) {
      return false;
    }
    if (std::abs(trace() - 1.0) > tol) return false;
    if (rho_ll < -tol || rho_ll > 1.0 + tol) return false;
    if (rho_rr < -tol || rho_rr > 1.0 + tol) return false;
    return std::norm(rho_lr) <= rho_ll * rho_rr + tol;
  }
};

/// The three real angular frequencies driving the undamped evolution
/// (level splitting vz, tunneling vx, vy), in rad per unit time.
struct HamiltonianVector {
  double vx = 0.0;
  double vy = 0.0;
  double vz = 0.0;

  double norm() const { return std::sqrt(vx * vx + vy * vy + vz * vz); }
  bool is_zero() const { return vx == 0.0 && vy == 0.0 && vz == 0.0; }
  bool is_finite() const {
    return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(vz);
  }
};

/// The two barrier settings the detector switches between. Transmission
/// amplitudes are cos(theta), so p = cos^2(theta) and q = 1 - p.
struct BarrierPair {
  double theta_l = 0.0;
  double theta_r = 0.0;

  double p_l() const { double c = std::cos(theta_l); return c * c; }
  double p_r() const { double c = std::cos(theta_r); return c * c; }
  double q_l() const { double s = std::sin(theta_l); return s * s; }
  double q_r() const { double s = std::sin(theta_r); return s * s; }
  double delta_theta() const { return theta_l - theta_r; }

  /// Mean transmission probability (p_l + p_r) / 2.
  double p_mean() const { return 0.5 * (p_l() + p_r()); }

  bool is_valid() const {
    constexpr double half_pi = 1.5707963267948966;
    return std::isfinite(theta_l) && std::isfinite(theta_r) &&
           theta_l >= 0.0 && theta_l <= half_pi &&
           theta_r >= 0.0 && theta_r <= half_pi;
  }
};

/// Probing-beam parameters. Time is measured so that `flux` is probings per
/// unit time; `charge` is the carrier charge in arbitrary units (zero is
/// allowed for the zero-charge limit study). `n_max` is the number of
/// probings per relaxation time of the observed system.
struct DetectorConfig {
  double flux = 1.0;
  double charge = 1.0;
  std::int64_t n_max = 1;
  double voltage = 0.0;  // optional; 0 means "not specified"

  bool is_valid() const {
    return std::isfinite(flux) && flux > 0.0 && std::isfinite(charge) &&
           charge >= 0.0 && n_max >= 1;
  }
};

/// One seeded simulation run: the probing outcomes (1 = transmission) and,
/// when requested, the conditional state after each probing.
struct TrajectoryRecord {
  std::vector<std::uint8_t> bits;
  std::vector<DensityMatrix2> states;  // empty unless state recording was on
  std::uint64_t stream = 0;

  std::int64_t transmitted_count() const {
    std::int64_t q = 0;
    for (auto b : bits) q += b;
    return q;
  }
};

enum class Regime { kShort, kLong };

/// Decomposition of the transmission-count variance over a window of n
/// probings into the partition (shot-like) part and the measurement part.
/// `nominal_total` carries the same quantity with its coefficients rounded
/// to the conventional order-unity values; it equals var_total in the short
/// regime where the exact expression is also the conventional one.
struct VarianceReport {
  std::int64_t n = 0;
  double mean_q = 0.0;
  double mean_q_l = 0.0;
  double mean_q_r = 0.0;
  double var_partition = 0.0;
  double var_measurement = 0.0;
  double var_total = 0.0;
  double nominal_total = 0.0;
  Regime regime = Regime::kShort;
};

/// rho = (I + P.sigma) / 2. Rejects |P| > 1 + kPhysTol.
DensityMatrix2 polarization_to_density(const PolarizationVector& p);

/// Inverse of polarization_to_density; exact to kExactTol. Rejects inputs
/// violating trace or positivity.
PolarizationVector density_to_polarization(const DensityMatrix2& rho);

}  // namespace qpcsim

#endif  // QPCSIM_TYPES_HPP
