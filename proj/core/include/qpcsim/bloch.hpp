#ifndef QPCSIM_BLOCH_HPP
#define QPCSIM_BLOCH_HPP

#include <vector>

#include "qpcsim/types.hpp"

// Damped precession of the polarization vector,
//   dP/dt = V x P - D * P_tr,
// with P_tr the component transverse to z. Fixed-step RK4: the system is
// three-dimensional, smooth and cheap, and fixed steps keep runs
// bit-reproducible.

namespace qpcsim {

struct EvolutionSpec {
  HamiltonianVector v;
  double d = 0.0;        // damping rate, 1 / unit time
  double t_final = 0.0;
  double dt = 0.0;

  bool is_valid() const {
    if (!v.is_finite() || !std::isfinite(d) || d < 0.0) return false;
    if (!(dt > 0.0) || t_final < 0.0) return false;
    return t_final == 0.0 || dt <= t_final * (1.0 + kExactTol);
  }
};

struct BlochSample {
  double t;
  PolarizationVector p;
};

/// Right-hand side V x P - D (px, py, 0), returned as a rate of change.
PolarizationVector bloch_derivative(const PolarizationVector& p,
                                    const EvolutionSpec& spec);

/// RK4 trajectory sampled every dt from t=0 to t_final (t_final is rounded
/// to a whole number of steps). Rejects steps with |V| dt > 0.5 or
/// D dt > 0.5; the local truncation error is then below ~1e-6 per step, so
/// callers wanting stiffer regimes must reduce dt.
std::vector<BlochSample> evolve(const PolarizationVector& p0,
                                const EvolutionSpec& spec);

/// Closed form for V = 0: (px e^{-dt}, py e^{-dt}, pz). Damping only
/// affects the transverse part; pz is conserved.
PolarizationVector analytic_dephasing(const PolarizationVector& p0, double d,
                                      double t);

/// Exact rotation solving dP/dt = V x P for time t (Rodrigues formula).
/// Used for the unitary stretch between probings; an isometry of |P|.
PolarizationVector rotate_about(const PolarizationVector& p,
                                const HamiltonianVector& v, double t);

}  // namespace qpcsim

#endif  // QPCSIM_BLOCH_HPP
