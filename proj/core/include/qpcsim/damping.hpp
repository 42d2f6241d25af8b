#ifndef QPCSIM_DAMPING_HPP
#define QPCSIM_DAMPING_HPP

#include <complex>

#include "qpcsim/types.hpp"

// Decoherence rate of the observed system from the scattering data of the
// probing beam: the complex quantity Lambda whose imaginary part is the
// damping rate D and whose real part is the induced energy shift.

namespace qpcsim {

/// Tolerance on S S^dagger = I. Inputs failing it are rejected, not
/// re-unitarized; silent projection would hide caller bugs.
inline constexpr double kUnitaryTol = 1e-10;

/// 2x2 scattering matrix over the (transmitted, reflected) channels.
struct SMatrix2 {
  std::complex<double> s00, s01, s10, s11;

  /// max |(S S^dagger - I)_jk|
  double unitarity_defect() const;
  bool is_unitary(double tol = kUnitaryTol) const {
    return unitarity_defect() <= tol;
  }

  /// Symmetric unitary parameterization with transmission amplitude
  /// cos(theta) and phases neglected:
  ///   [[cos t, i sin t], [i sin t, cos t]].
  /// With it, <i|S_L S_R^dagger|i> = cos(theta_l - theta_r) is real for
  /// either channel, so the energy shift vanishes.
  static SMatrix2 from_angle(double theta);
};

/// Energy shift (rad / unit time) and damping rate (1 / unit time).
struct LambdaResult {
  double real_part = 0.0;  // energy shift
  double imag_part = 0.0;  // damping rate D
};

/// Lambda = i * flux * (1 - (S_L S_R^dagger)_{ii}) for incoming channel i.
LambdaResult lambda_from_smatrices(const SMatrix2& s_l, const SMatrix2& s_r,
                                   int incoming, double flux);

/// D = flux * (1 - cos(theta_l - theta_r)). Equals the imaginary part of
/// lambda_from_smatrices on the default parameterization.
double damping_rate(const BarrierPair& barriers, double flux);

/// Small-angle form D ~= flux * dtheta^2 / 2. Relative error against the
/// full expression is dtheta^2/12 + O(dtheta^4).
double damping_rate_small_angle(const BarrierPair& barriers, double flux);

/// Landauer probing rate per channel: flux = charge * voltage / (pi * hbar).
double landauer_flux(double voltage, double charge, double hbar);

}  // namespace qpcsim

#endif  // QPCSIM_DAMPING_HPP
