#include "qpcsim/damping.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qpcsim {

namespace {

using cplx = std::complex<double>;

void require_barriers(const BarrierPair& barriers) {
  if (!barriers.is_valid()) {
    throw std::invalid_argument("barrier angles must lie in [0, pi/2]");
  }
}

void require_flux(double flux) {
  if (!std::isfinite(flux) || flux <= 0.0) {
    throw std::invalid_argument("flux must be positive");
  }
}

}  // namespace

double SMatrix2::unitarity_defect() const {
  // rows of S S^dagger
  const cplx d00 = s00 * std::conj(s00) + s01 * std::conj(s01) - 1.0;
  const cplx d01 = s00 * std::conj(s10) + s01 * std::conj(s11);
  const cplx d10 = s10 * std::conj(s00) + s11 * std::conj(s01);
  const cplx d11 = s10 * std::conj(s10) + s11 * std::conj(s11) - 1.0;
  return std::max(std::max(std::abs(d00), std::abs(d01)),
                  std::max(std::abs(d10), std::abs(d11)));
}

SMatrix2 SMatrix2::from_angle(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {cplx{c, 0.0}, cplx{0.0, s}, cplx{0.0, s}, cplx{c, 0.0}};
}

LambdaResult lambda_from_smatrices(const SMatrix2& s_l, const SMatrix2& s_r,
                                   int incoming, double flux) {
  if (incoming != 0 && incoming != 1) {
    throw std::invalid_argument("incoming channel index must be 0 or 1");
  }
  require_flux(flux);
  if (!s_l.is_unitary() || !s_r.is_unitary()) {
    throw std::invalid_argument("S matrices must be unitary to 1e-10");
  }

  // (S_L S_R^dagger)_{ii}
  cplx overlap;
  if (incoming == 0) {
    overlap = s_l.s00 * std::conj(s_r.s00) + s_l.s01 * std::conj(s_r.s01);
  } else {
    overlap = s_l.s10 * std::conj(s_r.s10) + s_l.s11 * std::conj(s_r.s11);
  }
  const cplx lambda = cplx{0.0, flux} * (1.0 - overlap);
  return {lambda.real(), lambda.imag()};
}

double damping_rate(const BarrierPair& barriers, double flux) {
  require_barriers(barriers);
  require_flux(flux);
  return flux * (1.0 - std::cos(barriers.delta_theta()));
}

double damping_rate_small_angle(const BarrierPair& barriers, double flux) {
  require_barriers(barriers);
  require_flux(flux);
  const double dtheta = barriers.delta_theta();
  return flux * 0.5 * dtheta * dtheta;
}

double landauer_flux(double voltage, double charge, double hbar) {
  if (!(voltage > 0.0) || !(charge > 0.0) || !(hbar > 0.0)) {
    throw std::invalid_argument("landauer_flux: all arguments must be positive");
  }
  return charge * voltage / (std::numbers::pi * hbar);
}

}  // namespace qpcsim
