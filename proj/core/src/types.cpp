#include "qpcsim/types.hpp"

#include <stdexcept>

namespace qpcsim {

DensityMatrix2 polarization_to_density(const PolarizationVector& p) {
  if (!p.is_physical()) {
    throw std::invalid_argument("polarization_to_density: |P| > 1 (unphysical state)");
  }
  DensityMatrix2 rho;
  rho.rho_ll = 0.5 * (1.0 + p.pz);
  rho.rho_rr = 0.5 * (1.0 - p.pz);
  rho.rho_lr = {0.5 * p.px, -0.5 * p.py};
  return rho;
}

PolarizationVector density_to_polarization(const DensityMatrix2& rho) {
  if (std::abs(rho.trace() - 1.0) > kExactTol) {
    throw std::invalid_argument("density_to_polarization: trace != 1");
  }
  if (!rho.is_valid()) {
    throw std::invalid_argument("density_to_polarization: positivity violation");
  }
  PolarizationVector p;
  p.px = 2.0 * rho.rho_lr.real();
  p.py = -2.0 * rho.rho_lr.imag();
  p.pz = rho.rho_ll - rho.rho_rr;
  return p;
}

}  // namespace qpcsim
