#include "qpcsim/bloch.hpp"

#include <cmath>
#include <stdexcept>

namespace qpcsim {

namespace {

PolarizationVector rhs(const PolarizationVector& p, const HamiltonianVector& v,
                       double d) {
  return {v.vy * p.pz - v.vz * p.py - d * p.px,
          v.vz * p.px - v.vx * p.pz - d * p.py,
          v.vx * p.py - v.vy * p.px};
}

PolarizationVector axpy(const PolarizationVector& p, double a,
                        const PolarizationVector& k) {
  return {p.px + a * k.px, p.py + a * k.py, p.pz + a * k.pz};
}

PolarizationVector rk4_step(const PolarizationVector& p,
                            const HamiltonianVector& v, double d, double dt) {
  const PolarizationVector k1 = rhs(p, v, d);
  const PolarizationVector k2 = rhs(axpy(p, 0.5 * dt, k1), v, d);
  const PolarizationVector k3 = rhs(axpy(p, 0.5 * dt, k2), v, d);
  const PolarizationVector k4 = rhs(axpy(p, dt, k3), v, d);
  const double w = dt / 6.0;
  return {p.px + w * (k1.px + 2.0 * k2.px + 2.0 * k3.px + k4.px),
          p.py + w * (k1.py + 2.0 * k2.py + 2.0 * k3.py + k4.py),
          p.pz + w * (k1.pz + 2.0 * k2.pz + 2.0 * k3.pz + k4.pz)};
}

}  // namespace

PolarizationVector bloch_derivative(const PolarizationVector& p,
                                    const EvolutionSpec& spec) {
  if (!p.is_physical() || !spec.v.is_finite() || spec.d < 0.0) {
    throw std::invalid_argument("bloch_derivative: invalid input");
  }
  return rhs(p, spec.v, spec.d);
}

std::vector<BlochSample> evolve(const PolarizationVector& p0,
                                const EvolutionSpec& spec) {
  if (!p0.is_physical()) {
    throw std::invalid_argument("evolve: unphysical initial state");
  }
  if (!spec.is_valid()) {
    throw std::invalid_argument("evolve: invalid evolution spec");
  }
  if (spec.v.norm() * spec.dt > 0.5 || spec.d * spec.dt > 0.5) {
    throw std::invalid_argument(
        "evolve: step too large (|V| dt and D dt must not exceed 0.5)");
  }

  const auto n_steps =
      static_cast<std::int64_t>(std::llround(spec.t_final / spec.dt));
  std::vector<BlochSample> out;
  out.reserve(static_cast<std::size_t>(n_steps) + 1);
  PolarizationVector p = p0;
  out.push_back({0.0, p});
  for (std::int64_t k = 1; k <= n_steps; ++k) {
    p = rk4_step(p, spec.v, spec.d, spec.dt);
    out.push_back({static_cast<double>(k) * spec.dt, p});
  }
  return out;
}

PolarizationVector analytic_dephasing(const PolarizationVector& p0, double d,
                                      double t) {
  if (d < 0.0 || t < 0.0) {
    throw std::invalid_argument("analytic_dephasing: d and t must be >= 0");
  }
  const double decay = std::exp(-d * t);
  return {p0.px * decay, p0.py * decay, p0.pz};
}

PolarizationVector rotate_about(const PolarizationVector& p,
                                const HamiltonianVector& v, double t) {
  const double vnorm = v.norm();
  if (vnorm == 0.0 || t == 0.0) return p;
  const double angle = vnorm * t;
  const double kx = v.vx / vnorm, ky = v.vy / vnorm, kz = v.vz / vnorm;
  const double c = std::cos(angle), s = std::sin(angle);
  const double dot = kx * p.px + ky * p.py + kz * p.pz;
  const double cx = ky * p.pz - kz * p.py;
  const double cy = kz * p.px - kx * p.pz;
  const double cz = kx * p.py - ky * p.px;
  return {p.px * c + cx * s + kx * dot * (1.0 - c),
          p.py * c + cy * s + ky * dot * (1.0 - c),
          p.pz * c + cz * s + kz * dot * (1.0 - c)};
}

}  // namespace qpcsim
