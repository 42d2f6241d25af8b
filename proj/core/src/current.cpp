#include "qpcsim/current.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "qpcsim/damping.hpp"
#include "qpcsim/statistics.hpp"

namespace qpcsim {

namespace {

void require_barriers(const BarrierPair& barriers) {
  if (!barriers.is_valid()) {
    throw std::invalid_argument("barrier angles must lie in [0, pi/2]");
  }
}

void require_flux(double flux) {
  if (!(flux > 0.0) || !std::isfinite(flux)) {
    throw std::invalid_argument("flux must be positive and finite");
  }
}

void require_charge(double charge) {
  if (!(charge >= 0.0) || !std::isfinite(charge)) {
    throw std::invalid_argument("charge must be nonnegative and finite");
  }
}

}  // namespace

double current_from_counts(std::int64_t q, std::int64_t n, double flux,
                           double charge) {
  if (n < 1) {
    throw std::invalid_argument("window length must be at least 1 probing");
  }
  if (q < 0 || q > n) {
    throw std::invalid_argument("transmitted count must lie in [0, n]");
  }
  require_flux(flux);
  require_charge(charge);
  return charge * static_cast<double>(q) * flux / static_cast<double>(n);
}

std::int64_t probings_for_window(double flux, double delta_t) {
  require_flux(flux);
  if (!(delta_t > 0.0) || !std::isfinite(delta_t)) {
    throw std::invalid_argument("averaging time must be positive and finite");
  }
  const std::int64_t n = std::llround(flux * delta_t);
  if (n < 1) {
    throw std::invalid_argument(
        "averaging window spans less than one probing");
  }
  return n;
}

CurrentEstimate current_variance_short(const BarrierPair& barriers,
                                       std::int64_t n, double flux,
                                       double charge) {
  require_barriers(barriers);
  require_flux(flux);
  require_charge(charge);
  const DensityMatrix2 relaxed{};
  const VarianceReport v = variance_short(relaxed, barriers, n);
  const double scale = charge * flux / static_cast<double>(n);
  const double s2 = scale * scale;
  const double ef = charge * flux;
  const double dp = barriers.p_l() - barriers.p_r();

  CurrentEstimate c;
  c.delta_t = static_cast<double>(n) / flux;
  c.n = n;
  c.regime = Regime::kShort;
  c.j_mean = ef * barriers.p_mean();
  c.var_partition_part = s2 * v.var_partition;
  c.var_measurement_part = s2 * v.var_measurement;
  c.j_variance = c.var_partition_part + c.var_measurement_part;
  c.nominal_variance =
      ((barriers.p_l() + barriers.p_r()) / static_cast<double>(n) + dp * dp) *
      ef * ef;
  return c;
}

CurrentEstimate current_variance_long(const BarrierPair& barriers,
                                      std::int64_t n, std::int64_t n_max,
                                      double flux, double charge) {
  require_barriers(barriers);
  require_flux(flux);
  require_charge(charge);
  const VarianceReport v = variance_long(barriers, n, n_max);
  const double scale = charge * flux / static_cast<double>(n);
  const double s2 = scale * scale;
  const double ef = charge * flux;
  const double dp = barriers.p_l() - barriers.p_r();

  CurrentEstimate c;
  c.delta_t = static_cast<double>(n) / flux;
  c.n = n;
  c.regime = Regime::kLong;
  c.j_mean = ef * barriers.p_mean();
  c.var_partition_part = s2 * v.var_partition;
  c.var_measurement_part = s2 * v.var_measurement;
  c.j_variance = c.var_partition_part + c.var_measurement_part;
  c.nominal_variance = ((barriers.p_l() + barriers.p_r()) +
                        dp * dp * static_cast<double>(n_max)) /
                       static_cast<double>(n) * ef * ef;
  return c;
}

MeasurementCurrentNoise measurement_current_noise(const BarrierPair& barriers,
                                                  double flux, double charge,
                                                  Regime regime,
                                                  std::int64_t n,
                                                  std::int64_t n_max) {
  MeasurementCurrentNoise out;
  if (regime == Regime::kLong && n_max < 1) {
    throw std::invalid_argument(
        "long-regime measurement noise needs the relaxation scale n_max");
  }
  const CurrentEstimate est =
      regime == Regime::kShort
          ? current_variance_short(barriers, n, flux, charge)
          : current_variance_long(barriers, n, n_max, flux, charge);
  out.exact = est.var_measurement_part;

  const double d = damping_rate(barriers, flux);
  const double p = barriers.p_mean();
  out.nominal = 8.0 * p * (1.0 - p) * d * charge * charge * flux;
  if (regime == Regime::kLong) {
    out.nominal *= static_cast<double>(n_max) / static_cast<double>(n);
  }
  return out;
}

ZeroChargeReport zero_charge_limit(const BarrierPair& barriers,
                                   double fixed_current, double delta_t,
                                   Regime regime, int steps, double t_rel) {
  require_barriers(barriers);
  if (!(fixed_current > 0.0) || !std::isfinite(fixed_current)) {
    throw std::invalid_argument("fixed current e*flux must be positive");
  }
  if (!(delta_t > 0.0) || !std::isfinite(delta_t)) {
    throw std::invalid_argument("averaging time must be positive and finite");
  }
  if (steps < 1) {
    throw std::invalid_argument("need at least one halving step");
  }
  if (regime == Regime::kLong && !(t_rel > 0.0)) {
    throw std::invalid_argument("long regime needs a relaxation time t_rel");
  }

  ZeroChargeReport rep;
  rep.regime = regime;
  rep.fixed_current = fixed_current;
  rep.delta_t = delta_t;
  rep.steps.reserve(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    ZeroChargeStep st;
    st.charge = std::ldexp(1.0, -k);
    st.flux = fixed_current / st.charge;
    st.n = probings_for_window(st.flux, delta_t);
    const CurrentEstimate est =
        regime == Regime::kShort
            ? current_variance_short(barriers, st.n, st.flux, st.charge)
            : current_variance_long(barriers, st.n,
                                    probings_for_window(st.flux, t_rel),
                                    st.flux, st.charge);
    st.var_partition = est.var_partition_part;
    st.var_measurement = est.var_measurement_part;
    rep.steps.push_back(st);
  }

  rep.partition_halves = true;
  rep.measurement_constant = true;
  rep.ratio_decreasing = true;
  const double v0 = rep.steps.front().var_measurement;
  for (std::size_t i = 1; i < rep.steps.size(); ++i) {
    const double prev = rep.steps[i - 1].var_partition;
    const double cur = rep.steps[i].var_partition;
    if (prev == 0.0 || cur == 0.0) {
      rep.partition_halves = rep.partition_halves && prev == 0.0 && cur == 0.0;
    } else if (std::abs(prev - 2.0 * cur) > 1e-9 * prev) {
      rep.partition_halves = false;
    }
    const double vm = rep.steps[i].var_measurement;
    if (v0 == 0.0 ? vm != 0.0 : std::abs(vm - v0) > 1e-12 * std::abs(v0)) {
      rep.measurement_constant = false;
    }
    if (v0 > 0.0 && rep.steps[i - 1].var_partition > 0.0) {
      const double r_prev = rep.steps[i - 1].var_partition /
                            rep.steps[i - 1].var_measurement;
      const double r_cur = vm > 0.0 ? rep.steps[i].var_partition / vm : 0.0;
      if (!(r_cur < r_prev)) rep.ratio_decreasing = false;
    }
  }
  return rep;
}

}  // namespace qpcsim
