#pragma once

#include <cstdint>
#include <vector>

#include "qpcsim/types.hpp"

namespace qpcsim {

// Current statistics for one averaging window of delta_t = n / flux.
// j_variance is the sum of the two parts; nominal_variance is the same
// quantity with the coefficients rounded to order unity.
struct CurrentEstimate {
  double delta_t = 0.0;
  std::int64_t n = 0;
  double j_mean = 0.0;
  double j_variance = 0.0;
  double var_partition_part = 0.0;
  double var_measurement_part = 0.0;
  double nominal_variance = 0.0;
  Regime regime = Regime::kShort;
};

// j = e * q * flux / n, the current averaged over the window.
double current_from_counts(std::int64_t q, std::int64_t n, double flux,
                           double charge);

// The averaging time is quantized to whole probings; windows shorter than
// one probing are rejected.
std::int64_t probings_for_window(double flux, double delta_t);

// (e flux / n)^2 times the frozen-window count variance at the relaxed
// state rho_ll = 1/2, split into parts. The measurement part carries no n.
CurrentEstimate current_variance_short(const BarrierPair& barriers,
                                       std::int64_t n, double flux,
                                       double charge);

// Same conversion applied to the block-composed long-window variance; the
// measurement part falls off as n_max / n.
CurrentEstimate current_variance_long(const BarrierPair& barriers,
                                      std::int64_t n, std::int64_t n_max,
                                      double flux, double charge);

// Measurement part of the current variance in both normalizations. The
// nominal form is 8 p (1-p) d e^2 flux, times n_max/n in the long regime.
struct MeasurementCurrentNoise {
  double exact = 0.0;
  double nominal = 0.0;
};

MeasurementCurrentNoise measurement_current_noise(
    const BarrierPair& barriers, double flux, double charge, Regime regime,
    std::int64_t n, std::int64_t n_max = 0);

// One evaluation point of the vanishing-charge sequence e_k = 2^-k with the
// product e * flux held fixed.
struct ZeroChargeStep {
  double charge = 0.0;
  double flux = 0.0;
  std::int64_t n = 0;
  double var_partition = 0.0;
  double var_measurement = 0.0;
};

struct ZeroChargeReport {
  Regime regime = Regime::kShort;
  double fixed_current = 0.0;  // e * flux along the whole sequence
  double delta_t = 0.0;
  std::vector<ZeroChargeStep> steps;
  bool partition_halves = false;      // successive ratio 2 within 1e-9
  bool measurement_constant = false;  // within 1e-12 of the first step
  bool ratio_decreasing = false;      // partition/measurement strictly falls
};

// Walks e_k = 2^-k for k = 0..steps at fixed current e*flux and fixed
// window delta_t. Only the measurement part survives the limit. t_rel sets
// the relaxation time for the long regime (n_max = flux * t_rel).
ZeroChargeReport zero_charge_limit(const BarrierPair& barriers,
                                   double fixed_current, double delta_t,
                                   Regime regime, int steps,
                                   double t_rel = 0.0);

}  // namespace qpcsim
