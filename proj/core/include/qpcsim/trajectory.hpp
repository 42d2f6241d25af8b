#ifndef QPCSIM_TRAJECTORY_HPP
#define QPCSIM_TRAJECTORY_HPP

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "qpcsim/types.hpp"

// Monte Carlo generation of probing-outcome sequences. Each probing is a
// two-outcome generalized measurement applied to the conditional state;
// between probings the state precesses freely under V. The damping of the
// unconditioned state comes entirely from the probing updates, so no
// explicit D term appears here.

namespace qpcsim {

/// Diagonal measurement operators for one probing,
///   M_transmit = diag(cos t_l, cos t_r),  M_reflect = diag(sin t_l, sin t_r).
/// Diagonal form means a probing never moves the observed system between
/// its two states; completeness M_t^2 + M_r^2 = I holds by construction.
struct KrausPair {
  double transmit_l = 1.0;
  double transmit_r = 1.0;
  double reflect_l = 0.0;
  double reflect_r = 0.0;

  static KrausPair from_barriers(const BarrierPair& barriers);

  /// max deviation of M_t^dag M_t + M_r^dag M_r from the identity
  double completeness_defect() const;
};

/// Parameters of one simulated ensemble.
struct SimPlan {
  std::int64_t n = 1;         // probings per trajectory
  std::int64_t ensemble = 1;  // number of trajectories
  BarrierPair barriers;
  DensityMatrix2 initial;
  HamiltonianVector v;        // free evolution between probings
  double flux = 1.0;          // probings per unit time
  std::uint64_t master_seed = 0;

  bool is_valid() const {
    return n >= 1 && ensemble >= 1 && barriers.is_valid() &&
           initial.is_valid() && v.is_finite() && std::isfinite(flux) &&
           flux > 0.0;
  }
};

/// Counter-addressed random stream: (master_seed, stream_index) fully
/// determines the draw sequence, so ensembles are reproducible under any
/// parallel schedule.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index);

  std::uint64_t next_u64() { return gen_(); }

  /// uniform in [0, 1) with 53 random bits
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 gen_;
};

/// Probability of an outcome sequence when the observed system is frozen:
/// rho_ll * prod(L factors) + rho_rr * prod(R factors), the factor being
/// p for a transmission and q for a reflection. Valid for windows short
/// against the relaxation time.
double sequence_probability_frozen(const DensityMatrix2& rho,
                                   const BarrierPair& barriers,
                                   std::span<const std::uint8_t> bits);

struct KrausOutcome {
  DensityMatrix2 state;
  double probability;
};

/// Conditional update for one probing outcome (1 = transmission):
/// probability = tr(M rho M^dag), state = M rho M^dag / probability.
/// Throws on degenerate conditioning (outcome probability < 1e-300).
KrausOutcome kraus_update(const DensityMatrix2& rho, const KrausPair& kraus,
                          int outcome);

/// One seeded trajectory: per probing, rotate the state under V for time
/// 1/flux, draw the outcome, apply the conditional update. Deterministic
/// given (plan.master_seed, stream_index).
TrajectoryRecord simulate_trajectory(const SimPlan& plan,
                                     std::uint64_t stream_index,
                                     bool record_states = false);

/// Majority vote over a centered sliding window; ties keep the previous
/// smoothed value. window = 1 returns the bits unchanged.
std::vector<std::uint8_t> smooth_majority(std::span<const std::uint8_t> bits,
                                          std::int64_t window);

struct RunLengthSummary {
  std::int64_t window = 1;
  std::int64_t run_count = 0;
  double mean_run_length = 0.0;               // empirical N_max, in probings
  std::map<std::int64_t, std::int64_t> histogram;  // run length -> count
};

/// Majority-smooth the record, then extract runs of equal smoothed value.
/// The mean run length is the empirical probings-per-relaxation-time.
RunLengthSummary run_length_stats(const TrajectoryRecord& record,
                                  std::int64_t window);

/// Pool the run-length histograms of several summaries (e.g. one per
/// trajectory of an ensemble).
RunLengthSummary merge_run_lengths(std::span<const RunLengthSummary> parts);

struct GeometricFit {
  double p_hat = 0.0;       // per-probing stopping probability
  double mean_excess = 0.0;  // mean of (run - l_min) over runs >= l_min
  double chi_square = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::int64_t samples = 0;
};

/// Chi-square goodness-of-fit of run lengths against a geometric law,
/// conditioned on runs >= l_min (memorylessness makes the conditional tail
/// geometric with the same rate; conditioning also sidesteps the short-run
/// bins that majority smoothing suppresses). Bins are grown until each
/// holds an expected count of at least min_expected. Throws when fewer
/// than three bins can be formed.
GeometricFit geometric_tail_fit(const std::map<std::int64_t, std::int64_t>& histogram,
                                std::int64_t l_min, double min_expected = 5.0);

/// Average the unconditioned ensemble state after each probing and fit an
/// exponential to the coherence decay per unit time. The exact discrete
/// prediction is -flux * ln(cos(delta_theta)). Requires V = 0 and a
/// coherent initial state; returns +infinity when the coherence vanishes
/// after a single probing (perfect analyzer).
double ensemble_coherence_decay(const SimPlan& plan);

}  // namespace qpcsim

#endif  // QPCSIM_TRAJECTORY_HPP
