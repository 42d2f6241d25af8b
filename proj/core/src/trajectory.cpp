#include "qpcsim/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "qpcsim/bloch.hpp"

namespace qpcsim {

namespace {

constexpr double kDegenerateProb = 1e-300;

void require_plan(const SimPlan& plan) {
  if (!plan.is_valid()) {
    throw std::invalid_argument("invalid simulation plan");
  }
}

}  // namespace

KrausPair KrausPair::from_barriers(const BarrierPair& barriers) {
  if (!barriers.is_valid()) {
    throw std::invalid_argument("barrier angles must lie in [0, pi/2]");
  }
  return {std::cos(barriers.theta_l), std::cos(barriers.theta_r),
          std::sin(barriers.theta_l), std::sin(barriers.theta_r)};
}

double KrausPair::completeness_defect() const {
  const double dl = transmit_l * transmit_l + reflect_l * reflect_l - 1.0;
  const double dr = transmit_r * transmit_r + reflect_r * reflect_r - 1.0;
  return std::max(std::abs(dl), std::abs(dr));
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_index) {
  std::seed_seq seq{
      static_cast<std::uint32_t>(master_seed),
      static_cast<std::uint32_t>(master_seed >> 32),
      static_cast<std::uint32_t>(stream_index),
      static_cast<std::uint32_t>(stream_index >> 32),
  };
  gen_.seed(seq);
}

double sequence_probability_frozen(const DensityMatrix2& rho,
                                   const BarrierPair& barriers,
                                   std::span<const std::uint8_t> bits) {
  if (bits.empty()) {
    throw std::invalid_argument("sequence_probability_frozen: empty sequence");
  }
  const double p_l = barriers.p_l(), q_l = barriers.q_l();
  const double p_r = barriers.p_r(), q_r = barriers.q_r();
  double prod_l = 1.0, prod_r = 1.0;
  for (auto bit : bits) {
    if (bit) {
      prod_l *= p_l;
      prod_r *= p_r;
    } else {
      prod_l *= q_l;
      prod_r *= q_r;
    }
  }
  return rho.rho_ll * prod_l + rho.rho_rr * prod_r;
}

KrausOutcome kraus_update(const DensityMatrix2& rho, const KrausPair& kraus,
                          int outcome) {
  if (outcome != 0 && outcome != 1) {
    throw std::invalid_argument("kraus_update: outcome must be 0 or 1");
  }
  const double ml = outcome ? kraus.transmit_l : kraus.reflect_l;
  const double mr = outcome ? kraus.transmit_r : kraus.reflect_r;
  const double probability = ml * ml * rho.rho_ll + mr * mr * rho.rho_rr;
  if (probability < kDegenerateProb) {
    throw std::domain_error("kraus_update: degenerate conditioning");
  }
  DensityMatrix2 out;
  out.rho_ll = ml * ml * rho.rho_ll / probability;
  out.rho_rr = mr * mr * rho.rho_rr / probability;
  out.rho_lr = (ml * mr / probability) * rho.rho_lr;
  return {out, probability};
}

TrajectoryRecord simulate_trajectory(const SimPlan& plan,
                                     std::uint64_t stream_index,
                                     bool record_states) {
  require_plan(plan);
  const KrausPair kraus = KrausPair::from_barriers(plan.barriers);
  const double step_time = 1.0 / plan.flux;
  const bool rotate = !plan.v.is_zero();

  RngStream rng(plan.master_seed, stream_index);
  TrajectoryRecord record;
  record.stream = stream_index;
  record.bits.reserve(static_cast<std::size_t>(plan.n));
  if (record_states) record.states.reserve(static_cast<std::size_t>(plan.n));

  DensityMatrix2 rho = plan.initial;
  for (std::int64_t k = 0; k < plan.n; ++k) {
    if (rotate) {
      const PolarizationVector p =
          rotate_about(density_to_polarization(rho), plan.v, step_time);
      rho = polarization_to_density(p);
    }
    const double p_transmit = kraus.transmit_l * kraus.transmit_l * rho.rho_ll +
                              kraus.transmit_r * kraus.transmit_r * rho.rho_rr;
    const int outcome = rng.uniform() < p_transmit ? 1 : 0;
    rho = kraus_update(rho, kraus, outcome).state;
    record.bits.push_back(static_cast<std::uint8_t>(outcome));
    if (record_states) record.states.push_back(rho);
  }
  return record;
}

std::vector<std::uint8_t> smooth_majority(std::span<const std::uint8_t> bits,
                                          std::int64_t window) {
  if (window < 1) {
    throw std::invalid_argument("smooth_majority: window must be >= 1");
  }
  if (window > static_cast<std::int64_t>(bits.size())) {
    throw std::invalid_argument("smooth_majority: window larger than record");
  }
  if (window == 1) return {bits.begin(), bits.end()};

  const std::int64_t n = static_cast<std::int64_t>(bits.size());
  const std::int64_t before = (window - 1) / 2;
  const std::int64_t after = window / 2;
  std::vector<std::uint8_t> out(bits.size());
  std::uint8_t prev = bits[0];
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t lo = std::max<std::int64_t>(0, i - before);
    const std::int64_t hi = std::min<std::int64_t>(n - 1, i + after);
    std::int64_t ones = 0;
    for (std::int64_t j = lo; j <= hi; ++j) ones += bits[j];
    const std::int64_t cells = hi - lo + 1;
    std::uint8_t vote;
    if (2 * ones > cells) {
      vote = 1;
    } else if (2 * ones < cells) {
      vote = 0;
    } else {
      vote = prev;
    }
    out[static_cast<std::size_t>(i)] = vote;
    prev = vote;
  }
  return out;
}

RunLengthSummary run_length_stats(const TrajectoryRecord& record,
                                  std::int64_t window) {
  if (record.bits.empty()) {
    throw std::invalid_argument("run_length_stats: empty record");
  }
  const std::vector<std::uint8_t> smoothed = smooth_majority(record.bits, window);

  RunLengthSummary summary;
  summary.window = window;
  std::int64_t run = 1;
  for (std::size_t i = 1; i < smoothed.size(); ++i) {
    if (smoothed[i] == smoothed[i - 1]) {
      ++run;
    } else {
      ++summary.histogram[run];
      ++summary.run_count;
      run = 1;
    }
  }
  ++summary.histogram[run];
  ++summary.run_count;
  summary.mean_run_length = static_cast<double>(smoothed.size()) /
                            static_cast<double>(summary.run_count);
  return summary;
}

RunLengthSummary merge_run_lengths(std::span<const RunLengthSummary> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("merge_run_lengths: nothing to merge");
  }
  RunLengthSummary merged;
  merged.window = parts.front().window;
  std::int64_t total_probings = 0;
  for (const auto& part : parts) {
    merged.run_count += part.run_count;
    for (const auto& [len, count] : part.histogram) {
      merged.histogram[len] += count;
      total_probings += len * count;
    }
  }
  merged.mean_run_length = static_cast<double>(total_probings) /
                           static_cast<double>(merged.run_count);
  return merged;
}

GeometricFit geometric_tail_fit(
    const std::map<std::int64_t, std::int64_t>& histogram, std::int64_t l_min,
    double min_expected) {
  std::int64_t samples = 0;
  double excess_sum = 0.0;
  std::int64_t max_excess = 0;
  for (const auto& [len, count] : histogram) {
    if (len < l_min) continue;
    samples += count;
    excess_sum += static_cast<double>(len - l_min) * static_cast<double>(count);
    max_excess = std::max(max_excess, len - l_min);
  }
  if (samples < 3) {
    throw std::domain_error("geometric_tail_fit: too few runs above l_min");
  }

  GeometricFit fit;
  fit.samples = samples;
  fit.mean_excess = excess_sum / static_cast<double>(samples);
  // Geometric on {0, 1, ...}: mean = (1 - p) / p.
  fit.p_hat = 1.0 / (fit.mean_excess + 1.0);

  // Observed counts per excess value.
  std::vector<std::int64_t> observed(static_cast<std::size_t>(max_excess) + 1, 0);
  for (const auto& [len, count] : histogram) {
    if (len >= l_min) observed[static_cast<std::size_t>(len - l_min)] += count;
  }

  // Grow bins until the expected count reaches min_expected; the final bin
  // absorbs the analytic tail.
  const double p = fit.p_hat;
  struct Bin { double expected; std::int64_t observed; };
  std::vector<Bin> bins;
  double exp_acc = 0.0;
  std::int64_t obs_acc = 0;
  double pmf = p;  // P(excess = 0)
  const double total = static_cast<double>(samples);
  for (std::int64_t x = 0; x <= max_excess; ++x) {
    exp_acc += total * pmf;
    obs_acc += observed[static_cast<std::size_t>(x)];
    pmf *= (1.0 - p);
    if (exp_acc >= min_expected) {
      bins.push_back({exp_acc, obs_acc});
      exp_acc = 0.0;
      obs_acc = 0;
    }
  }
  // Expected mass beyond max_excess is total * (1-p)^(max_excess+1); no
  // observations live there by construction.
  exp_acc += total * pmf / p;
  if (!bins.empty() && exp_acc < min_expected) {
    bins.back().expected += exp_acc;
    bins.back().observed += obs_acc;
  } else {
    bins.push_back({exp_acc, obs_acc});
  }

  if (bins.size() < 3) {
    throw std::domain_error("geometric_tail_fit: not enough bins for chi-square");
  }

  double chi2 = 0.0;
  for (const auto& bin : bins) {
    const double diff = static_cast<double>(bin.observed) - bin.expected;
    chi2 += diff * diff / bin.expected;
  }
  fit.chi_square = chi2;
  fit.dof = static_cast<int>(bins.size()) - 2;  // one fitted parameter

  const boost::math::chi_squared dist(fit.dof);
  fit.p_value = boost::math::cdf(boost::math::complement(dist, chi2));
  return fit;
}

double ensemble_coherence_decay(const SimPlan& plan) {
  require_plan(plan);
  if (!plan.v.is_zero()) {
    throw std::invalid_argument("ensemble_coherence_decay: requires V = 0");
  }
  if (std::abs(plan.initial.rho_lr) == 0.0) {
    throw std::invalid_argument("ensemble_coherence_decay: zero initial coherence");
  }
  const KrausPair kraus = KrausPair::from_barriers(plan.barriers);
  const std::size_t n = static_cast<std::size_t>(plan.n);

  std::vector<double> sum_re(n + 1, 0.0), sum_im(n + 1, 0.0);
  for (std::int64_t i = 0; i < plan.ensemble; ++i) {
    RngStream rng(plan.master_seed, static_cast<std::uint64_t>(i));
    DensityMatrix2 rho = plan.initial;
    sum_re[0] += rho.rho_lr.real();
    sum_im[0] += rho.rho_lr.imag();
    for (std::size_t k = 1; k <= n; ++k) {
      const double p_transmit =
          kraus.transmit_l * kraus.transmit_l * rho.rho_ll +
          kraus.transmit_r * kraus.transmit_r * rho.rho_rr;
      const int outcome = rng.uniform() < p_transmit ? 1 : 0;
      rho = kraus_update(rho, kraus, outcome).state;
      sum_re[k] += rho.rho_lr.real();
      sum_im[k] += rho.rho_lr.imag();
    }
  }

  // Least-squares slope of ln|mean coherence| against time k / flux.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::int64_t points = 0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double mag = std::hypot(sum_re[k], sum_im[k]) /
                       static_cast<double>(plan.ensemble);
    if (mag <= 0.0) break;  // coherence killed outright; stop the fit here
    const double x = static_cast<double>(k) / plan.flux;
    const double y = std::log(mag);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++points;
  }
  if (points < 2) return std::numeric_limits<double>::infinity();
  const double m = static_cast<double>(points);
  const double denom = m * sxx - sx * sx;
  const double slope = (m * sxy - sx * sy) / denom;
  return -slope;
}

}  // namespace qpcsim
