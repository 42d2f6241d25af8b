#include "qpcsim/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "qpcsim/damping.hpp"

namespace qpcsim {

namespace {

// Above this the direct recurrence is traded for log-space evaluation.
constexpr std::int64_t kRecurrenceMaxN = 10000;

struct KahanSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

void require_barriers(const BarrierPair& barriers) {
  if (!barriers.is_valid()) {
    throw std::invalid_argument("barrier angles must lie in [0, pi/2]");
  }
}

void require_state(const DensityMatrix2& rho) {
  if (!rho.is_valid()) {
    throw std::invalid_argument("density matrix violates trace or positivity");
  }
}

void require_window(std::int64_t n) {
  if (n < 1) {
    throw std::invalid_argument("window length must be at least 1 probing");
  }
}

// Single binomial PMF, normalized. Anchored at the mode so the recurrence
// never leaves [0, 1]; log-space via lgamma for very long windows where the
// recurrence would accumulate too much rounding.
std::vector<double> binomial_pmf(std::int64_t n, double p) {
  std::vector<double> b(static_cast<std::size_t>(n) + 1, 0.0);
  if (p <= 0.0) {
    b.front() = 1.0;
    return b;
  }
  if (p >= 1.0) {
    b.back() = 1.0;
    return b;
  }
  const double q = 1.0 - p;
  if (n <= kRecurrenceMaxN) {
    const auto mode = std::min(
        n, static_cast<std::int64_t>(static_cast<double>(n + 1) * p));
    b[static_cast<std::size_t>(mode)] = 1.0;
    for (std::int64_t k = mode; k > 0; --k) {
      b[static_cast<std::size_t>(k - 1)] =
          b[static_cast<std::size_t>(k)] * (static_cast<double>(k) * q) /
          (static_cast<double>(n - k + 1) * p);
    }
    for (std::int64_t k = mode; k < n; ++k) {
      b[static_cast<std::size_t>(k + 1)] =
          b[static_cast<std::size_t>(k)] * (static_cast<double>(n - k) * p) /
          (static_cast<double>(k + 1) * q);
    }
  } else {
    const double lg_n1 = std::lgamma(static_cast<double>(n) + 1.0);
    const double lp = std::log(p);
    const double lq = std::log1p(-p);
    for (std::int64_t k = 0; k <= n; ++k) {
      const double kk = static_cast<double>(k);
      const double l = lg_n1 - std::lgamma(kk + 1.0) -
                       std::lgamma(static_cast<double>(n - k) + 1.0) +
                       kk * lp + static_cast<double>(n - k) * lq;
      b[static_cast<std::size_t>(k)] = std::exp(l);
    }
  }
  KahanSum s;
  for (double x : b) s.add(x);
  const double inv = 1.0 / s.value();
  for (double& x : b) x *= inv;
  return b;
}

}  // namespace

double CountDistribution::mean() const {
  KahanSum s;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    s.add(static_cast<double>(k) * pmf[k]);
  }
  return s.value();
}

double CountDistribution::variance() const {
  const double m = mean();
  KahanSum s;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    const double d = static_cast<double>(k) - m;
    s.add(d * d * pmf[k]);
  }
  return s.value();
}

CountDistribution mixture_pmf(const DensityMatrix2& rho,
                              const BarrierPair& barriers, std::int64_t n) {
  require_state(rho);
  require_barriers(barriers);
  require_window(n);
  const auto bl = binomial_pmf(n, barriers.p_l());
  const auto br = binomial_pmf(n, barriers.p_r());
  CountDistribution out;
  out.n = n;
  out.pmf.resize(static_cast<std::size_t>(n) + 1);
  for (std::size_t k = 0; k < out.pmf.size(); ++k) {
    out.pmf[k] = rho.rho_ll * bl[k] + rho.rho_rr * br[k];
  }
  KahanSum s;
  for (double x : out.pmf) s.add(x);
  const double inv = 1.0 / s.value();
  for (double& x : out.pmf) x *= inv;
  return out;
}

VarianceReport variance_short(const DensityMatrix2& rho,
                              const BarrierPair& barriers, std::int64_t n) {
  require_state(rho);
  require_barriers(barriers);
  require_window(n);
  const double nn = static_cast<double>(n);
  VarianceReport r;
  r.n = n;
  r.regime = Regime::kShort;
  r.mean_q_l = nn * barriers.p_l();
  r.mean_q_r = nn * barriers.p_r();
  r.mean_q = rho.rho_ll * r.mean_q_l + rho.rho_rr * r.mean_q_r;
  r.var_partition = rho.rho_ll * nn * barriers.p_l() * barriers.q_l() +
                    rho.rho_rr * nn * barriers.p_r() * barriers.q_r();
  const double gap = r.mean_q_l - r.mean_q_r;
  r.var_measurement = rho.rho_ll * rho.rho_rr * gap * gap;
  r.var_total = r.var_partition + r.var_measurement;
  r.nominal_total = r.var_total;
  return r;
}

VarianceReport brute_force_variance(const DensityMatrix2& rho,
                                    const BarrierPair& barriers,
                                    std::int64_t n) {
  require_state(rho);
  require_barriers(barriers);
  require_window(n);
  if (n > kBruteForceMaxN) {
    throw std::domain_error("enumeration over 2^n sequences is capped at n = " +
                            std::to_string(kBruteForceMaxN));
  }

  struct BranchMoments {
    KahanSum w;    // total branch probability (should reach 1)
    KahanSum wd;   // sum of prob * (q - anchor)
    KahanSum wd2;  // sum of prob * (q - anchor)^2
  };
  struct Ctx {
    double p_l, q_l, p_r, q_r;
    double c_l, c_r;  // centering anchors; any value gives exact algebra,
                      // a value near the branch mean avoids cancellation
    BranchMoments l, r;
  };
  const double nn = static_cast<double>(n);
  Ctx ctx{barriers.p_l(), barriers.q_l(),       barriers.p_r(),
          barriers.q_r(), nn * barriers.p_l(),  nn * barriers.p_r(),
          {},             {}};

  // Depth-first over the outcome tree, carrying the partial probability of
  // the prefix under each frozen branch. Leaves contribute to both branches
  // at once, so one sweep yields both conditional distributions.
  const auto descend = [&ctx](const auto& self, std::int64_t remaining,
                              double prod_l, double prod_r, double q) -> void {
    if (remaining == 0) {
      const double dl = q - ctx.c_l;
      const double dr = q - ctx.c_r;
      ctx.l.w.add(prod_l);
      ctx.l.wd.add(prod_l * dl);
      ctx.l.wd2.add(prod_l * dl * dl);
      ctx.r.w.add(prod_r);
      ctx.r.wd.add(prod_r * dr);
      ctx.r.wd2.add(prod_r * dr * dr);
      return;
    }
    self(self, remaining - 1, prod_l * ctx.q_l, prod_r * ctx.q_r, q);
    self(self, remaining - 1, prod_l * ctx.p_l, prod_r * ctx.p_r, q + 1.0);
  };
  descend(descend, n, 1.0, 1.0, 0.0);

  const double wl = ctx.l.w.value();
  const double wr = ctx.r.w.value();
  const double dev_l = ctx.l.wd.value() / wl;
  const double dev_r = ctx.r.wd.value() / wr;
  const double mean_l = ctx.c_l + dev_l;
  const double mean_r = ctx.c_r + dev_r;
  const double var_l = ctx.l.wd2.value() / wl - dev_l * dev_l;
  const double var_r = ctx.r.wd2.value() / wr - dev_r * dev_r;

  VarianceReport r;
  r.n = n;
  r.regime = Regime::kShort;
  r.mean_q_l = mean_l;
  r.mean_q_r = mean_r;
  r.mean_q = rho.rho_ll * mean_l + rho.rho_rr * mean_r;
  r.var_partition = rho.rho_ll * var_l + rho.rho_rr * var_r;
  // Spread of the branch means about the mixture mean; all terms positive,
  // so no cancellation even when the variance is far below mean^2.
  const double dl = mean_l - r.mean_q;
  const double dr = mean_r - r.mean_q;
  r.var_measurement = rho.rho_ll * dl * dl + rho.rho_rr * dr * dr;
  r.var_total = r.var_partition + r.var_measurement;
  r.nominal_total = r.var_total;
  return r;
}

VarianceReport variance_long(const BarrierPair& barriers, std::int64_t n,
                             std::int64_t n_max) {
  require_barriers(barriers);
  if (n_max < 1) {
    throw std::invalid_argument("relaxation scale n_max must be at least 1");
  }
  if (n < n_max) {
    throw std::invalid_argument(
        "long-window variance needs n >= n_max; use the short form below");
  }
  const DensityMatrix2 relaxed{};  // rho_ll = rho_rr = 1/2
  const VarianceReport block = variance_short(relaxed, barriers, n_max);
  const double scale = static_cast<double>(n) / static_cast<double>(n_max);
  VarianceReport r;
  r.n = n;
  r.regime = Regime::kLong;
  r.mean_q_l = static_cast<double>(n) * barriers.p_l();
  r.mean_q_r = static_cast<double>(n) * barriers.p_r();
  r.mean_q = block.mean_q * scale;
  r.var_partition = block.var_partition * scale;
  r.var_measurement = block.var_measurement * scale;
  r.var_total = block.var_total * scale;
  const double dp = barriers.p_l() - barriers.p_r();
  r.nominal_total =
      (barriers.p_mean() + 0.25 * dp * dp * static_cast<double>(n_max)) *
      static_cast<double>(n);
  return r;
}

double measurement_noise(const DensityMatrix2& rho, const BarrierPair& barriers,
                         std::int64_t n) {
  require_state(rho);
  require_barriers(barriers);
  require_window(n);
  const double gap =
      static_cast<double>(n) * (barriers.p_l() - barriers.p_r());
  return rho.rho_ll * rho.rho_rr * gap * gap;
}

double measurement_noise_small_angle(const BarrierPair& barriers,
                                     std::int64_t n) {
  require_barriers(barriers);
  require_window(n);
  const double p = barriers.p_mean();
  const double nn = static_cast<double>(n);
  const double dth = barriers.delta_theta();
  return 4.0 * p * (1.0 - p) * nn * nn * dth * dth;
}

RelationReport decoherence_fluctuation_check(
    const BarrierPair& barriers, double flux, std::int64_t n,
    std::optional<std::int64_t> n_max) {
  require_barriers(barriers);
  require_window(n);
  if (!(flux > 0.0) || !std::isfinite(flux)) {
    throw std::invalid_argument("flux must be positive and finite");
  }
  if (n_max && *n_max < 1) {
    throw std::invalid_argument("relaxation scale n_max must be at least 1");
  }

  RelationReport rep;
  rep.n = n;
  rep.n_max = n_max.value_or(0);
  rep.delta_theta = barriers.delta_theta();
  rep.in_domain = std::abs(rep.delta_theta) <= kSmallAngleDomain;

  const DensityMatrix2 relaxed{};
  rep.v_m_exact = measurement_noise(relaxed, barriers, n);
  rep.d_rate = damping_rate(barriers, flux);
  rep.degenerate = rep.d_rate == 0.0;

  const double nn = static_cast<double>(n);
  const double s = std::sin(barriers.theta_l + barriers.theta_r);
  rep.v_m_leading =
      0.25 * s * s * nn * nn * rep.delta_theta * rep.delta_theta;

  const double p = barriers.p_mean();
  const double d_over_flux = rep.d_rate / flux;
  rep.nominal_vm_short = p * (1.0 - p) * nn * nn * d_over_flux;
  if (!rep.degenerate) {
    rep.ratio_short = rep.v_m_exact / (nn * nn * d_over_flux);
    rep.residual = std::abs(rep.v_m_exact - rep.v_m_leading) / rep.v_m_exact;
  }
  if (n_max) {
    const double nm = static_cast<double>(*n_max);
    rep.v_m_long = rep.v_m_exact * nm / nn;
    rep.nominal_vm_long = p * (1.0 - p) * nn * nm * d_over_flux;
    if (!rep.degenerate) {
      rep.ratio_long = rep.v_m_long / (nn * nm * d_over_flux);
    }
  }
  return rep;
}

JackknifeEstimate jackknife_variance(std::span<const double> samples) {
  const std::size_t m = samples.size();
  if (m < 3) {
    throw std::invalid_argument(
        "jackknife variance needs at least 3 samples");
  }
  const double mf = static_cast<double>(m);

  KahanSum mean_acc;
  for (double x : samples) mean_acc.add(x);
  const double mean = mean_acc.value() / mf;

  // Centered sums keep the leave-one-out algebra well conditioned.
  KahanSum s1, s2;
  for (double x : samples) {
    const double d = x - mean;
    s1.add(d);
    s2.add(d * d);
  }
  const double s1v = s1.value();
  const double s2v = s2.value();

  JackknifeEstimate est;
  est.samples = m;
  est.value = (s2v - s1v * s1v / mf) / (mf - 1.0);

  KahanSum loo_sum;
  std::vector<double> loo(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double d = samples[i] - mean;
    const double rest = s1v - d;
    loo[i] = (s2v - d * d - rest * rest / (mf - 1.0)) / (mf - 2.0);
    loo_sum.add(loo[i]);
  }
  const double loo_mean = loo_sum.value() / mf;
  KahanSum ss;
  for (double v : loo) {
    const double d = v - loo_mean;
    ss.add(d * d);
  }
  est.std_error = std::sqrt((mf - 1.0) / mf * ss.value());
  return est;
}

}  // namespace qpcsim
