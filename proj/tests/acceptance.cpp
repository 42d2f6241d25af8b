// Acceptance gate: one line per criterion, exit 0 only if every criterion
// holds. Each check states the measured quantity next to its bound so a
// failure is diagnosable from the log alone.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qpcsim/bloch.hpp"
#include "qpcsim/current.hpp"
#include "qpcsim/damping.hpp"
#include "qpcsim/harness.hpp"
#include "qpcsim/statistics.hpp"
#include "qpcsim/trajectory.hpp"

using namespace qpcsim;
namespace fs = std::filesystem;

namespace {

constexpr double kHalfPi = 1.5707963267948966;
constexpr double kQuarterPi = 0.78539816339744831;

int g_failures = 0;

void report(int idx, bool ok, const std::string& label,
            const std::string& detail) {
  if (!ok) ++g_failures;
  std::printf("%s  criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", idx,
              label.c_str(), detail.c_str());
  std::fflush(stdout);
}

void report_error(int idx, const std::string& label, const char* what) {
  ++g_failures;
  std::printf("FAIL  criterion %d: %s (exception: %s)\n", idx, label.c_str(),
              what);
  std::fflush(stdout);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

BarrierPair barriers_from_probs(double p_l, double p_r) {
  return {std::acos(std::sqrt(p_l)), std::acos(std::sqrt(p_r))};
}

double rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / "qpcsim_acceptance" / leaf;
  fs::remove_all(p);
  return p;
}

// 1. Closed-form window statistics against exhaustive enumeration.
void criterion_1() {
  const std::string label =
      "closed forms match 2^n enumeration over 200 random draws, n <= 12";
  try {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int draw = 0; draw < 200; ++draw) {
      const double rho_ll = u(gen);
      const DensityMatrix2 rho{rho_ll, 1.0 - rho_ll, 0.0};
      const BarrierPair b{u(gen) * kHalfPi, u(gen) * kHalfPi};
      for (std::int64_t n = 1; n <= 12; ++n) {
        const VarianceReport bf = brute_force_variance(rho, b, n);
        const VarianceReport cs = variance_short(rho, b, n);
        const CountDistribution pmf = mixture_pmf(rho, b, n);
        worst = std::max(worst, rel(bf.var_total, cs.var_total));
        worst = std::max(worst, rel(bf.var_total, pmf.variance()));
        worst = std::max(worst, rel(bf.mean_q, cs.mean_q));
      }
    }
    report(1, worst <= 1e-10, label,
           "max relative deviation " + fmt(worst) + ", bound 1e-10");
  } catch (const std::exception& e) {
    report_error(1, label, e.what());
  }
}

// 2. The worked decomposition of the window variance.
void criterion_2() {
  const std::string label =
      "even mixture, p 0.8/0.2, n = 10: variance 10.6 = 1.6 + 9.0";
  try {
    const BarrierPair b = barriers_from_probs(0.8, 0.2);
    const DensityMatrix2 rho{0.5, 0.5, 0.0};
    const VarianceReport cs = variance_short(rho, b, 10);
    const VarianceReport bf = brute_force_variance(rho, b, 10);
    const bool ok = std::abs(cs.var_total - 10.6) <= 1e-9 &&
                    std::abs(cs.var_partition - 1.6) <= 1e-9 &&
                    std::abs(cs.var_measurement - 9.0) <= 1e-9 &&
                    rel(bf.var_total, cs.var_total) <= 1e-10;
    report(2, ok, label,
           "got " + fmt(cs.var_total) + " = " + fmt(cs.var_partition) +
               " + " + fmt(cs.var_measurement) + ", enumeration gap " +
               fmt(rel(bf.var_total, cs.var_total)));
  } catch (const std::exception& e) {
    report_error(2, label, e.what());
  }
}

// 3. Ensemble-averaged coherence decays at flux * (1 - cos dtheta), here
// checked against the exact per-probing factor cos(dtheta).
void criterion_3() {
  const std::string label =
      "coherence decay rate over 1e4 trajectories within 2% of -ln cos(0.1)";
  try {
    SimPlan plan;
    plan.barriers = {0.45, 0.35};
    plan.initial = {0.5, 0.5, 0.5};
    plan.v = {0.0, 0.0, 0.0};
    plan.flux = 1.0;
    plan.n = 300;
    plan.ensemble = 10000;
    plan.master_seed = 90210;
    const double rate = ensemble_coherence_decay(plan);
    const double target = -std::log(std::cos(0.1));
    const double err = rel(rate, target);
    report(3, err <= 0.02, label,
           "rate " + fmt(rate) + " vs " + fmt(target) + ", relative error " +
               fmt(err));
  } catch (const std::exception& e) {
    report_error(3, label, e.what());
  }
}

// 4. The measurement-noise / decoherence-rate ratio: independent of the
// window, drifting only at second order in the gap, and unchanged by the
// long-regime substitution n^2 -> n * n_max.
void criterion_4() {
  const std::string label =
      "noise/decoherence ratio: n-independent, gap drift < 0.5%, regime-stable";
  try {
    const double gaps[] = {0.01, 0.02, 0.05, 0.1};
    const std::int64_t windows[] = {10, 100, 1000};
    double worst_spread = 0.0;
    double worst_regime = 0.0;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const double dth : gaps) {
      const BarrierPair b{kQuarterPi + dth / 2.0, kQuarterPi - dth / 2.0};
      double rmin = 0.0, rmax = 0.0;
      bool have = false;
      for (const std::int64_t n : windows) {
        const RelationReport rep = decoherence_fluctuation_check(b, 1.0, n);
        if (!have) {
          rmin = rmax = rep.ratio_short;
          have = true;
        } else {
          rmin = std::min(rmin, rep.ratio_short);
          rmax = std::max(rmax, rep.ratio_short);
        }
      }
      worst_spread = std::max(worst_spread, (rmax - rmin) / rmax);
      const RelationReport lng =
          decoherence_fluctuation_check(b, 1.0, 1000, 100);
      worst_regime =
          std::max(worst_regime, rel(lng.ratio_long, lng.ratio_short));
      if (first) {
        lo = hi = rmax;
        first = false;
      } else {
        lo = std::min(lo, rmax);
        hi = std::max(hi, rmax);
      }
    }
    const double drift = (hi - lo) / hi;
    const bool ok =
        worst_spread <= 1e-12 && drift <= 5e-3 && worst_regime <= 1e-12;
    report(4, ok, label,
           "n-spread " + fmt(worst_spread) + ", gap drift " + fmt(drift) +
               ", long-regime gap " + fmt(worst_regime));
  } catch (const std::exception& e) {
    report_error(4, label, e.what());
  }
}

// 5. The emitted noise curve: measurement part of the current variance flat
// for windows up to n_max/10 and falling as 1/delta_t past 10 n_max, with
// the Monte Carlo overlay inside 3 sigma. The noise-curve mode performs
// these checks itself; the criterion is that the run passes.
void criterion_5() {
  const std::string label =
      "noise curve flat below n_max/10, slope -1 past 10 n_max, MC within 3 sigma";
  try {
    ExperimentConfig cfg;
    cfg.mode = Mode::kNoiseCurve;
    cfg.barriers = barriers_from_probs(0.8, 0.2);
    cfg.detector.flux = 1.0;
    cfg.detector.charge = 1.0;
    cfg.detector.n_max = 100;
    cfg.has_n_max = true;
    cfg.mc_ensemble = 3000;
    cfg.master_seed = 6021023;
    cfg.quiet = true;
    cfg.out_dir = scratch("noise").string();
    const RunOutcome out = run(cfg);
    report(5, out.exit_code == 0, label,
           out.exit_code == 0 ? "noise-curve run passed its internal checks"
                              : "noise-curve run exited " +
                                    std::to_string(out.exit_code));
  } catch (const std::exception& e) {
    report_error(5, label, e.what());
  }
}

// 6. Near-projective probing of a slowly precessing system: smoothed records
// form geometric runs, and the empirical probings-per-flip agrees across
// seeds.
void criterion_6() {
  const std::string label =
      "telegraph runs geometric at the 1% level, N_max stable across seeds";
  try {
    const std::uint64_t seeds[] = {11, 23, 47};
    const std::int64_t window = 5;
    double nmax_lo = 0.0, nmax_hi = 0.0;
    double worst_p = 1.0;
    bool first = true;
    for (const std::uint64_t seed : seeds) {
      SimPlan plan;
      plan.barriers = barriers_from_probs(0.95, 0.05);
      plan.initial = {1.0, 0.0, 0.0};
      plan.v = {0.05, 0.0, 0.0};
      plan.flux = 1.0;
      plan.n = 5000;
      plan.ensemble = 1000;
      plan.master_seed = seed;
      std::vector<RunLengthSummary> parts;
      parts.reserve(static_cast<std::size_t>(plan.ensemble));
      for (std::int64_t i = 0; i < plan.ensemble; ++i) {
        const TrajectoryRecord rec =
            simulate_trajectory(plan, static_cast<std::uint64_t>(i));
        parts.push_back(run_length_stats(rec, window));
      }
      const RunLengthSummary merged = merge_run_lengths(parts);
      const GeometricFit fit = geometric_tail_fit(merged.histogram, window);
      worst_p = std::min(worst_p, fit.p_value);
      const double nmax = merged.mean_run_length;
      if (first) {
        nmax_lo = nmax_hi = nmax;
        first = false;
      } else {
        nmax_lo = std::min(nmax_lo, nmax);
        nmax_hi = std::max(nmax_hi, nmax);
      }
    }
    const double spread = (nmax_hi - nmax_lo) / nmax_lo;
    const bool ok = worst_p > 0.01 && spread <= 0.10;
    report(6, ok, label,
           "min p-value " + fmt(worst_p) + ", N_max " + fmt(nmax_lo) + ".." +
               fmt(nmax_hi) + ", seed spread " + fmt(spread));
  } catch (const std::exception& e) {
    report_error(6, label, e.what());
  }
}

// 7. Vanishing charge at fixed current: partition part halves per step,
// measurement part unchanged, in both regimes.
void criterion_7() {
  const std::string label =
      "e_k = 2^-k at fixed e*flux: partition halves (1e-9), measurement "
      "constant (1e-12)";
  try {
    const BarrierPair b = barriers_from_probs(0.8, 0.2);
    const ZeroChargeReport sht =
        zero_charge_limit(b, 1.0, 8.0, Regime::kShort, 10);
    const ZeroChargeReport lng =
        zero_charge_limit(b, 1.0, 64.0, Regime::kLong, 10, 8.0);
    const bool ok = sht.partition_halves && sht.measurement_constant &&
                    lng.partition_halves && lng.measurement_constant;
    report(7, ok, label,
           std::string("short halves/constant: ") +
               (sht.partition_halves ? "y" : "n") + "/" +
               (sht.measurement_constant ? "y" : "n") + ", long: " +
               (lng.partition_halves ? "y" : "n") + "/" +
               (lng.measurement_constant ? "y" : "n"));
  } catch (const std::exception& e) {
    report_error(7, label, e.what());
  }
}

// 8. Structural invariants: Kraus completeness, conservation of the
// diagonal under probing, contraction of |P| under damped precession, and
// PMF normalization.
void criterion_8() {
  const std::string label =
      "completeness 1e-12, diagonal conservation 1e-12, |P| non-increasing, "
      "PMFs normalized 1e-12";
  try {
    std::mt19937_64 gen(4096);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    double worst_complete = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const BarrierPair b{u(gen) * kHalfPi, u(gen) * kHalfPi};
      worst_complete = std::max(
          worst_complete, KrausPair::from_barriers(b).completeness_defect());
    }

    double worst_diag = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const double rho_ll = 0.02 + 0.96 * u(gen);
      const double cmax = std::sqrt(rho_ll * (1.0 - rho_ll));
      const double mag = 0.95 * cmax * u(gen);
      const double phase = 6.283185307179586 * u(gen);
      const DensityMatrix2 rho{rho_ll, 1.0 - rho_ll,
                               std::polar(mag, phase)};
      const BarrierPair b{0.1 + 1.3 * u(gen), 0.1 + 1.3 * u(gen)};
      const KrausPair k = KrausPair::from_barriers(b);
      const KrausOutcome t = kraus_update(rho, k, 1);
      const KrausOutcome r = kraus_update(rho, k, 0);
      worst_diag = std::max(
          worst_diag, std::abs(t.probability * t.state.rho_ll +
                               r.probability * r.state.rho_ll - rho.rho_ll));
      worst_diag =
          std::max(worst_diag, std::abs(t.probability + r.probability - 1.0));
    }

    bool contracting = true;
    double worst_growth = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      PolarizationVector p{2.0 * u(gen) - 1.0, 2.0 * u(gen) - 1.0,
                           2.0 * u(gen) - 1.0};
      const double norm = p.norm();
      if (norm > 1.0) {
        p.px /= norm; p.py /= norm; p.pz /= norm;
      }
      EvolutionSpec spec;
      spec.v = {2.0 * u(gen) - 1.0, 2.0 * u(gen) - 1.0, 2.0 * u(gen) - 1.0};
      spec.d = 0.8 * u(gen);
      spec.dt = 0.01;
      spec.t_final = 100.0;  // 1e4 steps
      const std::vector<BlochSample> path = evolve(p, spec);
      for (std::size_t k = 1; k < path.size(); ++k) {
        const double growth = path[k].p.norm() - path[k - 1].p.norm();
        worst_growth = std::max(worst_growth, growth);
        if (growth > 1e-9) contracting = false;
      }
    }

    double worst_norm = 0.0;
    for (int i = 0; i < 300; ++i) {
      const double rho_ll = u(gen);
      const BarrierPair b{u(gen) * kHalfPi, u(gen) * kHalfPi};
      const std::int64_t n = 1 + static_cast<std::int64_t>(u(gen) * 2000.0);
      const CountDistribution d =
          mixture_pmf({rho_ll, 1.0 - rho_ll, 0.0}, b, n);
      double sum = 0.0, c = 0.0;
      for (const double x : d.pmf) {
        const double y = x - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
      }
      worst_norm = std::max(worst_norm, std::abs(sum - 1.0));
    }

    const bool ok = worst_complete <= 1e-12 && worst_diag <= 1e-12 &&
                    contracting && worst_norm <= 1e-12;
    report(8, ok, label,
           "completeness " + fmt(worst_complete) + ", diagonal " +
               fmt(worst_diag) + ", max |P| step growth " +
               fmt(worst_growth) + ", pmf defect " + fmt(worst_norm));
  } catch (const std::exception& e) {
    report_error(8, label, e.what());
  }
}

// 9. Byte-identical artifacts for equal config and seed, across reruns,
// output directories and worker-pool sizes.
void criterion_9() {
  const std::string label =
      "byte-identical outputs across reruns and worker counts";
  try {
    bool ok = true;
    std::string note = "all artifact sets identical";

    const auto compare = [&ok, &note](const fs::path& a, const fs::path& b,
                                      const std::vector<std::string>& names,
                                      const char* what) {
      for (const std::string& name : names) {
        if (slurp(a / name) != slurp(b / name)) {
          ok = false;
          note = std::string(what) + ": " + name + " differs";
        }
      }
    };

    {
      ExperimentConfig cfg;
      cfg.mode = Mode::kSimulate;
      cfg.barriers = {0.46, 1.11};
      cfg.initial = {0.0, 0.0, 0.4};
      cfg.hamiltonian = {0.0, 0.0, 0.0};
      cfg.n = 200;
      cfg.ensemble = 120;
      cfg.master_seed = 777;
      cfg.quiet = true;
      const fs::path a = scratch("sim_a");
      const fs::path b = scratch("sim_b");
      const fs::path c = scratch("sim_c");
      cfg.out_dir = a.string();
      cfg.workers = 1;
      run(cfg);
      cfg.out_dir = b.string();
      run(cfg);
      cfg.out_dir = c.string();
      cfg.workers = 4;
      run(cfg);
      compare(a, b, {"records.csv", "runs.csv", "summary.json"},
              "simulate rerun");
      compare(a, c, {"records.csv", "runs.csv", "summary.json"},
              "simulate 4 workers");
    }
    {
      ExperimentConfig cfg;
      cfg.mode = Mode::kVerifyOracle;
      cfg.master_seed = 31337;
      cfg.oracle_draws = 20;
      cfg.oracle_window_max = 8;
      cfg.quiet = true;
      const fs::path a = scratch("oracle_a");
      const fs::path b = scratch("oracle_b");
      cfg.out_dir = a.string();
      run(cfg);
      cfg.out_dir = b.string();
      cfg.workers = 3;
      run(cfg);
      compare(a, b, {"oracle_grid.csv", "summary.json"}, "verify-oracle");
    }
    {
      ExperimentConfig cfg;
      cfg.mode = Mode::kNoiseCurve;
      cfg.barriers = barriers_from_probs(0.8, 0.2);
      cfg.detector.n_max = 25;
      cfg.has_n_max = true;
      cfg.mc_ensemble = 200;
      cfg.master_seed = 20260815;
      cfg.quiet = true;
      const fs::path a = scratch("curve_a");
      const fs::path b = scratch("curve_b");
      cfg.out_dir = a.string();
      cfg.workers = 1;
      run(cfg);
      cfg.out_dir = b.string();
      cfg.workers = 3;
      run(cfg);
      compare(a, b, {"noise_curve.csv", "summary.json"},
              "noise-curve workers");
    }
    report(9, ok, label, note);
  } catch (const std::exception& e) {
    report_error(9, label, e.what());
  }
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  if (g_failures == 0) {
    std::printf("acceptance: all 9 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) failed\n", g_failures);
  return 1;
}
