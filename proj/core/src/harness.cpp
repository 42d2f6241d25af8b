#include "qpcsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <thread>
#include <utility>

#include "json.hpp"

#include "qpcsim/current.hpp"
#include "qpcsim/damping.hpp"
#include "qpcsim/statistics.hpp"
#include "qpcsim/trajectory.hpp"

namespace qpcsim {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kOracleTol = 1e-10;
constexpr double kNormTol = 1e-12;
constexpr double kRatioWindowTol = 1e-12;
constexpr double kRatioDriftTol = 5e-3;
constexpr double kAnalyticFlatTol = 1e-9;
constexpr double kSlopeTol = 0.05;

// ---------------------------------------------------------------------
// formatting and hashing

std::string fmt_g(double x) {
  if (!std::isfinite(x)) {
    throw std::logic_error("attempted to emit a non-finite value");
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_i(std::int64_t x) { return std::to_string(x); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(s)));
  return buf;
}

double reldiff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Least-squares slope of y against x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double m = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------------
// output files

class CsvFile {
 public:
  CsvFile(const fs::path& path, const std::string& comment)
      : out_(path, std::ios::binary) {
    if (!out_) {
      throw std::runtime_error("cannot open output file " + path.string());
    }
    out_ << "# " << comment << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open output file " + path.string());
  }
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------
// worker pool: static chunks, per-index output slots, ordered reduction
// by the caller. Output depends only on the index -> stream mapping, so
// any worker count yields identical artifacts.

void parallel_for(std::int64_t m, int workers,
                  const std::function<void(std::int64_t)>& body) {
  const std::int64_t w =
      std::min<std::int64_t>(std::max(workers, 1), std::max<std::int64_t>(m, 1));
  if (w <= 1) {
    for (std::int64_t i = 0; i < m; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  pool.reserve(static_cast<std::size_t>(w));
  for (std::int64_t k = 0; k < w; ++k) {
    pool.emplace_back([&, k] {
      try {
        const std::int64_t lo = k * m / w;
        const std::int64_t hi = (k + 1) * m / w;
        for (std::int64_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------
// config parsing

Mode parse_mode_string(const std::string& s) {
  if (s == "simulate") return Mode::kSimulate;
  if (s == "verify-oracle") return Mode::kVerifyOracle;
  if (s == "verify-relation") return Mode::kVerifyRelation;
  if (s == "noise-curve") return Mode::kNoiseCurve;
  if (s == "sweep") return Mode::kSweep;
  throw ConfigError("unknown mode '" + s +
                    "' (valid: simulate, verify-oracle, verify-relation, "
                    "noise-curve, sweep)");
}

const json* find_node(const json& root, const std::string& path) {
  const json* cur = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &cur->at(key);
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
}

double json_to_double(const json& v, const std::string& label) {
  if (!v.is_number()) {
    throw ConfigError("config field '" + label + "' must be a number");
  }
  return v.get<double>();
}

std::int64_t json_to_int(const json& v, const std::string& label) {
  if (v.is_number_unsigned()) {
    const std::uint64_t u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(
                std::numeric_limits<std::int64_t>::max())) {
      throw ConfigError("config field '" + label + "' is too large");
    }
    return static_cast<std::int64_t>(u);
  }
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::nearbyint(d) == d && std::abs(d) <= 9.0e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  throw ConfigError("config field '" + label + "' must be an integer");
}

std::uint64_t json_to_uint(const json& v, const std::string& label) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const std::int64_t i = v.get<std::int64_t>();
    if (i < 0) {
      throw ConfigError("config field '" + label + "' must be nonnegative");
    }
    return static_cast<std::uint64_t>(i);
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && std::nearbyint(d) == d && d <= 1.8e19) {
      return static_cast<std::uint64_t>(d);
    }
  }
  throw ConfigError("config field '" + label +
                    "' must be a nonnegative integer");
}

const json& need_node(const json& root, const std::string& path) {
  const json* node = find_node(root, path);
  if (!node) throw ConfigError("missing config field '" + path + "'");
  return *node;
}

double need_double(const json& root, const std::string& path) {
  return json_to_double(need_node(root, path), path);
}

std::int64_t need_int(const json& root, const std::string& path) {
  return json_to_int(need_node(root, path), path);
}

std::uint64_t need_uint(const json& root, const std::string& path) {
  return json_to_uint(need_node(root, path), path);
}

double get_double(const json& root, const std::string& path, double fallback) {
  const json* node = find_node(root, path);
  return node ? json_to_double(*node, path) : fallback;
}

std::int64_t get_int(const json& root, const std::string& path,
                     std::int64_t fallback) {
  const json* node = find_node(root, path);
  return node ? json_to_int(*node, path) : fallback;
}

std::string get_string(const json& root, const std::string& path,
                       const std::string& fallback) {
  const json* node = find_node(root, path);
  if (!node) return fallback;
  if (!node->is_string()) {
    throw ConfigError("config field '" + path + "' must be a string");
  }
  return node->get<std::string>();
}

bool get_bool(const json& root, const std::string& path, bool fallback) {
  const json* node = find_node(root, path);
  if (!node) return fallback;
  if (!node->is_boolean()) {
    throw ConfigError("config field '" + path + "' must be a boolean");
  }
  return node->get<bool>();
}

ExperimentConfig parse_config_impl(const std::string& text,
                                   const std::string* mode_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  ExperimentConfig c;
  const json* mode_node = find_node(j, "mode");
  if (mode_override) {
    c.mode = parse_mode_string(*mode_override);
    if (mode_node) {
      if (!mode_node->is_string()) {
        throw ConfigError("config field 'mode' must be a string");
      }
      const Mode file_mode = parse_mode_string(mode_node->get<std::string>());
      if (file_mode != c.mode) {
        throw ConfigError(std::string("config mode '") + mode_name(file_mode) +
                          "' conflicts with subcommand '" + *mode_override +
                          "'");
      }
    }
  } else {
    if (!mode_node) throw ConfigError("missing config field 'mode'");
    if (!mode_node->is_string()) {
      throw ConfigError("config field 'mode' must be a string");
    }
    c.mode = parse_mode_string(mode_node->get<std::string>());
  }

  c.workers = static_cast<int>(get_int(j, "workers", 1));
  c.out_dir = get_string(j, "out_dir", ".");
  c.quiet = get_bool(j, "quiet", false);
  c.smoothing_window = get_int(j, "smoothing_window", 1);

  c.detector.flux = get_double(j, "detector.flux", 1.0);
  c.detector.charge = get_double(j, "detector.charge", 1.0);
  c.detector.voltage = get_double(j, "detector.voltage", 0.0);
  if (const json* node = find_node(j, "detector.n_max")) {
    c.detector.n_max = json_to_int(*node, "detector.n_max");
    c.has_n_max = true;
  }

  const auto read_barriers = [&j, &c] {
    c.barriers.theta_l = need_double(j, "barriers.theta_l");
    c.barriers.theta_r = need_double(j, "barriers.theta_r");
  };

  switch (c.mode) {
    case Mode::kSimulate:
      read_barriers();
      c.initial.px = need_double(j, "initial_state.px");
      c.initial.py = need_double(j, "initial_state.py");
      c.initial.pz = need_double(j, "initial_state.pz");
      c.hamiltonian.vx = need_double(j, "hamiltonian.vx");
      c.hamiltonian.vy = need_double(j, "hamiltonian.vy");
      c.hamiltonian.vz = need_double(j, "hamiltonian.vz");
      c.n = need_int(j, "n");
      c.ensemble = need_int(j, "ensemble");
      c.master_seed = need_uint(j, "master_seed");
      break;
    case Mode::kVerifyOracle:
      c.master_seed = need_uint(j, "master_seed");
      c.oracle_draws = get_int(j, "oracle.draws", c.oracle_draws);
      c.oracle_window_max = get_int(j, "oracle.window_max", c.oracle_window_max);
      break;
    case Mode::kVerifyRelation: {
      if (const json* node = find_node(j, "relation.delta_thetas")) {
        if (!node->is_array() || node->empty()) {
          throw ConfigError(
              "config field 'relation.delta_thetas' must be a non-empty "
              "array of numbers");
        }
        c.relation_delta_thetas.clear();
        for (const auto& el : *node) {
          c.relation_delta_thetas.push_back(
              json_to_double(el, "relation.delta_thetas[]"));
        }
      }
      if (const json* node = find_node(j, "relation.windows")) {
        if (!node->is_array() || node->empty()) {
          throw ConfigError(
              "config field 'relation.windows' must be a non-empty array "
              "of integers");
        }
        c.relation_windows.clear();
        for (const auto& el : *node) {
          c.relation_windows.push_back(json_to_int(el, "relation.windows[]"));
        }
      }
      c.relation_theta_mean =
          get_double(j, "relation.theta_mean", c.relation_theta_mean);
      break;
    }
    case Mode::kNoiseCurve:
      read_barriers();
      if (!c.has_n_max) {
        throw ConfigError("missing config field 'detector.n_max'");
      }
      c.master_seed = need_uint(j, "master_seed");
      c.mc_ensemble = get_int(j, "mc_ensemble", c.mc_ensemble);
      break;
    case Mode::kSweep: {
      read_barriers();
      c.n = need_int(j, "n");
      const json& axes = need_node(j, "sweep.axes");
      if (!axes.is_array() || axes.empty()) {
        throw ConfigError(
            "config field 'sweep.axes' must be a non-empty array");
      }
      for (std::size_t i = 0; i < axes.size(); ++i) {
        const std::string label = "sweep.axes[" + std::to_string(i) + "]";
        const json& el = axes.at(i);
        if (!el.is_object()) {
          throw ConfigError("config field '" + label + "' must be an object");
        }
        SweepAxis ax;
        if (!el.contains("name") || !el.at("name").is_string()) {
          throw ConfigError("config field '" + label +
                            ".name' must be a string");
        }
        ax.name = el.at("name").get<std::string>();
        const auto member = [&el, &label](const char* key) -> double {
          if (!el.contains(key)) {
            throw ConfigError("missing config field '" + label + "." + key +
                              "'");
          }
          return json_to_double(el.at(key), label + "." + key);
        };
        ax.from = member("from");
        ax.to = member("to");
        ax.step = member("step");
        c.axes.push_back(std::move(ax));
      }
      break;
    }
  }

  validate_config(c);
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Canonical serialization of the semantic fields; bookkeeping knobs that
// cannot change the numbers (workers, out_dir, quiet) stay out so reruns
// are comparable byte for byte.
json canonical_json(const ExperimentConfig& c) {
  json j;
  j["mode"] = mode_name(c.mode);
  j["detector"] = {{"flux", c.detector.flux},
                   {"charge", c.detector.charge},
                   {"voltage", c.detector.voltage}};
  if (c.has_n_max) j["detector"]["n_max"] = c.detector.n_max;
  switch (c.mode) {
    case Mode::kSimulate:
      j["barriers"] = {{"theta_l", c.barriers.theta_l},
                       {"theta_r", c.barriers.theta_r}};
      j["initial_state"] = {
          {"px", c.initial.px}, {"py", c.initial.py}, {"pz", c.initial.pz}};
      j["hamiltonian"] = {{"vx", c.hamiltonian.vx},
                          {"vy", c.hamiltonian.vy},
                          {"vz", c.hamiltonian.vz}};
      j["n"] = c.n;
      j["ensemble"] = c.ensemble;
      j["master_seed"] = c.master_seed;
      j["smoothing_window"] = c.smoothing_window;
      break;
    case Mode::kVerifyOracle:
      j["master_seed"] = c.master_seed;
      j["oracle"] = {{"draws", c.oracle_draws},
                     {"window_max", c.oracle_window_max}};
      break;
    case Mode::kVerifyRelation:
      j["relation"] = {{"delta_thetas", c.relation_delta_thetas},
                       {"windows", c.relation_windows},
                       {"theta_mean", c.relation_theta_mean}};
      break;
    case Mode::kNoiseCurve:
      j["barriers"] = {{"theta_l", c.barriers.theta_l},
                       {"theta_r", c.barriers.theta_r}};
      j["master_seed"] = c.master_seed;
      j["mc_ensemble"] = c.mc_ensemble;
      break;
    case Mode::kSweep: {
      j["barriers"] = {{"theta_l", c.barriers.theta_l},
                       {"theta_r", c.barriers.theta_r}};
      j["n"] = c.n;
      json axes = json::array();
      for (const auto& ax : c.axes) {
        axes.push_back({{"name", ax.name},
                        {"from", ax.from},
                        {"to", ax.to},
                        {"step", ax.step}});
      }
      j["sweep"] = {{"axes", std::move(axes)}};
      break;
    }
  }
  return j;
}

// ---------------------------------------------------------------------
// mode runners; each fills its section of the summary and reports pass

struct ModeContext {
  const ExperimentConfig& cfg;
  fs::path dir;
  std::string comment;
  json& summary;
  std::vector<std::string>& file_names;
};

bool run_verify_oracle(const ModeContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  CsvFile csv(ctx.dir / "oracle_grid.csv", ctx.comment);
  ctx.file_names.push_back("oracle_grid.csv");
  csv.row({"draw", "n", "rho_ll", "theta_l", "theta_r", "bf_var_total",
           "var_total", "pmf_variance", "rel_err_closed", "rel_err_pmf",
           "pmf_norm_defect"});

  const double half_pi = std::numbers::pi / 2.0;
  RngStream rng(cfg.master_seed, 0);
  double max_rel = 0.0;
  double max_norm = 0.0;
  for (std::int64_t d = 0; d < cfg.oracle_draws; ++d) {
    const double rho_ll = rng.uniform();
    const DensityMatrix2 rho{rho_ll, 1.0 - rho_ll, {0.0, 0.0}};
    const BarrierPair b{rng.uniform() * half_pi, rng.uniform() * half_pi};
    for (std::int64_t n = 1; n <= cfg.oracle_window_max; ++n) {
      const VarianceReport bf = brute_force_variance(rho, b, n);
      const VarianceReport cs = variance_short(rho, b, n);
      const CountDistribution dist = mixture_pmf(rho, b, n);

      double sum = 0.0, comp = 0.0;
      for (double x : dist.pmf) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
      }
      const double norm_defect = std::abs(sum - 1.0);
      const double rel_closed = reldiff(cs.var_total, bf.var_total);
      const double rel_pmf = reldiff(dist.variance(), bf.var_total);
      max_rel = std::max({max_rel, rel_closed, rel_pmf});
      max_norm = std::max(max_norm, norm_defect);
      csv.row({fmt_i(d), fmt_i(n), fmt_g(rho_ll), fmt_g(b.theta_l),
               fmt_g(b.theta_r), fmt_g(bf.var_total), fmt_g(cs.var_total),
               fmt_g(dist.variance()), fmt_g(rel_closed), fmt_g(rel_pmf),
               fmt_g(norm_defect)});
    }
  }

  ctx.summary["oracle"] = {{"draws", cfg.oracle_draws},
                           {"window_max", cfg.oracle_window_max},
                           {"max_rel_err", max_rel},
                           {"max_pmf_norm_defect", max_norm},
                           {"tolerance", kOracleTol},
                           {"norm_tolerance", kNormTol}};
  return max_rel <= kOracleTol && max_norm <= kNormTol;
}

bool run_verify_relation(const ModeContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  CsvFile csv(ctx.dir / "relation.csv", ctx.comment);
  ctx.file_names.push_back("relation.csv");
  csv.row({"delta_theta", "n", "n_max", "v_m_exact", "v_m_leading", "v_m_long",
           "d_rate", "ratio_short", "ratio_long", "nominal_vm_short",
           "nominal_vm_long", "residual", "in_domain", "degenerate"});

  const std::optional<std::int64_t> n_max =
      cfg.has_n_max ? std::optional<std::int64_t>(cfg.detector.n_max)
                    : std::nullopt;
  double max_window_spread = 0.0;
  double max_regime_gap = 0.0;
  std::vector<double> ratio_by_dth;
  for (const double dth : cfg.relation_delta_thetas) {
    const BarrierPair b{cfg.relation_theta_mean + dth / 2.0,
                        cfg.relation_theta_mean - dth / 2.0};
    bool have_first = false;
    double first_ratio = 0.0;
    for (const std::int64_t n : cfg.relation_windows) {
      const RelationReport rep =
          decoherence_fluctuation_check(b, cfg.detector.flux, n, n_max);
      csv.row({fmt_g(rep.delta_theta), fmt_i(rep.n), fmt_i(rep.n_max),
               fmt_g(rep.v_m_exact), fmt_g(rep.v_m_leading),
               fmt_g(rep.v_m_long), fmt_g(rep.d_rate), fmt_g(rep.ratio_short),
               fmt_g(rep.ratio_long), fmt_g(rep.nominal_vm_short),
               fmt_g(rep.nominal_vm_long), fmt_g(rep.residual),
               rep.in_domain ? "1" : "0", rep.degenerate ? "1" : "0"});
      if (rep.degenerate) continue;
      if (!have_first) {
        have_first = true;
        first_ratio = rep.ratio_short;
        ratio_by_dth.push_back(first_ratio);
      } else {
        max_window_spread =
            std::max(max_window_spread,
                     std::abs(rep.ratio_short - first_ratio) /
                         std::abs(first_ratio));
      }
      if (n_max) {
        max_regime_gap =
            std::max(max_regime_gap,
                     std::abs(rep.ratio_long - rep.ratio_short) /
                         rep.ratio_short);
      }
    }
  }
  double drift = 0.0;
  if (ratio_by_dth.size() >= 2) {
    const auto [mn, mx] =
        std::minmax_element(ratio_by_dth.begin(), ratio_by_dth.end());
    drift = (*mx - *mn) / *mx;
  }

  ctx.summary["relation"] = {{"theta_mean", cfg.relation_theta_mean},
                             {"flux", cfg.detector.flux},
                             {"max_window_spread", max_window_spread},
                             {"delta_theta_drift", drift},
                             {"max_regime_gap", max_regime_gap},
                             {"window_tolerance", kRatioWindowTol},
                             {"drift_tolerance", kRatioDriftTol}};
  return max_window_spread <= kRatioWindowTol && drift <= kRatioDriftTol &&
         max_regime_gap <= kRatioWindowTol;
}

bool run_noise_curve(const ModeContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const BarrierPair b = cfg.barriers;
  const std::int64_t nmax = cfg.detector.n_max;
  const double flux = cfg.detector.flux;
  const double charge = cfg.detector.charge;
  const std::int64_t m = cfg.mc_ensemble;
  const double pl = b.p_l();
  const double pr = b.p_r();

  std::vector<std::int64_t> grid;
  for (const double f :
       {0.01, 0.02, 0.03, 0.05, 0.07, 0.10, 0.25, 0.5, 1.0}) {
    const auto v = std::llround(f * static_cast<double>(nmax));
    grid.push_back(std::max<std::int64_t>(1, v));
  }
  for (const std::int64_t f : {10, 20, 50, 100, 200, 500, 1000}) {
    grid.push_back(f * nmax);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const std::size_t points = grid.size();
  const std::int64_t max_n = grid.back();

  // One trajectory per stream; each grid point reads the prefix count, so
  // samples are independent across trajectories at every window length.
  // The observed system is redrawn from the relaxed state every n_max
  // probings, which is exactly the block model behind the long-window
  // formulas.
  std::vector<double> counts(static_cast<std::size_t>(m) * points);
  parallel_for(m, cfg.workers, [&](std::int64_t t) {
    RngStream rng(cfg.master_seed, static_cast<std::uint64_t>(t));
    std::int64_t q = 0;
    std::size_t g = 0;
    double p_cur = 0.0;
    for (std::int64_t s = 0; s < max_n; ++s) {
      if (s % nmax == 0) p_cur = rng.uniform() < 0.5 ? pl : pr;
      if (rng.uniform() < p_cur) ++q;
      if (g < points && s + 1 == grid[g]) {
        counts[static_cast<std::size_t>(t) * points + g] =
            static_cast<double>(q);
        ++g;
      }
    }
  });

  CsvFile csv(ctx.dir / "noise_curve.csv", ctx.comment);
  ctx.file_names.push_back("noise_curve.csv");
  csv.row({"delta_t", "n", "var_partition", "var_measurement", "var_total",
           "nominal_variance", "regime", "mc_var_total", "mc_var_measurement",
           "mc_std_error"});

  const double partition_rate = (pl * (1.0 - pl) + pr * (1.0 - pr)) / 2.0;
  std::vector<double> short_meas;
  std::vector<double> col(static_cast<std::size_t>(m));
  std::vector<double> lx, ly;
  bool sigma_ok = true;
  double max_sigma_dev = 0.0;
  double emp_nmax = 0.0;
  for (std::size_t g = 0; g < points; ++g) {
    const std::int64_t n = grid[g];
    for (std::int64_t t = 0; t < m; ++t) {
      col[static_cast<std::size_t>(t)] =
          counts[static_cast<std::size_t>(t) * points + g];
    }
    const JackknifeEstimate jk = jackknife_variance(col);
    const double partition_count = static_cast<double>(n) * partition_rate;
    const double scale = charge * flux / static_cast<double>(n);
    const double s2 = scale * scale;
    const double mc_total = s2 * jk.value;
    const double mc_meas = s2 * (jk.value - partition_count);
    const double mc_se = s2 * jk.std_error;

    const CurrentEstimate est =
        n <= nmax ? current_variance_short(b, n, flux, charge)
                  : current_variance_long(b, n, nmax, flux, charge);
    csv.row({fmt_g(est.delta_t), fmt_i(n), fmt_g(est.var_partition_part),
             fmt_g(est.var_measurement_part), fmt_g(est.j_variance),
             fmt_g(est.nominal_variance),
             est.regime == Regime::kShort ? "short" : "long",
             fmt_g(mc_total), fmt_g(mc_meas), fmt_g(mc_se)});

    if (10 * n <= nmax) {
      short_meas.push_back(est.var_measurement_part);
      const double dev = std::abs(mc_meas - est.var_measurement_part);
      if (dev > 3.0 * mc_se) sigma_ok = false;
      if (mc_se > 0.0) max_sigma_dev = std::max(max_sigma_dev, dev / mc_se);
    }
    if (n >= 10 * nmax && mc_meas > 0.0) {
      lx.push_back(std::log(est.delta_t));
      ly.push_back(std::log(mc_meas));
    }
    if (g + 1 == points && pl != pr) {
      emp_nmax = (jk.value - partition_count) * 4.0 /
                 (static_cast<double>(n) * (pl - pr) * (pl - pr));
    }
  }

  double flat_defect = 0.0;
  for (const double v : short_meas) {
    flat_defect = std::max(flat_defect, reldiff(v, short_meas.front()));
  }
  const bool flat_ok = flat_defect <= kAnalyticFlatTol;

  const bool slope_checked = pl != pr && lx.size() >= 2;
  double slope = 0.0;
  if (slope_checked) slope = ls_slope(lx, ly);
  const bool slope_ok = !slope_checked || std::abs(slope + 1.0) <= kSlopeTol;

  ctx.summary["noise_curve"] = {{"n_max", nmax},
                                {"mc_ensemble", m},
                                {"grid_points", points},
                                {"analytic_flat_defect", flat_defect},
                                {"flat_tolerance", kAnalyticFlatTol},
                                {"max_short_dev_sigma", max_sigma_dev},
                                {"slope_checked", slope_checked},
                                {"slope", slope},
                                {"slope_tolerance", kSlopeTol},
                                {"empirical_n_max", emp_nmax}};
  return flat_ok && sigma_ok && slope_ok;
}

bool run_simulate(const ModeContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  SimPlan plan;
  plan.n = cfg.n;
  plan.ensemble = cfg.ensemble;
  plan.barriers = cfg.barriers;
  plan.initial = polarization_to_density(cfg.initial);
  plan.v = cfg.hamiltonian;
  plan.flux = cfg.detector.flux;
  plan.master_seed = cfg.master_seed;

  const std::int64_t m = cfg.ensemble;
  struct Slot {
    std::int64_t q = 0;
    RunLengthSummary runs;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(m));
  parallel_for(m, cfg.workers, [&](std::int64_t t) {
    const TrajectoryRecord rec =
        simulate_trajectory(plan, static_cast<std::uint64_t>(t));
    auto& slot = slots[static_cast<std::size_t>(t)];
    slot.q = rec.transmitted_count();
    slot.runs = run_length_stats(rec, cfg.smoothing_window);
  });

  CsvFile records(ctx.dir / "records.csv", ctx.comment);
  ctx.file_names.push_back("records.csv");
  records.row({"stream", "q", "n", "j", "run_count", "mean_run_length"});
  for (std::int64_t t = 0; t < m; ++t) {
    const auto& slot = slots[static_cast<std::size_t>(t)];
    records.row({fmt_i(t), fmt_i(slot.q), fmt_i(cfg.n),
                 fmt_g(current_from_counts(slot.q, cfg.n, plan.flux,
                                           cfg.detector.charge)),
                 fmt_i(slot.runs.run_count), fmt_g(slot.runs.mean_run_length)});
  }

  std::vector<RunLengthSummary> parts;
  parts.reserve(static_cast<std::size_t>(m));
  for (auto& slot : slots) parts.push_back(std::move(slot.runs));
  const RunLengthSummary merged = merge_run_lengths(parts);

  CsvFile runs(ctx.dir / "runs.csv", ctx.comment);
  ctx.file_names.push_back("runs.csv");
  runs.row({"length", "count"});
  for (const auto& [length, count] : merged.histogram) {
    runs.row({fmt_i(length), fmt_i(count)});
  }

  std::vector<double> qs(static_cast<std::size_t>(m));
  double sum = 0.0, comp = 0.0;
  for (std::int64_t t = 0; t < m; ++t) {
    qs[static_cast<std::size_t>(t)] =
        static_cast<double>(slots[static_cast<std::size_t>(t)].q);
    const double y = qs[static_cast<std::size_t>(t)] - comp;
    const double tmp = sum + y;
    comp = (tmp - sum) - y;
    sum = tmp;
  }
  const double mean_q = sum / static_cast<double>(m);
  const JackknifeEstimate jk = jackknife_variance(qs);

  const double nn = static_cast<double>(cfg.n);
  const double var_partition_frozen =
      plan.initial.rho_ll * nn * cfg.barriers.p_l() * cfg.barriers.q_l() +
      plan.initial.rho_rr * nn * cfg.barriers.p_r() * cfg.barriers.q_r();

  json sim = {{"n", cfg.n},
              {"ensemble", m},
              {"mean_q", mean_q},
              {"var_q", jk.value},
              {"var_q_std_error", jk.std_error},
              {"var_partition_frozen", var_partition_frozen},
              {"var_measurement_excess", jk.value - var_partition_frozen},
              {"smoothing_window", cfg.smoothing_window},
              {"run_count", merged.run_count},
              {"empirical_n_max", merged.mean_run_length}};
  if (merged.run_count >= 50) {
    try {
      const GeometricFit fit = geometric_tail_fit(
          merged.histogram, std::max<std::int64_t>(cfg.smoothing_window, 1));
      sim["geometric"] = {{"fitted", true},
                          {"p_hat", fit.p_hat},
                          {"mean_excess", fit.mean_excess},
                          {"chi_square", fit.chi_square},
                          {"dof", fit.dof},
                          {"p_value", fit.p_value},
                          {"samples", fit.samples}};
    } catch (const std::domain_error&) {
      sim["geometric"] = {{"fitted", false}};
    }
  } else {
    sim["geometric"] = {{"fitted", false}};
  }
  ctx.summary["simulate"] = std::move(sim);
  return true;
}

bool run_sweep(const ModeContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  std::vector<std::vector<double>> values(cfg.axes.size());
  for (std::size_t a = 0; a < cfg.axes.size(); ++a) {
    const SweepAxis& ax = cfg.axes[a];
    for (std::int64_t k = 0;; ++k) {
      const double v = ax.from + static_cast<double>(k) * ax.step;
      if (v > ax.to + 1e-9 * ax.step) break;
      values[a].push_back(v);
    }
  }

  CsvFile csv(ctx.dir / "sweep.csv", ctx.comment);
  ctx.file_names.push_back("sweep.csv");
  std::vector<std::string> header;
  for (const auto& ax : cfg.axes) header.push_back(ax.name);
  for (const char* col :
       {"d_rate", "var_partition", "var_measurement", "var_total",
        "j_variance", "nominal_variance", "ratio_short"}) {
    header.push_back(col);
  }
  csv.row(header);

  std::vector<std::size_t> idx(cfg.axes.size(), 0);
  std::int64_t rows = 0;
  const DensityMatrix2 relaxed{};
  while (true) {
    BarrierPair b = cfg.barriers;
    double flux = cfg.detector.flux;
    double charge = cfg.detector.charge;
    std::int64_t n = cfg.n;
    std::vector<std::string> cells;
    for (std::size_t a = 0; a < cfg.axes.size(); ++a) {
      const double v = values[a][idx[a]];
      const std::string& name = cfg.axes[a].name;
      if (name == "theta_l") b.theta_l = v;
      else if (name == "theta_r") b.theta_r = v;
      else if (name == "flux") flux = v;
      else if (name == "charge") charge = v;
      else n = std::llround(v);
      cells.push_back(fmt_g(v));
    }
    const double d = damping_rate(b, flux);
    const VarianceReport vs = variance_short(relaxed, b, n);
    const CurrentEstimate ce = current_variance_short(b, n, flux, charge);
    const RelationReport rep = decoherence_fluctuation_check(b, flux, n);
    cells.push_back(fmt_g(d));
    cells.push_back(fmt_g(vs.var_partition));
    cells.push_back(fmt_g(vs.var_measurement));
    cells.push_back(fmt_g(vs.var_total));
    cells.push_back(fmt_g(ce.j_variance));
    cells.push_back(fmt_g(ce.nominal_variance));
    cells.push_back(fmt_g(rep.ratio_short));
    csv.row(cells);
    ++rows;

    std::size_t a = 0;
    for (; a < idx.size(); ++a) {
      if (++idx[a] < values[a].size()) break;
      idx[a] = 0;
    }
    if (a == idx.size()) break;
  }

  json axes = json::array();
  for (std::size_t a = 0; a < cfg.axes.size(); ++a) {
    axes.push_back({{"name", cfg.axes[a].name},
                    {"points", values[a].size()}});
  }
  ctx.summary["sweep"] = {{"axes", std::move(axes)}, {"rows", rows}};
  return true;
}

}  // namespace

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::kSimulate: return "simulate";
    case Mode::kVerifyOracle: return "verify-oracle";
    case Mode::kVerifyRelation: return "verify-relation";
    case Mode::kNoiseCurve: return "noise-curve";
    case Mode::kSweep: return "sweep";
  }
  return "unknown";
}

ExperimentConfig parse_config(const std::string& json_text) {
  return parse_config_impl(json_text, nullptr);
}

ExperimentConfig parse_config(const std::string& json_text,
                              const std::string& mode_override) {
  return parse_config_impl(json_text, &mode_override);
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config_impl(read_file(path), nullptr);
}

ExperimentConfig load_config(const std::string& path,
                             const std::string& mode_override) {
  return parse_config_impl(read_file(path), &mode_override);
}

void validate_config(const ExperimentConfig& c) {
  if (c.workers < 1 || c.workers > 64) {
    throw ConfigError("config field 'workers' must lie in 1..64");
  }
  if (c.smoothing_window < 1) {
    throw ConfigError("config field 'smoothing_window' must be at least 1");
  }
  if (!(c.detector.flux > 0.0) || !std::isfinite(c.detector.flux)) {
    throw ConfigError("config field 'detector.flux' must be positive");
  }
  if (!(c.detector.charge >= 0.0) || !std::isfinite(c.detector.charge)) {
    throw ConfigError("config field 'detector.charge' must be nonnegative");
  }
  if (c.has_n_max && c.detector.n_max < 1) {
    throw ConfigError("config field 'detector.n_max' must be at least 1");
  }

  const auto check_barriers = [&c] {
    if (!c.barriers.is_valid()) {
      throw ConfigError(
          "config fields 'barriers.theta_l'/'theta_r' must lie in "
          "[0, pi/2]");
    }
  };

  switch (c.mode) {
    case Mode::kSimulate:
      check_barriers();
      if (!c.initial.is_physical()) {
        throw ConfigError("config field 'initial_state' must lie inside "
                          "the unit ball");
      }
      if (!c.hamiltonian.is_finite()) {
        throw ConfigError("config field 'hamiltonian' must be finite");
      }
      if (c.n < 1) throw ConfigError("config field 'n' must be at least 1");
      if (c.ensemble < 3) {
        throw ConfigError("config field 'ensemble' must be at least 3 "
                          "(jackknife error bars)");
      }
      break;
    case Mode::kVerifyOracle:
      if (c.oracle_draws < 1) {
        throw ConfigError("config field 'oracle.draws' must be at least 1");
      }
      if (c.oracle_window_max < 1 || c.oracle_window_max > kBruteForceMaxN) {
        throw ConfigError("config field 'oracle.window_max' must lie in 1.." +
                          std::to_string(kBruteForceMaxN));
      }
      break;
    case Mode::kVerifyRelation: {
      if (c.relation_delta_thetas.empty()) {
        throw ConfigError("config field 'relation.delta_thetas' must be "
                          "non-empty");
      }
      if (c.relation_windows.empty()) {
        throw ConfigError("config field 'relation.windows' must be non-empty");
      }
      for (const std::int64_t n : c.relation_windows) {
        if (n < 1) {
          throw ConfigError("config field 'relation.windows' entries must "
                            "be at least 1");
        }
      }
      if (!std::isfinite(c.relation_theta_mean)) {
        throw ConfigError("config field 'relation.theta_mean' must be finite");
      }
      for (std::size_t i = 0; i < c.relation_delta_thetas.size(); ++i) {
        const double dth = c.relation_delta_thetas[i];
        const BarrierPair b{c.relation_theta_mean + dth / 2.0,
                            c.relation_theta_mean - dth / 2.0};
        if (!b.is_valid()) {
          throw ConfigError("config field 'relation.delta_thetas[" +
                            std::to_string(i) +
                            "]' puts a barrier angle outside [0, pi/2]");
        }
      }
      break;
    }
    case Mode::kNoiseCurve:
      check_barriers();
      if (!c.has_n_max) {
        throw ConfigError("missing config field 'detector.n_max'");
      }
      if (c.mc_ensemble < 3) {
        throw ConfigError("config field 'mc_ensemble' must be at least 3 "
                          "(jackknife error bars)");
      }
      if (static_cast<double>(c.mc_ensemble) * 1000.0 *
              static_cast<double>(c.detector.n_max) >
          2.0e9) {
        throw ConfigError(
            "noise-curve grid too large: mc_ensemble * 1000 * detector.n_max "
            "must stay below 2e9");
      }
      break;
    case Mode::kSweep: {
      check_barriers();
      if (c.n < 1) throw ConfigError("config field 'n' must be at least 1");
      if (c.axes.empty()) {
        throw ConfigError("config field 'sweep.axes' must be non-empty");
      }
      double total = 1.0;
      for (std::size_t i = 0; i < c.axes.size(); ++i) {
        const SweepAxis& ax = c.axes[i];
        const std::string label = "sweep.axes[" + std::to_string(i) + "]";
        const bool known = ax.name == "theta_l" || ax.name == "theta_r" ||
                           ax.name == "flux" || ax.name == "charge" ||
                           ax.name == "n";
        if (!known) {
          throw ConfigError("config field '" + label + ".name' references "
                            "unknown parameter '" + ax.name +
                            "' (valid: theta_l, theta_r, flux, charge, n)");
        }
        if (!(ax.step > 0.0) || !std::isfinite(ax.step) ||
            !std::isfinite(ax.from) || !std::isfinite(ax.to) ||
            ax.from > ax.to) {
          throw ConfigError("config field '" + label +
                            "' needs finite from <= to and step > 0");
        }
        const double half_pi = std::numbers::pi / 2.0;
        if ((ax.name == "theta_l" || ax.name == "theta_r") &&
            (ax.from < 0.0 || ax.to > half_pi)) {
          throw ConfigError("config field '" + label +
                            "' leaves [0, pi/2] for '" + ax.name + "'");
        }
        if (ax.name == "flux" && !(ax.from > 0.0)) {
          throw ConfigError("config field '" + label +
                            "' needs positive flux values");
        }
        if (ax.name == "charge" && ax.from < 0.0) {
          throw ConfigError("config field '" + label +
                            "' needs nonnegative charge values");
        }
        if (ax.name == "n" && ax.from < 1.0) {
          throw ConfigError("config field '" + label +
                            "' needs n values of at least 1");
        }
        total *= std::floor((ax.to - ax.from) / ax.step) + 1.0;
      }
      if (total > 200000.0) {
        throw ConfigError("sweep grid too large: more than 200000 points");
      }
      break;
    }
  }
}

RunOutcome run(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  const std::string hash = hash_hex(canonical_json(cfg).dump());
  const std::string comment =
      "config_hash=" + hash + " seed=" + std::to_string(cfg.master_seed);

  json summary;
  summary["mode"] = mode_name(cfg.mode);
  summary["config_hash"] = hash;
  summary["master_seed"] = cfg.master_seed;

  RunOutcome out;
  std::vector<std::string> file_names;
  const ModeContext ctx{cfg, dir, comment, summary, file_names};
  switch (cfg.mode) {
    case Mode::kSimulate: out.pass = run_simulate(ctx); break;
    case Mode::kVerifyOracle: out.pass = run_verify_oracle(ctx); break;
    case Mode::kVerifyRelation: out.pass = run_verify_relation(ctx); break;
    case Mode::kNoiseCurve: out.pass = run_noise_curve(ctx); break;
    case Mode::kSweep: out.pass = run_sweep(ctx); break;
  }

  summary["pass"] = out.pass;
  summary["files"] = file_names;
  write_json_file(dir / "summary.json", summary);

  for (const auto& name : file_names) {
    out.files.push_back((dir / name).string());
  }
  out.files.push_back((dir / "summary.json").string());
  out.exit_code = out.pass ? 0 : 1;

  if (!cfg.quiet) {
    for (const auto& f : out.files) std::printf("wrote %s\n", f.c_str());
    std::printf("%s: %s\n", mode_name(cfg.mode), out.pass ? "PASS" : "FAIL");
  }
  return out;
}

}  // namespace qpcsim
