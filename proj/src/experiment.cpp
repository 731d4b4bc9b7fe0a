#include "platoon/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "platoon/csv.hpp"
#include "platoon/errors.hpp"

namespace platoon {

namespace {

constexpr std::pair<ExperimentKind, const char*> kKindNames[] = {
    {ExperimentKind::micro_sim, "micro-sim"},
    {ExperimentKind::closed_form_check, "closed-form-check"},
    {ExperimentKind::lyapunov_audit, "lyapunov-audit"},
    {ExperimentKind::amplification_sweep, "amplification-sweep"},
    {ExperimentKind::macro_chars, "macro-chars"},
    {ExperimentKind::macro_fd, "macro-fd"},
    {ExperimentKind::micro_macro_bridge, "micro-macro-bridge"},
};

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"experiment", {"kind", "seed", "out"}},
      {"model", {"mu", "v_star", "v_max", "cap_L", "lambda", "epsilon", "n"}},
      {"integrator", {"dt", "horizon", "record_stride"}},
      {"initial", {"source", "speeds", "spacings", "extra_gap"}},
      {"closed_form", {"tolerance"}},
      {"lyapunov",
       {"beta", "fd_dt", "envelope_samples", "force_dense_envelopes", "claim_states",
        "claim_sizes", "audit_csv_stride"}},
      {"disturbance",
       {"alpha", "omega_bars", "sizes", "controllers", "dt", "record_stride", "horizon_scale",
        "ftl_start"}},
      {"ftl", {"a", "k", "beta_ftl", "zeta", "g_max", "b"}},
      {"macro",
       {"omega", "v_star", "v_max", "rho_bar", "rho_max", "phi_scale", "m_total", "epsilon",
        "profile", "rho_base", "rho_amp", "v_base", "v_amp"}},
      {"chars", {"x_min", "x_max", "points", "times", "rel_tol"}},
      {"fd", {"x_min", "x_max", "dx", "cfl", "output_times"}},
      {"bridge",
       {"sizes", "times", "x_tail", "x_head", "dt", "compare_points", "compare_margin"}},
  };
  return keys;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) items.push_back(trim(item));
  return items;
}

// Typed access to one parsed INI tree; every problem is collected, not thrown.
class Reader {
 public:
  explicit Reader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  std::vector<std::string>& errors() { return errors_; }

  const std::string* raw(const std::string& section, const std::string& key) const {
    const auto sec = tree_.find(section);
    if (sec == tree_.not_found()) return nullptr;
    const auto it = sec->second.find(key);
    if (it == sec->second.not_found()) return nullptr;
    return &it->second.data();
  }

  void number(const std::string& section, const std::string& key, double& out) {
    const auto* text = raw(section, key);
    if (!text) return;
    try {
      out = csv::parse_double(trim(*text));
    } catch (const std::exception&) {
      errors_.push_back(section + "." + key + ": not a number: '" + *text + "'");
    }
  }

  template <class Int>
  bool parse_int(const std::string& text, Int& out) const {
    const std::string t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    return res.ec == std::errc() && res.ptr == t.data() + t.size() && !t.empty();
  }

  template <class Int>
  void integer(const std::string& section, const std::string& key, Int& out) {
    const auto* text = raw(section, key);
    if (!text) return;
    if (!parse_int(*text, out)) {
      errors_.push_back(section + "." + key + ": not an integer: '" + *text + "'");
    }
  }

  void boolean(const std::string& section, const std::string& key, bool& out) {
    const auto* text = raw(section, key);
    if (!text) return;
    const std::string t = trim(*text);
    if (t == "true" || t == "1") {
      out = true;
    } else if (t == "false" || t == "0") {
      out = false;
    } else {
      errors_.push_back(section + "." + key + ": expected true or false: '" + *text + "'");
    }
  }

  void numbers(const std::string& section, const std::string& key, std::vector<double>& out) {
    const auto* text = raw(section, key);
    if (!text) return;
    std::vector<double> values;
    for (const auto& item : split_list(*text)) {
      try {
        values.push_back(csv::parse_double(item));
      } catch (const std::exception&) {
        errors_.push_back(section + "." + key + ": not a number list: '" + *text + "'");
        return;
      }
    }
    out = std::move(values);
  }

  void integers(const std::string& section, const std::string& key, std::vector<int>& out) {
    const auto* text = raw(section, key);
    if (!text) return;
    std::vector<int> values;
    for (const auto& item : split_list(*text)) {
      int v = 0;
      if (!parse_int(item, v)) {
        errors_.push_back(section + "." + key + ": not an integer list: '" + *text + "'");
        return;
      }
      values.push_back(v);
    }
    out = std::move(values);
  }

  template <class Enum>
  void choice(const std::string& section, const std::string& key,
              std::initializer_list<std::pair<const char*, Enum>> options, Enum& out) {
    const auto* text = raw(section, key);
    if (!text) return;
    const std::string t = trim(*text);
    for (const auto& [name, value] : options) {
      if (t == name) {
        out = value;
        return;
      }
    }
    std::string names;
    for (const auto& [name, value] : options) names += (names.empty() ? "" : " | ") + std::string(name);
    errors_.push_back(section + "." + key + ": '" + t + "' is not one of " + names);
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::vector<std::string> errors_;
};

template <class F>
void check(std::vector<std::string>& errors, F&& validate) {
  try {
    validate();
  } catch (const ConfigError& e) {
    errors.insert(errors.end(), e.errors().begin(), e.errors().end());
  } catch (const std::exception& e) {
    errors.emplace_back(e.what());
  }
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  feed(config.canonical);
  feed("seed=" + std::to_string(config.seed) + "\n");
  return h;
}

ExperimentConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError({std::string("malformed config: ") + e.message() + " (line " +
                       std::to_string(e.line()) + ")"});
  }

  std::vector<std::string> errors;
  std::vector<std::string> canonical;
  for (const auto& [section, body] : tree) {
    const auto sec = allowed_keys().find(section);
    if (body.empty()) {
      errors.push_back("key '" + section + "' appears outside any section");
      continue;
    }
    if (sec == allowed_keys().end()) {
      errors.push_back("unknown section [" + section + "]");
      continue;
    }
    for (const auto& [key, value] : body) {
      if (!sec->second.count(key)) {
        errors.push_back("unknown key '" + key + "' in [" + section + "]");
      }
      canonical.push_back(section + "." + key + "=" + trim(value.data()));
    }
  }

  Reader r(tree);
  ExperimentConfig c;
  {
    const auto* kind = r.raw("experiment", "kind");
    if (!kind) {
      errors.push_back("experiment.kind is required");
    } else {
      bool found = false;
      for (const auto& [k, name] : kKindNames) {
        if (trim(*kind) == name) {
          c.kind = k;
          found = true;
        }
      }
      if (!found) errors.push_back("experiment.kind: unknown experiment '" + trim(*kind) + "'");
    }
  }
  r.integer("experiment", "seed", c.seed);
  if (const auto* out = r.raw("experiment", "out")) c.out_dir = trim(*out);

  // Platoon defaults follow the experiment: the sweep uses the benchmark setup.
  if (c.kind == ExperimentKind::amplification_sweep) c.model = ModelParams::disturbance_setup(10);
  r.number("model", "mu", c.model.mu);
  r.number("model", "v_star", c.model.v_star);
  r.number("model", "v_max", c.model.v_max);
  r.number("model", "cap_L", c.model.cap_L);
  r.number("model", "lambda", c.model.lambda);
  r.number("model", "epsilon", c.model.epsilon);
  r.integer("model", "n", c.model.n);

  r.number("integrator", "dt", c.integrator.dt);
  r.number("integrator", "horizon", c.integrator.horizon);
  r.integer("integrator", "record_stride", c.integrator.record_stride);

  using Src = InitialSpec::Source;
  r.choice<Src>("initial", "source",
                {{"example1-random", Src::example1_random}, {"compliant", Src::compliant},
                 {"explicit", Src::explicit_state}},
                c.initial.source);
  r.numbers("initial", "speeds", c.initial.speeds);
  r.numbers("initial", "spacings", c.initial.spacings);
  r.number("initial", "extra_gap", c.initial.extra_gap);
  r.number("closed_form", "tolerance", c.closed_form_tolerance);

  r.number("lyapunov", "beta", c.lyapunov.beta);
  r.number("lyapunov", "fd_dt", c.lyapunov.fd_dt);
  r.integer("lyapunov", "envelope_samples", c.lyapunov.envelope_samples);
  r.boolean("lyapunov", "force_dense_envelopes", c.lyapunov.force_dense_envelopes);
  r.integer("lyapunov", "claim_states", c.claim_states);
  r.integers("lyapunov", "claim_sizes", c.claim_sizes);
  r.integer("lyapunov", "audit_csv_stride", c.audit_csv_stride);

  r.number("disturbance", "alpha", c.sweep_grid.alpha);
  r.numbers("disturbance", "omega_bars", c.sweep_grid.omega_bars);
  r.integers("disturbance", "sizes", c.sweep_grid.sizes);
  if (const auto* text = r.raw("disturbance", "controllers")) {
    c.sweep_grid.controllers.clear();
    for (const auto& item : split_list(*text)) {
      if (item == "inviscid") {
        c.sweep_grid.controllers.push_back(Controller::inviscid);
      } else if (item == "ftl") {
        c.sweep_grid.controllers.push_back(Controller::ftl);
      } else {
        errors.push_back("disturbance.controllers: '" + item + "' is not one of inviscid | ftl");
      }
    }
  }
  r.number("disturbance", "dt", c.sweep_settings.dt);
  r.integer("disturbance", "record_stride", c.sweep_settings.record_stride);
  r.number("disturbance", "horizon_scale", c.sweep_settings.horizon_scale);
  r.choice<FtLStart>("disturbance", "ftl_start",
                     {{"lambda", FtLStart::lambda_spacing}, {"balanced", FtLStart::balanced}},
                     c.sweep_settings.ftl_start);

  r.number("ftl", "a", c.ftl.a);
  r.number("ftl", "k", c.ftl.k);
  r.number("ftl", "beta_ftl", c.ftl.beta_ftl);
  c.ftl.b = c.ftl.beta_ftl;
  r.number("ftl", "zeta", c.ftl.zeta);
  r.number("ftl", "g_max", c.ftl.g_max);
  r.number("ftl", "b", c.ftl.b);

  r.number("macro", "omega", c.macro.omega);
  r.number("macro", "v_star", c.macro.v_star);
  r.number("macro", "v_max", c.macro.v_max);
  r.number("macro", "rho_bar", c.macro.rho_bar);
  r.number("macro", "rho_max", c.macro.rho_max);
  r.number("macro", "phi_scale", c.macro.phi_scale);
  r.number("macro", "m_total", c.macro.m_total);
  r.number("macro", "epsilon", c.macro.epsilon);
  using PK = MacroProfileSpec::Kind;
  r.choice<PK>("macro", "profile",
               {{"example3", PK::example3}, {"constant", PK::constant}, {"bump", PK::bump}},
               c.profiles.kind);
  r.number("macro", "rho_base", c.profiles.rho_base);
  r.number("macro", "rho_amp", c.profiles.rho_amp);
  r.number("macro", "v_base", c.profiles.v_base);
  r.number("macro", "v_amp", c.profiles.v_amp);

  r.number("chars", "x_min", c.chars.x_min);
  r.number("chars", "x_max", c.chars.x_max);
  r.integer("chars", "points", c.chars.points);
  r.numbers("chars", "times", c.chars.times);
  r.number("chars", "rel_tol", c.chars.rel_tol);

  r.number("fd", "x_min", c.fd.x_min);
  r.number("fd", "x_max", c.fd.x_max);
  r.number("fd", "dx", c.fd.dx);
  r.number("fd", "cfl", c.fd.cfl);
  r.numbers("fd", "output_times", c.fd.output_times);

  r.integers("bridge", "sizes", c.bridge.sizes);
  r.numbers("bridge", "times", c.bridge.times);
  r.number("bridge", "x_tail", c.bridge.x_tail);
  r.number("bridge", "x_head", c.bridge.x_head);
  r.number("bridge", "dt", c.bridge.dt);
  r.integer("bridge", "compare_points", c.bridge.compare_points);
  r.number("bridge", "compare_margin", c.bridge.compare_margin);

  errors.insert(errors.end(), r.errors().begin(), r.errors().end());

  // Invariants, each reported under its own name.
  check(errors, [&] { c.model.validate(); });
  check(errors, [&] { c.integrator.validate(); });
  check(errors, [&] { c.lyapunov.validate(); });
  check(errors, [&] { c.ftl.validate(); });
  check(errors, [&] { c.macro.validate(); });
  check(errors, [&] { c.fd.validate(); });
  if (!(c.closed_form_tolerance > 0)) errors.push_back("closed_form.tolerance > 0");
  if (c.claim_states < 1) errors.push_back("lyapunov.claim_states >= 1");
  if (c.audit_csv_stride < 1) errors.push_back("lyapunov.audit_csv_stride >= 1");
  for (int n : c.claim_sizes) {
    if (n < 2) errors.push_back("lyapunov.claim_sizes entries >= 2");
  }
  if (c.initial.source == Src::explicit_state) {
    if (static_cast<int>(c.initial.speeds.size()) != c.model.n ||
        static_cast<int>(c.initial.spacings.size()) != c.model.n - 1) {
      errors.push_back("initial: explicit state needs n speeds and n - 1 spacings");
    }
  }
  if (c.initial.source == Src::compliant && !c.initial.speeds.empty() &&
      static_cast<int>(c.initial.speeds.size()) != c.model.n) {
    errors.push_back("initial.speeds: need n entries");
  }
  if (!(c.initial.extra_gap >= 0)) errors.push_back("initial.extra_gap >= 0");

  if (c.sweep_grid.omega_bars.empty() || c.sweep_grid.sizes.empty() ||
      c.sweep_grid.controllers.empty()) {
    errors.push_back("disturbance: omega_bars, sizes and controllers must be non-empty");
  }
  for (double w : c.sweep_grid.omega_bars) {
    check(errors, [&] { DisturbanceSpec{c.sweep_grid.alpha, w}.validate(c.model); });
  }
  for (int n : c.sweep_grid.sizes) {
    if (n < 2) errors.push_back("disturbance.sizes entries >= 2");
  }
  if (c.sweep_grid.alpha == 0) errors.push_back("disturbance.alpha != 0");
  if (!(c.sweep_settings.dt > 0)) errors.push_back("disturbance.dt > 0");
  if (c.sweep_settings.record_stride < 1) errors.push_back("disturbance.record_stride >= 1");
  if (!(c.sweep_settings.horizon_scale > 0)) errors.push_back("disturbance.horizon_scale > 0");

  if (c.profiles.kind == PK::bump || c.profiles.kind == PK::constant) {
    if (!(c.profiles.rho_base > 0)) errors.push_back("macro.rho_base > 0");
  }
  if (c.chars.points < 2) errors.push_back("chars.points >= 2");
  if (!(c.chars.x_max > c.chars.x_min)) errors.push_back("chars.x_max > chars.x_min");
  if (c.chars.times.empty()) errors.push_back("chars.times must not be empty");
  for (double t : c.chars.times) {
    if (!(t >= 0)) errors.push_back("chars.times entries >= 0");
  }
  if (!(c.chars.rel_tol >= 0)) errors.push_back("chars.rel_tol >= 0");

  for (int n : c.bridge.sizes) {
    if (n < 20) errors.push_back("bridge.sizes entries >= 20");
  }
  for (double t : c.bridge.times) {
    if (!(t > 0)) errors.push_back("bridge.times entries > 0");
  }
  if (c.bridge.sizes.empty() || c.bridge.times.empty()) {
    errors.push_back("bridge: sizes and times must be non-empty");
  }
  if (!(c.bridge.x_head > c.bridge.x_tail)) errors.push_back("bridge.x_head > bridge.x_tail");
  if (!(c.bridge.dt > 0)) errors.push_back("bridge.dt > 0");
  if (c.bridge.compare_points < 2) errors.push_back("bridge.compare_points >= 2");
  if (!(c.bridge.compare_margin >= 0)) errors.push_back("bridge.compare_margin >= 0");

  if (!errors.empty()) throw ConfigError(errors);

  std::sort(canonical.begin(), canonical.end());
  for (const auto& line : canonical) c.canonical += line + "\n";
  return c;
}

SmoothProfile make_density_profile(const MacroProfileSpec& spec) {
  switch (spec.kind) {
    case MacroProfileSpec::Kind::constant: return SmoothProfile::constant(spec.rho_base);
    case MacroProfileSpec::Kind::bump: return SmoothProfile::bump(spec.rho_base, spec.rho_amp, 2);
    default: return SmoothProfile::example3_density();
  }
}

SmoothProfile make_speed_profile(const MacroProfileSpec& spec) {
  switch (spec.kind) {
    case MacroProfileSpec::Kind::constant: return SmoothProfile::constant(spec.v_base);
    case MacroProfileSpec::Kind::bump: return SmoothProfile::bump(spec.v_base, spec.v_amp, 3);
    default: return SmoothProfile::example3_speed();
  }
}

bool RunSummary::passed() const {
  return std::all_of(audits.begin(), audits.end(), [](const AuditResult& a) { return a.passed; });
}

void write_summary(std::ostream& os, const RunSummary& s) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(s.config_hash));
  os << "experiment = " << to_string(s.kind) << "\n";
  os << "config_hash = " << hash << "\n";
  os << "seed = " << s.seed << "\n";
  os << "status = " << (s.passed() ? "pass" : "fail") << "\n";
  for (const auto& a : s.audits) {
    os << "audit." << a.name << " = " << (a.passed ? "pass" : "fail")
       << " margin=" << csv::format(a.margin);
    if (!a.detail.empty()) os << " " << a.detail;
    os << "\n";
  }
  for (const auto& f : s.files) os << "file = " << f << "\n";
}

namespace {

class RunContext {
 public:
  RunContext(const ExperimentConfig& config, const std::filesystem::path& dir, RunSummary& summary)
      : config(config), dir_(dir), summary_(summary) {}

  template <class Writer>
  void write(const std::string& name, Writer&& writer) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + (dir_ / name).string());
    writer(out);
    if (!out) throw std::runtime_error("write failed: " + (dir_ / name).string());
    summary_.files.push_back(name);
  }

  void audit(std::string name, bool passed, double margin, std::string detail = {}) {
    summary_.audits.push_back({std::move(name), passed, margin, std::move(detail)});
  }

  const ExperimentConfig& config;

 private:
  std::filesystem::path dir_;
  RunSummary& summary_;
};

MicroState initial_state(const ExperimentConfig& c, const Model& model) {
  using Src = InitialSpec::Source;
  switch (c.initial.source) {
    case Src::explicit_state: return MicroState{c.initial.spacings, c.initial.speeds};
    case Src::compliant: {
      std::vector<double> speeds = c.initial.speeds;
      if (speeds.empty()) speeds = example1_initial_state(model.params(), c.seed).v;
      return closed_form_compliant_state(model, speeds, c.initial.extra_gap);
    }
    default: return example1_initial_state(model.params(), c.seed);
  }
}

std::string count_detail(const char* what, long count) {
  return std::string(what) + "=" + std::to_string(count);
}

void run_micro_sim(RunContext& ctx) {
  const auto& c = ctx.config;
  const Model model(c.model);
  const MicroState init = initial_state(c, model);
  const Trajectory traj = integrate(model, init, c.integrator);
  ctx.write("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, traj); });

  std::vector<double> H(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    double kinetic = 0, potential = 0;
    for (double v : traj.speeds(k)) kinetic += (v - c.model.v_star) * (v - c.model.v_star);
    for (double s : traj.spacings(k)) potential += model.potential_value(s);
    H[k] = 0.5 * kinetic + potential;
  }
  ctx.write("energy.csv", [&](std::ostream& os) {
    os << "t,H\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
      os << csv::format(traj.time(k)) << ',' << csv::format(H[k]) << '\n';
    }
  });

  double worst = std::numeric_limits<double>::infinity();
  long rises = 0;
  for (std::size_t k = 1; k < H.size(); ++k) {
    const double margin = H[k - 1] + 1e-9 * (1 + H[k - 1]) - H[k];
    worst = std::min(worst, margin);
    if (margin < 0) ++rises;
  }
  ctx.audit("energy_nonincreasing", rises == 0, H.size() > 1 ? worst : 0.0,
            count_detail("violations", rises));

  const SpacingAudit sa = spacing_bound_audit(traj, model);
  ctx.audit("spacing_bound", sa.violations == 0, sa.tightest_margin,
            count_detail("violations", sa.violations));
}

void run_closed_form(RunContext& ctx) {
  const auto& c = ctx.config;
  const Model model(c.model);
  const MicroState init = initial_state(c, model);
  const Trajectory traj = integrate(model, init, c.integrator);
  double worst = 0;
  ctx.write("closed_form.csv", [&](std::ostream& os) {
    os << "t,max_abs_error\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const MicroState exact = closed_form_prop31(model, init, traj.time(k));
      const auto flat = flatten(exact);
      const auto row = traj.row(k);
      double err = 0;
      for (std::size_t q = 0; q < flat.size(); ++q) err = std::max(err, std::abs(flat[q] - row[q]));
      worst = std::max(worst, err);
      os << csv::format(traj.time(k)) << ',' << csv::format(err) << '\n';
    }
  });
  ctx.write("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, traj); });
  ctx.audit("closed_form_error", worst <= c.closed_form_tolerance, c.closed_form_tolerance - worst,
            "max_abs_error=" + csv::format(worst));
}

void run_lyapunov(RunContext& ctx) {
  const auto& c = ctx.config;
  const Model model(c.model);
  const MicroState init = initial_state(c, model);
  const Trajectory traj = integrate(model, init, c.integrator);
  const CertificateTables tables(model, c.lyapunov);
  const CertificateReport report = audit_trajectory(traj, tables);
  ctx.write("audit.csv", [&](std::ostream& os) {
    CertificateReport thin;
    for (std::size_t k = 0; k < report.rows.size(); k += c.audit_csv_stride) {
      thin.rows.push_back(report.rows[k]);
    }
    write_audit_csv(os, thin);
  });
  ctx.audit("sandwich_lower", report.worst_lower_margin >= 0, report.worst_lower_margin);
  ctx.audit("sandwich_upper", report.worst_upper_margin >= 0, report.worst_upper_margin);
  ctx.audit("decay", report.decay_violations == 0, report.worst_decay_margin,
            count_detail("violations", report.decay_violations));

  for (int n : c.claim_sizes) {
    ModelParams p = c.model;
    p.n = n;
    const Model m(p);
    const CertificateTables t(m, c.lyapunov);
    const auto states = random_omega_states(p, c.claim_states, c.seed + static_cast<unsigned>(n));
    const ClaimReport claims = check_claims(t, states);
    ctx.audit("claims_n" + std::to_string(n), claims.total() == 0,
              static_cast<double>(-claims.total()), count_detail("states", claims.states));
  }
}

void run_sweep(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto cells = sweep(c.sweep_grid, c.model, c.ftl, c.sweep_settings);
  ctx.write("sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, cells); });
  ctx.write("sweep_summary.csv", [&](std::ostream& os) { write_sweep_summary(os, cells); });
  long failed = 0;
  for (const auto& cell : cells) failed += cell.report ? 0 : 1;
  ctx.audit("cells_completed", failed == 0, static_cast<double>(-failed),
            count_detail("cells", static_cast<long>(cells.size())));
}

void write_fields(RunContext& ctx, const MacroField& field) {
  for (std::size_t k = 0; k < field.times.size(); ++k) {
    ctx.write("field_t" + std::to_string(k) + ".csv",
              [&](std::ostream& os) { write_field_csv(os, field, k); });
  }
}

void run_macro_chars(RunContext& ctx) {
  const auto& c = ctx.config;
  const SmoothProfile rho0 = make_density_profile(c.profiles);
  const SmoothProfile v0 = make_speed_profile(c.profiles);
  const MacroField field = characteristic_field(
      rho0, v0, c.macro, uniform_grid(c.chars.x_min, c.chars.x_max, c.chars.points), c.chars.times);
  write_fields(ctx, field);
  const DecayAudit a = decay_audit(field, rho0, v0, c.macro, c.chars.rel_tol);
  ctx.audit("density_bound", a.density_violations == 0, 1 - a.worst_density_ratio,
            count_detail("violations", a.density_violations));
  ctx.audit("speed_decay", a.speed_violations == 0, 1 - a.worst_speed_ratio,
            count_detail("violations", a.speed_violations));
  ctx.audit("positivity", a.positivity_violations == 0, static_cast<double>(-a.positivity_violations));
  ctx.audit("wave_gap", a.wave_violations == 0, a.wave_constant - a.max_weighted_gap,
            "max=" + csv::format(a.max_weighted_gap) + " constant=" + csv::format(a.wave_constant));
  if (a.premise_met()) {
    ctx.audit("small_density_cap", a.cap_violations == 0, static_cast<double>(-a.cap_violations));
  } else {
    ctx.audit("small_density_cap", true, 0.0, "premise unmet; not applicable");
  }
}

void run_macro_fd(RunContext& ctx) {
  const auto& c = ctx.config;
  const SmoothProfile rho0 = make_density_profile(c.profiles);
  const SmoothProfile v0 = make_speed_profile(c.profiles);
  const MacroField field = fd_solver(rho0, v0, c.macro, c.fd);
  write_fields(ctx, field);
  ctx.audit("mass_conservation", field.max_mass_defect <= 1e-10, 1e-10 - field.max_mass_defect,
            "max_rel_defect=" + csv::format(field.max_mass_defect) +
                " max_xi=" + csv::format(field.max_xi));
  DecayAudit premise = decay_audit(MacroField{}, rho0, v0, c.macro);
  if (premise.premise_met()) {
    // Reference available: report the error against the exact solution.
    const std::size_t k = field.times.size() - 1;
    double err = 0;
    for (std::size_t j = 0; j < field.x.size(); ++j) {
      const auto p = characteristic_state(field.times[k], field.x[j], rho0, v0, c.macro);
      err = std::max({err, std::abs(p.rho - field.rho[k][j]), std::abs(p.v - field.v[k][j])});
    }
    ctx.audit("linf_error_vs_characteristics", true, 0.0, "value=" + csv::format(err));
  }
}

void run_bridge(RunContext& ctx) {
  const auto& c = ctx.config;
  const SmoothProfile rho0 = make_density_profile(c.profiles);
  const SmoothProfile v0 = make_speed_profile(c.profiles);
  const BridgeReport report = micro_macro_bridge(rho0, v0, c.macro, c.bridge);
  ctx.write("bridge.csv", [&](std::ostream& os) { write_bridge_csv(os, report); });
  // The consistency trend: sup-norm density gap non-increasing in n per time.
  for (double t : c.bridge.times) {
    std::vector<BridgeRow> rows;
    for (const auto& r : report.rows) {
      if (std::abs(r.time - t) < 0.5 * c.bridge.dt) rows.push_back(r);
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t q = 1; q < rows.size(); ++q) {
      worst = std::min(worst, rows[q - 1].linf_rho - rows[q].linf_rho);
    }
    if (rows.size() < 2) worst = 0;
    ctx.audit("gap_trend_t" + csv::format(t), worst >= 0, worst,
              report.exact_reference ? "reference=characteristics" : "reference=fd");
  }
}

}  // namespace

RunSummary run(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  RunSummary summary;
  summary.kind = config.kind;
  summary.config_hash = config_hash(config);
  summary.seed = config.seed;
  RunContext ctx(config, out_dir, summary);
  switch (config.kind) {
    case ExperimentKind::micro_sim: run_micro_sim(ctx); break;
    case ExperimentKind::closed_form_check: run_closed_form(ctx); break;
    case ExperimentKind::lyapunov_audit: run_lyapunov(ctx); break;
    case ExperimentKind::amplification_sweep: run_sweep(ctx); break;
    case ExperimentKind::macro_chars: run_macro_chars(ctx); break;
    case ExperimentKind::macro_fd: run_macro_fd(ctx); break;
    case ExperimentKind::micro_macro_bridge: run_bridge(ctx); break;
  }
  std::ofstream out(out_dir / "summary.txt", std::ios::binary);
  write_summary(out, summary);
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

}  // namespace platoon
