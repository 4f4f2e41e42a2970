#pragma once

// Run configuration (JSON), result files and the run manifest.
//
// Output schema version 1:
//   greens.csv     omega, re_GR, im_GR, im_GK, A_loc, C_loc
//   history.csv    iteration, chi_fit, delta_change, n_loc
//   aggregate.csv  J, gamma2_over_U, n_loc, n_loc_normalized, gamma111_eff, weight_01, p_0 .. p_N0, converged
// Floating point values carry 17 significant digits.

#include "zdmft/dmft.hpp"
#include "zdmft/zeno.hpp"

#include <json.hpp>
#include <spdlog/fmt/fmt.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zdmft {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kOutputSchemaVersion = 1;

using json = nlohmann::ordered_json;

struct SweepSpec {
  std::vector<double> gamma2;  // ascending
  std::vector<double> J;       // empty: the lattice J only
  int jobs = 1;
  std::vector<int> presolve_cutoffs;  // empty: no cheap presolve
};

struct RunConfig {
  DmftConfig dmft;
  std::optional<BathParams> initial_bath;
  SweepSpec sweep;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  std::string path_;
};

namespace detail {

class JsonReader {
 public:
  JsonReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  [[nodiscard]] std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : node_.items())
      if (!allowed.count(item.key())) throw ConfigError(child_path(item.key()), "unknown field");
  }

  [[nodiscard]] bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  void number(const std::string& key, double& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(child_path(key), "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError(child_path(key), "must be finite");
  }

  void integer(const std::string& key, int& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_number_integer()) throw ConfigError(child_path(key), "expected an integer");
    out = v.get<int>();
  }

  void unsigned64(const std::string& key, std::uint64_t& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(child_path(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void numbers(const std::string& key, std::vector<double>& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(child_path(key), "expected an array of numbers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(child_path(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
  }

  void integers(const std::string& key, std::vector<int>& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(child_path(key), "expected an array of integers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer())
        throw ConfigError(child_path(key) + "[" + std::to_string(i) + "]", "expected an integer");
      out.push_back(v[i].get<int>());
    }
  }

  [[nodiscard]] std::optional<JsonReader> object(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return JsonReader(node_.at(key), child_path(key));
  }

  [[nodiscard]] const json& node() const { return node_; }
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  const json& node_;
  std::string path_;
};

inline void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError(path, message);
}

inline BathSite parse_bath_site(const JsonReader& r) {
  r.allow({"omega", "nu", "gamma1", "pump1"});
  for (const char* k : {"omega", "nu", "gamma1", "pump1"})
    require(r.has(k), r.child_path(k), "required field missing");
  BathSite s;
  r.number("omega", s.omega);
  r.number("nu", s.nu);
  r.number("gamma1", s.gamma1);
  r.number("pump1", s.pump1);
  return s;
}

}  // namespace detail

/// Checks every field of a parsed configuration, reporting the offending field path.
inline void validate_run_config(const RunConfig& rc) {
  using detail::require;
  const auto& c = rc.dmft;
  require(c.lattice.J >= 0.0, "lattice.J", "must be >= 0");
  require(c.lattice.z >= 1, "lattice.z", "must be >= 1");
  require(c.impurity.P1 >= 0.0, "impurity.P1", "must be >= 0");
  require(c.impurity.Gamma2 >= 0.0, "impurity.Gamma2", "must be >= 0");
  require(c.n_bath >= 0, "bath.n_bath", "must be >= 0");
  require(c.cutoffs.size() == static_cast<std::size_t>(c.n_bath) + 1, "bath.cutoffs",
          "must list n_bath + 1 cutoffs (impurity first)");
  for (std::size_t i = 0; i < c.cutoffs.size(); ++i)
    require(c.cutoffs[i] >= 0, "bath.cutoffs[" + std::to_string(i) + "]", "must be >= 0");
  if (c.grid) {
    require(c.grid->points >= 2, "grid.points", "must be >= 2");
    require(c.grid->omega_max > c.grid->omega_min, "grid.omega_max", "must exceed grid.omega_min");
  }
  require(c.mixing > 0.0 && c.mixing <= 1.0, "dmft.mixing", "must lie in (0, 1]");
  require(c.anderson_depth >= 0, "dmft.anderson_depth", "must be >= 0");
  require(c.tolerance > 0.0, "dmft.tolerance", "must be > 0");
  require(c.max_iterations >= 1, "dmft.max_iterations", "must be >= 1");
  require(c.fit.restarts >= 0, "fit.restarts", "must be >= 0");
  require(c.fit.jitter >= 0.0, "fit.jitter", "must be >= 0");
  require(c.fit.eps_stab > 0.0, "fit.eps_stab", "must be > 0");
  require(c.fit.max_iterations >= 1, "fit.max_iterations", "must be >= 1");
  require(c.fit.weight_retarded >= 0.0, "fit.weight_retarded", "must be >= 0");
  require(c.fit.weight_keldysh >= 0.0, "fit.weight_keldysh", "must be >= 0");
  if (rc.initial_bath) {
    require(rc.initial_bath->size() == static_cast<std::size_t>(c.n_bath), "bath.initial",
            "must list n_bath sites");
    for (std::size_t n = 0; n < rc.initial_bath->size(); ++n) {
      const auto& s = rc.initial_bath->sites[n];
      const std::string p = "bath.initial[" + std::to_string(n) + "]";
      require(s.gamma1 >= 0.0, p + ".gamma1", "must be >= 0");
      require(s.pump1 >= 0.0, p + ".pump1", "must be >= 0");
      require(s.gamma1 - s.pump1 >= c.fit.eps_stab, p + ".gamma1", "gamma1 - pump1 must be >= fit.eps_stab");
    }
  }
  require(std::is_sorted(rc.sweep.gamma2.begin(), rc.sweep.gamma2.end()), "sweep.gamma2", "must be ascending");
  for (std::size_t i = 0; i < rc.sweep.gamma2.size(); ++i)
    require(rc.sweep.gamma2[i] >= 0.0, "sweep.gamma2[" + std::to_string(i) + "]", "must be >= 0");
  for (std::size_t i = 0; i < rc.sweep.J.size(); ++i)
    require(rc.sweep.J[i] >= 0.0, "sweep.J[" + std::to_string(i) + "]", "must be >= 0");
  require(rc.sweep.jobs >= 1, "sweep.jobs", "must be >= 1");
  require(rc.sweep.presolve_cutoffs.empty() || rc.sweep.presolve_cutoffs.size() == c.cutoffs.size(),
          "sweep.presolve_cutoffs", "must be empty or list n_bath + 1 cutoffs");
  for (std::size_t i = 0; i < rc.sweep.presolve_cutoffs.size(); ++i)
    require(rc.sweep.presolve_cutoffs[i] >= 0, "sweep.presolve_cutoffs[" + std::to_string(i) + "]", "must be >= 0");
  c.validate();
}

inline RunConfig parse_run_config(const json& root) {
  RunConfig rc;
  auto& c = rc.dmft;
  detail::JsonReader r(root, "");
  r.allow({"lattice", "impurity", "bath", "grid", "dmft", "fit", "sweep", "seed"});
  if (auto l = r.object("lattice")) {
    l->allow({"J", "z"});
    l->number("J", c.lattice.J);
    l->integer("z", c.lattice.z);
  }
  if (auto i = r.object("impurity")) {
    i->allow({"omega0", "U", "P1", "Gamma2"});
    i->number("omega0", c.impurity.omega0);
    i->number("U", c.impurity.U);
    i->number("P1", c.impurity.P1);
    i->number("Gamma2", c.impurity.Gamma2);
  }
  if (auto b = r.object("bath")) {
    b->allow({"n_bath", "cutoffs", "initial"});
    b->integer("n_bath", c.n_bath);
    if (b->has("n_bath") && !b->has("cutoffs")) {
      c.cutoffs.assign(static_cast<std::size_t>(std::max(c.n_bath, 0)) + 1, 5);
      c.cutoffs.front() = 3;
    }
    b->integers("cutoffs", c.cutoffs);
    if (b->has("initial")) {
      const auto& arr = b->node().at("initial");
      detail::require(arr.is_array(), b->child_path("initial"), "expected an array of bath sites");
      BathParams init;
      for (std::size_t n = 0; n < arr.size(); ++n)
        init.sites.push_back(
            detail::parse_bath_site(detail::JsonReader(arr[n], b->child_path("initial") + "[" + std::to_string(n) + "]")));
      rc.initial_bath = init;
    }
  }
  if (auto g = r.object("grid")) {
    g->allow({"omega_min", "omega_max", "points"});
    FrequencyGrid grid = FrequencyGrid::for_model(c.impurity.omega0, c.impurity.U);
    g->number("omega_min", grid.omega_min);
    g->number("omega_max", grid.omega_max);
    g->integer("points", grid.points);
    c.grid = grid;
  }
  if (auto d = r.object("dmft")) {
    d->allow({"mixing", "anderson_depth", "tolerance", "max_iterations"});
    d->number("mixing", c.mixing);
    d->integer("anderson_depth", c.anderson_depth);
    d->number("tolerance", c.tolerance);
    d->integer("max_iterations", c.max_iterations);
  }
  if (auto f = r.object("fit")) {
    f->allow({"restarts", "jitter", "eps_stab", "gamma_max", "pump_max", "max_iterations", "weight_retarded",
              "weight_keldysh"});
    f->integer("restarts", c.fit.restarts);
    f->number("jitter", c.fit.jitter);
    f->number("eps_stab", c.fit.eps_stab);
    f->number("gamma_max", c.fit.gamma_max);
    f->number("pump_max", c.fit.pump_max);
    f->integer("max_iterations", c.fit.max_iterations);
    f->number("weight_retarded", c.fit.weight_retarded);
    f->number("weight_keldysh", c.fit.weight_keldysh);
  }
  if (auto s = r.object("sweep")) {
    s->allow({"gamma2", "J", "jobs", "presolve_cutoffs"});
    s->numbers("gamma2", rc.sweep.gamma2);
    s->numbers("J", rc.sweep.J);
    s->integer("jobs", rc.sweep.jobs);
    s->integers("presolve_cutoffs", rc.sweep.presolve_cutoffs);
  }
  r.unsigned64("seed", c.seed);
  validate_run_config(rc);
  return rc;
}

inline RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return parse_run_config(root);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

inline json bath_to_json(const BathParams& b) {
  json arr = json::array();
  for (const auto& s : b.sites)
    arr.push_back(json{{"omega", s.omega}, {"nu", s.nu}, {"gamma1", s.gamma1}, {"pump1", s.pump1}});
  return arr;
}

/// Full configuration with every default made explicit.
inline json to_json(const RunConfig& rc) {
  const auto& c = rc.dmft;
  const auto grid = c.effective_grid();
  json bath{{"n_bath", c.n_bath}, {"cutoffs", c.cutoffs}};
  if (rc.initial_bath) bath["initial"] = bath_to_json(*rc.initial_bath);
  return json{
      {"lattice", {{"J", c.lattice.J}, {"z", c.lattice.z}}},
      {"impurity",
       {{"omega0", c.impurity.omega0}, {"U", c.impurity.U}, {"P1", c.impurity.P1}, {"Gamma2", c.impurity.Gamma2}}},
      {"bath", bath},
      {"grid", {{"omega_min", grid.omega_min}, {"omega_max", grid.omega_max}, {"points", grid.points}}},
      {"dmft",
       {{"mixing", c.mixing},
        {"anderson_depth", c.anderson_depth},
        {"tolerance", c.tolerance},
        {"max_iterations", c.max_iterations}}},
      {"fit",
       {{"restarts", c.fit.restarts},
        {"jitter", c.fit.jitter},
        {"eps_stab", c.fit.eps_stab},
        {"gamma_max", c.fit.gamma_max},
        {"pump_max", c.fit.pump_max},
        {"max_iterations", c.fit.max_iterations},
        {"weight_retarded", c.fit.weight_retarded},
        {"weight_keldysh", c.fit.weight_keldysh}}},
      {"sweep",
       {{"gamma2", rc.sweep.gamma2},
        {"J", rc.sweep.J},
        {"jobs", rc.sweep.jobs},
        {"presolve_cutoffs", rc.sweep.presolve_cutoffs}}},
      {"seed", c.seed},
  };
}

// ---------------------------------------------------------------------------
// result files

inline std::string fmt17(double x) { return fmt::format("{:.17g}", x); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::string greens_csv(const KeldyshGF& gf) {
  const auto sf = spectral_functions(gf);
  std::string s = "omega,re_GR,im_GR,im_GK,A_loc,C_loc\n";
  for (std::size_t i = 0; i < gf.size(); ++i)
    s += fmt::format("{},{},{},{},{},{}\n", fmt17(gf.omega[i]), fmt17(gf.retarded[i].real()),
                     fmt17(gf.retarded[i].imag()), fmt17(gf.keldysh[i].imag()), fmt17(sf.A[i]), fmt17(sf.C[i]));
  return s;
}

inline std::string history_csv(const std::vector<DmftIteration>& history) {
  std::string s = "iteration,chi_fit,delta_change,n_loc\n";
  for (const auto& h : history)
    s += fmt::format("{},{},{},{}\n", h.iteration, fmt17(h.chi_fit), fmt17(h.delta_change), fmt17(h.n_loc));
  return s;
}

inline json observables_json(const DmftSolution& sol) {
  const auto& o = sol.observables;
  json sites = json::array();
  for (std::size_t i = 0; i < o.site_occupation_probs.size(); ++i)
    sites.push_back(json{{"site", i},
                         {"mean_occupation", o.site_mean_occupation[i]},
                         {"fock_weights", o.site_occupation_probs[i]}});
  return json{{"schema_version", kOutputSchemaVersion},
              {"converged", sol.converged},
              {"iterations", sol.iterations},
              {"n_loc", o.n_loc},
              {"commutator", o.commutator},
              {"anticommutator", o.anticommutator},
              {"sites", sites},
              {"bath", bath_to_json(sol.bath.canonical())}};
}

inline json bath_json(const DmftSolution& sol) {
  return json{{"schema_version", kOutputSchemaVersion},
              {"solved", bath_to_json(sol.bath.canonical())},
              {"next", bath_to_json(sol.next_bath.canonical())}};
}

/// One row per point, sweeps in order. Fock-weight columns span the largest
/// impurity cutoff; shorter rows are padded with zeros.
inline std::string aggregate_csv(const std::vector<SweepResult>& sweeps) {
  std::size_t n_fock = 0;
  for (const auto& sw : sweeps)
    for (const auto& p : sw.points) n_fock = std::max(n_fock, p.impurity_fock_weights.size());
  std::string s = "J,gamma2_over_U,n_loc,n_loc_normalized,gamma111_eff,weight_01";
  for (std::size_t k = 0; k < n_fock; ++k) s += ",p_" + std::to_string(k);
  s += ",converged\n";
  for (const auto& sw : sweeps) {
    for (const auto& p : sw.points) {
      const auto& w = p.impurity_fock_weights;
      const double w01 = (w.size() > 0 ? w[0] : 0.0) + (w.size() > 1 ? w[1] : 0.0);
      s += fmt::format("{},{},{},{},{},{}", fmt17(sw.J), fmt17(p.gamma2 / sw.U), fmt17(p.n_loc),
                       fmt17(p.n_loc_normalized), fmt17(p.gamma111_eff), fmt17(w01));
      for (std::size_t k = 0; k < n_fock; ++k) s += "," + fmt17(k < w.size() ? w[k] : 0.0);
      s += p.converged ? ",true\n" : ",false\n";
    }
  }
  return s;
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct RunManifest {
  json config;
  std::string command;
  std::uint64_t seed = 0;
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
  std::vector<std::string> outputs;
  std::string status;

  [[nodiscard]] json to_json() const {
    return json{{"schema_version", kOutputSchemaVersion},
                {"code_version", kVersion},
                {"command", command},
                {"status", status},
                {"seed", seed},
                {"started_at", utc_timestamp(started)},
                {"finished_at", utc_timestamp(finished)},
                {"outputs", outputs},
                {"config", config}};
  }
};

/// Writes manifest.json once; refuses to replace an existing manifest.
inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  const auto path = dir / "manifest.json";
  if (std::filesystem::exists(path)) throw std::runtime_error("manifest already exists: " + path.string());
  write_text(path, m.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// minimal SVG line plots

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

inline std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                                 const std::vector<PlotSeries>& series) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 30, B = 45;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  s += fmt::format("<text x=\"{}\" y=\"18\" text-anchor=\"middle\">{}</text>\n", W / 2, title);
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", L, T,
                   W - L - R, H - T - B);
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", px(xv), H - B + 16, xv);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", L - 4, py(yv) + 4, yv);
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", W / 2, H - 8, xlabel);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& ser = series[k];
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size(); ++i)
      if (std::isfinite(ser.y[i])) pts += fmt::format("{:.2f},{:.2f} ", px(ser.x[i]), py(ser.y[i]));
    const char* col = colors[k % 6];
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", col, pts);
    s += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", W - R - 150, T + 16 + 14 * k, col,
                     ser.label);
  }
  s += "</svg>\n";
  return s;
}

}  // namespace zdmft
