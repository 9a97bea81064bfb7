// Command-line front end: wires CSV ingestion, model parsing, descent,
// certification, and CSV/JSON exports into reproducible single-run commands.

#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "modelfit/modelfit.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace modelfit;

namespace {

std::vector<double> parse_vector(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ValidationError(std::string(what) + ": bad number '" + cell + "'");
    }
  }
  if (out.empty()) throw ValidationError(std::string(what) + " is empty");
  return out;
}

Box parse_box(const std::string& text) {
  Box box;
  std::stringstream ss(text);
  std::string axis;
  while (std::getline(ss, axis, ',')) {
    const std::size_t colon = axis.find(':');
    if (colon == std::string::npos)
      throw ValidationError("box axis '" + axis + "' must look like lo:hi");
    try {
      box.lo.push_back(std::stod(axis.substr(0, colon)));
      box.hi.push_back(std::stod(axis.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ValidationError("box axis '" + axis + "' must look like lo:hi");
    }
  }
  box.validate();
  return box;
}

ConstraintMode parse_constraint(const std::string& text) {
  if (text == "none") return ConstraintMode::none();
  if (text == "unit-norm") return ConstraintMode::unit_norm();
  if (text.rfind("pin:", 0) == 0) {
    const std::size_t eq = text.find('=', 4);
    if (eq != std::string::npos) {
      try {
        const int k = std::stoi(text.substr(4, eq - 4));
        const double v = std::stod(text.substr(eq + 1));
        return ConstraintMode::pin(k - 1, v); // flags use the a<k> numbering
      } catch (const std::exception&) {
      }
    }
  }
  throw ValidationError("constraint must be none, unit-norm, or pin:<k>=<v>");
}

std::string constraint_string(const ConstraintMode& c) {
  switch (c.kind) {
    case ConstraintMode::Kind::none: return "none";
    case ConstraintMode::Kind::unit_norm: return "unit-norm";
    default:
      return "pin:" + std::to_string(c.pin_index + 1) + "=" + format_double(c.pin_value);
  }
}

TimeSeries load_series_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("data file not found: " + path);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file: " + path);
  return load_time_series(in);
}

GridField load_grid_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("grid file not found: " + path);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid file: " + path);
  return load_grid(in);
}

std::vector<PdeTerm> parse_terms(const std::string& text) {
  std::vector<PdeTerm> terms;
  std::stringstream ss(text);
  std::string item;
  int coeff = 1;
  while (std::getline(ss, item, ',')) {
    PdeTerm term;
    term.coeff_index = coeff++;
    if (item == "ux") term = {term.coeff_index, GridVar::space, 1};
    else if (item == "uxx") term = {term.coeff_index, GridVar::space, 2};
    else if (item == "ut") term = {term.coeff_index, GridVar::time, 1};
    else if (item == "utt") term = {term.coeff_index, GridVar::time, 2};
    else throw ValidationError("unknown PDE term '" + item + "' (use ux, uxx, ut, utt)");
    terms.push_back(term);
  }
  if (terms.empty()) throw ValidationError("term list is empty");
  return terms;
}

std::string terms_string(const std::vector<PdeTerm>& terms) {
  std::string out;
  for (const PdeTerm& t : terms) {
    if (!out.empty()) out += ',';
    out += 'u';
    const char v = t.var == GridVar::space ? 'x' : 't';
    out += v;
    if (t.order == 2) out += v;
  }
  return out;
}

// ---- report pieces --------------------------------------------------------

json to_json(const FitResult& fit) {
  json j;
  j["params"] = fit.params;
  j["objective"] = fit.objective;
  j["grad_norm"] = fit.grad_norm;
  j["iters"] = fit.iters;
  j["exit_reason"] = to_string(fit.exit_reason);
  return j;
}

json to_json(const SeriesStats& st) {
  json j;
  j["min_gap"] = st.min_gap;
  j["max_gap"] = st.max_gap;
  j["max_slope"] = st.max_slope;
  j["t_first"] = st.t_first;
  j["t_last"] = st.t_last;
  return j;
}

json to_json(const ErrorCertificate& cert) {
  json j;
  j["max_gap"] = cert.max_gap;
  j["max_slope"] = cert.max_slope;
  j["objective_m"] = cert.objective;
  j["lipschitz"] = {{"value", cert.lipschitz.value},
                    {"method", cert.lipschitz.method},
                    {"samples", cert.lipschitz.samples},
                    {"inflation", cert.lipschitz.inflation},
                    {"safety", cert.lipschitz.safety}};
  j["rhs_bound"] = cert.rhs_bound;
  if (std::isfinite(cert.direct_rhs_max)) j["direct_rhs_max"] = cert.direct_rhs_max;
  j["segment_deviation_bound"] = cert.segment_deviation_bound;
  j["t_origin"] = cert.t_origin;
  j["t_horizon"] = cert.t_horizon;
  j["bound_at_horizon"] = cert.eval(cert.t_horizon);
  return j;
}

struct DescentFlags {
  DescentOptions opts;
  std::uint64_t seed = 12345;
  int threads = 1;
  std::string constraint_text = "none";
  std::string out_dir = ".";
  bool trace = false;

  void attach(CLI::App* cmd, bool with_constraint = true) {
    cmd->add_option("--step", opts.step, "Initial step size")->capture_default_str();
    cmd->add_option("--shrink", opts.shrink, "Step factor after a rejected trial")
        ->capture_default_str();
    cmd->add_option("--grow", opts.grow, "Step factor after an accepted step")
        ->capture_default_str();
    cmd->add_option("--grad-tol", opts.grad_tol, "Stop when ||grad||_inf < grad-tol")
        ->capture_default_str();
    cmd->add_option("--f-tol", opts.f_tol, "Stop when the relative decrease < f-tol")
        ->capture_default_str();
    cmd->add_option("--max-iters", opts.max_iters, "Trial-step cap")->capture_default_str();
    cmd->add_option("--min-step", opts.min_step, "Stagnation threshold for the step")
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Seed for randomized starts")->capture_default_str();
    cmd->add_option("--threads", threads, "Concurrency cap for multi-start work")
        ->capture_default_str();
    cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
    cmd->add_flag("--trace", trace, "Export the accepted-step trace as trace.csv");
    if (with_constraint)
      cmd->add_option("--constraint", constraint_text,
                      "Projection: none, unit-norm, or pin:<k>=<v>")
          ->capture_default_str();
  }

  ConstraintMode constraint() const { return parse_constraint(constraint_text); }

  json echo() const {
    json j;
    j["step"] = opts.step;
    j["shrink"] = opts.shrink;
    j["grow"] = opts.grow;
    j["grad_tol"] = opts.grad_tol;
    j["f_tol"] = opts.f_tol;
    j["max_iters"] = opts.max_iters;
    j["min_step"] = opts.min_step;
    j["seed"] = seed;
    j["threads"] = threads;
    j["constraint"] = constraint_text;
    j["out"] = out_dir;
    j["trace"] = trace;
    return j;
  }
};

class OutputWriter {
public:
  explicit OutputWriter(const std::string& dir) : dir_(dir) {}

  fs::path write(const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    out.close();
    if (!out) throw IoError("write failed for " + path.string());
    written_.push_back(path);
    return path;
  }

  void remove_all_written() {
    for (const fs::path& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    written_.clear();
  }

  const std::vector<fs::path>& written() const { return written_; }

private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

/// Runs single-start descent or shotgun depending on which flags were given.
FitResult run_fit(const Objective& obj, const std::string& start_text,
                  const std::string& box_text, int starts, const DescentFlags& flags,
                  json& result, bool record_all = true) {
  const ConstraintMode constraint = flags.constraint();
  DescentOptions opts = flags.opts;
  opts.record_trace = flags.trace;
  if (!start_text.empty() && !box_text.empty())
    throw ValidationError("give either --start or --box/--starts, not both");
  if (start_text.empty() && box_text.empty())
    throw ValidationError("a fit needs --start or --box");
  if (!start_text.empty()) {
    std::vector<double> start = parse_vector(start_text, "--start");
    return steepest_descent(obj, start, opts, constraint);
  }
  const Box box = parse_box(box_text);
  auto [best, all] = shotgun(obj, box, starts, opts, flags.seed, constraint, flags.threads);
  if (record_all) {
    json runs = json::array();
    for (const FitResult& fit : all) {
      json run;
      run["params"] = fit.params;
      run["objective"] = fit.objective;
      run["exit_reason"] = to_string(fit.exit_reason);
      runs.push_back(std::move(run));
    }
    result["shotgun_runs"] = std::move(runs);
  }
  return best;
}

std::string csv_of_trace(const FitResult& fit) {
  std::ostringstream out;
  save_trace_csv(fit, out);
  return out.str();
}

template <typename BoundFn>
std::string csv_of_bound(std::span<const double> times, BoundFn&& fn) {
  std::ostringstream out;
  save_bound_csv(times, fn, out);
  return out.str();
}

void print_fit(const char* label, const FitResult& fit) {
  std::cout << label << ": params = [";
  for (std::size_t k = 0; k < fit.params.size(); ++k)
    std::cout << (k ? ", " : "") << format_double(fit.params[k]);
  std::cout << "], F = " << format_double(fit.objective) << ", "
            << to_string(fit.exit_reason) << " after " << fit.iters << " trial steps\n";
}

int run_main(int argc, char** argv) {
  CLI::App app{"modelfit: identify parametric models (functions, ODE right-hand sides, "
               "constant-coefficient PDEs) from observed data by steepest descent, with "
               "a-posteriori error certificates"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML config file");

  // shared option storage; each subcommand binds what it uses
  std::string data_path, grid_path, model_text, model2_text;
  std::string start_text, start2_text, box_text, coeffs_text, terms_text;
  int params = 0, params2 = 0, state_dim = -1, starts = 16, resolution = 16;
  bool include_constant = false;
  double epsilon = 0.0;
  double t0 = 0.0, t_end = 0.0, step_h = 0.0;
  std::string x0_text;
  double delta_cap = 0.0, lipschitz_cap = 0.0;

  DescentFlags fit_fn_flags, fit_ode_flags, fit_pde_flags, certify_flags, compare_flags,
      noise_flags, basin_flags, sim_flags;

  json report;
  report["artifact"] = {{"name", "modelfit"}, {"version", kVersion}};

  // ---- fit-fn ----
  CLI::App* fit_fn = app.add_subcommand("fit-fn", "Fit f(a, t) to (t, x) samples");
  fit_fn->add_option("--data", data_path, "CSV with header t,x1,...,xd")->required();
  fit_fn->add_option("--model", model_text, "Expression in a<k>, t")->required();
  fit_fn->add_option("--params", params, "Parameter count p")->required();
  fit_fn->add_option("--start", start_text, "Start vector v1,v2,...");
  fit_fn->add_option("--box", box_text, "Shotgun box lo:hi,lo:hi,...");
  fit_fn->add_option("--starts", starts, "Shotgun start count")->capture_default_str();
  fit_fn_flags.attach(fit_fn);

  // ---- fit-ode ----
  CLI::App* fit_ode = app.add_subcommand("fit-ode", "Fit x' = f(a, t, x) to samples");
  fit_ode->add_option("--data", data_path, "CSV with header t,x1,...,xd")->required();
  fit_ode->add_option("--model", model_text, "Expression in a<k>, t, x<k>")->required();
  fit_ode->add_option("--params", params, "Parameter count p")->required();
  fit_ode->add_option("--state-dim", state_dim, "State dimension (defaults to data dim)");
  fit_ode->add_option("--start", start_text, "Start vector");
  fit_ode->add_option("--box", box_text, "Shotgun box lo:hi,...");
  fit_ode->add_option("--starts", starts, "Shotgun start count")->capture_default_str();
  fit_ode_flags.attach(fit_ode);

  // ---- fit-pde ----
  CLI::App* fit_pde = app.add_subcommand(
      "fit-pde", "Fit constant coefficients of sum_k a_k D^k u (+ c) = 0 on a grid");
  fit_pde->add_option("--grid", grid_path, "CSV with header x,t,u")->required();
  fit_pde->add_option("--terms", terms_text, "Comma list from ux, uxx, ut, utt")->required();
  fit_pde->add_flag("--include-constant", include_constant,
                    "Append the constant c as a trailing fitted coefficient");
  fit_pde->add_option("--start", start_text, "Start vector (default: all ones)");
  fit_pde_flags.attach(fit_pde);

  // ---- certify ----
  CLI::App* certify = app.add_subcommand(
      "certify", "Fit an ODE model, then emit the a-posteriori error certificate");
  certify->add_option("--data", data_path, "CSV with header t,x1,...,xd")->required();
  certify->add_option("--model", model_text, "Expression in a<k>, t, x<k>")->required();
  certify->add_option("--params", params, "Parameter count p")->required();
  certify->add_option("--state-dim", state_dim, "State dimension (defaults to data dim)");
  certify->add_option("--start", start_text, "Start vector");
  certify->add_option("--box", box_text, "Shotgun box lo:hi,...");
  certify->add_option("--starts", starts, "Shotgun start count")->capture_default_str();
  certify_flags.attach(certify);

  // ---- compare ----
  CLI::App* compare = app.add_subcommand(
      "compare", "Fit two ODE models on the same data and bound how far their solutions "
                 "can drift apart");
  compare->add_option("--data", data_path, "CSV with header t,x1,...,xd")->required();
  compare->add_option("--model", model_text, "First model")->required();
  compare->add_option("--params", params, "First model parameter count")->required();
  compare->add_option("--start", start_text, "First model start vector")->required();
  compare->add_option("--model2", model2_text, "Second model")->required();
  compare->add_option("--params2", params2, "Second model parameter count")->required();
  compare->add_option("--start2", start2_text, "Second model start vector")->required();
  compare->add_option("--state-dim", state_dim, "State dimension (defaults to data dim)");
  compare->add_option("--delta-cap", delta_cap,
                      "Optional uniform cap: both objectives must be below delta^2");
  compare->add_option("--lipschitz-cap", lipschitz_cap,
                      "Optional uniform cap on both Lipschitz constants");
  compare_flags.attach(compare, false);

  // ---- noise ----
  CLI::App* noise = app.add_subcommand(
      "noise", "Fit data and its +/- epsilon shifts; emit the noise envelope");
  noise->add_option("--data", data_path, "CSV with header t,x1,...,xd")->required();
  noise->add_option("--model", model_text, "Expression in a<k>, t, x<k>")->required();
  noise->add_option("--params", params, "Parameter count p")->required();
  noise->add_option("--state-dim", state_dim, "State dimension (defaults to data dim)");
  noise->add_option("--start", start_text, "Start vector for the center fit")->required();
  noise->add_option("--epsilon", epsilon, "Measurement error bound")->required();
  noise_flags.attach(noise);

  // ---- basin ----
  CLI::App* basin = app.add_subcommand(
      "basin", "Map basins of attraction of a 2-parameter ODE objective over a box");
  basin->add_option("--data", data_path, "CSV with header t,x1,...,xd")->required();
  basin->add_option("--model", model_text, "Expression in a<k>, t, x<k>")->required();
  basin->add_option("--params", params, "Parameter count p (must be 2)")->required();
  basin->add_option("--state-dim", state_dim, "State dimension (defaults to data dim)");
  basin->add_option("--box", box_text, "Box lo:hi,lo:hi")->required();
  basin->add_option("--resolution", resolution, "Grid nodes per axis")->capture_default_str();
  basin_flags.attach(basin);

  // ---- simulate ----
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Integrate a fitted model with fixed-step RK4 and export the trajectory");
  simulate->add_option("--model", model_text, "Expression in a<k>, t, x<k>")->required();
  simulate->add_option("--params", params, "Parameter count p")->required();
  simulate->add_option("--coeffs", coeffs_text, "Parameter values v1,v2,...")->required();
  simulate->add_option("--data", data_path,
                       "Optional CSV; supplies the initial condition and time window");
  simulate->add_option("--state-dim", state_dim, "State dimension (defaults to data dim)");
  simulate->add_option("--t0", t0, "Initial time (overrides --data)");
  simulate->add_option("--x0", x0_text, "Initial state v1,... (overrides --data)");
  simulate->add_option("--t-end", t_end, "Final time (overrides --data)");
  simulate->add_option("--dt", step_h, "RK4 step (default min(min_gap, 1e-3) * 0.1)");
  sim_flags.attach(simulate, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2; // config/validation
  }

  const auto t_start = std::chrono::steady_clock::now();
  std::optional<OutputWriter> writer; // outlives the try so cleanup sees written files

  auto finish = [&](json result) -> int {
    report["result"] = std::move(result);
    const auto elapsed = std::chrono::steady_clock::now() - t_start;
    report["timings"] = {
        {"total_seconds",
         std::chrono::duration_cast<std::chrono::duration<double>>(elapsed).count()}};
    const fs::path path = writer->write("report.json", report.dump(2) + "\n");
    std::cout << "report: " << path.string() << "\n";
    return 0;
  };

  try {
    if (*fit_fn || *fit_ode || *certify) {
      const bool is_fn = static_cast<bool>(*fit_fn);
      const bool is_certify = static_cast<bool>(*certify);
      DescentFlags& flags = is_fn ? fit_fn_flags : (is_certify ? certify_flags : fit_ode_flags);
      writer.emplace(flags.out_dir);

      const TimeSeries ts = load_series_file(data_path);
      const int n = is_fn ? 0 : (state_dim < 0 ? ts.dim : state_dim);
      const ModelExpr model = parse_model(model_text, params, n);
      const Objective obj = is_fn ? fn_fit_objective(model, ts) : ode_objective(model, ts);
      const SeriesStats stats = series_stats(ts);

      json config = flags.echo();
      config["subcommand"] = is_fn ? "fit-fn" : (is_certify ? "certify" : "fit-ode");
      config["data"] = data_path;
      config["model"] = model_text;
      config["params"] = params;
      config["state_dim"] = n;
      config["start"] = start_text;
      config["box"] = box_text;
      config["starts"] = starts;
      report["config"] = config;

      json result;
      const FitResult fit = run_fit(obj, start_text, box_text, starts, flags, result);
      result["fit"] = to_json(fit);
      result["stats"] = to_json(stats);
      print_fit("fit", fit);
      if (is_certify) {
        const ErrorCertificate cert = build_certificate(model, fit.params, ts);
        result["certificate"] = to_json(cert);
        std::cout << "certificate: L = " << format_double(cert.lipschitz.value)
                  << ", bound(t_last) = " << format_double(cert.eval(cert.t_horizon)) << "\n";
        writer->write("bound.csv",
                     csv_of_bound(ts.times, [&](double t) { return cert.eval(t); }));
      }
      if (flags.trace) writer->write("trace.csv", csv_of_trace(fit));
      return finish(std::move(result));
    }

    if (*fit_pde) {
      DescentFlags& flags = fit_pde_flags;
      writer.emplace(flags.out_dir);

      const GridField grid = load_grid_file(grid_path);
      const std::vector<PdeTerm> terms = parse_terms(terms_text);
      const ConstraintMode constraint = flags.constraint();
      const Objective obj = pde_objective(terms, grid, constraint, include_constant);
      if (constraint.kind == ConstraintMode::Kind::none)
        std::cerr << "warning: with --constraint none the coefficient vector a = 0 is the "
                     "trivial global minimum of the homogeneous residual; cap the "
                     "iterations or use unit-norm / pin:<k>=<v> for a well-posed run\n";

      std::vector<double> start(static_cast<std::size_t>(obj.dim), 1.0);
      if (!start_text.empty()) start = parse_vector(start_text, "--start");
      DescentOptions opts = flags.opts;
      opts.record_trace = flags.trace;

      json config = flags.echo();
      config["subcommand"] = "fit-pde";
      config["grid"] = grid_path;
      config["terms"] = terms_string(terms);
      config["include_constant"] = include_constant;
      config["start"] = start;
      report["config"] = config;

      const FitResult fit = steepest_descent(obj, start, opts, constraint);
      json result;
      result["fit"] = to_json(fit);
      if (obj.dim >= 3 && fit.params[2] != 0.0)
        result["ratio_a2_over_a3"] = fit.params[1] / fit.params[2];
      print_fit("fit", fit);
      if (flags.trace) writer->write("trace.csv", csv_of_trace(fit));
      return finish(std::move(result));
    }

    if (*compare) {
      DescentFlags& flags = compare_flags;
      writer.emplace(flags.out_dir);

      const TimeSeries ts = load_series_file(data_path);
      const int n = state_dim < 0 ? ts.dim : state_dim;
      const ModelExpr first = parse_model(model_text, params, n);
      const ModelExpr second = parse_model(model2_text, params2, n);

      json config = flags.echo();
      config["subcommand"] = "compare";
      config["data"] = data_path;
      config["model"] = model_text;
      config["params"] = params;
      config["model2"] = model2_text;
      config["params2"] = params2;
      config["state_dim"] = n;
      config["start"] = start_text;
      config["start2"] = start2_text;
      if (delta_cap > 0.0) config["delta_cap"] = delta_cap;
      if (lipschitz_cap > 0.0) config["lipschitz_cap"] = lipschitz_cap;
      report["config"] = config;

      DescentOptions opts = flags.opts;
      const FitResult fit1 = steepest_descent(ode_objective(first, ts),
                                              parse_vector(start_text, "--start"), opts);
      const FitResult fit2 = steepest_descent(ode_objective(second, ts),
                                              parse_vector(start2_text, "--start2"), opts);
      const ErrorCertificate cert1 = build_certificate(first, fit1.params, ts);
      const ErrorCertificate cert2 = build_certificate(second, fit2.params, ts);
      const ComparisonBound bound = compare_models(cert1, cert2);

      json result;
      result["fit_first"] = to_json(fit1);
      result["fit_second"] = to_json(fit2);
      result["certificate_first"] = to_json(cert1);
      result["certificate_second"] = to_json(cert2);
      result["bound_at_horizon"] = bound.eval(cert1.t_horizon);
      if (delta_cap > 0.0 && lipschitz_cap > 0.0) {
        const CappedComparisonBound capped =
            compare_models_capped(cert1, cert2, delta_cap, lipschitz_cap);
        result["capped_bound_at_horizon"] = capped.eval(cert1.t_horizon);
      }
      print_fit("first", fit1);
      print_fit("second", fit2);
      std::cout << "comparison bound(t_last) = " << format_double(bound.eval(cert1.t_horizon))
                << "\n";
      writer->write("bound.csv",
                   csv_of_bound(ts.times, [&](double t) { return bound.eval(t); }));
      return finish(std::move(result));
    }

    if (*noise) {
      DescentFlags& flags = noise_flags;
      writer.emplace(flags.out_dir);

      const TimeSeries ts = load_series_file(data_path);
      const int n = state_dim < 0 ? ts.dim : state_dim;
      const ModelExpr model = parse_model(model_text, params, n);

      json config = flags.echo();
      config["subcommand"] = "noise";
      config["data"] = data_path;
      config["model"] = model_text;
      config["params"] = params;
      config["state_dim"] = n;
      config["start"] = start_text;
      config["epsilon"] = epsilon;
      report["config"] = config;

      const NoiseEnvelope env =
          noise_analysis(model, ts, epsilon, parse_vector(start_text, "--start"),
                         flags.opts, flags.constraint());
      json result;
      result["epsilon"] = env.epsilon;
      result["center_fit"] = to_json(env.center_fit);
      result["lower_fit"] = to_json(env.lower_fit);
      result["upper_fit"] = to_json(env.upper_fit);
      result["lower_refit_distance"] = env.lower_refit_distance;
      result["upper_refit_distance"] = env.upper_refit_distance;
      result["certificate_center"] = to_json(env.center);
      result["certificate_lower"] = to_json(env.lower);
      result["certificate_upper"] = to_json(env.upper);
      result["envelope_at_horizon"] = env.eval(env.center.t_horizon);
      print_fit("center", env.center_fit);
      std::cout << "refit distances: lower " << format_double(env.lower_refit_distance)
                << ", upper " << format_double(env.upper_refit_distance) << "\n";
      std::cout << "envelope(t_last) = " << format_double(env.eval(env.center.t_horizon))
                << "\n";
      writer->write("envelope.csv",
                   csv_of_bound(ts.times, [&](double t) { return env.eval(t); }));
      return finish(std::move(result));
    }

    if (*basin) {
      DescentFlags& flags = basin_flags;
      writer.emplace(flags.out_dir);

      const TimeSeries ts = load_series_file(data_path);
      const int n = state_dim < 0 ? ts.dim : state_dim;
      const ModelExpr model = parse_model(model_text, params, n);
      const Objective obj = ode_objective(model, ts);
      const Box box = parse_box(box_text);

      json config = flags.echo();
      config["subcommand"] = "basin";
      config["data"] = data_path;
      config["model"] = model_text;
      config["params"] = params;
      config["state_dim"] = n;
      config["box"] = box_text;
      config["resolution"] = resolution;
      report["config"] = config;

      const BasinGrid grid =
          basin_map(obj, box, resolution, flags.opts, flags.constraint(), flags.threads);
      json result;
      result["resolution"] = grid.resolution;
      result["cluster_radius"] = grid.cluster_radius;
      result["distinct_labels"] = grid.minima.size();
      json minima = json::array();
      for (const auto& m : grid.minima) minima.push_back(m);
      result["minima"] = std::move(minima);
      std::cout << "basin: " << grid.minima.size() << " distinct minima over "
                << resolution << "x" << resolution << " starts\n";
      std::ostringstream csv;
      save_basin_csv(grid, csv);
      writer->write("basin.csv", csv.str());
      return finish(std::move(result));
    }

    if (*simulate) {
      DescentFlags& flags = sim_flags;
      writer.emplace(flags.out_dir);

      std::optional<TimeSeries> ts;
      if (!data_path.empty()) ts = load_series_file(data_path);
      const int n = state_dim >= 0 ? state_dim : (ts ? ts->dim : 1);
      const ModelExpr model = parse_model(model_text, params, n);
      const std::vector<double> coeffs = parse_vector(coeffs_text, "--coeffs");

      double sim_t0 = t0, sim_t_end = t_end, h = step_h;
      std::vector<double> x0;
      if (ts) {
        if (simulate->count("--t0") == 0) sim_t0 = ts->times.front();
        if (simulate->count("--t-end") == 0) sim_t_end = ts->times.back();
        if (x0_text.empty()) x0.assign(ts->state(0).begin(), ts->state(0).end());
        if (h <= 0.0) h = std::min(series_stats(*ts).min_gap, 1e-3) * 0.1;
      }
      if (!x0_text.empty()) x0 = parse_vector(x0_text, "--x0");
      if (x0.empty()) throw ValidationError("simulate needs --x0 or --data");
      if (h <= 0.0) throw ValidationError("simulate needs --dt (no data to derive it from)");

      json config = flags.echo();
      config["subcommand"] = "simulate";
      config["model"] = model_text;
      config["params"] = params;
      config["state_dim"] = n;
      config["coeffs"] = coeffs;
      config["t0"] = sim_t0;
      config["t_end"] = sim_t_end;
      config["x0"] = x0;
      config["h"] = h;
      if (!data_path.empty()) config["data"] = data_path;
      report["config"] = config;

      const Trajectory traj = rk4_solve(model, coeffs, sim_t0, x0, sim_t_end, h);
      json result;
      result["samples"] = traj.sample_count();
      result["truncated"] = traj.truncated;
      result["t_final"] = traj.times.back();
      std::cout << "simulate: " << traj.sample_count() << " samples, reached t = "
                << format_double(traj.times.back()) << (traj.truncated ? " (truncated)" : "")
                << "\n";
      std::ostringstream csv;
      save_trajectory_csv(traj, csv);
      writer->write("trajectory.csv", csv.str());
      return finish(std::move(result));
    }
  } catch (...) {
    if (writer) writer->remove_all_written();
    throw;
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "error (numeric): " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "error (model): " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
