// Command-line front end: built-in or expression-file problems, the
// integrate / converge / kinkstep / energy / estimate experiments, and
// CSV or JSON emission.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "plode/control.hpp"
#include "plode/expr.hpp"
#include "plode/problems.hpp"

using json = nlohmann::ordered_json;
using namespace plode;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numeric = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    json metadata = json::object();

    void row(std::initializer_list<std::string> cells) { rows.emplace_back(cells); }
};

void write_csv(const Table& t, std::ostream& out) {
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        out << (i ? "," : "") << t.columns[i];
    out << "\n";
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
        out << "\n";
    }
    for (const auto& [key, value] : t.metadata.items())
        out << "# " << key << " = " << (value.is_string() ? value.get<std::string>() : value.dump())
            << "\n";
}

void write_json(const Table& t, std::ostream& out) {
    json doc;
    doc["metadata"] = t.metadata;
    doc["columns"] = t.columns;
    json rows = json::array();
    for (const auto& r : t.rows) {
        json obj = json::object();
        for (std::size_t i = 0; i < r.size(); ++i) obj[t.columns[i]] = r[i];
        rows.push_back(std::move(obj));
    }
    doc["rows"] = std::move(rows);
    out << doc.dump(2) << "\n";
}

void emit(const Table& t, const std::string& path, const std::string& format) {
    std::ostringstream buf;
    if (format == "json")
        write_json(t, buf);
    else
        write_csv(t, buf);
    if (path.empty() || path == "-") {
        std::cout << buf.str();
        return;
    }
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open output file '" + path + "'");
    f << buf.str();
}

// ---------------------------------------------------------------------------
// Shared option plumbing

struct CommonOpts {
    std::string problem;
    std::string expr_file;
    std::string method = "generalized";
    double fp_atol = -1.0;  // <0: problem default
    double fp_rtol = -1.0;
    std::string out;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_problem) {
    // --h is a real option here, so help must not claim the short -h
    cmd->set_help_flag("--help", "print this help message and exit");
    if (needs_problem) {
        cmd->add_option("--problem", o.problem,
                        "built-in problem: rolling_stone, diode, abslinear");
        cmd->add_option("--expr", o.expr_file, "expression file defining the right hand side");
    }
    cmd->add_option("--method", o.method, "classical, generalized or midpoint")
        ->check(CLI::IsMember({"classical", "generalized", "midpoint"}));
    cmd->add_option("--fp-atol", o.fp_atol, "fixed-point absolute tolerance");
    cmd->add_option("--fp-rtol", o.fp_rtol, "fixed-point relative tolerance");
    cmd->add_option("--out", o.out, "output path (default stdout)");
    cmd->add_option("--format", o.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
}

Method parse_method(const std::string& m) {
    if (m == "classical") return Method::classical;
    if (m == "generalized") return Method::generalized;
    if (m == "midpoint") return Method::midpoint;
    throw ConfigError("unknown method '" + m + "'");
}

Problem load_problem(const CommonOpts& o) {
    if (!o.problem.empty() && !o.expr_file.empty())
        throw ConfigError("--problem and --expr are mutually exclusive");
    if (!o.problem.empty()) {
        if (o.problem == "rolling_stone") return rolling_stone();
        if (o.problem == "diode") return diode_circuit();
        if (o.problem == "abslinear") return abslinear();
        throw ConfigError("unknown problem '" + o.problem + "'");
    }
    if (!o.expr_file.empty()) {
        std::ifstream f(o.expr_file);
        if (!f) throw ConfigError("cannot read expression file '" + o.expr_file + "'");
        std::stringstream src;
        src << f.rdbuf();
        ExpressionProgram prog = split_program(src.str());
        Tape tape = record_program(prog);
        if (tape.n_inputs() != tape.n_outputs())
            throw ConfigError("expression program must define one expression per state");
        Problem p;
        p.name = o.expr_file;
        p.tape = std::make_shared<const Tape>(std::move(tape));
        p.x0 = prog.x0;
        p.t_end = 1.0;
        return p;
    }
    throw ConfigError("one of --problem or --expr is required");
}

FPOptions fp_options(const Problem& p, const CommonOpts& o) {
    FPOptions fp = p.default_fp;
    if (o.fp_atol >= 0.0) fp.atol = o.fp_atol;
    if (o.fp_rtol >= 0.0) fp.rtol = o.fp_rtol;
    return fp;
}

double horizon(const Problem& p, double t_end, double periods) {
    if (t_end > 0.0 && periods > 0.0)
        throw ConfigError("--t-end and --periods are mutually exclusive");
    if (t_end > 0.0) return t_end;
    if (periods > 0.0) {
        if (p.period <= 0.0) throw ConfigError("problem has no natural period");
        return periods * p.period;
    }
    return p.t_end;
}

json config_echo(const CommonOpts& o) {
    json cfg;
    if (!o.problem.empty()) cfg["problem"] = o.problem;
    if (!o.expr_file.empty()) cfg["expr"] = o.expr_file;
    cfg["method"] = o.method;
    cfg["format"] = o.format;
    return cfg;
}

// ---------------------------------------------------------------------------
// Subcommands

int run_integrate(const CommonOpts& o, double h, double t_end, double periods,
                  bool extrapolate, bool adaptive, double tol, std::uint64_t seed) {
    Problem p = load_problem(o);
    FPOptions fp = fp_options(p, o);
    double T = horizon(p, t_end, periods);
    if (adaptive == (h > 0.0))
        throw ConfigError("exactly one of --h and --adaptive/--tol must be given");

    Trajectory tr;
    if (adaptive) {
        if (tol <= 0.0) throw ConfigError("--adaptive requires a positive --tol");
        double radius = std::max(1.0, 2.0 * (1.0 + norm_inf(p.x0)));
        LipschitzEstimates consts = estimate_constants(*p.tape, p.x0, radius, 400, seed);
        AdaptiveOptions opt;
        tr = integrate_adaptive(p.ivp(T), tol, consts, fp, opt);
    } else {
        tr = integrate_fixed(p.ivp(T), h, parse_method(o.method), extrapolate, fp);
    }

    Table table;
    table.columns.push_back("t");
    for (std::size_t k = 0; k < p.x0.size(); ++k)
        table.columns.push_back("x" + std::to_string(k + 1));
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        std::vector<std::string> cells{fmt(tr.times[i])};
        for (double v : tr.states[i]) cells.push_back(fmt(v));
        table.rows.push_back(std::move(cells));
    }
    table.metadata["config"] = config_echo(o);
    table.metadata["accepted"] = tr.stats.accepted;
    table.metadata["rejected"] = tr.stats.rejected;
    table.metadata["fp_iterations"] = tr.stats.fp_iterations;
    emit(table, o.out, o.format);
    if (!tr.completed) throw NumericError("integration failed: " + tr.diagnostic);
    return exit_ok;
}

int run_converge(const CommonOpts& o, double h0, int levels, double t_end, double periods,
                 bool extrapolate) {
    if (h0 <= 0.0) throw ConfigError("--h0 must be positive");
    if (levels < 2) throw ConfigError("--levels must be at least 2");
    Problem p = load_problem(o);
    FPOptions fp = fp_options(p, o);
    double T = horizon(p, t_end, periods);

    std::vector<double> hs;
    for (int k = 0; k < levels; ++k) hs.push_back(h0 / std::pow(2.0, k));
    ConvergenceResult res;
    try {
        res = convergence_study(p, parse_method(o.method), extrapolate, hs, T, &fp);
    } catch (const std::runtime_error& e) {
        throw NumericError(e.what());
    }

    Table table;
    table.columns = {"h", "error", "order"};
    for (const auto& r : res.rows)
        table.row({fmt(r.h), fmt(r.error), fmt(r.order)});
    table.metadata["config"] = config_echo(o);
    table.metadata["fitted_order"] = fmt(res.fitted_order);
    emit(table, o.out, o.format);
    return exit_ok;
}

int run_kinkstep(const CommonOpts& o, double a, double b, double theta, double h0,
                 int levels) {
    if (h0 <= 0.0) throw ConfigError("--h0 must be positive");
    if (levels < 1) throw ConfigError("--levels must be at least 1");
    Problem probe = abslinear(a, b);  // validates the slopes
    FPOptions fp = fp_options(probe, o);
    if (o.fp_atol < 0.0) fp.atol = 1e-15;
    if (o.fp_rtol < 0.0) fp.rtol = 1e-15;

    std::vector<double> hs;
    for (int k = 0; k < levels; ++k) hs.push_back(h0 / std::pow(2.0, k));
    std::vector<KinkStepRow> rows;
    try {
        rows = kink_step_study(a, b, theta, hs, fp);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const std::runtime_error& e) {
        throw NumericError(e.what());
    }

    Table table;
    table.columns = {"method", "h", "error", "err_h2", "err_h3"};
    for (const auto& r : rows)
        table.row({r.method, fmt(r.h), fmt(r.error), fmt(r.err_h2), fmt(r.err_h3)});
    table.metadata["config"] = config_echo(o);
    table.metadata["a"] = fmt(a);
    table.metadata["b"] = fmt(b);
    table.metadata["theta"] = fmt(theta);
    emit(table, o.out, o.format);
    return exit_ok;
}

int run_energy(const CommonOpts& o, double h, double periods) {
    if (h <= 0.0) throw ConfigError("--h must be positive");
    Problem p = load_problem(o);
    FPOptions fp = fp_options(p, o);
    double n_periods = periods > 0.0 ? periods : 1.0;

    EnergyStudyResult res;
    try {
        res = energy_study(p, parse_method(o.method), h, n_periods, fp);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const std::runtime_error& e) {
        throw NumericError(e.what());
    }

    Table table;
    table.columns = {"step", "t", "energy", "deviation"};
    for (std::size_t i = 0; i < res.times.size(); ++i)
        table.row({std::to_string(i), fmt(res.times[i]), fmt(res.energies[i]),
                   fmt(i == 0 ? 0.0 : res.deviations[i - 1])});
    table.metadata["config"] = config_echo(o);
    table.metadata["metric"] = fmt(res.metric);
    emit(table, o.out, o.format);
    return exit_ok;
}

int run_estimate(const CommonOpts& o, double tol, double t_end, double periods,
                 std::uint64_t seed) {
    if (tol <= 0.0) throw ConfigError("--tol must be positive");
    Problem p = load_problem(o);
    FPOptions fp = fp_options(p, o);
    double T = horizon(p, t_end, periods);
    double radius = std::max(1.0, 2.0 * (1.0 + norm_inf(p.x0)));
    LipschitzEstimates consts = estimate_constants(*p.tape, p.x0, radius, 400, seed);
    Trajectory tr = integrate_adaptive(p.ivp(T), tol, consts, fp);

    Table table;
    table.columns = {"t", "h", "estimate", "term_curvature", "term_deviation", "accepted"};
    for (const auto& e : tr.estimates)
        table.row({fmt(e.t), fmt(e.h), fmt(e.total), fmt(e.term_curvature),
                   fmt(e.term_deviation), e.accepted ? "1" : "0"});
    table.metadata["config"] = config_echo(o);
    table.metadata["beta"] = fmt(consts.beta);
    table.metadata["gamma"] = fmt(consts.gamma);
    table.metadata["accepted"] = tr.stats.accepted;
    table.metadata["rejected"] = tr.stats.rejected;
    emit(table, o.out, o.format);
    if (!tr.completed) throw NumericError("integration failed: " + tr.diagnostic);
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"piecewise-linearization ODE toolkit"};
    app.set_help_flag("--help", "print this help message and exit");
    app.require_subcommand(1);

    CommonOpts integrate_o, converge_o, kink_o, energy_o, estimate_o;
    double h = 0.0, t_end = 0.0, periods = 0.0, tol = 0.0, h0 = 0.0;
    double a = 2.25, b = -1.25, theta = 0.25;
    int levels = 6;
    bool extrapolate = false, adaptive = false;
    std::uint64_t seed = 0;

    CLI::App* ci = app.add_subcommand("integrate", "integrate an initial value problem");
    add_common(ci, integrate_o, true);
    ci->add_option("--h", h, "fixed step size");
    ci->add_option("--t-end", t_end, "integration horizon");
    ci->add_option("--periods", periods, "horizon in problem periods");
    ci->add_option("--tol", tol, "adaptive error tolerance");
    ci->add_flag("--extrapolate", extrapolate, "report Richardson-extrapolated states");
    ci->add_flag("--adaptive", adaptive, "adaptive step-size control (requires --tol)");
    ci->add_option("--seed", seed, "sampling seed for the estimator constants");

    CLI::App* cc = app.add_subcommand("converge", "global-error convergence study");
    add_common(cc, converge_o, true);
    cc->add_option("--h0", h0, "coarsest step size")->required();
    cc->add_option("--levels", levels, "number of halvings");
    cc->add_option("--t-end", t_end, "integration horizon");
    cc->add_option("--periods", periods, "horizon in problem periods");
    cc->add_flag("--extrapolate", extrapolate, "Richardson-extrapolated runs");

    CLI::App* ck = app.add_subcommand("kinkstep", "single-step truncation error at the kink");
    add_common(ck, kink_o, false);
    ck->add_option("--a", a, "abs coefficient");
    ck->add_option("--b", b, "linear coefficient");
    ck->add_option("--theta", theta, "kink crossing fraction");
    ck->add_option("--h0", h0, "coarsest step size")->required();
    ck->add_option("--levels", levels, "number of halvings");

    CLI::App* ce = app.add_subcommand("energy", "energy drift of a fixed-step run");
    add_common(ce, energy_o, true);
    ce->add_option("--h", h, "fixed step size")->required();
    ce->add_option("--periods", periods, "number of problem periods");

    CLI::App* cs = app.add_subcommand("estimate", "per-step error-estimator terms");
    add_common(cs, estimate_o, true);
    cs->add_option("--tol", tol, "adaptive error tolerance")->required();
    cs->add_option("--t-end", t_end, "integration horizon");
    cs->add_option("--periods", periods, "horizon in problem periods");
    cs->add_option("--seed", seed, "sampling seed for the estimator constants");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (ci->parsed())
            return run_integrate(integrate_o, h, t_end, periods, extrapolate, adaptive, tol, seed);
        if (cc->parsed()) return run_converge(converge_o, h0, levels, t_end, periods, extrapolate);
        if (ck->parsed()) return run_kinkstep(kink_o, a, b, theta, h0, levels);
        if (ce->parsed()) return run_energy(energy_o, h, periods);
        if (cs->parsed()) return run_estimate(estimate_o, tol, t_end, periods, seed);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const FixedPointDivergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numeric;
    }
    return exit_config;
}
