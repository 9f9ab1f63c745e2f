// tsint: Riemann-Stieltjes delta integrals and dynamic inequality checks on
// bounded time scales.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsint/fuzz.hpp"
#include "tsint/inequality.hpp"
#include "tsint/integrate.hpp"
#include "tsint/scale_parse.hpp"

using namespace tsint;

namespace {

// fully-resolved run configuration; every report embeds it so results are
// replayable
struct RunConfig {
    std::string command;
    std::string scale, scale2;
    std::map<std::string, std::string> exprs; // f,g,p,x,y,f1,f2,g1,g2
    std::string F, kink = "mid";
    std::string inequality;
    std::string order = "similar";
    std::string iter_order = "ts";
    std::string via = "direct";
    std::optional<double> a, b, c, d;
    double tol = 1e-8;
    uint64_t seed = 0;
    int trials = 100;
    double t = 0;  // derive
    double h0 = 0; // derive
    double q = 2;  // example-qscale
    std::string format = "json";

    Json to_json() const {
        Json j;
        j["command"] = command;
        if (!scale.empty()) j["scale"] = scale;
        if (!scale2.empty()) j["scale2"] = scale2;
        if (!exprs.empty()) {
            Json e = Json::object();
            for (const auto& [k, v] : exprs) e[k] = v;
            j["exprs"] = e;
        }
        if (!F.empty()) {
            j["F"] = F;
            j["kink"] = kink;
        }
        if (!inequality.empty()) {
            j["inequality"] = inequality;
            j["order"] = order;
        }
        if (command == "iterated") j["iter_order"] = iter_order;
        if (command == "eval") j["via"] = via;
        if (a) j["a"] = *a;
        if (b) j["b"] = *b;
        if (c) j["c"] = *c;
        if (d) j["d"] = *d;
        j["tol"] = tol;
        if (command == "fuzz" || command == "check") j["seed"] = seed;
        if (command == "fuzz") j["trials"] = trials;
        if (command == "derive") {
            j["t"] = t;
            j["h0"] = h0;
        }
        if (command == "example-qscale") j["q"] = q;
        j["format"] = format;
        return j;
    }

    static RunConfig from_json(const Json& j) {
        RunConfig c;
        c.command = j.at("command").get<std::string>();
        c.scale = j.value("scale", std::string());
        c.scale2 = j.value("scale2", std::string());
        if (j.contains("exprs"))
            for (auto it = j["exprs"].begin(); it != j["exprs"].end(); ++it)
                c.exprs[it.key()] = it.value().get<std::string>();
        c.F = j.value("F", std::string());
        c.kink = j.value("kink", std::string("mid"));
        c.inequality = j.value("inequality", std::string());
        c.order = j.value("order", std::string("similar"));
        c.iter_order = j.value("iter_order", std::string("ts"));
        c.via = j.value("via", std::string("direct"));
        if (j.contains("a")) c.a = j["a"].get<double>();
        if (j.contains("b")) c.b = j["b"].get<double>();
        if (j.contains("c")) c.c = j["c"].get<double>();
        if (j.contains("d")) c.d = j["d"].get<double>();
        c.tol = j.value("tol", 1e-8);
        c.seed = j.value("seed", uint64_t(0));
        c.trials = j.value("trials", 100);
        c.t = j.value("t", 0.0);
        c.h0 = j.value("h0", 0.0);
        c.q = j.value("q", 2.0);
        c.format = j.value("format", std::string("json"));
        return c;
    }

    std::string replay() const {
        std::string r = "tsint " + command;
        if (command == "check" || command == "fuzz") r += " " + inequality;
        if (!scale.empty())
            r += (command == "double" || command == "iterated" ? " --scale1 " : " --scale ") +
                 shell_quote(scale);
        if (!scale2.empty()) r += " --scale2 " + shell_quote(scale2);
        for (const auto& [k, v] : exprs) r += " --" + k + " " + shell_quote(v);
        if (!F.empty()) r += " --F " + F + " --kink " + kink;
        if (!inequality.empty() && command == "check") r += " --order " + order;
        if (command == "fuzz") r += " --order " + order;
        if (command == "iterated") r += " --iter-order " + iter_order;
        if (command == "eval" && via != "direct") r += " --via " + via;
        if (a) r += " --a " + format_double(*a);
        if (b) r += " --b " + format_double(*b);
        if (c) r += " --c " + format_double(*c);
        if (d) r += " --d " + format_double(*d);
        if (command == "derive") {
            r += " --t " + format_double(t);
            if (h0 > 0) r += " --h0 " + format_double(h0);
        }
        if (command == "example-qscale") r += " --q " + format_double(q);
        r += " --tol " + format_double(tol);
        if (command == "check" || command == "fuzz") r += " --seed " + std::to_string(seed);
        if (command == "fuzz") r += " --trials " + std::to_string(trials);
        if (format != "json") r += " --format " + format;
        return r;
    }
};

Json result_json(const IntegralResult& r) {
    return Json{{"value", r.value},   {"lower", r.lower},
                {"upper", r.upper},   {"gap", r.gap},
                {"tail_bound", r.tail_bound}, {"refinements", r.refinements},
                {"converged", r.converged}};
}

void print_text_result(const Json& j, int indent = 0) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string key = it.key();
        for (int i = 0; i < indent; ++i) std::printf("  ");
        if (it->is_object()) {
            std::printf("%s:\n", key.c_str());
            print_text_result(*it, indent + 1);
        } else {
            std::printf("%-14s %s\n", key.c_str(), it->dump().c_str());
        }
    }
}

void emit(const RunConfig& cfg, const Json& result) {
    Json out;
    out["command"] = cfg.command;
    out["config"] = cfg.to_json();
    out["replay"] = cfg.replay();
    out["result"] = result;
    if (cfg.format == "text") {
        std::printf("# %s\n", cfg.replay().c_str());
        print_text_result(result);
    } else {
        std::printf("%s\n", out.dump().c_str());
    }
    std::fflush(stdout);
}

std::pair<double, double> span_of(const TimeScale& T, const std::optional<double>& a,
                                  const std::optional<double>& b) {
    return {a ? *a : T.min(), b ? *b : T.max()};
}

int run_eval(RunConfig& cfg) {
    TimeScale T = parse_scale(cfg.scale);
    ExprFn f = ExprFn::parse(cfg.exprs.at("f"), 1);
    ExprFn g = ExprFn::parse(cfg.exprs.at("g"), 1);
    auto [a, b] = span_of(T, cfg.a, cfg.b);
    IntegrateOptions opt;
    opt.tol = cfg.tol;
    IntegralResult r = cfg.via == "transition"
                           ? rs_integral_via_transition(T, f, g, a, b, opt)
                           : rs_integral(T, f, g, a, b, opt);
    emit(cfg, result_json(r));
    return 0;
}

int run_double(RunConfig& cfg, bool iterated) {
    TimeScale T1 = parse_scale(cfg.scale);
    TimeScale T2 = parse_scale(cfg.scale2.empty() ? cfg.scale : cfg.scale2);
    ExprFn f = ExprFn::parse(cfg.exprs.at("f"), 2);
    ExprFn g1 = ExprFn::parse(cfg.exprs.at("g1"), 1);
    ExprFn g2 = ExprFn::parse(cfg.exprs.at("g2"), 1);
    Rect rect{cfg.a ? *cfg.a : T1.min(), cfg.b ? *cfg.b : T1.max(),
              cfg.c ? *cfg.c : T2.min(), cfg.d ? *cfg.d : T2.max()};
    IntegrateOptions opt;
    opt.tol = cfg.tol;
    IntegralResult r =
        iterated ? iterated_integral(T1, T2, f, g1, g2, rect,
                                     cfg.iter_order == "st" ? IterOrder::ST : IterOrder::TS, opt)
                 : rs_double_integral(T1, T2, f, g1, g2, rect, opt);
    emit(cfg, result_json(r));
    return 0;
}

int run_derive(RunConfig& cfg) {
    TimeScale T = parse_scale(cfg.scale);
    ExprFn f = ExprFn::parse(cfg.exprs.at("f"), 1);
    double v = delta_derivative(T, f, cfg.t, cfg.h0);
    emit(cfg, Json{{"t", cfg.t}, {"derivative", v}});
    return 0;
}

int run_check(RunConfig& cfg) {
    InstanceSpec spec;
    spec.scale = cfg.scale;
    spec.a = cfg.a ? *cfg.a : 0;
    spec.b = cfg.b ? *cfg.b : 0;
    spec.exprs = cfg.exprs;
    spec.F = cfg.F;
    spec.kink = kink_from_string(cfg.kink);
    spec.order = cfg.order == "opposite" ? -1 : +1;
    spec.tol = cfg.tol;
    spec.seed = cfg.seed;
    CheckReport rep = check(ineq_from_string(cfg.inequality), spec);
    emit(cfg, rep.to_json());
    return rep.passed ? 0 : 5;
}

int run_fuzz(RunConfig& cfg) {
    FuzzConfig fc;
    fc.trials = cfg.trials;
    fc.seed = cfg.seed;
    fc.tol = cfg.tol;
    if (cfg.order == "similar") fc.cheb_order = +1;
    if (cfg.order == "opposite") fc.cheb_order = -1;
    if (cfg.order == "any") fc.cheb_order = 0;
    FuzzOutcome out = fuzz(ineq_from_string(cfg.inequality), fc);
    emit(cfg, out.to_json());
    return out.violations > 0 ? 6 : 0;
}

int run_example_qscale(RunConfig& cfg) {
    double q = cfg.q;
    if (!(q > 1)) fail(ErrKind::InvalidArgument, "example-qscale needs q > 1");
    TimeScale T = TimeScale::qtail(q, 0.0, 1.0);
    ExprFn f = ExprFn::parse("t", 1);
    ExprFn g = ExprFn::parse("t^2", 1);
    IntegrateOptions opt;
    opt.tol = cfg.tol;
    IntegralResult engine = rs_integral(T, f, g, 0.0, 1.0, opt);

    // direct series: sum_{k>=1} q^-k (q^-2(k-1) - q^-2k)
    double series = 0;
    for (int k = 200; k >= 1; --k)
        series += std::pow(q, -k) * (std::pow(q, -2 * (k - 1)) - std::pow(q, -2 * k));

    // the printed claim for (int_0^1 t d(t^2))^2 on this scale
    double printed_claim_sq = 1.0 / ((q - 1) * (q - 1));
    double engine_sq = engine.value * engine.value;

    // final display with f == 1: (sum q^-2k)^2 against 1/(q^2-1)^2
    double s2 = 0;
    for (int k = 200; k >= 1; --k) s2 += std::pow(q, -2 * k);
    double display_lhs = s2 * s2;
    double display_rhs = 1.0 / ((q * q - 1) * (q * q - 1));

    Json res;
    res["integral"] = result_json(engine);
    res["series_oracle"] = series;
    res["engine_minus_series"] = engine.value - series;
    res["printed_claim_for_square"] = printed_claim_sq;
    res["engine_square"] = engine_sq;
    res["printed_claim_discrepancy"] = engine_sq - printed_claim_sq;
    res["printed_claim_note"] =
        "the printed value 1/(q-1)^2 does not match the scattered-point series; "
        "the engine and the series oracle agree on (q^2-1)/(q^3-1)";
    res["winckler_equality"] = Json{{"lhs_product", display_lhs},
                                    {"rhs", display_rhs},
                                    {"diff", display_lhs - display_rhs}};
    emit(cfg, res);
    return 0;
}

int dispatch(RunConfig& cfg) {
    if (cfg.command == "eval") return run_eval(cfg);
    if (cfg.command == "double") return run_double(cfg, false);
    if (cfg.command == "iterated") return run_double(cfg, true);
    if (cfg.command == "derive") return run_derive(cfg);
    if (cfg.command == "check") return run_check(cfg);
    if (cfg.command == "fuzz") return run_fuzz(cfg);
    if (cfg.command == "example-qscale") return run_example_qscale(cfg);
    fail(ErrKind::InvalidArgument, "unknown command '" + cfg.command + "'");
}

int exit_code_for(const Error& e, const std::string& command) {
    bool checking = command == "check" || command == "fuzz";
    switch (e.kind()) {
        case ErrKind::NoConvergence:
        case ErrKind::NonConvergent:
            return 3;
        case ErrKind::PreconditionViolated:
        case ErrKind::OrderingViolated:
            return 4;
        case ErrKind::DomainError:
        case ErrKind::NonMonotoneIntegrator:
            return checking ? 4 : 2;
        default:
            return 2;
    }
}

void add_expr_flags(CLI::App* cmd, RunConfig& cfg, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        std::string key = k;
        cmd->add_option_function<std::string>(
            "--" + key, [&cfg, key](const std::string& v) { cfg.exprs[key] = v; },
            "expression " + key + "(t)");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Riemann-Stieltjes delta integrals and inequality checks on time scales"};
    app.require_subcommand(0, 1);

    RunConfig cfg;
    std::string config_file;
    app.add_option("--config", config_file, "load a full run configuration from a JSON file");

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--tol", cfg.tol, "tolerance (default 1e-8)");
        cmd->add_option("--format", cfg.format, "output format: json|text")
            ->check(CLI::IsMember({"json", "text"}));
    };

    CLI::App* eval = app.add_subcommand("eval", "single integral of f with respect to g");
    eval->add_option("--scale", cfg.scale, "time scale spec")->required();
    add_expr_flags(eval, cfg, {"f", "g"});
    eval->add_option("--a", [&cfg](CLI::results_t r) { cfg.a = std::stod(r[0]); return true; },
                     "lower endpoint (default: scale min)");
    eval->add_option("--b", [&cfg](CLI::results_t r) { cfg.b = std::stod(r[0]); return true; },
                     "upper endpoint (default: scale max)");
    eval->add_option("--via", cfg.via, "direct|transition")
        ->check(CLI::IsMember({"direct", "transition"}));
    add_common(eval);

    for (const char* name : {"double", "iterated"}) {
        CLI::App* c = app.add_subcommand(name, std::string(name) == "double"
                                                   ? "double integral over a product rectangle"
                                                   : "iterated integral, inner then outer");
        c->add_option("--scale1", cfg.scale, "axis-1 time scale")->required();
        c->add_option("--scale2", cfg.scale2, "axis-2 time scale (default: same as axis 1)");
        add_expr_flags(c, cfg, {"f", "g1", "g2"});
        c->add_option("--a", [&cfg](CLI::results_t r) { cfg.a = std::stod(r[0]); return true; }, "");
        c->add_option("--b", [&cfg](CLI::results_t r) { cfg.b = std::stod(r[0]); return true; }, "");
        c->add_option("--c", [&cfg](CLI::results_t r) { cfg.c = std::stod(r[0]); return true; }, "");
        c->add_option("--d", [&cfg](CLI::results_t r) { cfg.d = std::stod(r[0]); return true; }, "");
        if (std::string(name) == "iterated")
            c->add_option("--iter-order", cfg.iter_order, "ts: outer t, inner s; st: reverse")
                ->check(CLI::IsMember({"ts", "st"}));
        add_common(c);
    }

    CLI::App* derive = app.add_subcommand("derive", "delta derivative of f at a point");
    derive->add_option("--scale", cfg.scale, "time scale spec")->required();
    add_expr_flags(derive, cfg, {"f"});
    derive->add_option("--t", cfg.t, "evaluation point")->required();
    derive->add_option("--h0", cfg.h0, "initial step for the dense-limit quotient");
    add_common(derive);

    CLI::App* chk = app.add_subcommand("check", "verify one inequality instance");
    chk->add_option("inequality", cfg.inequality,
                    "positivity|monotone|subdifferential|theorem5|jensen|reverse-jensen|"
                    "chebyshev-kernel|chebyshev|winckler|majorisation-eq|majorisation-le")
        ->required();
    chk->add_option("--scale", cfg.scale, "time scale spec")->required();
    add_expr_flags(chk, cfg, {"f", "g", "p", "x", "y", "f1", "f2"});
    chk->add_option("--a", [&cfg](CLI::results_t r) { cfg.a = std::stod(r[0]); return true; }, "");
    chk->add_option("--b", [&cfg](CLI::results_t r) { cfg.b = std::stod(r[0]); return true; }, "");
    chk->add_option("--F", cfg.F, "convex catalog name");
    chk->add_option("--kink", cfg.kink, "subgradient at kinks: mid|left|right");
    chk->add_option("--order", cfg.order, "similar|opposite (Chebyshev family)")
        ->check(CLI::IsMember({"similar", "opposite"}));
    chk->add_option("--seed", cfg.seed, "seed (subdifferential sampling)");
    add_common(chk);

    CLI::App* fz = app.add_subcommand("fuzz", "seeded randomized campaign for one inequality");
    fz->add_option("inequality", cfg.inequality, "as in check")->required();
    fz->add_option("--trials", cfg.trials, "number of trials")->required();
    fz->add_option("--seed", cfg.seed, "campaign seed");
    fz->add_option("--order", cfg.order, "similar|opposite|any (Chebyshev family)")
        ->check(CLI::IsMember({"similar", "opposite", "any"}));
    add_common(fz);

    CLI::App* exq = app.add_subcommand("example-qscale",
                                       "q-scale worked example: engine vs series vs printed claim");
    exq->add_option("--q", cfg.q, "q > 1 (default 2)");
    add_common(exq);

    // fuzz defaults differ: order free unless forced
    cfg.order = "similar";

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (!config_file.empty()) {
            std::FILE* fp = std::fopen(config_file.c_str(), "rb");
            if (!fp) fail(ErrKind::InvalidArgument, "cannot open config file " + config_file);
            std::string text;
            char buf[4096];
            std::size_t n;
            while ((n = std::fread(buf, 1, sizeof(buf), fp)) > 0) text.append(buf, n);
            std::fclose(fp);
            cfg = RunConfig::from_json(Json::parse(text));
        } else if (app.get_subcommands().empty()) {
            std::cerr << app.help() << std::endl;
            return 2;
        } else {
            cfg.command = app.get_subcommands()[0]->get_name();
            if (cfg.command == "fuzz" &&
                !app.get_subcommands()[0]->get_option("--order")->count())
                cfg.order = "any";
        }
        return dispatch(cfg);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e, cfg.command);
    } catch (const Json::exception& e) {
        std::fprintf(stderr, "error: config JSON: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
