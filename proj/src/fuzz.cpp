#include "tsint/fuzz.hpp"

#include <cmath>
#include <limits>

#include "tsint/rng.hpp"

namespace tsint {

Json FuzzOutcome::to_json() const {
    Json j;
    j["inequality"] = to_string(id);
    j["trials"] = cfg.trials;
    j["seed"] = cfg.seed;
    j["tol"] = cfg.tol;
    j["violations"] = violations;
    j["min_margin"] = min_margin;
    j["worst_trial"] = worst_trial;
    j["generator_retries"] = generator_retries;
    Json fails = Json::array();
    for (const FuzzFailure& f : failing)
        fails.push_back({{"trial", f.trial}, {"margin", f.margin}, {"replay", f.replay}});
    j["failing"] = fails;
    return j;
}

namespace {

std::string num(double v) { return format_double(v); }

// --- random scale ---------------------------------------------------------------

std::string gen_scale(Rng& rng, const FuzzConfig& cfg) {
    std::vector<std::string> blocks;
    double cursor = rng.uniform(-3.0, 0.5);
    int n = rng.uniform_int(1, 4);
    bool used_qtail = false;
    for (int i = 0; i < n; ++i) {
        double roll = rng.uniform();
        if (roll < 0.18 && cfg.allow_qtail && !used_qtail) {
            double q = rng.uniform(1.5, 3.0);
            double span = rng.uniform(0.4, 1.0);
            blocks.push_back("qtail(q=" + num(q) + ",at=" + num(cursor) + ",upto=" +
                             num(cursor + span) + ")");
            cursor += span;
            used_qtail = true;
        } else if (roll < 0.5 && cfg.allow_dense) {
            double w = rng.uniform(0.3, 1.3);
            blocks.push_back("interval(" + num(cursor) + "," + num(cursor + w) + ")");
            cursor += w;
        } else if (roll < 0.8) {
            int k = rng.uniform_int(2, 5);
            std::string pts;
            for (int j = 0; j < k; ++j) {
                if (j) pts += ",";
                pts += num(cursor);
                cursor += rng.uniform(0.2, 0.6);
            }
            blocks.push_back("points(" + pts + ")");
        } else {
            blocks.push_back("point(" + num(cursor) + ")");
        }
        cursor += rng.uniform(0.2, 0.8);
    }
    // make sure the scale spans something
    blocks.push_back("point(" + num(cursor + 0.3) + ")");
    std::string s = "union(";
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) s += ", ";
        s += blocks[i];
    }
    return s + ")";
}

// --- expression families -----------------------------------------------------------

std::string gen_monotone_g(Rng& rng) {
    double c0 = rng.uniform(-1.0, 1.0);
    switch (rng.uniform_int(0, 2)) {
        case 0:
            return num(c0) + " + " + num(rng.uniform(0.1, 1.5)) + "*t";
        case 1:
            return num(c0) + " + " + num(rng.uniform(0.1, 1.0)) + "*t + " +
                   num(rng.uniform(0.0, 0.4)) + "*t^3";
        default:
            return num(c0) + " + " + num(rng.uniform(0.05, 0.8)) + "*t + " +
                   num(rng.uniform(0.0, 0.8)) + "*exp(" + num(rng.uniform(0.1, 0.9)) + "*t)";
    }
}

std::string gen_nonneg(Rng& rng) {
    switch (rng.uniform_int(0, 3)) {
        case 0:
            return num(rng.uniform(0.2, 2.0));
        case 1:
            return num(rng.uniform(0.05, 1.0)) + " + " + num(rng.uniform(0.0, 1.5)) + "*(t - " +
                   num(rng.uniform(-3.0, 3.0)) + ")^2";
        case 2:
            return num(rng.uniform(0.1, 1.5)) + "*exp(" + num(rng.uniform(-0.8, 0.8)) + "*t)";
        default:
            return num(rng.uniform(0.05, 1.0)) + " + abs(t - " + num(rng.uniform(-3.0, 3.0)) + ")";
    }
}

// monotone in the given direction (+1 up, -1 down)
std::string gen_monotone(Rng& rng, int dir, double amp = 1.0) {
    double c0 = rng.uniform(-1.0, 1.0);
    double c1 = dir * rng.uniform(0.1, 1.2) * amp;
    switch (rng.uniform_int(0, 2)) {
        case 0:
            return num(c0) + " + " + num(c1) + "*t";
        case 1:
            return num(c0) + " + " + num(c1 * 0.3) + "*t^3";
        default:
            return num(c0) + " + " + num(c1 * 0.4) + "*exp(t)";
    }
}

// affine squeeze of an expression into [lo, hi] given its sampled range
std::string squash_into(const std::string& base, const TimeScale& T, double a, double b,
                        double lo, double hi) {
    ExprFn e = ExprFn::parse(base, 1);
    RealFn f = e.fn1();
    std::vector<double> grid = sample_grid(T, a, b, 48);
    double bmin = f(grid[0]), bmax = bmin;
    for (double t : grid) {
        double v = f(t);
        bmin = std::min(bmin, v);
        bmax = std::max(bmax, v);
    }
    double alpha = (hi - lo) / std::max(bmax - bmin, 1e-9);
    alpha = std::min(alpha, 1.0); // do not blow small ranges up
    double beta = lo + 0.5 * ((hi - lo) - alpha * (bmax - bmin)) - alpha * bmin;
    return num(alpha) + "*(" + base + ") + " + num(beta);
}

std::string pick_convex(Rng& rng) {
    double r = rng.uniform();
    if (r < 0.30) return "square";
    if (r < 0.55) return "exp";
    if (r < 0.70) return "abs";
    if (r < 0.80) return "power_2";
    if (r < 0.90) return "power_1.5";
    return "xlogx";
}

InstanceSpec build_instance(Ineq id, const FuzzConfig& cfg, Rng& rng, int trial, int attempt) {
    InstanceSpec s;
    s.tol = cfg.tol;
    s.seed = Rng::substream(cfg.seed, uint64_t(trial) * 1009u + uint64_t(attempt));
    s.scale = gen_scale(rng, cfg);
    TimeScale T = parse_scale(s.scale);
    double a = T.min(), b = T.max();
    s.a = s.b = 0; // full span
    s.exprs["g"] = gen_monotone_g(rng);

    auto window = [&](const ConvexFn& C) {
        double w = C.sample_hi - C.sample_lo;
        return std::pair<double, double>{C.sample_lo + 0.1 * w, C.sample_hi - 0.1 * w};
    };

    switch (id) {
        case Ineq::Positivity:
        case Ineq::Monotone:
            s.exprs["f"] = gen_nonneg(rng);
            break;

        case Ineq::Subdifferential:
            s.F = pick_convex(rng);
            break;

        case Ineq::Jensen: {
            s.F = pick_convex(rng);
            ConvexFn C = convex_catalog(s.F);
            auto [lo, hi] = window(C);
            std::string base = num(rng.uniform(-1.2, 1.2)) + " + " + num(rng.uniform(-1.2, 1.2)) +
                               "*t + " + num(rng.uniform(-1.2, 1.2)) + "*t^2";
            s.exprs["p"] = gen_nonneg(rng);
            s.exprs["x"] = squash_into(base, T, a, b, lo, hi);
            break;
        }
        case Ineq::Theorem5: {
            s.F = pick_convex(rng);
            ConvexFn C = convex_catalog(s.F);
            auto [lo, hi] = window(C);
            std::string xb = num(rng.uniform(-1.2, 1.2)) + " + " + num(rng.uniform(-1.2, 1.2)) +
                             "*t + " + num(rng.uniform(-1.2, 1.2)) + "*t^2";
            std::string yb = num(rng.uniform(-1.2, 1.2)) + " + " + num(rng.uniform(-1.2, 1.2)) +
                             "*t + " + num(rng.uniform(-1.2, 1.2)) + "*t^2";
            s.exprs["p"] = gen_nonneg(rng);
            s.exprs["x"] = squash_into(xb, T, a, b, lo, hi);
            s.exprs["y"] = squash_into(yb, T, a, b, lo, hi);
            break;
        }
        case Ineq::ReverseJensen: {
            s.F = pick_convex(rng);
            ConvexFn C = convex_catalog(s.F);
            auto [lo, hi] = window(C);
            std::string yb = gen_monotone(rng, rng.chance(0.5) ? +1 : -1);
            s.exprs["p"] = gen_nonneg(rng);
            s.exprs["y"] = squash_into(yb, T, a, b, lo, hi);
            break;
        }
        case Ineq::Chebyshev:
        case Ineq::ChebyshevKernel: {
            int order = cfg.cheb_order != 0 ? cfg.cheb_order : (rng.chance(0.5) ? +1 : -1);
            int dir1 = rng.chance(0.5) ? +1 : -1;
            int dir2 = order > 0 ? dir1 : -dir1;
            s.order = order;
            s.exprs["p"] = gen_nonneg(rng);
            s.exprs["f1"] = gen_monotone(rng, dir1);
            s.exprs["f2"] = gen_monotone(rng, dir2);
            break;
        }
        case Ineq::Winckler: {
            std::string body = "0.3 + " + gen_nonneg(rng);
            s.exprs["f"] = rng.chance(0.9) ? body : "-(" + body + ")";
            s.exprs["p"] = gen_nonneg(rng);
            break;
        }
        case Ineq::MajorisationEq: {
            const char* Fs[] = {"square", "abs", "exp"};
            s.F = Fs[rng.uniform_int(0, 2)];
            int dir = rng.chance(0.5) ? +1 : -1;
            std::string y = gen_monotone(rng, dir);
            s.exprs["p"] = gen_nonneg(rng);
            if (rng.chance(0.08)) {
                s.exprs["y"] = y;
                s.exprs["x"] = y; // equality case
                break;
            }
            std::string d = gen_monotone(rng, dir, 0.5);
            // shift x so the weighted integrals match: c = int p d dg / int p dg
            ExprFn pe = ExprFn::parse(s.exprs["p"], 1);
            ExprFn de = ExprFn::parse(d, 1);
            ExprFn ge = ExprFn::parse(s.exprs["g"], 1);
            IntegrateOptions io;
            io.tol = cfg.tol;
            RealFn pf = pe.fn1(), df = de.fn1();
            RealFn pd = [pf, df](double t) { return pf(t) * df(t); };
            double Ipd = rs_integral(T, pd, ge.fn1(), a, b, io).value;
            double Ip = rs_integral(T, pf, ge.fn1(), a, b, io).value;
            double c = Ipd / Ip;
            s.exprs["y"] = y;
            s.exprs["x"] = "(" + y + ") + (" + d + ") - " + num(c);
            break;
        }
        case Ineq::MajorisationLe: {
            s.F = "exp"; // needs F non-decreasing
            int dir = rng.chance(0.5) ? +1 : -1;
            std::string y = gen_monotone(rng, dir);
            std::string d;
            if (dir > 0)
                d = num(rng.uniform(0.0, 0.6)) + " + " + num(rng.uniform(0.05, 0.8)) + "*(t - " +
                    num(a) + ")";
            else
                d = num(rng.uniform(0.0, 0.6)) + " + " + num(rng.uniform(0.05, 0.8)) + "*(" +
                    num(b) + " - t)";
            s.exprs["p"] = gen_nonneg(rng);
            s.exprs["y"] = y;
            s.exprs["x"] = rng.chance(0.08) ? y : "(" + y + ") + (" + d + ")";
            break;
        }
    }
    return s;
}

bool is_generation_failure(const Error& e) {
    switch (e.kind()) {
        case ErrKind::PreconditionViolated:
        case ErrKind::OrderingViolated:
        case ErrKind::DomainError:
        case ErrKind::NonMonotoneIntegrator:
        case ErrKind::InvalidScale:
            return true;
        default:
            return false;
    }
}

} // namespace

InstanceSpec generate_instance(Ineq id, const FuzzConfig& cfg, int trial) {
    Rng rng(Rng::substream(cfg.seed, uint64_t(trial) * 1009u));
    return build_instance(id, cfg, rng, trial, 0);
}

FuzzOutcome fuzz(Ineq id, const FuzzConfig& cfg) {
    if (cfg.trials < 1) fail(ErrKind::InvalidArgument, "fuzz needs trials >= 1");
    FuzzOutcome out;
    out.id = id;
    out.cfg = cfg;
    out.min_margin = std::numeric_limits<double>::infinity();
    int consecutive_failures = 0;

    for (int trial = 0; trial < cfg.trials; ++trial) {
        CheckReport rep;
        bool done = false;
        for (int attempt = 0; attempt < 1000 && !done; ++attempt) {
            Rng rng(Rng::substream(cfg.seed, uint64_t(trial) * 1009u + uint64_t(attempt)));
            InstanceSpec inst = build_instance(id, cfg, rng, trial, attempt);
            try {
                rep = check(id, inst);
                done = true;
                consecutive_failures = 0;
            } catch (const Error& e) {
                if (!is_generation_failure(e)) throw;
                ++out.generator_retries;
                if (++consecutive_failures >= 1000)
                    fail(ErrKind::GeneratorExhausted,
                         "could not generate a valid instance after 1000 attempts: " +
                             std::string(e.what()));
            }
        }
        if (!done)
            fail(ErrKind::GeneratorExhausted, "could not generate a valid instance for trial " +
                                                  std::to_string(trial));
        if (rep.margin < out.min_margin) {
            out.min_margin = rep.margin;
            out.worst_trial = trial;
        }
        if (!rep.passed) {
            ++out.violations;
            out.failing.push_back({trial, rep.margin, replay_command(id, rep.instance)});
        }
    }
    return out;
}

} // namespace tsint
