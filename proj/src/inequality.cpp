#include "tsint/inequality.hpp"

#include <algorithm>
#include <cmath>

#include "tsint/rng.hpp"

namespace tsint {

const char* to_string(Ineq id) {
    switch (id) {
        case Ineq::Positivity: return "positivity";
        case Ineq::Monotone: return "monotone";
        case Ineq::Subdifferential: return "subdifferential";
        case Ineq::Theorem5: return "theorem5";
        case Ineq::Jensen: return "jensen";
        case Ineq::ReverseJensen: return "reverse-jensen";
        case Ineq::ChebyshevKernel: return "chebyshev-kernel";
        case Ineq::Chebyshev: return "chebyshev";
        case Ineq::Winckler: return "winckler";
        case Ineq::MajorisationEq: return "majorisation-eq";
        case Ineq::MajorisationLe: return "majorisation-le";
    }
    return "?";
}

Ineq ineq_from_string(const std::string& name) {
    static const std::pair<const char*, Ineq> table[] = {
        {"positivity", Ineq::Positivity},
        {"monotone", Ineq::Monotone},
        {"subdifferential", Ineq::Subdifferential},
        {"theorem5", Ineq::Theorem5},
        {"jensen", Ineq::Jensen},
        {"reverse-jensen", Ineq::ReverseJensen},
        {"chebyshev-kernel", Ineq::ChebyshevKernel},
        {"chebyshev", Ineq::Chebyshev},
        {"winckler", Ineq::Winckler},
        {"majorisation-eq", Ineq::MajorisationEq},
        {"majorisation-le", Ineq::MajorisationLe},
    };
    for (const auto& [n, id] : table)
        if (name == n) return id;
    fail(ErrKind::InvalidArgument, "unknown inequality '" + name + "'");
}

Json InstanceSpec::to_json() const {
    Json j;
    j["scale"] = scale;
    j["a"] = a;
    j["b"] = b;
    Json e = Json::object();
    for (const auto& [k, v] : exprs) e[k] = v;
    j["exprs"] = e;
    if (!F.empty()) {
        j["F"] = F;
        j["kink"] = to_string(kink);
    }
    j["order"] = order > 0 ? "similar" : "opposite";
    j["tol"] = tol;
    j["seed"] = seed;
    return j;
}

InstanceSpec InstanceSpec::from_json(const Json& j) {
    InstanceSpec s;
    s.scale = j.at("scale").get<std::string>();
    s.a = j.value("a", 0.0);
    s.b = j.value("b", 0.0);
    if (j.contains("exprs"))
        for (auto it = j["exprs"].begin(); it != j["exprs"].end(); ++it)
            s.exprs[it.key()] = it.value().get<std::string>();
    s.F = j.value("F", std::string());
    if (j.contains("kink")) s.kink = kink_from_string(j["kink"].get<std::string>());
    if (j.contains("order")) s.order = j["order"].get<std::string>() == "opposite" ? -1 : +1;
    s.tol = j.value("tol", 1e-8);
    s.seed = j.value("seed", uint64_t(0));
    return s;
}

Json CheckReport::to_json() const {
    Json j;
    j["inequality"] = to_string(id);
    j["lhs"] = lhs;
    j["rhs"] = rhs;
    j["margin"] = margin;
    j["slack"] = slack;
    j["passed"] = passed;
    if (documented) j["documented"] = *documented;
    j["instance"] = instance.to_json();
    return j;
}

// --- shared check context -------------------------------------------------------

namespace {

struct Ctx {
    InstanceSpec spec;
    TimeScale T;
    double a, b;
    ExprFn g_expr;
    RealFn g;
    IntegrateOptions opt;
    std::vector<double> grid; // validation grid over [a,b]_T
    double err_acc = 0;       // accumulated integration error estimates

    explicit Ctx(const InstanceSpec& s) : spec(s), T(parse_scale(s.scale)) {
        a = s.a == s.b ? T.min() : T.snap(s.a);
        b = s.a == s.b ? T.max() : T.snap(s.b);
        if (!(a < b)) fail(ErrKind::InvalidArgument, "check needs a < b");
        auto it = s.exprs.find("g");
        if (it == s.exprs.end()) fail(ErrKind::InvalidArgument, "missing integrator expression g");
        g_expr = ExprFn::parse(it->second, 1);
        g = g_expr.fn1();
        opt.tol = s.tol;
        opt.gap_cells = 0; // checks compare values; skip Darboux tightening
        grid = sample_grid(T, a, b, 48);
        validate_integrator(T, g, a, b);
    }

    ExprFn expr(const std::string& key) const {
        auto it = spec.exprs.find(key);
        if (it == spec.exprs.end())
            fail(ErrKind::InvalidArgument, "missing expression '" + key + "'");
        return ExprFn::parse(it->second, 1);
    }

    bool has(const std::string& key) const { return spec.exprs.count(key) > 0; }

    double integrate(const RealFn& f) {
        IntegralResult r = rs_integral(T, f, g, a, b, opt);
        err_acc += r.err_est + r.tail_bound;
        return r.value;
    }

    // value plus error estimate, for margins that multiply or rescale
    // integrals and need first-order error propagation
    struct IVal {
        double v = 0, e = 0;
    };
    IVal integrate2(const RealFn& f) {
        IntegralResult r = rs_integral(T, f, g, a, b, opt);
        return {r.value, r.err_est + r.tail_bound};
    }

    // min over the grid; witness index out
    double grid_min(const RealFn& f, double* witness = nullptr) const {
        double m = f(grid[0]);
        if (witness) *witness = grid[0];
        for (double t : grid) {
            double v = f(t);
            if (v < m) {
                m = v;
                if (witness) *witness = t;
            }
        }
        return m;
    }

    double grid_max_abs(const RealFn& f) const {
        double m = 0;
        for (double t : grid) m = std::max(m, std::fabs(f(t)));
        return m;
    }

    void require_nonneg(const RealFn& f, const char* name) const {
        double w = 0;
        double m = grid_min(f, &w);
        if (m < -1e-12 * std::max(1.0, std::fabs(m)))
            fail(ErrKind::PreconditionViolated, std::string(name) + " is negative (" +
                                                    format_double(m) + ") at t = " +
                                                    format_double(w));
    }

    void require_into_domain(const RealFn& x, const ConvexFn& C, const char* name) const {
        for (double t : grid) {
            double v = x(t);
            if (!C.contains(v))
                fail(ErrKind::PreconditionViolated,
                     std::string(name) + "(t) = " + format_double(v) + " leaves the domain of " +
                         C.name + " at t = " + format_double(t));
        }
    }

    // +1 non-decreasing, -1 non-increasing, 0 constant; throws otherwise
    int monotone_dir(const RealFn& f, const char* name) const {
        bool nondec = true, noninc = true;
        double tol_m = 1e-12;
        double scale = std::max(1.0, grid_max_abs(f));
        for (std::size_t i = 1; i < grid.size(); ++i) {
            double d = f(grid[i]) - f(grid[i - 1]);
            if (d < -tol_m * scale) nondec = false;
            if (d > tol_m * scale) noninc = false;
        }
        if (nondec && noninc) return 0;
        if (nondec) return +1;
        if (noninc) return -1;
        fail(ErrKind::PreconditionViolated, std::string(name) + " is not monotone on [a,b]");
    }

    double base_slack(double lhs, double rhs) const {
        return 1e-9 * std::max({1.0, std::fabs(lhs), std::fabs(rhs)}) + err_acc;
    }

    ConvexFn convex() const {
        if (spec.F.empty()) fail(ErrKind::InvalidArgument, "missing convex function name F");
        return convex_catalog(spec.F, spec.kink);
    }

    CheckReport report(Ineq id, double lhs, double rhs, double margin,
                       double extra_slack = 0.0) const {
        CheckReport r;
        r.id = id;
        r.lhs = lhs;
        r.rhs = rhs;
        r.margin = margin;
        r.slack = base_slack(lhs, rhs) + extra_slack;
        r.passed = margin >= -r.slack;
        r.instance = spec;
        return r;
    }
};

RealFn product(RealFn u, RealFn v) {
    return [u = std::move(u), v = std::move(v)](double t) { return u(t) * v(t); };
}

RealFn compose(RealFn outer, RealFn inner) {
    return [outer = std::move(outer), inner = std::move(inner)](double t) {
        return outer(inner(t));
    };
}

} // namespace

// --- the checks ---------------------------------------------------------------------

CheckReport check_positivity(const InstanceSpec& spec) {
    Ctx c(spec);
    RealFn f = c.expr("f").fn1();
    c.require_nonneg(f, "f");
    double v = c.integrate(f);
    return c.report(Ineq::Positivity, v, 0.0, v);
}

CheckReport check_monotone_cumulative(const InstanceSpec& spec) {
    Ctx c(spec);
    RealFn f = c.expr("f").fn1();
    c.require_nonneg(f, "f");
    // increments of F(t) = int_a^t f dg between consecutive grid points
    std::vector<double> pts = sample_grid(c.T, c.a, c.b, 16);
    double min_inc = 0;
    bool first = true;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        IntegralResult r = rs_integral(c.T, f, c.g, pts[i - 1], pts[i], c.opt);
        c.err_acc += r.err_est + r.tail_bound;
        if (first || r.value < min_inc) min_inc = r.value;
        first = false;
    }
    return c.report(Ineq::Monotone, min_inc, 0.0, min_inc);
}

CheckReport check_theorem5(const InstanceSpec& spec) {
    Ctx c(spec);
    ConvexFn C = c.convex();
    RealFn p = c.expr("p").fn1();
    RealFn x = c.expr("x").fn1();
    RealFn y = c.expr("y").fn1();
    c.require_nonneg(p, "p");
    c.require_into_domain(x, C, "x");
    c.require_into_domain(y, C, "y");

    RealFn phi_y = compose(C.phi, y);
    double lhs = c.integrate(product(p, compose(C.F, x))) -
                 c.integrate(product(p, compose(C.F, y)));
    double rhs = c.integrate(product(product(p, x), phi_y)) -
                 c.integrate(product(product(p, y), phi_y));
    return c.report(Ineq::Theorem5, lhs, rhs, lhs - rhs);
}

CheckReport check_jensen(const InstanceSpec& spec) {
    Ctx c(spec);
    ConvexFn C = c.convex();
    RealFn p = c.expr("p").fn1();
    RealFn x = c.expr("x").fn1();
    c.require_nonneg(p, "p");
    c.require_into_domain(x, C, "x");

    Ctx::IVal A = c.integrate2(p);
    if (!(A.v > 0))
        fail(ErrKind::PreconditionViolated,
             "A = int p dg = " + format_double(A.v) + " is not positive");
    Ctx::IVal Ix = c.integrate2(product(p, x));
    double xbar = Ix.v / A.v;
    if (!C.contains(xbar))
        fail(ErrKind::PreconditionViolated,
             "weighted mean " + format_double(xbar) + " leaves the domain of " + C.name);
    Ctx::IVal IF = c.integrate2(product(p, compose(C.F, x)));
    double lhs = IF.v / A.v;
    double rhs = C.F(xbar);
    double dphi = std::fabs(C.phi(xbar));
    double prop = IF.e / A.v + std::fabs(IF.v) * A.e / (A.v * A.v) +
                  dphi * (Ix.e / A.v + std::fabs(Ix.v) * A.e / (A.v * A.v));
    return c.report(Ineq::Jensen, lhs, rhs, lhs - rhs, prop);
}

CheckReport check_reverse_jensen(const InstanceSpec& spec) {
    Ctx c(spec);
    ConvexFn C = c.convex();
    RealFn p = c.expr("p").fn1();
    RealFn y = c.expr("y").fn1();
    c.require_nonneg(p, "p");
    c.require_into_domain(y, C, "y");

    Ctx::IVal A = c.integrate2(p);
    if (!(A.v > 0))
        fail(ErrKind::PreconditionViolated,
             "A = int p dg = " + format_double(A.v) + " is not positive");
    Ctx::IVal Iy = c.integrate2(product(p, y));
    double ybar = Iy.v / A.v;
    if (!C.contains(ybar))
        fail(ErrKind::PreconditionViolated,
             "weighted mean " + format_double(ybar) + " leaves the domain of " + C.name);
    RealFn phi_y = compose(C.phi, y);

    // m1: the Jensen gap itself; m2: headroom of the upper bound on that gap
    Ctx::IVal IFy = c.integrate2(product(p, compose(C.F, y)));
    Ctx::IVal Iyphi = c.integrate2(product(product(p, y), phi_y));
    Ctx::IVal Iphi = c.integrate2(product(p, phi_y));
    double m1 = IFy.v / A.v - C.F(ybar);
    double bound = (Iyphi.v - (Iy.v / A.v) * Iphi.v) / A.v;
    double m2 = bound - m1;

    double A2 = A.v * A.v;
    double e_m1 = IFy.e / A.v + std::fabs(IFy.v) * A.e / A2 +
                  std::fabs(C.phi(ybar)) * (Iy.e / A.v + std::fabs(Iy.v) * A.e / A2);
    double e_bound = Iyphi.e / A.v + std::fabs(Iphi.v) * Iy.e / A2 +
                     std::fabs(Iy.v) * Iphi.e / A2 +
                     A.e * (std::fabs(Iyphi.v) / A2 +
                            2 * std::fabs(Iy.v * Iphi.v) / (A2 * A.v));
    return c.report(Ineq::ReverseJensen, bound, m1, std::min(m1, m2), e_m1 + e_bound);
}

namespace {

void validate_ordering(const Ctx& c, const RealFn& f1, const RealFn& f2, int order) {
    const char* what = order > 0 ? "similarly" : "oppositely";
    auto probe = [&](double t, double s) {
        double v = (f1(t) - f1(s)) * (f2(t) - f2(s)) * double(order);
        if (v < -1e-12 * std::max(1.0, std::fabs(v)))
            fail(ErrKind::OrderingViolated,
                 std::string("f1,f2 are not ") + what + " ordered: witness (t,s) = (" +
                     format_double(t) + "," + format_double(s) + ")");
    };
    // coarse grid pairs plus seeded random pairs
    std::size_t stride = std::max<std::size_t>(1, c.grid.size() / 24);
    for (std::size_t i = 0; i < c.grid.size(); i += stride)
        for (std::size_t j = 0; j < c.grid.size(); j += stride)
            probe(c.grid[i], c.grid[j]);
    Rng rng(c.spec.seed ^ 0xC0FFEEull);
    for (int k = 0; k < 64; ++k) {
        double t = c.grid[std::size_t(rng.uniform() * double(c.grid.size())) % c.grid.size()];
        double s = c.grid[std::size_t(rng.uniform() * double(c.grid.size())) % c.grid.size()];
        probe(t, s);
    }
}

} // namespace

CheckReport check_chebyshev_kernel(const InstanceSpec& spec) {
    Ctx c(spec);
    RealFn p = c.expr("p").fn1();
    RealFn f1 = c.expr("f1").fn1();
    RealFn f2 = c.expr("f2").fn1();
    c.require_nonneg(p, "p");
    validate_ordering(c, f1, f2, spec.order);

    RealFn2 kernel = [&](double t, double s) {
        return p(t) * p(s) * (f1(t) - f1(s)) * (f2(t) - f2(s));
    };
    IntegralResult K =
        rs_double_integral(c.T, c.T, kernel, c.g, c.g, {c.a, c.b, c.a, c.b}, c.opt);
    c.err_acc += K.err_est + K.tail_bound;
    double margin = double(spec.order) * K.value;
    return c.report(Ineq::ChebyshevKernel, K.value, 0.0, margin);
}

CheckReport check_chebyshev(const InstanceSpec& spec) {
    Ctx c(spec);
    RealFn p = c.expr("p").fn1();
    RealFn f1 = c.expr("f1").fn1();
    RealFn f2 = c.expr("f2").fn1();
    c.require_nonneg(p, "p");
    validate_ordering(c, f1, f2, spec.order);

    Ctx::IVal Ip = c.integrate2(p);
    Ctx::IVal I12 = c.integrate2(product(p, product(f1, f2)));
    Ctx::IVal I1 = c.integrate2(product(p, f1));
    Ctx::IVal I2 = c.integrate2(product(p, f2));
    double lhs = Ip.v * I12.v;
    double rhs = I1.v * I2.v;
    double margin = double(spec.order) * (lhs - rhs);
    double prop = Ip.e * std::fabs(I12.v) + I12.e * std::fabs(Ip.v) +
                  I1.e * std::fabs(I2.v) + I2.e * std::fabs(I1.v);
    return c.report(Ineq::Chebyshev, lhs, rhs, margin, prop);
}

CheckReport check_winckler(const InstanceSpec& spec) {
    Ctx c(spec);
    RealFn p = c.expr("p").fn1();
    RealFn f = c.expr("f").fn1();
    c.require_nonneg(p, "p");

    // f and 1/f need f bounded away from zero and sign-definite
    bool pos = true, neg = true;
    double nearest = std::numeric_limits<double>::infinity(), at = c.grid[0];
    for (double t : c.grid) {
        double v = f(t);
        if (std::fabs(v) < nearest) {
            nearest = std::fabs(v);
            at = t;
        }
        if (v < 0) pos = false;
        if (v > 0) neg = false;
    }
    if (nearest < 1e-9)
        fail(ErrKind::DomainError,
             "f(t) = " + format_double(nearest) + " too close to zero at t = " + format_double(at));
    if (!pos && !neg)
        fail(ErrKind::PreconditionViolated, "f changes sign on [a,b]; f and 1/f are not ordered");

    Ctx::IVal Ip = c.integrate2(p);
    Ctx::IVal Ipf = c.integrate2(product(p, f));
    Ctx::IVal Ipinv = c.integrate2([p, f](double t) { return p(t) / f(t); });
    // Cauchy-Schwarz orientation: int p f * int p/f >= (int p)^2
    double lhs = Ipf.v * Ipinv.v;
    double rhs = Ip.v * Ip.v;
    double prop = Ipf.e * std::fabs(Ipinv.v) + Ipinv.e * std::fabs(Ipf.v) +
                  2 * std::fabs(Ip.v) * Ip.e;
    CheckReport r = c.report(Ineq::Winckler, lhs, rhs, lhs - rhs, prop);
    r.documented = rhs - lhs; // value of the printed orientation, for the record
    return r;
}

namespace {

CheckReport check_majorisation(const InstanceSpec& spec, bool weak) {
    Ctx c(spec);
    ConvexFn C = c.convex();
    RealFn p = c.expr("p").fn1();
    RealFn x = c.expr("x").fn1();
    RealFn y = c.expr("y").fn1();
    c.require_nonneg(p, "p");
    c.require_into_domain(x, C, "x");
    c.require_into_domain(y, C, "y");
    if (weak && !C.nondecreasing)
        fail(ErrKind::PreconditionViolated,
             "F = " + C.name + " is not flagged non-decreasing (required by the weak variant)");

    RealFn diff = [x, y](double t) { return x(t) - y(t); };
    int dy = c.monotone_dir(y, "y");
    int dd = c.monotone_dir(diff, "x-y");
    if (dy * dd < 0)
        fail(ErrKind::PreconditionViolated,
             "y and x-y are not monotone in the same direction");

    double Ix = c.integrate(product(p, x));
    double Iy = c.integrate(product(p, y));
    double cond_slack = 1e-9 * std::max({1.0, std::fabs(Ix), std::fabs(Iy)}) + c.err_acc +
                        6.0 * c.opt.tol;
    double defect = weak ? std::max(0.0, Iy - Ix) : std::fabs(Ix - Iy);
    if (defect > cond_slack)
        fail(ErrKind::PreconditionViolated,
             std::string(weak ? "int p y dg <= int p x dg" : "equal-integral condition") +
                 " violated by " + format_double(defect) + " (allowed " +
                 format_double(cond_slack) + ")");

    double lhs = c.integrate(product(p, compose(C.F, x)));
    double rhs = c.integrate(product(p, compose(C.F, y)));
    CheckReport r = c.report(weak ? Ineq::MajorisationLe : Ineq::MajorisationEq, lhs, rhs,
                             lhs - rhs);
    // an epsilon-defect in the integral condition can depress the margin by at
    // most defect * max|phi(y)|; widen the slack accordingly
    r.slack += defect * c.grid_max_abs(compose(C.phi, y));
    r.passed = r.margin >= -r.slack;
    return r;
}

} // namespace

CheckReport check_majorisation_eq(const InstanceSpec& spec) { return check_majorisation(spec, false); }
CheckReport check_majorisation_le(const InstanceSpec& spec) { return check_majorisation(spec, true); }

namespace {

CheckReport check_subdifferential(const InstanceSpec& spec) {
    ConvexFn C = convex_catalog(spec.F.empty() ? "square" : spec.F, spec.kink);
    SubgradientReport s = check_subgradient(C, 1000, spec.seed);
    CheckReport r;
    r.id = Ineq::Subdifferential;
    r.lhs = s.min_margin;
    r.rhs = 0;
    r.margin = s.min_margin;
    r.slack = 1e-12;
    r.passed = r.margin >= -r.slack;
    r.instance = spec;
    return r;
}

} // namespace

CheckReport check(Ineq id, const InstanceSpec& spec) {
    switch (id) {
        case Ineq::Positivity: return check_positivity(spec);
        case Ineq::Monotone: return check_monotone_cumulative(spec);
        case Ineq::Subdifferential: return check_subdifferential(spec);
        case Ineq::Theorem5: return check_theorem5(spec);
        case Ineq::Jensen: return check_jensen(spec);
        case Ineq::ReverseJensen: return check_reverse_jensen(spec);
        case Ineq::ChebyshevKernel: return check_chebyshev_kernel(spec);
        case Ineq::Chebyshev: return check_chebyshev(spec);
        case Ineq::Winckler: return check_winckler(spec);
        case Ineq::MajorisationEq: return check_majorisation_eq(spec);
        case Ineq::MajorisationLe: return check_majorisation_le(spec);
    }
    fail(ErrKind::InvalidArgument, "unknown inequality id");
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'')
            out += "'\\''";
        else
            out += ch;
    }
    out += "'";
    return out;
}

std::string replay_command(Ineq id, const InstanceSpec& spec) {
    std::string cmd = "tsint check ";
    cmd += to_string(id);
    cmd += " --scale " + shell_quote(spec.scale);
    if (spec.a != spec.b) {
        cmd += " --a " + format_double(spec.a);
        cmd += " --b " + format_double(spec.b);
    }
    for (const auto& [k, v] : spec.exprs) cmd += " --" + k + " " + shell_quote(v);
    if (!spec.F.empty()) {
        cmd += " --F " + spec.F;
        cmd += " --kink " + std::string(to_string(spec.kink));
    }
    cmd += std::string(" --order ") + (spec.order > 0 ? "similar" : "opposite");
    cmd += " --tol " + format_double(spec.tol);
    cmd += " --seed " + std::to_string(spec.seed);
    return cmd;
}

} // namespace tsint
