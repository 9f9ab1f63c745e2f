#include "tsint/convex.hpp"

#include <cmath>
#include <limits>

#include "tsint/rng.hpp"

namespace tsint {

const char* to_string(KinkSelection k) {
    switch (k) {
        case KinkSelection::Midpoint: return "mid";
        case KinkSelection::Left: return "left";
        case KinkSelection::Right: return "right";
    }
    return "mid";
}

KinkSelection kink_from_string(const std::string& s) {
    if (s == "mid" || s == "midpoint") return KinkSelection::Midpoint;
    if (s == "left") return KinkSelection::Left;
    if (s == "right") return KinkSelection::Right;
    fail(ErrKind::InvalidArgument, "unknown kink selection '" + s + "'");
}

ConvexFn convex_catalog(const std::string& name, KinkSelection sel) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    ConvexFn c;
    c.name = name;

    if (name == "square") {
        c.F = [](double x) { return x * x; };
        c.phi = [](double x) { return 2 * x; };
        c.lo = -inf; c.hi = inf; c.lo_open = c.hi_open = true;
        c.nondecreasing = false;
        c.sample_lo = -8; c.sample_hi = 8;
        return c;
    }
    if (name == "exp") {
        c.F = [](double x) { return std::exp(x); };
        c.phi = [](double x) { return std::exp(x); };
        c.lo = -inf; c.hi = inf; c.lo_open = c.hi_open = true;
        c.nondecreasing = true;
        c.sample_lo = -4; c.sample_hi = 4;
        return c;
    }
    if (name == "abs") {
        double at0 = sel == KinkSelection::Left ? -1.0 : sel == KinkSelection::Right ? 1.0 : 0.0;
        c.F = [](double x) { return std::fabs(x); };
        c.phi = [at0](double x) { return x < 0 ? -1.0 : x > 0 ? 1.0 : at0; };
        c.lo = -inf; c.hi = inf; c.lo_open = c.hi_open = true;
        c.nondecreasing = false;
        c.sample_lo = -8; c.sample_hi = 8;
        return c;
    }
    if (name == "xlogx") {
        c.F = [](double x) {
            if (x <= 0) fail(ErrKind::DomainError, "xlogx needs x > 0");
            return x * std::log(x);
        };
        c.phi = [](double x) {
            if (x <= 0) fail(ErrKind::DomainError, "xlogx needs x > 0");
            return std::log(x) + 1.0;
        };
        c.lo = 0; c.hi = inf; c.lo_open = true; c.hi_open = true;
        c.nondecreasing = false;
        c.sample_lo = 0.05; c.sample_hi = 8;
        return c;
    }
    if (name == "neg_entropy") {
        c.F = [](double x) {
            if (x <= 0 || x >= 1) fail(ErrKind::DomainError, "neg_entropy needs 0 < x < 1");
            return x * std::log(x) + (1 - x) * std::log(1 - x);
        };
        c.phi = [](double x) {
            if (x <= 0 || x >= 1) fail(ErrKind::DomainError, "neg_entropy needs 0 < x < 1");
            return std::log(x / (1 - x));
        };
        c.lo = 0; c.hi = 1; c.lo_open = c.hi_open = true;
        c.nondecreasing = false;
        c.sample_lo = 0.02; c.sample_hi = 0.98;
        return c;
    }
    if (name.rfind("power_", 0) == 0) {
        double p = std::strtod(name.c_str() + 6, nullptr);
        if (!(p >= 1.0) || !std::isfinite(p))
            fail(ErrKind::UnknownConvexFn, "power_p needs p >= 1, got '" + name + "'");
        c.F = [p](double x) {
            if (x < 0) fail(ErrKind::DomainError, "power_p needs x >= 0");
            return std::pow(x, p);
        };
        c.phi = [p](double x) {
            if (x < 0) fail(ErrKind::DomainError, "power_p needs x >= 0");
            if (p == 1.0) return 1.0;
            return p * std::pow(x, p - 1.0);
        };
        c.lo = 0; c.hi = inf; c.lo_open = false; c.hi_open = true;
        c.nondecreasing = true;
        c.sample_lo = 0; c.sample_hi = 8;
        return c;
    }
    fail(ErrKind::UnknownConvexFn, "unknown convex function '" + name + "'");
}

double subgradient_margin(const ConvexFn& C, double x, double y) {
    return C.F(x) - C.F(y) - (x - y) * C.phi(y);
}

SubgradientReport check_subgradient(const ConvexFn& C, int samples, uint64_t seed) {
    if (samples < 1) fail(ErrKind::InvalidArgument, "samples must be >= 1");
    Rng rng(seed);
    SubgradientReport r;
    r.samples = samples;
    r.min_margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
        double x = rng.uniform(C.sample_lo, C.sample_hi);
        double y = rng.uniform(C.sample_lo, C.sample_hi);
        double m = subgradient_margin(C, x, y);
        if (m < r.min_margin) {
            r.min_margin = m;
            r.at_x = x;
            r.at_y = y;
        }
    }
    return r;
}

} // namespace tsint
