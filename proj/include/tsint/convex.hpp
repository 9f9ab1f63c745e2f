#pragma once

#include <cstdint>
#include <string>

#include "tsint/expr.hpp"

namespace tsint {

// Subgradient selection at kinks. Midpoint keeps phi non-decreasing and is the
// default; Left/Right pick the one-sided derivatives.
enum class KinkSelection { Midpoint, Left, Right };

const char* to_string(KinkSelection k);
KinkSelection kink_from_string(const std::string& s);

// A convex F on a real interval together with a subgradient selection phi,
// F'- <= phi <= F'+ pointwise, phi non-decreasing.
struct ConvexFn {
    std::string name;
    RealFn F;
    RealFn phi;
    double lo, hi;          // domain I
    bool lo_open, hi_open;
    bool nondecreasing;     // F known monotone non-decreasing on I
    double sample_lo, sample_hi; // window for randomized sampling inside I

    bool contains(double x) const {
        if (x < lo || (lo_open && x <= lo)) return false;
        if (x > hi || (hi_open && x >= hi)) return false;
        return true;
    }
};

// name in {square, exp, abs, xlogx, power_p (p>=1, e.g. "power_2"), neg_entropy}
ConvexFn convex_catalog(const std::string& name, KinkSelection sel = KinkSelection::Midpoint);

// margin of the subdifferential inequality F(x) >= F(y) + (x-y) phi(y)
double subgradient_margin(const ConvexFn& C, double x, double y);

struct SubgradientReport {
    int samples = 0;
    double min_margin = 0.0;
    double at_x = 0.0, at_y = 0.0; // witness of the minimum
};

SubgradientReport check_subgradient(const ConvexFn& C, int samples, uint64_t seed);

} // namespace tsint
