#pragma once

#include <map>
#include <memory>
#include <vector>

#include "tsint/timescale.hpp"

namespace tsint {

// Result of a Riemann-Stieltjes delta integral. lower/upper are Darboux
// bounds of the final refinement (sup/inf estimated by dense sampling with a
// slope pad, exact on scattered points); err_est is the value-error estimate
// that drives convergence; tail_bound is the geometric bound on truncated
// q-tail series. converged <=> err_est + tail_bound <= tol.
struct IntegralResult {
    double value = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double gap = 0.0;
    double tail_bound = 0.0;
    long refinements = 0;
    bool converged = true;
    double err_est = 0.0;
};

struct RSSum {
    double value = 0.0;
    Partition partition;
    std::vector<double> tags;
};

struct IntegrateOptions {
    double tol = 1e-8;
    long max_cells = 0;    // 0: use TSINT_MAX_CELLS env var or the 1e6 default
    long gap_cells = 2000; // extra splits spent tightening the Darboux bounds
};

long resolve_max_cells(const IntegrateOptions& opt);

// --- single integrals ---------------------------------------------------------

std::pair<double, double> darboux_bounds(const TimeScale& T, const RealFn& f, const RealFn& g,
                                         const Partition& P);
std::pair<double, double> darboux_bounds(const TimeScale& T, const ExprFn& f, const ExprFn& g,
                                         const Partition& P);

RSSum rs_sum(const TimeScale& T, const RealFn& f, const RealFn& g, const Partition& P,
             const std::vector<double>& selection);
RSSum rs_sum(const TimeScale& T, const ExprFn& f, const ExprFn& g, const Partition& P,
             const std::vector<double>& selection);

IntegralResult rs_integral(const TimeScale& T, const RealFn& f, const RealFn& g, double a,
                           double b, const IntegrateOptions& opt = {});
IntegralResult rs_integral(const TimeScale& T, const ExprFn& f, const ExprFn& g, double a,
                           double b, const IntegrateOptions& opt = {});

// Computes the same integral through the identity integrator as
// int f(t) gD(t) dt with gD the delta derivative of g; cross-check oracle for
// rs_integral wherever gD exists.
IntegralResult rs_integral_via_transition(const TimeScale& T, const RealFn& f, const RealFn& g,
                                          double a, double b, const IntegrateOptions& opt = {});
IntegralResult rs_integral_via_transition(const TimeScale& T, const ExprFn& f, const ExprFn& g,
                                          double a, double b, const IntegrateOptions& opt = {});

// F(t) = int_a^t f dg, memoized per query point.
class CumulativeIntegral {
public:
    CumulativeIntegral(TimeScale T, RealFn f, RealFn g, double a, double b, IntegrateOptions opt);
    const IntegralResult& at(double t) const;
    double a() const { return a_; }
    double b() const { return b_; }

private:
    TimeScale T_;
    RealFn f_, g_;
    double a_, b_;
    IntegrateOptions opt_;
    mutable std::map<double, IntegralResult> memo_;
};

CumulativeIntegral cumulative(const TimeScale& T, const RealFn& f, const RealFn& g, double a,
                              double b, const IntegrateOptions& opt = {});

// --- double and iterated integrals ---------------------------------------------

struct Rect {
    double a, b; // axis 1, [a,b) in T1
    double c, d; // axis 2, [c,d) in T2
};

IntegralResult rs_double_integral(const TimeScale& T1, const TimeScale& T2, const RealFn2& f,
                                  const RealFn& g1, const RealFn& g2, const Rect& r,
                                  const IntegrateOptions& opt = {});
IntegralResult rs_double_integral(const TimeScale& T1, const TimeScale& T2, const ExprFn& f,
                                  const ExprFn& g1, const ExprFn& g2, const Rect& r,
                                  const IntegrateOptions& opt = {});

enum class IterOrder { TS, ST }; // TS: outer t (axis 1), inner s (axis 2)

IntegralResult iterated_integral(const TimeScale& T1, const TimeScale& T2, const RealFn2& f,
                                 const RealFn& g1, const RealFn& g2, const Rect& r, IterOrder ord,
                                 const IntegrateOptions& opt = {});
IntegralResult iterated_integral(const TimeScale& T1, const TimeScale& T2, const ExprFn& f,
                                 const ExprFn& g1, const ExprFn& g2, const Rect& r, IterOrder ord,
                                 const IntegrateOptions& opt = {});

// --- linearity ------------------------------------------------------------------

struct LinearityReport {
    double scaled;   // int alpha f d(beta g)
    double direct;   // alpha beta int f dg
    double diff;
    double bound;    // 2 tol max(1, |alpha beta|)
    bool ok;
};

LinearityReport linearity_check(const TimeScale& T, const RealFn& f, const RealFn& g, double a,
                                double b, double alpha, double beta,
                                const IntegrateOptions& opt = {});

// Validates that g is non-decreasing on [a,b]_T (scattered increments plus
// 513 samples per dense stretch); throws NonMonotoneIntegrator with a witness.
void validate_integrator(const TimeScale& T, const RealFn& g, double a, double b);

} // namespace tsint
