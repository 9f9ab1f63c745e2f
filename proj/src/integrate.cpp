#include "tsint/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <queue>
#include <unordered_map>

namespace tsint {

long resolve_max_cells(const IntegrateOptions& opt) {
    if (opt.max_cells > 0) return opt.max_cells;
    static long env_cells = [] {
        const char* e = std::getenv("TSINT_MAX_CELLS");
        if (e) {
            long v = std::strtol(e, nullptr, 10);
            if (v > 0) return v;
        }
        return 1000000l;
    }();
    return env_cells;
}

namespace {

// Neumaier compensated summation; order of add() calls is part of the
// reproducibility contract (ascending t everywhere).
class Kahan {
public:
    void add(double x) {
        double t = s_ + x;
        if (std::fabs(s_) >= std::fabs(x))
            c_ += (s_ - t) + x;
        else
            c_ += (x - t) + s_;
        s_ = t;
    }
    double get() const { return s_ + c_; }

private:
    double s_ = 0.0, c_ = 0.0;
};

constexpr double kMonotoneSlack = 1e-12;

struct GClamp {
    double scale; // validation threshold scale for g

    double operator()(double dg, double at) const {
        if (dg < -kMonotoneSlack * scale)
            fail(ErrKind::NonMonotoneIntegrator,
                 "integrator decreases by " + format_double(-dg) + " near t = " +
                     format_double(at));
        return dg < 0 ? 0.0 : dg;
    }
};

// --- atom decomposition -------------------------------------------------------

struct Atom {
    enum class Kind { Scattered, Dense, Tail } kind;
    double t = 0, st = 0;  // Scattered: point and sigma(point)
    double u = 0, v = 0;   // Dense: stretch [u,v]
    QTailDesc tail;        // Tail
    long k_start = 1;      // Tail: series index start (k >= k_start)
};

// first tail index strictly below b
long tail_k_strictly_below(const QTailDesc& d, double b) {
    if (b > d.upto) return 0;
    long k = 0;
    double kf = std::log((d.upto - d.at) / (b - d.at)) / std::log(d.q);
    k = std::max(0l, std::lround(kf) - 2);
    while (qtail_point(d, k) >= b - 1e-12 * std::max(1.0, std::fabs(b))) ++k;
    return k;
}

long tail_k_at_or_above_a(const QTailDesc& d, double a) {
    long k = tail_k_strictly_below(d, a);
    // want largest k with tp(k) >= a
    while (k > 0 && qtail_point(d, k) < a - 1e-12 * std::max(1.0, std::fabs(a))) --k;
    return k;
}

std::vector<Atom> decompose(const TimeScale& T, double a, double b) {
    std::vector<Atom> atoms;
    for (const Component& c : T.components()) {
        if (c.hi < a || c.lo >= b) continue;
        switch (c.kind) {
            case Component::Kind::Point:
                if (c.lo >= a && c.lo < b)
                    atoms.push_back({Atom::Kind::Scattered, c.lo, sigma(T, c.lo), 0, 0, {}, 0});
                break;
            case Component::Kind::Interval: {
                double u = std::max(c.lo, a), v = std::min(c.hi, b);
                if (u < v) atoms.push_back({Atom::Kind::Dense, 0, 0, u, v, {}, 0});
                if (v < b && v == c.hi)
                    atoms.push_back({Atom::Kind::Scattered, v, sigma(T, v), 0, 0, {}, 0});
                break;
            }
            case Component::Kind::QTail: {
                const QTailDesc& d = c.tail;
                if (b <= d.at) break;
                long k_min = tail_k_strictly_below(d, b);
                if (a > d.at) {
                    long k_a = tail_k_at_or_above_a(d, a);
                    for (long k = k_a; k >= k_min; --k) {
                        double t = qtail_point(d, k);
                        atoms.push_back({Atom::Kind::Scattered, t, sigma(T, t), 0, 0, {}, 0});
                    }
                } else {
                    Atom ta{Atom::Kind::Tail, 0, 0, 0, 0, d, std::max(1l, k_min)};
                    atoms.push_back(ta);
                    if (k_min == 0)
                        atoms.push_back(
                            {Atom::Kind::Scattered, d.upto, sigma(T, d.upto), 0, 0, {}, 0});
                }
                break;
            }
        }
    }
    return atoms;
}

// --- dense stretch engine -------------------------------------------------------

constexpr int kPanels = 16; // samples per cell = kPanels + 1

struct Cell {
    double x0, x1;
    double val, err, L, U;
    bool splittable;
};

struct DenseResult {
    double value, lower, upper, err;
    long splits;
};

class DenseIntegrator {
public:
    DenseIntegrator(const RealFn& f, const RealFn& g, const GClamp& clamp, long* cell_budget,
                    long* gap_budget = nullptr)
        : f_(f), g_(g), clamp_(clamp), budget_(cell_budget), gap_budget_(gap_budget) {}

    DenseResult run(double u, double v, double share) {
        cells_.clear();
        double min_width = 1e-9 * (v - u);
        push_cell(u, v, min_width);
        double total_err = cells_[0].err;

        using QE = std::pair<double, std::size_t>;
        std::priority_queue<QE> heap;
        heap.emplace(cells_[0].err, 0);
        long splits = 0;

        while (total_err > share) {
            // drop stale or unsplittable entries
            while (!heap.empty() &&
                   (heap.top().first != cells_[heap.top().second].err ||
                    !cells_[heap.top().second].splittable))
                heap.pop();
            if (heap.empty()) break; // noise floor: nothing left to split
            if (*budget_ <= 0)
                fail(ErrKind::NoConvergence,
                     "refinement budget exhausted (TSINT_MAX_CELLS); integrand too "
                     "oscillatory for the requested tolerance");
            auto [e, idx] = heap.top();
            heap.pop();
            Cell parent = cells_[idx];
            double mid = 0.5 * (parent.x0 + parent.x1);
            total_err -= parent.err;
            overwrite_cell(idx, parent.x0, mid, min_width);
            push_cell(mid, parent.x1, min_width);
            total_err += cells_[idx].err + cells_.back().err;
            heap.emplace(cells_[idx].err, idx);
            heap.emplace(cells_.back().err, cells_.size() - 1);
            ++splits;
        }

        // second phase: spend the bounded extra budget tightening the Darboux
        // envelope, splitting the widest (U-L) cell first
        if (gap_budget_ && *gap_budget_ > 0) {
            std::priority_queue<QE> wide;
            double total_gap = 0;
            for (std::size_t i = 0; i < cells_.size(); ++i) {
                wide.emplace(cells_[i].U - cells_[i].L, i);
                total_gap += cells_[i].U - cells_[i].L;
            }
            while (total_gap > 10.0 * share && *gap_budget_ > 0 && *budget_ > 0) {
                while (!wide.empty() &&
                       (wide.top().first != cells_[wide.top().second].U -
                                                cells_[wide.top().second].L ||
                        !cells_[wide.top().second].splittable))
                    wide.pop();
                if (wide.empty()) break;
                auto [w, idx] = wide.top();
                wide.pop();
                if (w <= 0) break;
                Cell parent = cells_[idx];
                double mid = 0.5 * (parent.x0 + parent.x1);
                total_gap -= parent.U - parent.L;
                overwrite_cell(idx, parent.x0, mid, min_width);
                push_cell(mid, parent.x1, min_width);
                total_gap += (cells_[idx].U - cells_[idx].L) +
                             (cells_.back().U - cells_.back().L);
                wide.emplace(cells_[idx].U - cells_[idx].L, idx);
                wide.emplace(cells_.back().U - cells_.back().L, cells_.size() - 1);
                --*gap_budget_;
                ++splits;
            }
        }

        std::sort(cells_.begin(), cells_.end(),
                  [](const Cell& a, const Cell& b) { return a.x0 < b.x0; });
        Kahan val, lo, hi, err;
        for (const Cell& c : cells_) {
            val.add(c.val);
            lo.add(c.L);
            hi.add(c.U);
            err.add(c.err);
        }
        return {val.get(), lo.get(), hi.get(), err.get(), splits};
    }

private:
    const RealFn& f_;
    const RealFn& g_;
    GClamp clamp_;
    long* budget_;
    long* gap_budget_;
    std::vector<Cell> cells_;

    void push_cell(double x0, double x1, double min_width) {
        cells_.push_back(eval_cell(x0, x1, min_width));
        --*budget_;
    }
    void overwrite_cell(std::size_t idx, double x0, double x1, double min_width) {
        cells_[idx] = eval_cell(x0, x1, min_width);
        --*budget_;
    }

    Cell eval_cell(double x0, double x1, double min_width) const {
        double s[kPanels + 1], fv[kPanels + 1], gv[kPanels + 1];
        double h = x1 - x0;
        for (int j = 0; j <= kPanels; ++j) {
            s[j] = x0 + h * double(j) / kPanels;
            fv[j] = f_(s[j]);
            gv[j] = g_(s[j]);
        }
        s[kPanels] = x1;

        double t16 = 0, t8 = 0;
        for (int j = 0; j < kPanels; ++j)
            t16 += 0.5 * (fv[j] + fv[j + 1]) * clamp_(gv[j + 1] - gv[j], s[j]);
        for (int j = 0; j < kPanels; j += 2)
            t8 += 0.5 * (fv[j] + fv[j + 2]) * clamp_(gv[j + 2] - gv[j], s[j]);

        double m = fv[0], M = fv[0];
        bool nondec = true, noninc = true;
        double max_slope = 0;
        for (int j = 0; j <= kPanels; ++j) {
            m = std::min(m, fv[j]);
            M = std::max(M, fv[j]);
            if (j > 0) {
                if (fv[j] < fv[j - 1]) nondec = false;
                if (fv[j] > fv[j - 1]) noninc = false;
                max_slope = std::max(max_slope, std::fabs(fv[j] - fv[j - 1]) / (s[j] - s[j - 1]));
            }
        }
        // monotone samples: endpoint values bound the cell exactly; otherwise
        // pad by the sampled slope over one sample gap
        if (!(nondec || noninc)) {
            double pad = max_slope * (h / kPanels);
            m -= pad;
            M += pad;
        }
        double dg = clamp_(gv[kPanels] - gv[0], x0);
        Cell c;
        c.x0 = x0;
        c.x1 = x1;
        c.val = t16;
        c.err = std::fabs(t16 - t8);
        c.L = m * dg;
        c.U = M * dg;
        c.splittable = (x1 - x0) > min_width;
        return c;
    }
};

// --- q-tail series ---------------------------------------------------------------

struct TailResult {
    double value, lower, upper, err, tail_bound;
    long terms;
};

TailResult sum_tail(const RealFn& f, const RealFn& g, const GClamp& clamp, const QTailDesc& d,
                    long k_start, double b_cap, double tol) {
    // term_k = f(tp(k)) (g(sigma(tp(k))) - g(tp(k))), sigma(tp(k)) = tp(k-1)
    // capped at b for the first term when the window ends inside the tail
    std::vector<double> terms;
    long k = k_start;
    double prev_t = std::min(b_cap, k_start == 1 ? d.upto : qtail_point(d, k_start - 1));
    double stop = tol / 10.0;
    for (;;) {
        double t = qtail_point(d, k);
        double term = f(t) * clamp(g(prev_t) - g(t), t);
        terms.push_back(term);
        prev_t = t;
        ++k;
        if (terms.size() >= 6 && std::fabs(term) < stop) break;
        if (t - d.at < 1e-300) break;
        if (terms.size() > 300000)
            fail(ErrKind::NoConvergence, "q-tail series does not decay at t = " + format_double(t));
    }
    long K = k - 1; // last summed index
    Kahan S;
    for (auto it = terms.rbegin(); it != terms.rend(); ++it) S.add(*it); // ascending t

    // geometric remainder bound from the observed ratio
    double r = 0;
    for (std::size_t i = terms.size() > 3 ? terms.size() - 3 : 1; i < terms.size(); ++i) {
        double prev = std::fabs(terms[i - 1]);
        if (prev > 0) r = std::max(r, std::fabs(terms[i]) / prev);
    }
    r = std::min(r, 0.95);
    double tK = qtail_point(d, K), tK1 = qtail_point(d, K + 1);
    double next_term = std::fabs(f(tK1)) * clamp(g(tK) - g(tK1), tK1);
    double tail_bound = next_term / (1.0 - r);

    // Darboux bracket for the whole truncated stub [at, tp(K))
    double dg_rem = clamp(g(tK) - g(d.at), d.at);
    double m = f(d.at), M = m;
    for (int j = 1; j <= 12; ++j) {
        double fx = f(qtail_point(d, K + j));
        m = std::min(m, fx);
        M = std::max(M, fx);
    }
    TailResult tr;
    tr.value = S.get() + 0.5 * (m + M) * dg_rem;
    tr.lower = S.get() + m * dg_rem;
    tr.upper = S.get() + M * dg_rem;
    tr.err = 0.5 * (M - m) * dg_rem;
    tr.tail_bound = tail_bound;
    tr.terms = long(terms.size());
    return tr;
}

// --- integrator validation --------------------------------------------------------

GClamp make_clamp(const RealFn& g, double a, double b) {
    return GClamp{std::max({1.0, std::fabs(g(a)), std::fabs(g(b))})};
}

} // namespace

void validate_integrator(const TimeScale& T, const RealFn& g, double a, double b) {
    GClamp clamp = make_clamp(g, a, b);
    for (const Atom& at : decompose(T, a, b)) {
        switch (at.kind) {
            case Atom::Kind::Scattered:
                (void)clamp(g(at.st) - g(at.t), at.t);
                break;
            case Atom::Kind::Dense: {
                const int n = 513;
                double prev = g(at.u);
                for (int j = 1; j < n; ++j) {
                    double x = at.u + (at.v - at.u) * double(j) / (n - 1);
                    double cur = g(x);
                    (void)clamp(cur - prev, x);
                    prev = cur;
                }
                break;
            }
            case Atom::Kind::Tail: {
                double prev_t = qtail_point(at.tail, at.k_start - 1);
                for (long k = at.k_start; k < at.k_start + 64; ++k) {
                    double t = qtail_point(at.tail, k);
                    (void)clamp(g(prev_t) - g(t), t);
                    prev_t = t;
                }
                (void)clamp(g(prev_t) - g(at.tail.at), at.tail.at);
                break;
            }
        }
    }
}

// --- darboux bounds over an explicit partition -------------------------------------

namespace {

// inf/sup samples of f over the cell [lo, hi)_T: isolated scale points inside,
// plus sampled dense runs (right cell edge included as a limit value)
struct CellProfile {
    std::vector<double> isolated;
    std::vector<std::pair<double, double>> dense;
};

CellProfile cell_profile(const TimeScale& T, double lo, double hi) {
    CellProfile p;
    for (const Component& c : T.components()) {
        if (c.hi < lo || c.lo >= hi) continue;
        switch (c.kind) {
            case Component::Kind::Point:
                if (c.lo >= lo && c.lo < hi) p.isolated.push_back(c.lo);
                break;
            case Component::Kind::Interval: {
                double u = std::max(c.lo, lo), v = std::min(c.hi, hi);
                if (u < v)
                    p.dense.push_back({u, v});
                else if (u == v && u < hi)
                    p.isolated.push_back(u);
                break;
            }
            case Component::Kind::QTail: {
                const QTailDesc& d = c.tail;
                if (hi <= d.at) break;
                long k_min = tail_k_strictly_below(d, hi);
                long k_max = k_min + 40;
                if (lo > d.at) k_max = tail_k_at_or_above_a(d, lo);
                for (long k = k_min; k <= k_max; ++k) {
                    double t = qtail_point(d, k);
                    if (t >= lo && t < hi) p.isolated.push_back(t);
                }
                if (d.at >= lo && d.at < hi) p.isolated.push_back(d.at);
                break;
            }
        }
    }
    return p;
}

// sampled inf/sup of f over a cell, slope-padded on non-monotone dense runs
std::pair<double, double> cell_inf_sup(const TimeScale& T, const RealFn& f, double lo, double hi) {
    CellProfile p = cell_profile(T, lo, hi);
    double m = std::numeric_limits<double>::infinity(), M = -m;
    for (double t : p.isolated) {
        double v = f(t);
        m = std::min(m, v);
        M = std::max(M, v);
    }
    for (auto [u, v] : p.dense) {
        double fv[kPanels + 1];
        bool nondec = true, noninc = true;
        double max_slope = 0;
        for (int j = 0; j <= kPanels; ++j) {
            double x = u + (v - u) * double(j) / kPanels;
            fv[j] = f(x);
            if (j > 0) {
                if (fv[j] < fv[j - 1]) nondec = false;
                if (fv[j] > fv[j - 1]) noninc = false;
                max_slope = std::max(max_slope,
                                     std::fabs(fv[j] - fv[j - 1]) / ((v - u) / kPanels));
            }
        }
        double lo_s = *std::min_element(fv, fv + kPanels + 1);
        double hi_s = *std::max_element(fv, fv + kPanels + 1);
        if (!(nondec || noninc)) {
            double pad = max_slope * ((v - u) / kPanels);
            lo_s -= pad;
            hi_s += pad;
        }
        m = std::min(m, lo_s);
        M = std::max(M, hi_s);
    }
    if (m > M) fail(ErrKind::InvalidArgument, "empty partition cell");
    return {m, M};
}

} // namespace

std::pair<double, double> darboux_bounds(const TimeScale& T, const RealFn& f, const RealFn& g,
                                         const Partition& P) {
    validate_integrator(T, g, P.a(), P.b());
    GClamp clamp = make_clamp(g, P.a(), P.b());
    const auto& pts = P.points();
    Kahan L, U;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double dg = clamp(g(pts[i + 1]) - g(pts[i]), pts[i]);
        auto [m, M] = cell_inf_sup(T, f, pts[i], pts[i + 1]);
        L.add(m * dg);
        U.add(M * dg);
    }
    return {L.get(), U.get()};
}

std::pair<double, double> darboux_bounds(const TimeScale& T, const ExprFn& f, const ExprFn& g,
                                         const Partition& P) {
    return darboux_bounds(T, f.fn1(), g.fn1(), P);
}

RSSum rs_sum(const TimeScale& T, const RealFn& f, const RealFn& g, const Partition& P,
             const std::vector<double>& selection) {
    const auto& pts = P.points();
    if (selection.size() != P.cells())
        fail(ErrKind::SelectionOutOfCell, "selection needs exactly one point per cell");
    Kahan s;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double x = selection[i];
        auto sx = T.snap_opt(x);
        if (!sx || *sx < pts[i] || *sx >= pts[i + 1])
            fail(ErrKind::SelectionOutOfCell,
                 "selection point " + format_double(x) + " is outside cell [" +
                     format_double(pts[i]) + "," + format_double(pts[i + 1]) + ")");
        s.add(f(*sx) * (g(pts[i + 1]) - g(pts[i])));
    }
    RSSum r;
    r.value = s.get();
    r.partition = P;
    r.tags = selection;
    return r;
}

RSSum rs_sum(const TimeScale& T, const ExprFn& f, const ExprFn& g, const Partition& P,
             const std::vector<double>& selection) {
    return rs_sum(T, f.fn1(), g.fn1(), P, selection);
}

// --- the single-integral driver ------------------------------------------------------

IntegralResult rs_integral(const TimeScale& T, const RealFn& f, const RealFn& g, double a,
                           double b, const IntegrateOptions& opt) {
    double sa = T.snap(a), sb = T.snap(b);
    if (!(sa < sb)) fail(ErrKind::InvalidArgument, "rs_integral needs a < b");
    validate_integrator(T, g, sa, sb);
    GClamp clamp = make_clamp(g, sa, sb);

    std::vector<Atom> atoms = decompose(T, sa, sb);

    // tolerance shares for dense stretches, proportional to their g-mass
    double mass_total = 0;
    std::vector<double> mass(atoms.size(), 0.0);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (atoms[i].kind != Atom::Kind::Dense) continue;
        mass[i] = clamp(g(atoms[i].v) - g(atoms[i].u), atoms[i].u) + 1e-300;
        mass_total += mass[i];
    }

    long budget = resolve_max_cells(opt);
    long gap_budget = opt.gap_cells;
    Kahan value, lower, upper, err;
    double tail_bound = 0;
    long refinements = 0;

    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const Atom& at = atoms[i];
        switch (at.kind) {
            case Atom::Kind::Scattered: {
                double v = f(at.t) * clamp(g(at.st) - g(at.t), at.t);
                value.add(v);
                lower.add(v);
                upper.add(v);
                break;
            }
            case Atom::Kind::Dense: {
                double share = 0.9 * opt.tol * (mass_total > 0 ? mass[i] / mass_total : 1.0);
                DenseIntegrator di(f, g, clamp, &budget, &gap_budget);
                DenseResult dr = di.run(at.u, at.v, share);
                value.add(dr.value);
                lower.add(dr.lower);
                upper.add(dr.upper);
                err.add(dr.err);
                refinements += dr.splits;
                break;
            }
            case Atom::Kind::Tail: {
                double cap = sb;
                TailResult tr = sum_tail(f, g, clamp, at.tail, at.k_start, cap, opt.tol);
                value.add(tr.value);
                lower.add(tr.lower);
                upper.add(tr.upper);
                err.add(tr.err);
                tail_bound += tr.tail_bound;
                refinements += tr.terms;
                break;
            }
        }
    }

    IntegralResult r;
    r.value = value.get();
    r.lower = lower.get();
    r.upper = upper.get();
    r.gap = r.upper - r.lower;
    r.tail_bound = tail_bound;
    r.refinements = refinements;
    r.err_est = err.get();
    r.converged = (r.err_est + r.tail_bound) <= opt.tol;
    return r;
}

IntegralResult rs_integral(const TimeScale& T, const ExprFn& f, const ExprFn& g, double a,
                           double b, const IntegrateOptions& opt) {
    return rs_integral(T, f.fn1(), g.fn1(), a, b, opt);
}

IntegralResult rs_integral_via_transition(const TimeScale& T, const RealFn& f, const RealFn& g,
                                          double a, double b, const IntegrateOptions& opt) {
    double sa = T.snap(a), sb = T.snap(b);
    if (!(sa < sb)) fail(ErrKind::InvalidArgument, "rs_integral needs a < b");
    validate_integrator(T, g, sa, sb);

    // probe the delta derivative of g on each dense stretch before integrating
    for (const Atom& at : decompose(T, sa, sb)) {
        if (at.kind != Atom::Kind::Dense) continue;
        for (double frac : {0.25, 0.5, 0.75})
            (void)delta_derivative(T, g, at.u + frac * (at.v - at.u));
    }

    RealFn integrand = [&T, f, g](double t) { return f(t) * delta_derivative(T, g, t); };
    RealFn id = [](double t) { return t; };
    return rs_integral(T, integrand, id, sa, sb, opt);
}

IntegralResult rs_integral_via_transition(const TimeScale& T, const ExprFn& f, const ExprFn& g,
                                          double a, double b, const IntegrateOptions& opt) {
    return rs_integral_via_transition(T, f.fn1(), g.fn1(), a, b, opt);
}

// --- cumulative ------------------------------------------------------------------------

CumulativeIntegral::CumulativeIntegral(TimeScale T, RealFn f, RealFn g, double a, double b,
                                       IntegrateOptions opt)
    : T_(std::move(T)), f_(std::move(f)), g_(std::move(g)), a_(T_.snap(a)), b_(T_.snap(b)),
      opt_(opt) {
    if (!(a_ < b_)) fail(ErrKind::InvalidArgument, "cumulative needs a < b");
    validate_integrator(T_, g_, a_, b_);
}

const IntegralResult& CumulativeIntegral::at(double t_raw) const {
    double t = T_.snap(t_raw);
    if (t < a_ || t > b_)
        fail(ErrKind::InvalidArgument, "cumulative query outside [a,b]");
    auto it = memo_.find(t);
    if (it != memo_.end()) return it->second;
    IntegralResult r;
    if (t > a_) r = rs_integral(T_, f_, g_, a_, t, opt_);
    return memo_.emplace(t, r).first->second;
}

CumulativeIntegral cumulative(const TimeScale& T, const RealFn& f, const RealFn& g, double a,
                              double b, const IntegrateOptions& opt) {
    return CumulativeIntegral(T, f, g, a, b, opt);
}

// --- double integral ---------------------------------------------------------------------

namespace {

struct AxisAtom {
    enum class Kind { Pt, Seg, Stub } kind;
    double t = 0, w = 0; // Pt/Stub: location and exact g-weight
    double u = 0, v = 0; // Seg
    std::vector<double> stub_samples; // Stub: scale points for f-range estimation
};

std::vector<AxisAtom> axis_atoms(const TimeScale& T, const RealFn& g, double a, double b,
                                 const GClamp& clamp, double tol) {
    std::vector<AxisAtom> out;
    for (const Atom& at : decompose(T, a, b)) {
        switch (at.kind) {
            case Atom::Kind::Scattered: {
                AxisAtom x;
                x.kind = AxisAtom::Kind::Pt;
                x.t = at.t;
                x.w = clamp(g(at.st) - g(at.t), at.t);
                out.push_back(std::move(x));
                break;
            }
            case Atom::Kind::Dense: {
                AxisAtom x;
                x.kind = AxisAtom::Kind::Seg;
                x.u = at.u;
                x.v = at.v;
                out.push_back(std::move(x));
                break;
            }
            case Atom::Kind::Tail: {
                // truncate the tail into explicit points plus a stub atom
                const QTailDesc& d = at.tail;
                double prev_t = std::min(b, at.k_start == 1 ? d.upto
                                                            : qtail_point(d, at.k_start - 1));
                long k = at.k_start;
                double stop = std::max(tol * 1e-3, 1e-14);
                for (;;) {
                    double t = qtail_point(d, k);
                    double w = clamp(g(prev_t) - g(t), t);
                    AxisAtom x;
                    x.kind = AxisAtom::Kind::Pt;
                    x.t = t;
                    x.w = w;
                    out.push_back(std::move(x));
                    prev_t = t;
                    ++k;
                    if (k - at.k_start >= 8 && w < stop) break;
                    if (t - d.at < 1e-300) break;
                    if (k - at.k_start > 100000)
                        fail(ErrKind::NoConvergence, "q-tail weights do not decay");
                }
                AxisAtom stub;
                stub.kind = AxisAtom::Kind::Stub;
                stub.t = qtail_point(d, k);
                stub.w = clamp(g(prev_t) - g(d.at), d.at);
                stub.stub_samples.push_back(d.at);
                for (int j = 0; j < 10; ++j) stub.stub_samples.push_back(qtail_point(d, k + j));
                out.push_back(std::move(stub));
                break;
            }
        }
    }
    return out;
}

double axis_mass(const std::vector<AxisAtom>& atoms, const RealFn& g, const GClamp& clamp) {
    double m = 0;
    for (const AxisAtom& a : atoms) {
        if (a.kind == AxisAtom::Kind::Seg)
            m += clamp(g(a.v) - g(a.u), a.u);
        else
            m += a.w;
    }
    return m;
}

// 2-D tensor-trapezoid cell engine over a dense x dense rectangle
struct Cell2 {
    double x0, x1, y0, y1;
    double val, err, L, U;
    double var_x, var_y;
    bool splittable;
};

class Dense2Integrator {
public:
    Dense2Integrator(const RealFn2& f, const RealFn& g1, const RealFn& g2, const GClamp& c1,
                     const GClamp& c2, long* budget, long* gap_budget = nullptr)
        : f_(f), g1_(g1), g2_(g2), c1_(c1), c2_(c2), budget_(budget), gap_budget_(gap_budget) {}

    DenseResult run(double u, double v, double c, double d, double share) {
        cells_.clear();
        min_wx_ = 1e-9 * (v - u);
        min_wy_ = 1e-9 * (d - c);
        cells_.push_back(eval(u, v, c, d));
        --*budget_;
        double total_err = cells_[0].err;
        using QE = std::pair<double, std::size_t>;
        std::priority_queue<QE> heap;
        heap.emplace(cells_[0].err, 0);
        long splits = 0;

        while (total_err > share) {
            while (!heap.empty() && (heap.top().first != cells_[heap.top().second].err ||
                                     !cells_[heap.top().second].splittable))
                heap.pop();
            if (heap.empty()) break;
            if (*budget_ <= 0)
                fail(ErrKind::NoConvergence, "double-integral refinement budget exhausted");
            auto [e, idx] = heap.top();
            heap.pop();
            Cell2 p = cells_[idx];
            total_err -= p.err;
            // split the axis with the larger sampled Darboux width; ties axis 1
            bool split_x = p.var_x >= p.var_y;
            if ((p.x1 - p.x0) <= min_wx_) split_x = false;
            if ((p.y1 - p.y0) <= min_wy_) split_x = true;
            if (split_x) {
                double mid = 0.5 * (p.x0 + p.x1);
                cells_[idx] = eval(p.x0, mid, p.y0, p.y1);
                cells_.push_back(eval(mid, p.x1, p.y0, p.y1));
            } else {
                double mid = 0.5 * (p.y0 + p.y1);
                cells_[idx] = eval(p.x0, p.x1, p.y0, mid);
                cells_.push_back(eval(p.x0, p.x1, mid, p.y1));
            }
            *budget_ -= 2;
            total_err += cells_[idx].err + cells_.back().err;
            heap.emplace(cells_[idx].err, idx);
            heap.emplace(cells_.back().err, cells_.size() - 1);
            ++splits;
        }

        if (gap_budget_ && *gap_budget_ > 0) {
            std::priority_queue<QE> wide;
            double total_gap = 0;
            for (std::size_t i = 0; i < cells_.size(); ++i) {
                wide.emplace(cells_[i].U - cells_[i].L, i);
                total_gap += cells_[i].U - cells_[i].L;
            }
            while (total_gap > 10.0 * share && *gap_budget_ > 0 && *budget_ > 0) {
                while (!wide.empty() && (wide.top().first != cells_[wide.top().second].U -
                                                                 cells_[wide.top().second].L ||
                                         !cells_[wide.top().second].splittable))
                    wide.pop();
                if (wide.empty()) break;
                auto [w, idx] = wide.top();
                wide.pop();
                if (w <= 0) break;
                Cell2 p = cells_[idx];
                total_gap -= p.U - p.L;
                bool split_x = p.var_x >= p.var_y;
                if ((p.x1 - p.x0) <= min_wx_) split_x = false;
                if ((p.y1 - p.y0) <= min_wy_) split_x = true;
                if (split_x) {
                    double mid = 0.5 * (p.x0 + p.x1);
                    cells_[idx] = eval(p.x0, mid, p.y0, p.y1);
                    cells_.push_back(eval(mid, p.x1, p.y0, p.y1));
                } else {
                    double mid = 0.5 * (p.y0 + p.y1);
                    cells_[idx] = eval(p.x0, p.x1, p.y0, mid);
                    cells_.push_back(eval(p.x0, p.x1, mid, p.y1));
                }
                *budget_ -= 2;
                --*gap_budget_;
                total_gap +=
                    (cells_[idx].U - cells_[idx].L) + (cells_.back().U - cells_.back().L);
                wide.emplace(cells_[idx].U - cells_[idx].L, idx);
                wide.emplace(cells_.back().U - cells_.back().L, cells_.size() - 1);
                ++splits;
            }
        }

        std::sort(cells_.begin(), cells_.end(), [](const Cell2& a, const Cell2& b) {
            if (a.x0 != b.x0) return a.x0 < b.x0;
            return a.y0 < b.y0;
        });
        Kahan val, lo, hi, err;
        for (const Cell2& c2 : cells_) {
            val.add(c2.val);
            lo.add(c2.L);
            hi.add(c2.U);
            err.add(c2.err);
        }
        return {val.get(), lo.get(), hi.get(), err.get(), splits};
    }

private:
    const RealFn2& f_;
    const RealFn& g1_;
    const RealFn& g2_;
    GClamp c1_, c2_;
    long* budget_;
    long* gap_budget_;
    std::vector<Cell2> cells_;
    double min_wx_ = 0, min_wy_ = 0;

    static constexpr int N = 4; // panels per axis; 5x5 samples

    Cell2 eval(double x0, double x1, double y0, double y1) const {
        double xs[N + 1], ys[N + 1], fv[N + 1][N + 1], dgx[N], dgy[N];
        for (int i = 0; i <= N; ++i) xs[i] = x0 + (x1 - x0) * double(i) / N;
        for (int j = 0; j <= N; ++j) ys[j] = y0 + (y1 - y0) * double(j) / N;
        for (int i = 0; i <= N; ++i)
            for (int j = 0; j <= N; ++j) fv[i][j] = f_(xs[i], ys[j]);
        for (int i = 0; i < N; ++i) dgx[i] = c1_(g1_(xs[i + 1]) - g1_(xs[i]), xs[i]);
        for (int j = 0; j < N; ++j) dgy[j] = c2_(g2_(ys[j + 1]) - g2_(ys[j]), ys[j]);

        double t44 = 0;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j)
                t44 += 0.25 * (fv[i][j] + fv[i + 1][j] + fv[i][j + 1] + fv[i + 1][j + 1]) *
                       dgx[i] * dgy[j];
        double t22 = 0;
        for (int i = 0; i < N; i += 2)
            for (int j = 0; j < N; j += 2)
                t22 += 0.25 * (fv[i][j] + fv[i + 2][j] + fv[i][j + 2] + fv[i + 2][j + 2]) *
                       (dgx[i] + dgx[i + 1]) * (dgy[j] + dgy[j + 1]);

        double m = fv[0][0], M = fv[0][0], var_x = 0, var_y = 0, slope_x = 0, slope_y = 0;
        for (int j = 0; j <= N; ++j) {
            double cm = fv[0][j], cM = fv[0][j];
            for (int i = 0; i <= N; ++i) {
                cm = std::min(cm, fv[i][j]);
                cM = std::max(cM, fv[i][j]);
                if (i > 0)
                    slope_x = std::max(slope_x, std::fabs(fv[i][j] - fv[i - 1][j]) /
                                                    ((x1 - x0) / N));
            }
            var_x = std::max(var_x, cM - cm);
            m = std::min(m, cm);
            M = std::max(M, cM);
        }
        for (int i = 0; i <= N; ++i) {
            double cm = fv[i][0], cM = fv[i][0];
            for (int j = 0; j <= N; ++j) {
                cm = std::min(cm, fv[i][j]);
                cM = std::max(cM, fv[i][j]);
                if (j > 0)
                    slope_y = std::max(slope_y, std::fabs(fv[i][j] - fv[i][j - 1]) /
                                                    ((y1 - y0) / N));
            }
            var_y = std::max(var_y, cM - cm);
        }
        double pad = slope_x * (x1 - x0) / N + slope_y * (y1 - y0) / N;
        double wx = 0, wy = 0;
        for (int i = 0; i < N; ++i) wx += dgx[i];
        for (int j = 0; j < N; ++j) wy += dgy[j];

        Cell2 c;
        c.x0 = x0; c.x1 = x1; c.y0 = y0; c.y1 = y1;
        c.val = t44;
        c.err = std::fabs(t44 - t22);
        c.L = (m - pad) * wx * wy;
        c.U = (M + pad) * wx * wy;
        c.var_x = var_x;
        c.var_y = var_y;
        c.splittable = (x1 - x0) > min_wx_ || (y1 - y0) > min_wy_;
        return c;
    }
};

} // namespace

IntegralResult rs_double_integral(const TimeScale& T1, const TimeScale& T2, const RealFn2& f,
                                  const RealFn& g1, const RealFn& g2, const Rect& r,
                                  const IntegrateOptions& opt) {
    double a = T1.snap(r.a), b = T1.snap(r.b);
    double c = T2.snap(r.c), d = T2.snap(r.d);
    if (!(a < b) || !(c < d)) fail(ErrKind::InvalidArgument, "double integral needs a<b and c<d");
    validate_integrator(T1, g1, a, b);
    validate_integrator(T2, g2, c, d);
    GClamp c1 = make_clamp(g1, a, b), c2 = make_clamp(g2, c, d);

    std::vector<AxisAtom> ax1 = axis_atoms(T1, g1, a, b, c1, opt.tol);
    std::vector<AxisAtom> ax2 = axis_atoms(T2, g2, c, d, c2, opt.tol);
    double m1 = axis_mass(ax1, g1, c1), m2 = axis_mass(ax2, g2, c2);

    // distribute the tolerance over refinable work items by mass product
    double work_mass = 0;
    for (const AxisAtom& x : ax1)
        for (const AxisAtom& y : ax2) {
            bool seg_x = x.kind == AxisAtom::Kind::Seg;
            bool seg_y = y.kind == AxisAtom::Kind::Seg;
            if (!seg_x && !seg_y) continue;
            double mx = seg_x ? c1(g1(x.v) - g1(x.u), x.u) : x.w;
            double my = seg_y ? c2(g2(y.v) - g2(y.u), y.u) : y.w;
            work_mass += mx * my + 1e-300;
        }

    long budget = resolve_max_cells(opt);
    long gap_budget = opt.gap_cells;
    Kahan value, lower, upper, err;
    long refinements = 0;
    double tail_bound = 0;

    auto range_over = [&](const std::vector<double>& txs, const std::vector<double>& tys) {
        double mm = std::numeric_limits<double>::infinity(), MM = -mm;
        for (double tx : txs)
            for (double ty : tys) {
                double v = f(tx, ty);
                mm = std::min(mm, v);
                MM = std::max(MM, v);
            }
        return std::pair<double, double>{mm, MM};
    };

    for (const AxisAtom& x : ax1) {
        for (const AxisAtom& y : ax2) {
            bool seg_x = x.kind == AxisAtom::Kind::Seg;
            bool seg_y = y.kind == AxisAtom::Kind::Seg;
            if (!seg_x && !seg_y) {
                bool stub = x.kind == AxisAtom::Kind::Stub || y.kind == AxisAtom::Kind::Stub;
                if (!stub) {
                    double v = f(x.t, y.t) * x.w * y.w;
                    value.add(v);
                    lower.add(v);
                    upper.add(v);
                } else {
                    // truncated-tail stub: bracket f over the stub samples
                    std::vector<double> txs = x.kind == AxisAtom::Kind::Stub ? x.stub_samples
                                                                             : std::vector<double>{x.t};
                    std::vector<double> tys = y.kind == AxisAtom::Kind::Stub ? y.stub_samples
                                                                             : std::vector<double>{y.t};
                    auto [mm, MM] = range_over(txs, tys);
                    double w = x.w * y.w;
                    value.add(0.5 * (mm + MM) * w);
                    lower.add(mm * w);
                    upper.add(MM * w);
                    err.add(0.5 * (MM - mm) * w);
                    tail_bound += 0.5 * (MM - mm) * w;
                }
                continue;
            }
            double mx = seg_x ? c1(g1(x.v) - g1(x.u), x.u) : x.w;
            double my = seg_y ? c2(g2(y.v) - g2(y.u), y.u) : y.w;
            double share = 0.85 * opt.tol * (mx * my + 1e-300) / (work_mass > 0 ? work_mass : 1.0);
            if (seg_x && seg_y) {
                Dense2Integrator di(f, g1, g2, c1, c2, &budget, &gap_budget);
                DenseResult dr = di.run(x.u, x.v, y.u, y.v, share);
                value.add(dr.value);
                lower.add(dr.lower);
                upper.add(dr.upper);
                err.add(dr.err);
                refinements += dr.splits;
            } else if (seg_y) {
                // point (or stub) times a 1-D integral along axis 2
                double t1 = x.t;
                RealFn slice = [&f, t1](double s) { return f(t1, s); };
                DenseIntegrator di(slice, g2, c2, &budget, &gap_budget);
                DenseResult dr = di.run(y.u, y.v, x.w > 0 ? share / std::max(x.w, 1e-300) : share);
                value.add(x.w * dr.value);
                lower.add(x.w * dr.lower);
                upper.add(x.w * dr.upper);
                err.add(x.w * dr.err);
                refinements += dr.splits;
            } else {
                double t2 = y.t;
                RealFn slice = [&f, t2](double s) { return f(s, t2); };
                DenseIntegrator di(slice, g1, c1, &budget, &gap_budget);
                DenseResult dr = di.run(x.u, x.v, y.w > 0 ? share / std::max(y.w, 1e-300) : share);
                value.add(y.w * dr.value);
                lower.add(y.w * dr.lower);
                upper.add(y.w * dr.upper);
                err.add(y.w * dr.err);
                refinements += dr.splits;
            }
        }
    }
    (void)m1;
    (void)m2;

    IntegralResult res;
    res.value = value.get();
    res.lower = lower.get();
    res.upper = upper.get();
    res.gap = res.upper - res.lower;
    res.tail_bound = tail_bound;
    res.refinements = refinements;
    res.err_est = err.get();
    res.converged = (res.err_est + res.tail_bound) <= opt.tol;
    return res;
}

IntegralResult rs_double_integral(const TimeScale& T1, const TimeScale& T2, const ExprFn& f,
                                  const ExprFn& g1, const ExprFn& g2, const Rect& r,
                                  const IntegrateOptions& opt) {
    return rs_double_integral(T1, T2, f.fn2(), g1.fn1(), g2.fn1(), r, opt);
}

IntegralResult iterated_integral(const TimeScale& T1, const TimeScale& T2, const RealFn2& f,
                                 const RealFn& g1, const RealFn& g2, const Rect& r, IterOrder ord,
                                 const IntegrateOptions& opt) {
    double a = T1.snap(r.a), b = T1.snap(r.b);
    double c = T2.snap(r.c), d = T2.snap(r.d);
    if (!(a < b) || !(c < d)) fail(ErrKind::InvalidArgument, "iterated integral needs a<b, c<d");

    const TimeScale& outerT = ord == IterOrder::TS ? T1 : T2;
    const TimeScale& innerT = ord == IterOrder::TS ? T2 : T1;
    const RealFn& outerG = ord == IterOrder::TS ? g1 : g2;
    const RealFn& innerG = ord == IterOrder::TS ? g2 : g1;
    double oa = ord == IterOrder::TS ? a : c, ob = ord == IterOrder::TS ? b : d;
    double ia = ord == IterOrder::TS ? c : a, ib = ord == IterOrder::TS ? d : b;
    const char* axis_name = ord == IterOrder::TS ? "axis 2 (s)" : "axis 1 (t)";

    validate_integrator(outerT, outerG, oa, ob);
    validate_integrator(innerT, innerG, ia, ib);

    double outer_mass =
        std::fabs(outerG(ob) - outerG(oa)) + 1.0; // rough scale for splitting tolerance
    IntegrateOptions inner_opt = opt;
    inner_opt.tol = 0.4 * opt.tol / outer_mass;
    IntegrateOptions outer_opt = opt;
    outer_opt.tol = 0.5 * opt.tol;

    auto memo = std::make_shared<std::unordered_map<double, double>>();
    bool outer_is_t = ord == IterOrder::TS;
    RealFn phi = [&, memo, outer_is_t](double tout) {
        auto it = memo->find(tout);
        if (it != memo->end()) return it->second;
        RealFn slice = outer_is_t ? RealFn([&f, tout](double s) { return f(tout, s); })
                                  : RealFn([&f, tout](double t) { return f(t, tout); });
        double v;
        try {
            v = rs_integral(innerT, slice, innerG, ia, ib, inner_opt).value;
        } catch (const Error& e) {
            throw Error(e.kind(), std::string("inner integral over ") + axis_name + ": " + e.what());
        }
        (*memo)[tout] = v;
        return v;
    };

    IntegralResult outer;
    try {
        outer = rs_integral(outerT, phi, outerG, oa, ob, outer_opt);
    } catch (const Error& e) {
        if (std::string(e.what()).find("inner integral") != std::string::npos) throw;
        throw Error(e.kind(), std::string("outer integral: ") + e.what());
    }

    // widen by the inner tolerance carried across the outer mass
    double inner_spread = inner_opt.tol * (outer_mass - 1.0 + 1e-300);
    IntegralResult res = outer;
    res.lower -= inner_spread;
    res.upper += inner_spread;
    res.gap = res.upper - res.lower;
    res.err_est = outer.err_est + inner_spread;
    res.converged = (res.err_est + res.tail_bound) <= opt.tol;
    return res;
}

IntegralResult iterated_integral(const TimeScale& T1, const TimeScale& T2, const ExprFn& f,
                                 const ExprFn& g1, const ExprFn& g2, const Rect& r, IterOrder ord,
                                 const IntegrateOptions& opt) {
    return iterated_integral(T1, T2, f.fn2(), g1.fn1(), g2.fn1(), r, ord, opt);
}

LinearityReport linearity_check(const TimeScale& T, const RealFn& f, const RealFn& g, double a,
                                double b, double alpha, double beta,
                                const IntegrateOptions& opt) {
    if (beta < 0)
        fail(ErrKind::PreconditionViolated, "beta must be >= 0 so beta*g stays non-decreasing");
    RealFn af = [f, alpha](double t) { return alpha * f(t); };
    RealFn bg = [g, beta](double t) { return beta * g(t); };
    LinearityReport r;
    r.scaled = rs_integral(T, af, bg, a, b, opt).value;
    r.direct = alpha * beta * rs_integral(T, f, g, a, b, opt).value;
    r.diff = std::fabs(r.scaled - r.direct);
    r.bound = 2.0 * opt.tol * std::max(1.0, std::fabs(alpha * beta));
    r.ok = r.diff <= r.bound;
    return r;
}

} // namespace tsint
