#include "tsint/timescale.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace tsint {

namespace {

double loc_eps(double x, double y) {
    return 1e-12 * std::max({1.0, std::fabs(x), std::fabs(y)});
}

bool near(double x, double y) { return std::fabs(x - y) <= loc_eps(x, y); }

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) fail(ErrKind::InvalidScale, std::string(what) + " must be finite");
}

} // namespace

double qtail_point(const QTailDesc& d, long k) {
    if (k <= 0) return d.upto;
    return d.at + (d.upto - d.at) * std::pow(d.q, -double(k));
}

namespace {

// index of the tail point equal to t, if any
std::optional<long> tail_index_of(const QTailDesc& d, double t) {
    double span = d.upto - d.at;
    double off = t - d.at;
    if (off <= 0.0 || t > d.upto + loc_eps(t, d.upto)) return std::nullopt;
    double kf = std::log(span / off) / std::log(d.q);
    long k = std::lround(kf);
    if (k < 0) k = 0;
    for (long kk = std::max(0l, k - 1); kk <= k + 1; ++kk) {
        double p = qtail_point(d, kk);
        double gap = qtail_point(d, std::max(kk, 1l) - 1) - qtail_point(d, std::max(kk, 1l));
        double tol = std::min(loc_eps(t, p) * 1e3, 0.4 * gap);
        tol = std::max(tol, 1e-15 * std::fabs(span));
        if (std::fabs(t - p) <= tol) return kk;
    }
    return std::nullopt;
}

// smallest k with tp(k) <= x (assumes x > at)
long tail_first_k_at_or_below(const QTailDesc& d, double x) {
    if (x >= d.upto) return 0;
    double kf = std::log((d.upto - d.at) / (x - d.at)) / std::log(d.q);
    long k = std::max(0l, std::lround(kf) - 2);
    while (qtail_point(d, k) > x + loc_eps(x, qtail_point(d, k))) ++k;
    return k;
}

// largest k with tp(k) >= x (assumes at < x <= upto)
long tail_last_k_at_or_above(const QTailDesc& d, double x) {
    long k = tail_first_k_at_or_below(d, x);
    double p = qtail_point(d, k);
    if (p >= x - loc_eps(x, p)) return k;
    return k - 1;
}

} // namespace

// --- construction ------------------------------------------------------------

TimeScale TimeScale::from_components(std::vector<Component> comps) {
    TimeScale T;
    T.comps_ = std::move(comps);
    T.normalize();
    return T;
}

TimeScale TimeScale::interval(double lo, double hi) {
    check_finite(lo, "interval endpoint");
    check_finite(hi, "interval endpoint");
    if (!(lo < hi)) fail(ErrKind::InvalidScale, "interval needs lo < hi");
    return from_components({Component::interval(lo, hi)});
}

TimeScale TimeScale::point(double v) {
    check_finite(v, "point");
    return from_components({Component::point(v)});
}

TimeScale TimeScale::points(std::vector<double> vs) {
    if (vs.empty()) fail(ErrKind::InvalidScale, "points(...) needs at least one value");
    std::vector<Component> cs;
    cs.reserve(vs.size());
    for (double v : vs) {
        check_finite(v, "point");
        cs.push_back(Component::point(v));
    }
    return from_components(std::move(cs));
}

TimeScale TimeScale::integers(double a, double b) {
    check_finite(a, "endpoint");
    check_finite(b, "endpoint");
    double lo = std::ceil(a), hi = std::floor(b);
    if (lo > hi) fail(ErrKind::InvalidScale, "integers(a,b) contains no integer");
    if (hi - lo > 1e6) fail(ErrKind::InvalidScale, "integers(a,b) is too large");
    std::vector<Component> cs;
    for (double v = lo; v <= hi; v += 1.0) cs.push_back(Component::point(v));
    return from_components(std::move(cs));
}

TimeScale TimeScale::hgrid(double a, double b, double h) {
    check_finite(a, "endpoint");
    check_finite(b, "endpoint");
    if (!(h > 0) || !(b > a)) fail(ErrKind::InvalidScale, "hgrid needs a < b and h > 0");
    double n = std::round((b - a) / h);
    if (n < 1 || n > 1e6) fail(ErrKind::InvalidScale, "hgrid step count out of range");
    std::vector<Component> cs;
    for (long i = 0; i <= long(n); ++i) cs.push_back(Component::point(a + double(i) * h));
    cs.back() = Component::point(b);
    return from_components(std::move(cs));
}

TimeScale TimeScale::qtail(double q, double at, double upto) {
    check_finite(at, "qtail accumulation point");
    check_finite(upto, "qtail top");
    if (!(q > 1.0)) fail(ErrKind::InvalidScale, "qtail needs q > 1");
    if (!(at < upto)) fail(ErrKind::InvalidScale, "qtail needs at < upto");
    return from_components({Component::qtail({q, at, upto})});
}

TimeScale TimeScale::join(std::vector<TimeScale> parts) {
    if (parts.empty()) fail(ErrKind::InvalidScale, "union of no scales");
    std::vector<Component> cs;
    for (const TimeScale& p : parts)
        cs.insert(cs.end(), p.comps_.begin(), p.comps_.end());
    return from_components(std::move(cs));
}

// --- normalization ------------------------------------------------------------

namespace {

void push_merged(std::vector<Component>& out, Component b);

void emit_tail_suffix_points(std::vector<Component>& out, const QTailDesc& d,
                             long k_top_incl, long k_bottom_incl) {
    // tail points tp(k) for k in [k_top_incl .. k_bottom_incl], ascending t
    for (long k = k_bottom_incl; k >= k_top_incl; --k)
        push_merged(out, Component::point(qtail_point(d, k)));
}

void push_merged(std::vector<Component>& out, Component b) {
    if (out.empty()) {
        out.push_back(b);
        return;
    }
    Component a = out.back();
    using K = Component::Kind;

    auto disjoint = [&]() { return b.lo > a.hi + loc_eps(a.hi, b.lo); };

    if (a.kind == K::Point && b.kind == K::Point) {
        if (near(a.lo, b.lo)) return; // dedupe
        out.push_back(b);
        return;
    }
    if (a.kind == K::Interval && b.kind == K::Point) {
        if (!disjoint()) return; // absorbed
        out.push_back(b);
        return;
    }
    if (a.kind == K::Point && b.kind == K::Interval) {
        if (!disjoint()) {
            out.back() = Component::interval(a.lo, std::max(a.lo, b.hi));
            return;
        }
        out.push_back(b);
        return;
    }
    if (a.kind == K::Interval && b.kind == K::Interval) {
        if (!disjoint()) {
            out.back() = Component::interval(a.lo, std::max(a.hi, b.hi));
            return;
        }
        out.push_back(b);
        return;
    }

    if (b.kind == K::QTail && (a.kind == K::Point || a.kind == K::Interval)) {
        const QTailDesc& d = b.tail;
        // canonical adjacency: previous component ends exactly at the
        // accumulation point
        if (near(a.hi, d.at) || b.lo > a.hi + loc_eps(a.hi, b.lo)) {
            out.push_back(b);
            return;
        }
        // tail interior overlaps a: absorb tail points <= a.hi, keep the rest
        if (a.kind == K::Point)
            fail(ErrKind::InvalidScale, "q-tail accumulation below an isolated point");
        if (d.upto <= a.hi + loc_eps(a.hi, d.upto)) return; // fully absorbed
        long k_top = tail_first_k_at_or_below(d, a.hi); // first absorbed index
        emit_tail_suffix_points(out, d, 0, k_top - 1);
        return;
    }

    if (a.kind == K::QTail) {
        const QTailDesc& d = a.tail;
        if (disjoint()) {
            out.push_back(b);
            return;
        }
        if (b.kind == K::Point) {
            if (tail_index_of(d, b.lo)) return; // dedupe a member
            // point sits between tail points: split the tail around it
            long k_above = tail_last_k_at_or_above(d, b.lo); // points above b
            out.back() = Component::qtail({d.q, d.at, qtail_point(d, k_above + 1)});
            out.push_back(b);
            emit_tail_suffix_points(out, d, 0, k_above);
            return;
        }
        if (b.kind == K::Interval) {
            if (b.lo <= d.at + loc_eps(b.lo, d.at)) {
                // interval covers the accumulation point: tail collapses
                out.back() = b;
                if (d.upto > b.hi + loc_eps(d.upto, b.hi)) {
                    long k_top = tail_first_k_at_or_below(d, b.hi);
                    emit_tail_suffix_points(out, d, 0, k_top - 1);
                }
                return;
            }
            long k_below = tail_first_k_at_or_below(d, b.lo);
            if (near(qtail_point(d, k_below), b.lo)) ++k_below; // touching point absorbed
            out.back() = Component::qtail({d.q, d.at, qtail_point(d, k_below)});
            out.push_back(b);
            if (d.upto > b.hi + loc_eps(d.upto, b.hi)) {
                long k_top = tail_first_k_at_or_below(d, b.hi);
                emit_tail_suffix_points(out, d, 0, k_top - 1);
            }
            return;
        }
        // QTail over QTail
        const QTailDesc& e = b.tail;
        if (near(d.at, e.at) && near(d.q, e.q)) {
            if (tail_index_of(e, d.upto)) {
                out.back() = b; // a is a sub-tail of b (sorted: d.upto <= e.upto)
                return;
            }
        }
        fail(ErrKind::InvalidScale, "overlapping q-tails are not representable");
    }

    out.push_back(b);
}

} // namespace

void TimeScale::normalize() {
    if (comps_.empty()) fail(ErrKind::InvalidScale, "time scale must be nonempty");
    for (const Component& c : comps_) {
        check_finite(c.lo, "component bound");
        check_finite(c.hi, "component bound");
        if (c.kind == Component::Kind::Interval && !(c.lo < c.hi))
            fail(ErrKind::InvalidScale, "interval needs lo < hi");
        if (c.kind == Component::Kind::QTail) {
            if (!(c.tail.q > 1.0)) fail(ErrKind::InvalidScale, "qtail needs q > 1");
            if (!(c.tail.at < c.tail.upto)) fail(ErrKind::InvalidScale, "qtail needs at < upto");
        }
    }
    std::stable_sort(comps_.begin(), comps_.end(), [](const Component& x, const Component& y) {
        if (x.lo != y.lo) return x.lo < y.lo;
        return x.hi < y.hi;
    });
    std::vector<Component> out;
    out.reserve(comps_.size());
    for (Component& c : comps_) push_merged(out, c);

    // every q-tail needs its accumulation point covered by the component
    // immediately before it
    std::vector<Component> closed;
    closed.reserve(out.size() + 2);
    for (const Component& c : out) {
        if (c.kind == Component::Kind::QTail) {
            if (closed.empty() || !near(closed.back().hi, c.tail.at))
                closed.push_back(Component::point(c.tail.at));
        }
        closed.push_back(c);
    }
    comps_ = std::move(closed);
    atol_ = 1e-9 * std::max({1.0, std::fabs(min()), std::fabs(max())});
}

// --- membership ---------------------------------------------------------------

std::optional<double> TimeScale::snap_opt(double t) const {
    if (!std::isfinite(t)) return std::nullopt;
    // first component with lo > t
    auto it = std::upper_bound(comps_.begin(), comps_.end(), t,
                               [](double v, const Component& c) { return v < c.lo; });
    std::size_t hi_idx = std::size_t(it - comps_.begin());
    std::size_t lo_idx = hi_idx > 1 ? hi_idx - 2 : 0;
    std::optional<double> best;
    double best_d = atol_;
    for (std::size_t i = lo_idx; i <= hi_idx && i < comps_.size(); ++i) {
        const Component& c = comps_[i];
        std::optional<double> cand;
        switch (c.kind) {
            case Component::Kind::Point:
                cand = c.lo;
                break;
            case Component::Kind::Interval:
                if (t >= c.lo - atol_ && t <= c.hi + atol_)
                    cand = std::clamp(t, c.lo, c.hi);
                break;
            case Component::Kind::QTail:
                if (auto k = tail_index_of(c.tail, t)) cand = qtail_point(c.tail, *k);
                break;
        }
        if (cand && std::fabs(*cand - t) <= best_d) {
            best_d = std::fabs(*cand - t);
            best = *cand;
        }
    }
    return best;
}

double TimeScale::snap(double t) const {
    auto s = snap_opt(t);
    if (!s) fail(ErrKind::PointNotInScale, format_double(t) + " is not in the time scale");
    return *s;
}

bool TimeScale::purely_discrete() const {
    for (const Component& c : comps_)
        if (c.kind != Component::Kind::Point) return false;
    return true;
}

bool TimeScale::operator==(const TimeScale& o) const {
    if (comps_.size() != o.comps_.size()) return false;
    for (std::size_t i = 0; i < comps_.size(); ++i) {
        const Component &x = comps_[i], &y = o.comps_[i];
        if (x.kind != y.kind || x.lo != y.lo || x.hi != y.hi) return false;
        if (x.kind == Component::Kind::QTail &&
            (x.tail.q != y.tail.q || x.tail.at != y.tail.at || x.tail.upto != y.tail.upto))
            return false;
    }
    return true;
}

std::string TimeScale::to_dsl() const {
    std::string s;
    for (const Component& c : comps_) {
        if (!s.empty()) s += ", ";
        switch (c.kind) {
            case Component::Kind::Point:
                s += "point(" + format_double(c.lo) + ")";
                break;
            case Component::Kind::Interval:
                s += "interval(" + format_double(c.lo) + "," + format_double(c.hi) + ")";
                break;
            case Component::Kind::QTail:
                s += "qtail(q=" + format_double(c.tail.q) + ",at=" + format_double(c.tail.at) +
                     ",upto=" + format_double(c.tail.upto) + ")";
                break;
        }
    }
    if (comps_.size() == 1) return s;
    return "union(" + s + ")";
}

// --- jump operators -----------------------------------------------------------

namespace {

struct Loc {
    std::size_t idx;
    double t; // canonical value
};

Loc locate(const TimeScale& T, double t_raw) {
    double t = T.snap(t_raw);
    const auto& cs = T.components();
    auto it = std::upper_bound(cs.begin(), cs.end(), t,
                               [](double v, const Component& c) { return v < c.lo; });
    std::size_t i = std::size_t(it - cs.begin());
    while (i > 0) {
        const Component& c = cs[i - 1];
        bool in = false;
        switch (c.kind) {
            case Component::Kind::Point: in = (c.lo == t); break;
            case Component::Kind::Interval: in = (t >= c.lo && t <= c.hi); break;
            case Component::Kind::QTail: in = tail_index_of(c.tail, t).has_value(); break;
        }
        if (in) return {i - 1, t};
        --i;
    }
    fail(ErrKind::PointNotInScale, format_double(t_raw) + " is not in the time scale");
}

double next_min(const TimeScale& T, std::size_t i, double t) {
    const auto& cs = T.components();
    if (i + 1 >= cs.size()) return t; // sigma(max T) = max T
    const Component& n = cs[i + 1];
    return n.lo; // for a q-tail this is the accumulation point = current t
}

double prev_max(const TimeScale& T, std::size_t i, double t) {
    const auto& cs = T.components();
    if (i == 0) return t; // rho(min T) = min T
    return cs[i - 1].hi;
}

} // namespace

double sigma(const TimeScale& T, double t_raw) {
    Loc l = locate(T, t_raw);
    const Component& c = T.components()[l.idx];
    switch (c.kind) {
        case Component::Kind::Point:
            return next_min(T, l.idx, l.t);
        case Component::Kind::Interval:
            return l.t < c.hi ? l.t : next_min(T, l.idx, l.t);
        case Component::Kind::QTail: {
            long k = *tail_index_of(c.tail, l.t);
            return k >= 1 ? qtail_point(c.tail, k - 1) : next_min(T, l.idx, l.t);
        }
    }
    return l.t;
}

double rho(const TimeScale& T, double t_raw) {
    Loc l = locate(T, t_raw);
    const Component& c = T.components()[l.idx];
    switch (c.kind) {
        case Component::Kind::Point:
            return prev_max(T, l.idx, l.t);
        case Component::Kind::Interval:
            return l.t > c.lo ? l.t : prev_max(T, l.idx, l.t);
        case Component::Kind::QTail:
            return qtail_point(c.tail, *tail_index_of(c.tail, l.t) + 1);
    }
    return l.t;
}

double mu(const TimeScale& T, double t) { return sigma(T, t) - T.snap(t); }

PointClass classify(const TimeScale& T, double t_raw) {
    double t = T.snap(t_raw);
    bool rs = sigma(T, t) > t;
    bool ls = rho(T, t) < t;
    if (T.min() == T.max()) return {true, true}; // singleton scale
    // boundary points mirror the interior side so that a topologically
    // isolated endpoint classifies as isolated
    if (t == T.max() && !rs) rs = ls;
    if (t == T.min() && !ls) ls = rs;
    return {rs, ls};
}

std::string PointClass::label() const {
    if (isolated()) return "isolated";
    if (dense()) return "dense";
    std::string s = right_scattered ? "right-scattered" : "right-dense";
    s += left_scattered ? " left-scattered" : " left-dense";
    return s;
}

// --- restriction ---------------------------------------------------------------

TimeScale restrict(const TimeScale& T, double a_raw, double b_raw) {
    auto sa = T.snap_opt(a_raw), sb = T.snap_opt(b_raw);
    if (!sa || !sb)
        fail(ErrKind::EndpointNotInScale,
             "endpoint " + format_double(!sa ? a_raw : b_raw) + " is not in the time scale");
    double a = *sa, b = *sb;
    if (!(a < b)) fail(ErrKind::InvalidArgument, "restrict needs a < b");

    std::vector<Component> out;
    for (const Component& c : T.components()) {
        if (c.hi < a || c.lo > b) continue;
        switch (c.kind) {
            case Component::Kind::Point:
                if (c.lo >= a && c.lo <= b) out.push_back(c);
                break;
            case Component::Kind::Interval: {
                double u = std::max(c.lo, a), v = std::min(c.hi, b);
                if (u < v)
                    out.push_back(Component::interval(u, v));
                else if (u == v)
                    out.push_back(Component::point(u));
                break;
            }
            case Component::Kind::QTail: {
                const QTailDesc& d = c.tail;
                if (b <= d.at) break;
                long k_b = tail_first_k_at_or_below(d, b);
                if (a <= d.at) {
                    out.push_back(Component::qtail({d.q, d.at, qtail_point(d, k_b)}));
                } else {
                    long k_a = tail_last_k_at_or_above(d, a);
                    for (long k = k_a; k >= k_b; --k)
                        out.push_back(Component::point(qtail_point(d, k)));
                }
                break;
            }
        }
    }
    if (out.empty()) fail(ErrKind::EmptyRestriction, "restriction is empty");
    return TimeScale::from_components(std::move(out));
}

// --- grids and partitions -------------------------------------------------------

std::vector<double> sample_grid(const TimeScale& T, double a_raw, double b_raw,
                                int dense_samples, double tail_cutoff_rel) {
    auto sa = T.snap_opt(a_raw), sb = T.snap_opt(b_raw);
    if (!sa || !sb)
        fail(ErrKind::EndpointNotInScale,
             "endpoint " + format_double(!sa ? a_raw : b_raw) + " is not in the time scale");
    double a = *sa, b = *sb;
    if (!(a <= b)) fail(ErrKind::InvalidArgument, "need a <= b");

    double cutoff = tail_cutoff_rel * std::max(1.0, T.span());
    std::vector<double> g;
    for (const Component& c : T.components()) {
        if (c.hi < a || c.lo > b) continue;
        switch (c.kind) {
            case Component::Kind::Point:
                if (c.lo >= a && c.lo <= b) g.push_back(c.lo);
                break;
            case Component::Kind::Interval: {
                double u = std::max(c.lo, a), v = std::min(c.hi, b);
                if (u > v) break;
                g.push_back(u);
                if (u < v) {
                    for (int j = 1; j <= dense_samples; ++j)
                        g.push_back(u + (v - u) * double(j) / double(dense_samples + 1));
                    g.push_back(v);
                }
                break;
            }
            case Component::Kind::QTail: {
                const QTailDesc& d = c.tail;
                if (b <= d.at) break;
                long k_b = tail_first_k_at_or_below(d, b);
                long k_stop;
                if (a > d.at) {
                    k_stop = tail_last_k_at_or_above(d, a);
                } else {
                    k_stop = k_b;
                    while (qtail_point(d, k_stop - 1 < 0 ? 0 : k_stop - 1) - qtail_point(d, k_stop) >=
                               cutoff &&
                           k_stop - k_b < 200000)
                        ++k_stop;
                    if (d.at >= a) g.push_back(d.at);
                }
                for (long k = k_b; k <= k_stop; ++k) g.push_back(qtail_point(d, k));
                break;
            }
        }
    }
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

Partition Partition::make(const TimeScale& T, std::vector<double> pts) {
    if (pts.size() < 2) fail(ErrKind::InvalidArgument, "a partition needs at least two points");
    for (double& p : pts) p = T.snap(p);
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (!(pts[i - 1] < pts[i]))
            fail(ErrKind::InvalidArgument, "partition points must be strictly increasing");
    Partition P;
    P.pts_ = std::move(pts);
    return P;
}

Partition make_partition(const TimeScale& T, double a, double b, double target_mesh) {
    if (!(target_mesh > 0)) fail(ErrKind::InvalidArgument, "target_mesh must be positive");
    auto sa = T.snap_opt(a), sb = T.snap_opt(b);
    if (!sa || !sb)
        fail(ErrKind::EndpointNotInScale,
             "endpoint " + format_double(!sa ? a : b) + " is not in the time scale");
    if (!(*sa < *sb)) fail(ErrKind::InvalidArgument, "need a < b");

    std::vector<double> pts = sample_grid(T, *sa, *sb, 0);
    std::vector<double> out;
    out.reserve(pts.size());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double u = pts[i], v = pts[i + 1];
        out.push_back(u);
        // subdivide only where [u,v] is a dense run of T
        double mid = 0.5 * (u + v);
        if (v - u > target_mesh && T.contains(mid)) {
            long nseg = long(std::ceil((v - u) / target_mesh));
            for (long j = 1; j < nseg; ++j) out.push_back(u + (v - u) * double(j) / double(nseg));
        }
    }
    out.push_back(pts.back());
    return Partition::make(T, std::move(out));
}

Partition common_refinement(const Partition& p1, const Partition& p2) {
    if (p1.a() != p2.a() || p1.b() != p2.b())
        fail(ErrKind::MismatchedEndpoints, "partitions cover different intervals");
    std::vector<double> pts;
    pts.reserve(p1.points().size() + p2.points().size());
    std::merge(p1.points().begin(), p1.points().end(), p2.points().begin(), p2.points().end(),
               std::back_inserter(pts));
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    // both inputs were validated against the same scale, so the union is too
    Partition r;
    r.pts_ = std::move(pts);
    return r;
}

// --- delta derivative -----------------------------------------------------------

namespace {

// Neville extrapolation of samples (h_j, D_j) to h = 0; returns the value and
// an error estimate from the last diagonal correction.
std::pair<double, double> extrapolate_to_zero(const std::vector<double>& hs,
                                              std::vector<double> D) {
    std::size_t n = D.size();
    double prev = D[0], best = D[0], err = std::fabs(D.size() > 1 ? D[1] - D[0] : 0.0);
    for (std::size_t k = 1; k < n; ++k) {
        for (std::size_t i = 0; i + k < n; ++i)
            D[i] = (hs[i + k] * D[i] - hs[i] * D[i + 1]) / (hs[i + k] - hs[i]);
        err = std::fabs(D[0] - prev);
        prev = best = D[0];
    }
    return {best, err};
}

} // namespace

double delta_derivative(const TimeScale& T, const RealFn& f, double t_raw, double h0) {
    Loc l = locate(T, t_raw);
    double t = l.t;
    double st = sigma(T, t);
    if (st > t) return (f(st) - f(t)) / (st - t); // right-scattered: exact

    double span = T.span();
    if (span <= 0) fail(ErrKind::PreconditionViolated, "derivative on a singleton scale");
    if (h0 <= 0) h0 = 1e-3 * span;

    const Component& c = T.components()[l.idx];
    const int levels = 5;
    std::vector<double> hs(levels), D(levels);

    if (t == T.max()) {
        if (rho(T, t) < t)
            fail(ErrKind::PreconditionViolated,
                 "delta derivative is undefined at a left-scattered maximum");
        // left-dense maximum: one-sided limit from the left
        double room = t - c.lo;
        double h = std::min(h0, 0.5 * room);
        for (int j = 0; j < levels; ++j, h *= 0.5) {
            hs[j] = h;
            D[j] = (f(t) - f(t - h)) / h;
        }
    } else if (c.kind == Component::Kind::Interval && t < c.hi) {
        double right = c.hi - t;
        double left = t - c.lo;
        double h = std::min(h0, 0.5 * right);
        bool central = left >= h; // central quotient where the scale allows it
        for (int j = 0; j < levels; ++j, h *= 0.5) {
            hs[j] = h;
            D[j] = central ? (f(t + h) - f(t - h)) / (2 * h) : (f(t + h) - f(t)) / h;
        }
    } else {
        // right-dense via a q-tail accumulating at t
        const auto& cs = T.components();
        if (l.idx + 1 >= cs.size() || cs[l.idx + 1].kind != Component::Kind::QTail ||
            cs[l.idx + 1].tail.at != t)
            fail(ErrKind::NonConvergent, "no usable neighborhood for the dense-limit derivative");
        const QTailDesc& d = cs[l.idx + 1].tail;
        long k0 = 0;
        while (qtail_point(d, k0) - t > h0 && k0 < 100000) ++k0;
        for (int j = 0; j < levels; ++j) {
            double p = qtail_point(d, k0 + j);
            hs[j] = p - t;
            D[j] = (f(p) - f(t)) / hs[j];
        }
    }

    auto [val, err] = extrapolate_to_zero(hs, D);
    if (err > 1e-8 * std::max(1.0, std::fabs(val)))
        fail(ErrKind::NonConvergent,
             "derivative extrapolation stagnated (estimate " + format_double(err) + ")");
    return val;
}

double delta_derivative(const TimeScale& T, const ExprFn& f, double t, double h0) {
    return delta_derivative(T, f.fn1(), t, h0);
}

} // namespace tsint
