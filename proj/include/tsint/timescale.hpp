#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tsint/errors.hpp"
#include "tsint/expr.hpp"

namespace tsint {

// Geometric point sequence {at + (upto-at)*q^-k : k >= 0} accumulating at
// `at` from above. The accumulation point itself is NOT a member of the
// component; normalization guarantees it is covered by the component
// immediately before (so the scale stays closed).
struct QTailDesc {
    double q = 2.0;
    double at = 0.0;
    double upto = 1.0;
};

double qtail_point(const QTailDesc& d, long k);

struct Component {
    enum class Kind { Point, Interval, QTail };
    Kind kind;
    double lo = 0.0, hi = 0.0; // Point: lo==hi==v; Interval: lo<hi; QTail: [at, upto]
    QTailDesc tail;

    static Component point(double v) { return {Kind::Point, v, v, {}}; }
    static Component interval(double lo, double hi) { return {Kind::Interval, lo, hi, {}}; }
    static Component qtail(QTailDesc d) { return {Kind::QTail, d.at, d.upto, d}; }
};

// Bounded time scale: a sorted disjoint union of closed intervals, isolated
// points and q-geometric tails. All values are immutable after construction;
// every operation here is a pure function.
class TimeScale {
public:
    static TimeScale interval(double lo, double hi);
    static TimeScale point(double v);
    static TimeScale points(std::vector<double> vs);
    static TimeScale integers(double a, double b);
    static TimeScale hgrid(double a, double b, double h);
    static TimeScale qtail(double q, double at, double upto);
    static TimeScale join(std::vector<TimeScale> parts);
    static TimeScale from_components(std::vector<Component> comps);

    double min() const { return comps_.front().lo; }
    double max() const { return comps_.back().hi; }
    double span() const { return max() - min(); }

    const std::vector<Component>& components() const { return comps_; }

    bool contains(double t) const { return snap_opt(t).has_value(); }
    // canonical member value within tolerance; nullopt if t is not in T
    std::optional<double> snap_opt(double t) const;
    // as snap_opt but throws PointNotInScale
    double snap(double t) const;

    // true when every point of the scale is isolated (no intervals, no tails)
    bool purely_discrete() const;

    bool operator==(const TimeScale& o) const;

    std::string to_dsl() const;

private:
    std::vector<Component> comps_;
    double atol_ = 0.0; // membership snapping tolerance

    TimeScale() = default;
    void normalize();
    friend struct ScaleOps;
};

// --- point classification ---------------------------------------------------

struct PointClass {
    bool right_scattered = false;
    bool left_scattered = false;

    bool right_dense() const { return !right_scattered; }
    bool left_dense() const { return !left_scattered; }
    bool isolated() const { return right_scattered && left_scattered; }
    bool dense() const { return !right_scattered && !left_scattered; }
    std::string label() const;
    bool operator==(const PointClass& o) const {
        return right_scattered == o.right_scattered && left_scattered == o.left_scattered;
    }
};

// --- operations --------------------------------------------------------------

TimeScale restrict(const TimeScale& T, double a, double b);
double sigma(const TimeScale& T, double t);
double rho(const TimeScale& T, double t);
double mu(const TimeScale& T, double t);
PointClass classify(const TimeScale& T, double t);

// --- partitions ---------------------------------------------------------------

class Partition {
public:
    // validates: points in T, strictly increasing, n >= 1
    static Partition make(const TimeScale& T, std::vector<double> pts);

    double a() const { return pts_.front(); }
    double b() const { return pts_.back(); }
    std::size_t cells() const { return pts_.size() - 1; }
    const std::vector<double>& points() const { return pts_; }
    double delta_t(std::size_t i) const { return pts_[i + 1] - pts_[i]; } // i-th cell

    bool operator==(const Partition& o) const { return pts_ == o.pts_; }

private:
    std::vector<double> pts_;
    friend Partition common_refinement(const Partition&, const Partition&);
};

// Every scattered point of [a,b]_T (q-tails truncated at `tail_cutoff_rel`)
// plus mesh subdivision of dense stretches.
Partition make_partition(const TimeScale& T, double a, double b, double target_mesh);
Partition common_refinement(const Partition& p1, const Partition& p2);

// Finite sampling grid of [a,b]_T: all component boundaries, isolated points,
// tail points down to the cutoff, and `dense_samples` points per dense
// stretch. Used for precondition validation and discrete enumeration.
std::vector<double> sample_grid(const TimeScale& T, double a, double b,
                                int dense_samples = 0,
                                double tail_cutoff_rel = 1e-12);

// Delta derivative: exact forward quotient at right-scattered points,
// Richardson-extrapolated one-sided (or central, where available) quotient at
// dense points, restricted to points of T.
double delta_derivative(const TimeScale& T, const RealFn& f, double t, double h0 = 0.0);
double delta_derivative(const TimeScale& T, const ExprFn& f, double t, double h0 = 0.0);

} // namespace tsint
