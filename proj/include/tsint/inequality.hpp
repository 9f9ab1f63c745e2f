#pragma once

#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "tsint/convex.hpp"
#include "tsint/integrate.hpp"
#include "tsint/scale_parse.hpp"

namespace tsint {

enum class Ineq {
    Positivity,
    Monotone,
    Subdifferential,
    Theorem5,
    Jensen,
    ReverseJensen,
    ChebyshevKernel,
    Chebyshev,
    Winckler,
    MajorisationEq,
    MajorisationLe,
};

const char* to_string(Ineq id);
Ineq ineq_from_string(const std::string& name);

// A fully serialized check instance; enough to replay the check exactly.
struct InstanceSpec {
    std::string scale; // text DSL
    double a = 0, b = 0; // endpoints; a==b means "use scale min/max"
    std::map<std::string, std::string> exprs; // f,g,p,x,y,f1,f2 as needed
    std::string F;                            // convex catalog name
    KinkSelection kink = KinkSelection::Midpoint;
    int order = +1;   // +1 similarly ordered, -1 oppositely (Chebyshev family)
    double tol = 1e-8;
    uint64_t seed = 0;

    Json to_json() const;
    static InstanceSpec from_json(const Json& j);
};

struct CheckReport {
    Ineq id = Ineq::Positivity;
    double lhs = 0, rhs = 0;
    double margin = 0; // oriented: margin >= 0 means the inequality holds
    double slack = 0;  // numerical tolerance used for pass/fail
    bool passed = false;
    std::optional<double> documented; // winckler: value of the printed orientation
    InstanceSpec instance;

    Json to_json() const;
};

CheckReport check(Ineq id, const InstanceSpec& spec);

CheckReport check_positivity(const InstanceSpec& spec);
CheckReport check_monotone_cumulative(const InstanceSpec& spec);
CheckReport check_theorem5(const InstanceSpec& spec);
CheckReport check_jensen(const InstanceSpec& spec);
CheckReport check_reverse_jensen(const InstanceSpec& spec);
CheckReport check_chebyshev_kernel(const InstanceSpec& spec);
CheckReport check_chebyshev(const InstanceSpec& spec);
CheckReport check_winckler(const InstanceSpec& spec);
CheckReport check_majorisation_eq(const InstanceSpec& spec);
CheckReport check_majorisation_le(const InstanceSpec& spec);

// `tsint check ...` command line that replays the instance byte-for-byte
std::string replay_command(Ineq id, const InstanceSpec& spec);
std::string shell_quote(const std::string& s);

} // namespace tsint
