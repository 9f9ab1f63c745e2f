#pragma once

#include <vector>

#include "tsint/inequality.hpp"

namespace tsint {

struct FuzzConfig {
    int trials = 100;
    uint64_t seed = 0;
    double tol = 1e-7;
    bool allow_qtail = true;
    bool allow_dense = true;
    int cheb_order = 0; // 0: random per trial; +1/-1: force similar/opposite
};

struct FuzzFailure {
    int trial = 0;
    double margin = 0;
    std::string replay;
};

struct FuzzOutcome {
    Ineq id = Ineq::Jensen;
    FuzzConfig cfg;
    int violations = 0;
    double min_margin = 0;
    int worst_trial = 0;
    int generator_retries = 0;
    std::vector<FuzzFailure> failing;

    Json to_json() const;
};

// Deterministic instance for trial `trial` of a campaign; instances satisfy the
// target inequality's preconditions by construction (retries are part of the
// deterministic stream).
InstanceSpec generate_instance(Ineq id, const FuzzConfig& cfg, int trial);

FuzzOutcome fuzz(Ineq id, const FuzzConfig& cfg);

} // namespace tsint
