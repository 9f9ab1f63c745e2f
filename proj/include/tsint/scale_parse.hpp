#pragma once

#include <string>

#include "json.hpp"
#include "tsint/timescale.hpp"

namespace tsint {

using Json = nlohmann::ordered_json;

// Text DSL for time scales:
//   interval(a,b) | point(v) | points(v,...) | integers(a,b) | hgrid(a,b,h)
//   | qtail(q=..., at=..., upto=...) | union(spec, ...)
// qtail also accepts positional arguments (q, at, upto).
TimeScale parse_scale(const std::string& src);

// JSON mirror with the same component structure:
//   [{"type":"interval","lo":..,"hi":..}, {"type":"point","value":..},
//    {"type":"qtail","q":..,"at":..,"upto":..}]
Json scale_to_json(const TimeScale& T);
TimeScale scale_from_json(const Json& j);

} // namespace tsint
