#include "tsint/scale_parse.hpp"

#include <cctype>
#include <charconv>

namespace tsint {

namespace {

class ScaleParser {
public:
    explicit ScaleParser(const std::string& src) : src_(src) {}

    TimeScale run() {
        TimeScale T = parse_spec();
        skip_ws();
        if (pos_ != src_.size()) err("unexpected trailing input");
        return T;
    }

private:
    const std::string& src_;
    std::size_t pos_ = 0;

    [[noreturn]] void err(const std::string& msg) {
        throw ParseError(ErrKind::SyntaxError, "scale spec: " + msg, pos_ + 1);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= src_.size() || src_[pos_] != c)
            err(std::string("expected '") + c + "'");
        ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) { ++pos_; return true; }
        return false;
    }

    std::string ident() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                      src_[pos_] == '_'))
            ++pos_;
        if (pos_ == start) err("expected a scale constructor name");
        return src_.substr(start, pos_ - start);
    }

    double number() {
        skip_ws();
        const char* begin = src_.c_str() + pos_;
        const char* end = src_.c_str() + src_.size();
        double v = 0;
        // allow a leading sign; from_chars handles the rest
        bool neg = false;
        if (begin != end && (*begin == '-' || *begin == '+')) {
            neg = (*begin == '-');
            ++begin;
        }
        auto [p, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc{} || p == begin) err("malformed number");
        pos_ = static_cast<std::size_t>(p - src_.c_str());
        return neg ? -v : v;
    }

    TimeScale parse_spec() {
        std::string name = ident();
        expect('(');

        if (name == "union") {
            std::vector<TimeScale> parts;
            parts.push_back(parse_spec());
            while (eat(',')) parts.push_back(parse_spec());
            expect(')');
            return TimeScale::join(std::move(parts));
        }
        if (name == "interval") {
            double a = number();
            expect(',');
            double b = number();
            expect(')');
            return TimeScale::interval(a, b);
        }
        if (name == "point") {
            double v = number();
            expect(')');
            return TimeScale::point(v);
        }
        if (name == "points") {
            std::vector<double> vs;
            vs.push_back(number());
            while (eat(',')) vs.push_back(number());
            expect(')');
            return TimeScale::points(std::move(vs));
        }
        if (name == "integers") {
            double a = number();
            expect(',');
            double b = number();
            expect(')');
            return TimeScale::integers(a, b);
        }
        if (name == "hgrid") {
            double a = number();
            expect(',');
            double b = number();
            expect(',');
            double h = number();
            expect(')');
            return TimeScale::hgrid(a, b, h);
        }
        if (name == "qtail") {
            double q = 0, at = 0, upto = 0;
            bool have_q = false, have_at = false, have_upto = false;
            int positional = 0;
            for (;;) {
                skip_ws();
                std::size_t save = pos_;
                if (pos_ < src_.size() && std::isalpha(static_cast<unsigned char>(src_[pos_]))) {
                    std::string key = ident();
                    expect('=');
                    double v = number();
                    if (key == "q") { q = v; have_q = true; }
                    else if (key == "at") { at = v; have_at = true; }
                    else if (key == "upto") { upto = v; have_upto = true; }
                    else { pos_ = save; err("unknown qtail argument '" + key + "'"); }
                } else {
                    double v = number();
                    switch (positional++) {
                        case 0: q = v; have_q = true; break;
                        case 1: at = v; have_at = true; break;
                        case 2: upto = v; have_upto = true; break;
                        default: err("too many qtail arguments");
                    }
                }
                if (!eat(',')) break;
            }
            expect(')');
            if (!have_q || !have_at || !have_upto) err("qtail needs q, at and upto");
            return TimeScale::qtail(q, at, upto);
        }
        err("unknown scale constructor '" + name + "'");
    }
};

} // namespace

TimeScale parse_scale(const std::string& src) { return ScaleParser(src).run(); }

Json scale_to_json(const TimeScale& T) {
    Json comps = Json::array();
    for (const Component& c : T.components()) {
        switch (c.kind) {
            case Component::Kind::Point:
                comps.push_back({{"type", "point"}, {"value", c.lo}});
                break;
            case Component::Kind::Interval:
                comps.push_back({{"type", "interval"}, {"lo", c.lo}, {"hi", c.hi}});
                break;
            case Component::Kind::QTail:
                comps.push_back({{"type", "qtail"},
                                 {"q", c.tail.q},
                                 {"at", c.tail.at},
                                 {"upto", c.tail.upto}});
                break;
        }
    }
    return comps;
}

TimeScale scale_from_json(const Json& j) {
    const Json& arr = j.is_array() ? j : j.at("components");
    std::vector<Component> cs;
    for (const Json& c : arr) {
        std::string type = c.at("type").get<std::string>();
        if (type == "point")
            cs.push_back(Component::point(c.at("value").get<double>()));
        else if (type == "interval")
            cs.push_back(Component::interval(c.at("lo").get<double>(), c.at("hi").get<double>()));
        else if (type == "qtail")
            cs.push_back(Component::qtail(
                {c.at("q").get<double>(), c.at("at").get<double>(), c.at("upto").get<double>()}));
        else
            fail(ErrKind::InvalidScale, "unknown component type '" + type + "'");
    }
    return TimeScale::from_components(std::move(cs));
}

} // namespace tsint
